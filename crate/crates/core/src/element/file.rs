//! Text format for user-defined elements (TOML, UTF-8).
//!
//! ```toml
//! name = "hat"
//! dim = 1
//! lambda = [[-1], [0], [1]]
//!
//! [[piece]]
//! box = { lo = [-1], hi = [0] }
//! terms = [{ exp = [0], coef = 1 }, { exp = [1], coef = 1 }]
//!
//! [[piece]]
//! simplex = [[0], [1]]
//! terms = [{ exp = [0], coef = 1 }, { exp = [1], coef = -1 }]
//! ```
//!
//! A piece is either an axis-aligned `box` or a `simplex` given by its d + 1
//! vertices (counter-clockwise in the plane). Numbers may be written as
//! decimals or as rational strings such as `"1/3"`.

use serde::{Deserialize, Serialize};

use super::{Cell, FiniteElement, PiecewisePolynomial, Polynomial};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Number {
    Float(f64),
    Text(String),
}

impl Number {
    fn value(&self) -> Result<f64> {
        match self {
            Number::Float(v) => Ok(*v),
            Number::Text(s) => {
                let parse = |t: &str| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidElement(format!("not a number: {s:?}")))
                };
                match s.split_once('/') {
                    Some((p, q)) => {
                        let q = parse(q)?;
                        if q == 0.0 {
                            return Err(Error::InvalidElement(format!(
                                "zero denominator in {s:?}"
                            )));
                        }
                        Ok(parse(p)? / q)
                    }
                    None => parse(s),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lo: Vec<Number>,
    pub hi: Vec<Number>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub exp: Vec<u32>,
    pub coef: Number,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceSpec {
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoxSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simplex: Option<Vec<Vec<Number>>>,
    pub terms: Vec<TermSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementFile {
    #[serde(default)]
    pub name: Option<String>,
    pub dim: usize,
    pub lambda: Vec<Vec<i64>>,
    #[serde(rename = "piece")]
    pub pieces: Vec<PieceSpec>,
}

fn numbers(v: &[Number]) -> Result<Vec<f64>> {
    v.iter().map(Number::value).collect()
}

impl ElementFile {
    pub fn build(&self) -> Result<FiniteElement> {
        let d = self.dim;
        let mut pieces = Vec::with_capacity(self.pieces.len());
        for (idx, p) in self.pieces.iter().enumerate() {
            let cell = match (&p.bounds, &p.simplex) {
                (Some(b), None) => Cell::Box {
                    lo: numbers(&b.lo)?,
                    hi: numbers(&b.hi)?,
                },
                (None, Some(vs)) => {
                    let verts = vs.iter().map(|v| numbers(v)).collect::<Result<Vec<_>>>()?;
                    Cell::simplex(&verts)?
                }
                _ => {
                    return Err(Error::InvalidElement(format!(
                        "piece {idx}: give exactly one of `box` or `simplex`"
                    )))
                }
            };
            let terms = p
                .terms
                .iter()
                .map(|t| Ok((t.exp.clone(), t.coef.value()?)))
                .collect::<Result<Vec<_>>>()?;
            pieces.push((cell, Polynomial::new(d, terms)?));
        }
        let psi = PiecewisePolynomial::new(d, pieces)?;
        FiniteElement::new(
            self.name.clone().unwrap_or_else(|| "user element".into()),
            psi,
            self.lambda.clone(),
        )
    }
}

/// Parses and builds an element from its text form.
pub fn parse_element(text: &str) -> Result<FiniteElement> {
    let file: ElementFile = toml::from_str(text)
        .map_err(|e| Error::InvalidElement(format!("malformed element file: {e}")))?;
    file.build()
}
