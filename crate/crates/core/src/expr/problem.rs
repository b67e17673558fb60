//! Problem files: the coefficient fields of the equation as expressions.
//!
//! ```toml
//! a.1.1 = "1 + 0.25*cos(x1)"
//! b.1 = "0.1"
//! c = "-0.2"
//! sigma.1.1 = "0.3"     # sigma.<i>.<rho>
//! nu.1 = "0"            # nu.<rho>
//! f = "sin(x1)"
//! g.1 = "0.1"           # g.<rho>
//! phi = "sin(x1)"
//! ```
//!
//! Indices are one-based. Absent entries are zero, except that at least one
//! `a` entry is required. When only one of `a.i.j` and `a.j.i` is given it is
//! used for both. Noise indices above the configured truncation are dropped
//! with a warning.

use std::collections::BTreeMap;

use super::Expr;
use crate::error::{Error, Result};

/// Raw, dimension-agnostic content of a problem file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProblemSpec {
    pub a: BTreeMap<(usize, usize), Expr>,
    pub b: BTreeMap<usize, Expr>,
    pub c: Option<Expr>,
    pub sigma: BTreeMap<(usize, usize), Expr>,
    pub nu: BTreeMap<usize, Expr>,
    pub f: Option<Expr>,
    pub g: BTreeMap<usize, Expr>,
    pub phi: Option<Expr>,
}

fn expr_value(key: &str, v: &toml::Value) -> Result<Expr> {
    match v {
        toml::Value::String(s) => Expr::parse(s)
            .map_err(|e| Error::InvalidProblem(format!("{key}: cannot parse {s:?}: {e}"))),
        toml::Value::Integer(i) => Ok(Expr::Num(*i as f64)),
        toml::Value::Float(x) if x.is_finite() => Ok(Expr::Num(*x)),
        other => Err(Error::InvalidProblem(format!(
            "{key}: expected an expression string or number, found {}",
            other.type_str()
        ))),
    }
}

fn index(key: &str, s: &str) -> Result<usize> {
    match s.parse::<usize>() {
        Ok(i) if i >= 1 => Ok(i),
        _ => Err(Error::InvalidProblem(format!(
            "{key}: index {s:?} must be a positive integer"
        ))),
    }
}

/// Flattens nested tables into (dotted key path, leaf value).
fn leaves(prefix: &str, table: &toml::Table, out: &mut Vec<(Vec<String>, toml::Value)>) {
    for (k, v) in table {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => leaves(&path, t, out),
            _ => out.push((path.split('.').map(String::from).collect(), v.clone())),
        }
    }
}

impl ProblemSpec {
    pub fn parse(text: &str) -> Result<ProblemSpec> {
        let table: toml::Table = text
            .parse()
            .map_err(|e| Error::InvalidProblem(format!("malformed problem file: {e}")))?;
        let mut flat = Vec::new();
        leaves("", &table, &mut flat);
        let mut spec = ProblemSpec::default();
        for (path, value) in flat {
            let key = path.join(".");
            let e = expr_value(&key, &value)?;
            let parts: Vec<&str> = path.iter().map(String::as_str).collect();
            let duplicate = match parts.as_slice() {
                ["a", i, j] => spec
                    .a
                    .insert((index(&key, i)?, index(&key, j)?), e)
                    .is_some(),
                ["b", i] => spec.b.insert(index(&key, i)?, e).is_some(),
                ["c"] => spec.c.replace(e).is_some(),
                ["sigma", i, r] => spec
                    .sigma
                    .insert((index(&key, i)?, index(&key, r)?), e)
                    .is_some(),
                ["nu", r] => spec.nu.insert(index(&key, r)?, e).is_some(),
                ["f"] => spec.f.replace(e).is_some(),
                ["g", r] => spec.g.insert(index(&key, r)?, e).is_some(),
                ["phi"] => spec.phi.replace(e).is_some(),
                _ => return Err(Error::InvalidProblem(format!("unknown key {key:?}"))),
            };
            if duplicate {
                return Err(Error::InvalidProblem(format!("duplicate key {key:?}")));
            }
        }
        if spec.a.is_empty() {
            return Err(Error::InvalidProblem(
                "the diffusion matrix `a` is required".into(),
            ));
        }
        Ok(spec)
    }

    /// Largest noise index mentioned anywhere.
    pub fn max_rho(&self) -> usize {
        let s = self.sigma.keys().map(|k| k.1);
        let n = self.nu.keys().copied();
        let g = self.g.keys().copied();
        s.chain(n).chain(g).max().unwrap_or(0)
    }

    /// Fixes the dimension and noise truncation, checking indices and symmetry of `a`.
    pub fn build(&self, dim: usize, rho_max: usize) -> Result<Coefficients> {
        let check_i = |key: String, i: usize| {
            if i > dim {
                Err(Error::InvalidProblem(format!(
                    "{key}: spatial index {i} exceeds the dimension {dim}"
                )))
            } else {
                Ok(())
            }
        };
        let check_expr = |key: String, e: &Expr| {
            let k = e.spatial_arity();
            if k > dim {
                Err(Error::InvalidProblem(format!(
                    "{key}: references x{k} but the dimension is {dim}"
                )))
            } else {
                Ok(())
            }
        };
        let keep_rho = |key: String, r: usize| {
            if r > rho_max {
                log::warn!("{key}: noise index {r} exceeds the truncation {rho_max}; dropped");
                false
            } else {
                true
            }
        };

        let mut a = vec![vec![None; dim]; dim];
        for (&(i, j), e) in &self.a {
            check_i(format!("a.{i}.{j}"), i.max(j))?;
            check_expr(format!("a.{i}.{j}"), e)?;
            if let Some(other) = self.a.get(&(j, i)) {
                if other != e {
                    return Err(Error::Symmetry(format!(
                        "a.{i}.{j} = {e} differs from a.{j}.{i} = {other}"
                    )));
                }
            }
            a[i - 1][j - 1] = Some(e.clone());
            a[j - 1][i - 1] = Some(e.clone());
        }
        let mut b = vec![None; dim];
        for (&i, e) in &self.b {
            check_i(format!("b.{i}"), i)?;
            check_expr(format!("b.{i}"), e)?;
            b[i - 1] = Some(e.clone());
        }
        let mut sigma = vec![vec![None; rho_max]; dim];
        for (&(i, r), e) in &self.sigma {
            check_i(format!("sigma.{i}.{r}"), i)?;
            check_expr(format!("sigma.{i}.{r}"), e)?;
            if keep_rho(format!("sigma.{i}.{r}"), r) {
                sigma[i - 1][r - 1] = Some(e.clone());
            }
        }
        let mut nu = vec![None; rho_max];
        for (&r, e) in &self.nu {
            check_expr(format!("nu.{r}"), e)?;
            if keep_rho(format!("nu.{r}"), r) {
                nu[r - 1] = Some(e.clone());
            }
        }
        let mut g = vec![None; rho_max];
        for (&r, e) in &self.g {
            check_expr(format!("g.{r}"), e)?;
            if keep_rho(format!("g.{r}"), r) {
                g[r - 1] = Some(e.clone());
            }
        }
        for (key, e) in [("c", &self.c), ("f", &self.f), ("phi", &self.phi)] {
            if let Some(e) = e {
                check_expr(key.to_string(), e)?;
            }
        }
        Ok(Coefficients {
            dim,
            rho_max,
            a,
            b,
            c: self.c.clone(),
            sigma,
            nu,
            f: self.f.clone(),
            g,
            phi: self.phi.clone(),
        })
    }
}

/// Coefficient fields for a fixed dimension and noise truncation; `None` means zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub dim: usize,
    pub rho_max: usize,
    /// Symmetric d×d.
    pub a: Vec<Vec<Option<Expr>>>,
    pub b: Vec<Option<Expr>>,
    pub c: Option<Expr>,
    /// Indexed `[i][rho]`.
    pub sigma: Vec<Vec<Option<Expr>>>,
    pub nu: Vec<Option<Expr>>,
    pub f: Option<Expr>,
    pub g: Vec<Option<Expr>>,
    pub phi: Option<Expr>,
}

impl Coefficients {
    /// Parses a problem file and fixes dimension and truncation in one go.
    pub fn parse(text: &str, dim: usize, rho_max: usize) -> Result<Coefficients> {
        ProblemSpec::parse(text)?.build(dim, rho_max)
    }

    fn all_exprs(&self) -> impl Iterator<Item = &Expr> {
        self.a
            .iter()
            .flatten()
            .chain(&self.b)
            .chain(std::iter::once(&self.c))
            .chain(self.sigma.iter().flatten())
            .chain(&self.nu)
            .chain(std::iter::once(&self.f))
            .chain(&self.g)
            .flatten()
    }

    /// True when the drift fields a, b, c depend on t.
    pub fn drift_depends_on_time(&self) -> bool {
        self.a
            .iter()
            .flatten()
            .chain(&self.b)
            .chain(std::iter::once(&self.c))
            .flatten()
            .any(Expr::depends_on_time)
    }

    /// True when the noise fields σ, ν depend on t.
    pub fn noise_depends_on_time(&self) -> bool {
        self.sigma
            .iter()
            .flatten()
            .chain(&self.nu)
            .flatten()
            .any(Expr::depends_on_time)
    }

    pub fn depends_on_time(&self) -> bool {
        self.all_exprs().any(Expr::depends_on_time)
    }

    /// True when some noise field (σ, ν or g) is present.
    pub fn is_stochastic(&self) -> bool {
        self.sigma
            .iter()
            .flatten()
            .chain(&self.nu)
            .chain(&self.g)
            .any(Option::is_some)
    }

    /// True when channel ρ (zero-based) carries any noise.
    pub fn channel_active(&self, rho: usize) -> bool {
        self.sigma.iter().any(|row| row[rho].is_some())
            || self.nu[rho].is_some()
            || self.g[rho].is_some()
    }
}
