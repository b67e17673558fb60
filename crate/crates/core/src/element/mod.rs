//! Finite elements: the mother function ψ as exact piecewise polynomials, the
//! shift set Λ, and the derived neighbour set Γ.

mod file;
pub mod geometry;
pub mod poly;
pub mod quadrature;
mod tensors;

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

pub use file::{parse_element, ElementFile};
pub use geometry::{Cell, Region};
pub use poly::{Piece, PiecewisePolynomial, Polynomial};
pub use tensors::{overlap_rule, support_rule, OverlapPoint, ReferenceTensors, TensorEntry};

use crate::error::{Error, Result};

/// Largest dimension accepted for the product-of-hats element.
pub const MAX_TENSOR_DIM: usize = 4;

/// Named built-in elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Hat1d,
    Tensor(usize),
    Triangle2d,
}

impl Preset {
    pub fn name(&self) -> String {
        match self {
            Preset::Hat1d => "hat1d".into(),
            Preset::Tensor(d) => format!("tensor({d})"),
            Preset::Triangle2d => "triangle2d".into(),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    /// Accepts `hat1d`, `triangle2d`, `tensor(d)` and `tensor<d>` / `tensor-d`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "hat1d" => return Ok(Preset::Hat1d),
            "triangle2d" => return Ok(Preset::Triangle2d),
            _ => {}
        }
        let rest = s
            .strip_prefix("tensor")
            .ok_or_else(|| Error::InvalidElement(format!("unknown preset {s:?}")))?;
        let digits = rest
            .trim_start_matches(['(', '-'])
            .trim_end_matches(')')
            .trim();
        let d: usize = digits
            .parse()
            .map_err(|_| Error::InvalidElement(format!("unknown preset {s:?}")))?;
        Ok(Preset::Tensor(d))
    }
}

/// A mother function ψ together with its shift set Λ and neighbour set Γ.
#[derive(Debug, Clone)]
pub struct FiniteElement {
    name: String,
    psi: PiecewisePolynomial,
    lambda: Vec<Vec<i64>>,
    gamma: Vec<Vec<i64>>,
}

impl FiniteElement {
    /// Builds an element from ψ and Λ, deriving Γ from support overlaps.
    ///
    /// Only structural validity is enforced here. Symmetry, normalisation and
    /// the cardinal property are reported by the checker, so that deliberately
    /// broken elements can still be constructed and diagnosed.
    pub fn new(
        name: impl Into<String>,
        psi: PiecewisePolynomial,
        lambda: Vec<Vec<i64>>,
    ) -> Result<Self> {
        let d = psi.dim();
        if lambda.iter().any(|l| l.len() != d) {
            return Err(Error::InvalidElement(format!(
                "every shift in the lambda set must have {d} components"
            )));
        }
        if !lambda.iter().any(|l| l.iter().all(|&c| c == 0)) {
            return Err(Error::InvalidElement(
                "the lambda set must contain the zero shift".into(),
            ));
        }
        let lambda: Vec<Vec<i64>> = lambda
            .into_iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let gamma = neighbour_set(&psi, &lambda)?;
        Ok(FiniteElement {
            name: name.into(),
            psi,
            lambda,
            gamma,
        })
    }

    pub fn preset(preset: Preset) -> Result<Self> {
        match preset {
            Preset::Hat1d => hat1d(),
            Preset::Tensor(d) => tensor(d),
            Preset::Triangle2d => triangle2d(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.psi.dim()
    }

    pub fn psi(&self) -> &PiecewisePolynomial {
        &self.psi
    }

    pub fn lambda_set(&self) -> &[Vec<i64>] {
        &self.lambda
    }

    /// Neighbour shifts in lexicographic order.
    pub fn gamma(&self) -> &[Vec<i64>] {
        &self.gamma
    }

    /// Point value of ψ; zero outside its support.
    pub fn evaluate_psi(&self, x: &[f64]) -> f64 {
        self.psi.eval(x)
    }

    /// The same element with ψ multiplied by `s` (Γ unchanged).
    pub fn scaled(&self, s: f64) -> Self {
        FiniteElement {
            name: format!("{} scaled by {s}", self.name),
            psi: self.psi.scaled(s),
            lambda: self.lambda.clone(),
            gamma: self.gamma.clone(),
        }
    }

    /// The same element with ψ replaced by x ↦ ψ(x − offset).
    pub fn shifted(&self, offset: &[f64]) -> Result<Self> {
        FiniteElement::new(
            format!("{} shifted by {offset:?}", self.name),
            self.psi.translated(offset)?,
            self.lambda.clone(),
        )
    }

    /// Integer points whose unit-shifted support could meet the support of ψ.
    pub(crate) fn lattice_points_in_support(&self) -> Vec<Vec<i64>> {
        let (lo, hi) = self.psi.bounding_box();
        let ranges: Vec<(i64, i64)> = lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| (l.ceil() as i64, h.floor() as i64))
            .collect();
        let mut out = Vec::new();
        let mut current = ranges.iter().map(|r| r.0).collect::<Vec<_>>();
        if ranges.iter().any(|(l, h)| l > h) {
            return out;
        }
        loop {
            out.push(current.clone());
            let mut k = 0;
            loop {
                if k == current.len() {
                    return out;
                }
                current[k] += 1;
                if current[k] <= ranges[k].1 {
                    break;
                }
                current[k] = ranges[k].0;
                k += 1;
            }
        }
    }
}

/// Points of the lattice generated by Λ (within reach of the support) whose
/// shifted support overlaps supp ψ with positive measure.
fn neighbour_set(psi: &PiecewisePolynomial, lambda: &[Vec<i64>]) -> Result<Vec<Vec<i64>>> {
    let d = psi.dim();
    let (lo, hi) = psi.bounding_box();
    let reach: Vec<i64> = lo
        .iter()
        .zip(&hi)
        .map(|(l, h)| (h - l).ceil() as i64)
        .collect();
    let support: Vec<&Piece> = psi.pieces().iter().filter(|p| !p.poly.is_zero()).collect();

    let origin = vec![0i64; d];
    let mut seen = BTreeSet::from([origin.clone()]);
    let mut queue = VecDeque::from([origin]);
    while let Some(p) = queue.pop_front() {
        for l in lambda {
            for sign in [1, -1] {
                let q: Vec<i64> = p.iter().zip(l).map(|(a, b)| a + sign * b).collect();
                if q.iter().zip(&reach).all(|(c, r)| c.abs() <= *r) && seen.insert(q.clone()) {
                    queue.push_back(q);
                }
            }
        }
    }

    let mut gamma = Vec::new();
    for g in seen {
        let offset: Vec<f64> = g.iter().map(|&c| c as f64).collect();
        let mut overlap = 0.0;
        for a in &support {
            let shifted = a.cell.translated(&offset);
            for b in &support {
                overlap += shifted
                    .intersect(&b.cell)?
                    .iter()
                    .map(Region::measure)
                    .sum::<f64>();
            }
        }
        if overlap > 0.0 {
            gamma.push(g);
        }
    }
    Ok(gamma)
}

fn unit_vectors(d: usize) -> Vec<Vec<i64>> {
    let mut out = vec![vec![0; d]];
    for k in 0..d {
        for s in [-1, 1] {
            let mut e = vec![0; d];
            e[k] = s;
            out.push(e);
        }
    }
    out
}

fn hat1d() -> Result<FiniteElement> {
    tensor(1).map(|mut e| {
        e.name = "hat1d".into();
        e
    })
}

/// ψ(x) = Π (1 − |x_k|) on [−1, 1]^d, one piece per orthant.
fn tensor(d: usize) -> Result<FiniteElement> {
    if d == 0 || d > MAX_TENSOR_DIM {
        return Err(Error::Dimension {
            got: d,
            min: 1,
            max: MAX_TENSOR_DIM,
        });
    }
    let mut pieces = Vec::with_capacity(1 << d);
    for mask in 0..(1usize << d) {
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        let mut factors = Vec::with_capacity(d);
        for k in 0..d {
            let positive = mask & (1 << k) != 0;
            let mut lin = vec![0.0; d];
            if positive {
                hi[k] = 1.0;
                lin[k] = -1.0;
            } else {
                lo[k] = -1.0;
                lin[k] = 1.0;
            }
            factors.push((1.0, lin));
        }
        pieces.push((
            Cell::Box { lo, hi },
            Polynomial::product_of_affine(d, &factors),
        ));
    }
    let psi = PiecewisePolynomial::new(d, pieces)?;
    FiniteElement::new(format!("tensor({d})"), psi, unit_vectors(d))
}

/// Piecewise-linear hat on the six triangles around the origin of the
/// type-I triangulation (diagonals along e1 + e2).
fn triangle2d() -> Result<FiniteElement> {
    let affine =
        |c0: f64, c1: f64, c2: f64| Polynomial::product_of_affine(2, &[(c0, vec![c1, c2])]);
    let tri = |v: [[f64; 2]; 3]| Cell::Triangle(v);
    let pieces = vec![
        (
            tri([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]),
            affine(1.0, -1.0, 0.0),
        ),
        (
            tri([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
            affine(1.0, 0.0, -1.0),
        ),
        (
            tri([[0.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]),
            affine(1.0, 1.0, -1.0),
        ),
        (
            tri([[0.0, 0.0], [-1.0, 0.0], [-1.0, -1.0]]),
            affine(1.0, 1.0, 0.0),
        ),
        (
            tri([[0.0, 0.0], [-1.0, -1.0], [0.0, -1.0]]),
            affine(1.0, 0.0, 1.0),
        ),
        (
            tri([[0.0, 0.0], [0.0, -1.0], [1.0, 0.0]]),
            affine(1.0, -1.0, 1.0),
        ),
    ];
    let psi = PiecewisePolynomial::new(2, pieces)?;
    FiniteElement::new("triangle2d", psi, unit_vectors(2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[Vec<i64>]) -> BTreeSet<Vec<i64>> {
        v.iter().cloned().collect()
    }

    #[test]
    fn hat1d_neighbours() {
        let e = FiniteElement::preset(Preset::Hat1d).unwrap();
        assert_eq!(e.gamma(), &[vec![-1], vec![0], vec![1]]);
        assert_eq!(e.evaluate_psi(&[0.0]), 1.0);
        assert_eq!(e.evaluate_psi(&[0.5]), 0.5);
        assert_eq!(e.evaluate_psi(&[-0.25]), 0.75);
        assert_eq!(e.evaluate_psi(&[1.5]), 0.0);
    }

    #[test]
    fn triangle2d_neighbours_are_the_seven_diagonal_shifts() {
        let e = FiniteElement::preset(Preset::Triangle2d).unwrap();
        let mut expect = BTreeSet::new();
        for e1 in -1i64..=1 {
            for e2 in -1i64..=1 {
                if e1 * e2 == 0 || e1 * e2 == 1 {
                    expect.insert(vec![e1, e2]);
                }
            }
        }
        assert_eq!(set(e.gamma()), expect);
        assert_eq!(e.gamma().len(), 7);
    }

    #[test]
    fn triangle2d_point_values() {
        let e = FiniteElement::preset(Preset::Triangle2d).unwrap();
        // (0.25, 0.5) lies in 0 <= x1 <= x2 <= 1 where ψ = 1 − x2
        assert!((e.evaluate_psi(&[0.25, 0.5]) - 0.5).abs() < 1e-15);
        assert!((e.evaluate_psi(&[0.5, 0.25]) - 0.5).abs() < 1e-15);
        assert!((e.evaluate_psi(&[-0.5, 0.25]) - 0.25).abs() < 1e-15);
        assert_eq!(e.evaluate_psi(&[0.5, -0.75]), 0.0);
        assert_eq!(e.psi().max_face_jump().unwrap(), 0.0);
    }

    #[test]
    fn tensor_neighbours_fill_the_cube() {
        for d in 1..=3 {
            let e = FiniteElement::preset(Preset::Tensor(d)).unwrap();
            assert_eq!(e.gamma().len(), 3usize.pow(d as u32));
            assert!(e.psi().max_face_jump().unwrap() < 1e-15);
        }
        assert!(matches!(
            FiniteElement::preset(Preset::Tensor(5)),
            Err(Error::Dimension { got: 5, .. })
        ));
        assert!(FiniteElement::preset(Preset::Tensor(0)).is_err());
    }

    #[test]
    fn preset_names_round_trip() {
        for p in [Preset::Hat1d, Preset::Triangle2d, Preset::Tensor(3)] {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert_eq!("tensor2".parse::<Preset>().unwrap(), Preset::Tensor(2));
        assert!("square".parse::<Preset>().is_err());
    }
}
