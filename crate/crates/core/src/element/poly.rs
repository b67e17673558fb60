//! Multivariate polynomials and piecewise-polynomial functions on cells.

use crate::element::geometry::Cell;
use crate::error::{Error, Result};

/// Dense-ish multivariate polynomial stored as a list of (exponents, coefficient) terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    dim: usize,
    terms: Vec<(Vec<u32>, f64)>,
}

impl Polynomial {
    /// Builds a polynomial, merging repeated exponents and dropping zero terms.
    pub fn new(dim: usize, terms: impl IntoIterator<Item = (Vec<u32>, f64)>) -> Result<Self> {
        let mut merged: Vec<(Vec<u32>, f64)> = Vec::new();
        for (exp, coef) in terms {
            if exp.len() != dim {
                return Err(Error::InvalidElement(format!(
                    "monomial exponent {exp:?} has length {} but the dimension is {dim}",
                    exp.len()
                )));
            }
            if !coef.is_finite() {
                return Err(Error::InvalidElement(format!(
                    "non-finite coefficient for monomial {exp:?}"
                )));
            }
            match merged.iter_mut().find(|(e, _)| *e == exp) {
                Some((_, c)) => *c += coef,
                None => merged.push((exp, coef)),
            }
        }
        merged.retain(|(_, c)| *c != 0.0);
        merged.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(Polynomial { dim, terms: merged })
    }

    pub fn zero(dim: usize) -> Self {
        Polynomial {
            dim,
            terms: Vec::new(),
        }
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        Polynomial::new(dim, [(vec![0; dim], value)]).expect("constant polynomial")
    }

    /// Product of affine factors `c0 + c·x`.
    pub fn product_of_affine(dim: usize, factors: &[(f64, Vec<f64>)]) -> Self {
        let mut acc = Polynomial::constant(dim, 1.0);
        for (c0, lin) in factors {
            let mut terms = vec![(vec![0; dim], *c0)];
            for (k, &ck) in lin.iter().enumerate() {
                let mut e = vec![0; dim];
                e[k] = 1;
                terms.push((e, ck));
            }
            let factor = Polynomial::new(dim, terms).expect("affine factor");
            acc = acc.mul(&factor);
        }
        acc
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[(Vec<u32>, f64)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|(e, _)| e.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        self.terms
            .iter()
            .map(|(exp, c)| {
                exp.iter()
                    .zip(x)
                    .fold(*c, |acc, (&p, &xi)| acc * xi.powi(p as i32))
            })
            .sum()
    }

    pub fn derivative(&self, axis: usize) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|(e, _)| e[axis] > 0)
            .map(|(e, c)| {
                let mut e2 = e.clone();
                e2[axis] -= 1;
                (e2, c * e[axis] as f64)
            });
        Polynomial::new(self.dim, terms).expect("derivative of a valid polynomial")
    }

    pub fn mul(&self, other: &Polynomial) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                terms.push((e, ca * cb));
            }
        }
        Polynomial::new(self.dim, terms).expect("product of valid polynomials")
    }

    pub fn scaled(&self, s: f64) -> Self {
        Polynomial::new(self.dim, self.terms.iter().map(|(e, c)| (e.clone(), c * s)))
            .expect("scaling a valid polynomial")
    }
}

/// One polynomial piece on one cell, with its gradient precomputed.
#[derive(Debug, Clone)]
pub struct Piece {
    pub cell: Cell,
    pub poly: Polynomial,
    pub grad: Vec<Polynomial>,
}

impl Piece {
    pub fn new(cell: Cell, poly: Polynomial) -> Self {
        let grad = (0..poly.dim()).map(|k| poly.derivative(k)).collect();
        Piece { cell, poly, grad }
    }
}

/// A compactly supported function given exactly as polynomials on cells with null pairwise overlaps.
#[derive(Debug, Clone)]
pub struct PiecewisePolynomial {
    dim: usize,
    pieces: Vec<Piece>,
}

const CONTAINS_TOL: f64 = 1e-12;

impl PiecewisePolynomial {
    pub fn new(dim: usize, pieces: Vec<(Cell, Polynomial)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidElement("dimension must be positive".into()));
        }
        if pieces.is_empty() {
            return Err(Error::InvalidElement("no pieces given".into()));
        }
        let mut out = Vec::with_capacity(pieces.len());
        for (cell, poly) in pieces {
            if cell.dim() != dim || poly.dim() != dim {
                return Err(Error::InvalidElement(format!(
                    "piece dimension mismatch: cell {}, polynomial {}, expected {dim}",
                    cell.dim(),
                    poly.dim()
                )));
            }
            cell.validate()?;
            out.push(Piece::new(cell, poly));
        }
        let pp = PiecewisePolynomial { dim, pieces: out };
        pp.check_disjoint()?;
        Ok(pp)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn max_degree(&self) -> u32 {
        self.pieces
            .iter()
            .map(|p| p.poly.degree())
            .max()
            .unwrap_or(0)
    }

    /// Point value; zero outside every cell. On shared faces the first containing cell wins.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.pieces
            .iter()
            .find(|p| p.cell.contains(x, CONTAINS_TOL))
            .map_or(0.0, |p| p.poly.eval(x))
    }

    /// Axis-aligned bounding box of the union of cells.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for p in &self.pieces {
            let (clo, chi) = p.cell.bounding_box();
            for k in 0..self.dim {
                lo[k] = lo[k].min(clo[k]);
                hi[k] = hi[k].max(chi[k]);
            }
        }
        (lo, hi)
    }

    pub fn scaled(&self, s: f64) -> Self {
        PiecewisePolynomial {
            dim: self.dim,
            pieces: self
                .pieces
                .iter()
                .map(|p| Piece::new(p.cell.clone(), p.poly.scaled(s)))
                .collect(),
        }
    }

    /// Same function moved by `offset` (x ↦ ψ(x − offset)).
    pub fn translated(&self, offset: &[f64]) -> Result<Self> {
        let pieces = self
            .pieces
            .iter()
            .map(|p| {
                let cell = p.cell.translated(offset);
                let poly = translate_poly(&p.poly, offset);
                (cell, poly)
            })
            .collect();
        PiecewisePolynomial::new(self.dim, pieces)
    }

    fn check_disjoint(&self) -> Result<()> {
        for (a, pa) in self.pieces.iter().enumerate() {
            for pb in &self.pieces[a + 1..] {
                let overlap: f64 = pa
                    .cell
                    .intersect(&pb.cell)?
                    .iter()
                    .map(|r| r.measure())
                    .sum();
                if overlap > 1e-12 {
                    return Err(Error::InvalidElement(format!(
                        "cells overlap with positive measure {overlap:e}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Largest jump across shared cell faces, sampled at points on each pairwise interface.
    pub fn max_face_jump(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (a, pa) in self.pieces.iter().enumerate() {
            for pb in &self.pieces[a + 1..] {
                for x in pa.cell.shared_face_samples(&pb.cell) {
                    worst = worst.max((pa.poly.eval(&x) - pb.poly.eval(&x)).abs());
                }
            }
        }
        Ok(worst)
    }
}

/// p(x − offset) expanded back into monomials.
fn translate_poly(p: &Polynomial, offset: &[f64]) -> Polynomial {
    let dim = p.dim();
    let mut acc = Polynomial::zero(dim);
    for (exp, coef) in p.terms() {
        let mut term = Polynomial::constant(dim, *coef);
        for (k, &e) in exp.iter().enumerate() {
            let mut lin = vec![0.0; dim];
            lin[k] = 1.0;
            let factor = Polynomial::product_of_affine(dim, &[(-offset[k], lin)]);
            for _ in 0..e {
                term = term.mul(&factor);
            }
        }
        let merged: Vec<_> = acc.terms().iter().chain(term.terms()).cloned().collect();
        acc = Polynomial::new(dim, merged).expect("sum of valid polynomials");
    }
    acc
}
