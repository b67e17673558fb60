//! Periodic lattices h·ℤ^d on a torus of side L = n·h, and grid functions on them.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusLattice {
    dim: usize,
    h: f64,
    n: usize,
}

impl TorusLattice {
    /// A lattice with spacing `h > 0` and `n` sites per axis (`n` even, at least 4).
    pub fn new(dim: usize, h: f64, n: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidLattice("dimension must be positive".into()));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidLattice(format!(
                "mesh size must be positive, got {h}"
            )));
        }
        if n < 4 || !n.is_multiple_of(2) {
            return Err(Error::InvalidLattice(format!(
                "sites per axis must be even and at least 4, got {n}"
            )));
        }
        if n.checked_pow(dim as u32).is_none() {
            return Err(Error::InvalidLattice(format!("{n}^{dim} sites overflow")));
        }
        Ok(TorusLattice { dim, h, n })
    }

    /// Accepts a mesh size of either sign; the lattice h·ℤ^d is the same set for ±h.
    pub fn from_signed(dim: usize, h: f64, n: usize) -> Result<Self> {
        if h == 0.0 {
            return Err(Error::InvalidLattice("mesh size must be nonzero".into()));
        }
        TorusLattice::new(dim, h.abs(), n)
    }

    /// Lattice with `n` sites per axis on a torus of side `length`.
    pub fn with_length(dim: usize, length: f64, n: usize) -> Result<Self> {
        TorusLattice::new(dim, length / n as f64, n)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn sites_per_axis(&self) -> usize {
        self.n
    }

    pub fn sites(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn length(&self) -> f64 {
        self.n as f64 * self.h
    }

    /// Flat index of a multi-index; axis 0 varies fastest. Components wrap mod n.
    pub fn flat(&self, multi: &[i64]) -> usize {
        let n = self.n as i64;
        multi
            .iter()
            .rev()
            .fold(0usize, |acc, &i| acc * self.n + i.rem_euclid(n) as usize)
    }

    pub fn multi(&self, flat: usize) -> Vec<i64> {
        let mut rem = flat;
        (0..self.dim)
            .map(|_| {
                let i = rem % self.n;
                rem /= self.n;
                i as i64
            })
            .collect()
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        self.multi(flat)
            .iter()
            .map(|&i| i as f64 * self.h)
            .collect()
    }

    /// Site reached from `flat` by moving `offset` lattice steps, with wraparound.
    pub fn shift(&self, flat: usize, offset: &[i64]) -> usize {
        let m = self.multi(flat);
        let moved: Vec<i64> = m.iter().zip(offset).map(|(a, b)| a + b).collect();
        self.flat(&moved)
    }

    /// Same torus, half the spacing, twice the sites per axis.
    pub fn refine(&self) -> TorusLattice {
        TorusLattice {
            dim: self.dim,
            h: self.h / 2.0,
            n: 2 * self.n,
        }
    }

    /// `Some(2^k)` when `self` is `coarse` refined k ≥ 0 times.
    pub fn refinement_factor(&self, coarse: &TorusLattice) -> Option<usize> {
        if self.dim != coarse.dim || !self.n.is_multiple_of(coarse.n) {
            return None;
        }
        let factor = self.n / coarse.n;
        if !factor.is_power_of_two() {
            return None;
        }
        (coarse.h == self.h * factor as f64).then_some(factor)
    }

    pub(crate) fn ensure_same(&self, other: &TorusLattice) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::LatticeMismatch(format!(
                "lattice (d={}, h={}, n={}) vs (d={}, h={}, n={})",
                self.dim, self.h, self.n, other.dim, other.h, other.n
            )))
        }
    }
}

/// Real values on every site of a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    lattice: TorusLattice,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(lattice: TorusLattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.sites() {
            return Err(Error::LatticeMismatch(format!(
                "{} values for {} sites",
                values.len(),
                lattice.sites()
            )));
        }
        Ok(GridFunction { lattice, values })
    }

    pub fn zeros(lattice: &TorusLattice) -> Self {
        GridFunction {
            values: vec![0.0; lattice.sites()],
            lattice: lattice.clone(),
        }
    }

    pub fn constant(lattice: &TorusLattice, v: f64) -> Self {
        GridFunction {
            values: vec![v; lattice.sites()],
            lattice: lattice.clone(),
        }
    }

    /// Samples `f` at the site coordinates.
    pub fn from_fn(lattice: &TorusLattice, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..lattice.sites())
            .map(|i| f(&lattice.coords(i)))
            .collect();
        GridFunction {
            lattice: lattice.clone(),
            values,
        }
    }

    pub fn lattice(&self) -> &TorusLattice {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// (U, V)_{0,h} = h^d Σ U(x) V(x).
    pub fn inner_0h(&self, other: &GridFunction) -> Result<f64> {
        self.lattice.ensure_same(&other.lattice)?;
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        Ok(self.lattice.h.powi(self.lattice.dim as i32) * s)
    }

    /// |U|_{0,h} = (h^d Σ U(x)²)^{1/2}.
    pub fn norm_0h(&self) -> f64 {
        let s: f64 = self.values.iter().map(|v| v * v).sum();
        (self.lattice.h.powi(self.lattice.dim as i32) * s).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// self − other.
    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.lattice.ensure_same(&other.lattice)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(GridFunction {
            lattice: self.lattice.clone(),
            values,
        })
    }

    /// self += alpha · other.
    pub fn axpy(&mut self, alpha: f64, other: &GridFunction) -> Result<()> {
        self.lattice.ensure_same(&other.lattice)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in &mut self.values {
            *v *= alpha;
        }
    }

    /// Injection onto a coarser lattice of the same torus: samples at the shared sites.
    pub fn restrict(&self, coarse: &TorusLattice) -> Result<GridFunction> {
        let factor = self.lattice.refinement_factor(coarse).ok_or_else(|| {
            Error::LatticeMismatch(format!(
                "lattice with n={} h={} is not a refinement of n={} h={}",
                self.lattice.n, self.lattice.h, coarse.n, coarse.h
            ))
        })?;
        let f = factor as i64;
        let values = (0..coarse.sites())
            .map(|i| {
                let m: Vec<i64> = coarse.multi(i).iter().map(|&c| c * f).collect();
                self.values[self.lattice.flat(&m)]
            })
            .collect();
        Ok(GridFunction {
            lattice: coarse.clone(),
            values,
        })
    }

    /// Multilinear interpolation onto a refinement; coarse sites keep their values exactly.
    pub fn prolong(&self, fine: &TorusLattice) -> Result<GridFunction> {
        let factor = fine.refinement_factor(&self.lattice).ok_or_else(|| {
            Error::LatticeMismatch("prolongation target is not a refinement".into())
        })?;
        let d = fine.dim;
        let f = factor as i64;
        let values = (0..fine.sites())
            .map(|i| {
                let m = fine.multi(i);
                let base: Vec<i64> = m.iter().map(|&c| c.div_euclid(f)).collect();
                let frac: Vec<f64> = m
                    .iter()
                    .map(|&c| c.rem_euclid(f) as f64 / f as f64)
                    .collect();
                let mut acc = 0.0;
                for corner in 0..(1usize << d) {
                    let mut w = 1.0;
                    let mut idx = base.clone();
                    for k in 0..d {
                        if corner & (1 << k) != 0 {
                            w *= frac[k];
                            idx[k] += 1;
                        } else {
                            w *= 1.0 - frac[k];
                        }
                    }
                    if w != 0.0 {
                        acc += w * self.values[self.lattice.flat(&idx)];
                    }
                }
                acc
            })
            .collect();
        Ok(GridFunction {
            lattice: fine.clone(),
            values,
        })
    }

    /// CSV with one row per site: multi-index, coordinates, value (17 significant digits, LF).
    pub fn to_csv(&self) -> String {
        let d = self.lattice.dim;
        let mut out = String::new();
        let header: Vec<String> = (1..=d)
            .map(|k| format!("i{k}"))
            .chain((1..=d).map(|k| format!("x{k}")))
            .chain(std::iter::once("value".to_string()))
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for (i, v) in self.values.iter().enumerate() {
            for m in self.lattice.multi(i) {
                write!(out, "{m},").expect("write to string");
            }
            for x in self.lattice.coords(i) {
                write!(out, "{x:.16e},").expect("write to string");
            }
            writeln!(out, "{v:.16e}").expect("write to string");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction() {
        let l = TorusLattice::new(1, 0.25, 8).unwrap();
        assert_eq!(l.length(), 2.0);
        assert_eq!(l.sites(), 8);
        assert_eq!(TorusLattice::new(2, 0.5, 4).unwrap().sites(), 16);
        assert!(TorusLattice::new(1, 0.25, 7).is_err());
        assert!(TorusLattice::new(1, 0.25, 2).is_err());
        assert!(TorusLattice::new(1, -0.25, 8).is_err());
        assert_eq!(TorusLattice::from_signed(1, -0.25, 8).unwrap(), l);
    }

    #[test]
    fn refinement_nests() {
        let l = TorusLattice::new(1, 0.5, 4).unwrap();
        let f = l.refine();
        assert_eq!((f.h(), f.sites_per_axis()), (0.25, 8));
        let ff = f.refine();
        assert_eq!((ff.h(), ff.sites_per_axis()), (0.125, 16));
        assert_eq!(ff.refinement_factor(&l), Some(4));
        assert_eq!(l.refinement_factor(&ff), None);
        let u = GridFunction::from_fn(&f, |x| x[0]);
        let c = u.restrict(&l).unwrap();
        // coarse site k sits at fine index 2k
        assert_eq!(c.values(), &[0.0, 0.5, 1.0, 1.5]);
    }

    #[test]
    fn indices_wrap() {
        let l = TorusLattice::new(2, 1.0, 4).unwrap();
        for i in 0..l.sites() {
            assert_eq!(l.flat(&l.multi(i)), i);
        }
        assert_eq!(l.shift(0, &[-1, 0]), l.flat(&[3, 0]));
        assert_eq!(l.shift(l.flat(&[3, 3]), &[1, 1]), 0);
    }

    #[test]
    fn norms() {
        let l = TorusLattice::new(1, 0.25, 8).unwrap();
        let one = GridFunction::constant(&l, 1.0);
        assert_eq!(one.inner_0h(&one).unwrap(), 2.0);
        assert!((one.norm_0h() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(GridFunction::zeros(&l).norm_0h(), 0.0);
        let other = TorusLattice::new(1, 0.5, 8).unwrap();
        assert!(one.inner_0h(&GridFunction::zeros(&other)).is_err());
    }

    #[test]
    fn prolong_then_restrict_is_identity() {
        let l = TorusLattice::new(2, 0.5, 4).unwrap();
        let u = GridFunction::from_fn(&l, |x| (x[0] * 1.3).sin() + x[1]);
        let fine = l.refine().refine();
        assert_eq!(u.prolong(&fine).unwrap().restrict(&l).unwrap(), u);
    }

    #[test]
    fn csv_layout() {
        let l = TorusLattice::new(1, 0.5, 4).unwrap();
        let csv = GridFunction::constant(&l, 0.1).to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "i1,x1,value");
        assert_eq!(lines[2], "1,5.0000000000000000e-1,1.0000000000000001e-1");
        assert!(!csv.contains('\r'));
    }
}
