//! Reference tensors: inner products of ψ, its derivatives, and its integer shifts.
//!
//! With ψ_λ(z) = ψ(z − λ):
//! - `r`      = ∫ ψ_λ ψ
//! - `rb[β]`  = ∫ D_β ψ_λ ψ
//! - `rab[α][β]` = −∫ D_β ψ_λ D_α ψ
//! - `q[i][j][k][l]` = −∫ z_k z_l D_j ψ_λ D_i ψ
//! - `qt[i][k]` = ∫ z_k D_i ψ_λ ψ

use rayon::prelude::*;

use super::quadrature::DEFAULT_ORDER;
use super::FiniteElement;
use crate::error::Result;

/// A quadrature node on supp ψ_λ ∩ supp ψ with both functions and gradients evaluated.
#[derive(Debug, Clone)]
pub struct OverlapPoint {
    pub z: Vec<f64>,
    pub weight: f64,
    pub shifted: f64,
    pub base: f64,
    pub shifted_grad: Vec<f64>,
    pub base_grad: Vec<f64>,
}

/// Quadrature nodes covering the overlap of ψ_λ and ψ, split along the common
/// refinement of both cell decompositions.
pub fn overlap_rule(
    element: &FiniteElement,
    lambda: &[i64],
    order: usize,
) -> Result<Vec<OverlapPoint>> {
    let pieces = element.psi().pieces();
    let offset: Vec<f64> = lambda.iter().map(|&c| c as f64).collect();
    let mut out = Vec::new();
    for a in pieces {
        let shifted_cell = a.cell.translated(&offset);
        for b in pieces {
            for region in shifted_cell.intersect(&b.cell)? {
                for (z, weight) in region.rule(order) {
                    let local: Vec<f64> = z.iter().zip(&offset).map(|(zi, o)| zi - o).collect();
                    out.push(OverlapPoint {
                        shifted: a.poly.eval(&local),
                        base: b.poly.eval(&z),
                        shifted_grad: a.grad.iter().map(|g| g.eval(&local)).collect(),
                        base_grad: b.grad.iter().map(|g| g.eval(&z)).collect(),
                        z,
                        weight,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Quadrature nodes on supp ψ with the value ψ(z): `(z, weight, ψ(z))`.
pub fn support_rule(element: &FiniteElement, order: usize) -> Vec<(Vec<f64>, f64, f64)> {
    let mut out = Vec::new();
    for piece in element.psi().pieces() {
        let region = match &piece.cell {
            super::Cell::Box { lo, hi } => super::Region::Box {
                lo: lo.clone(),
                hi: hi.clone(),
            },
            super::Cell::Triangle(v) => super::Region::Triangle(*v),
        };
        for (z, w) in region.rule(order) {
            let v = piece.poly.eval(&z);
            out.push((z, w, v));
        }
    }
    out
}

/// All tensor entries for one shift λ.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub r: f64,
    /// Indexed by β.
    pub rb: Vec<f64>,
    /// Row-major in (α, β).
    pub rab: Vec<f64>,
    /// Row-major in (i, j, k, l).
    pub q: Vec<f64>,
    /// Row-major in (i, k).
    pub qt: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTensors {
    dim: usize,
    offsets: Vec<Vec<i64>>,
    entries: Vec<TensorEntry>,
}

impl ReferenceTensors {
    /// Computes every tensor with the default quadrature order, raised if ψ has high degree.
    pub fn compute(element: &FiniteElement) -> Result<Self> {
        Self::compute_with_order(element, DEFAULT_ORDER)
    }

    /// Computes every tensor with rules exact to at least total degree `order`
    /// (raised to 2·deg ψ + 2 when that is larger).
    pub fn compute_with_order(element: &FiniteElement, order: usize) -> Result<Self> {
        let d = element.dim();
        let order = order.max(2 * element.psi().max_degree() as usize + 2);
        let entries = element
            .gamma()
            .par_iter()
            .map(|lambda| {
                let points = overlap_rule(element, lambda, order)?;
                Ok(accumulate(d, &points))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ReferenceTensors {
            dim: d,
            offsets: element.gamma().to_vec(),
            entries,
        })
    }

    /// Tensors with explicitly given entries (used for synthetic symbol tests).
    pub fn from_entries(dim: usize, offsets: Vec<Vec<i64>>, entries: Vec<TensorEntry>) -> Self {
        assert_eq!(offsets.len(), entries.len());
        ReferenceTensors {
            dim,
            offsets,
            entries,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn offsets(&self) -> &[Vec<i64>] {
        &self.offsets
    }

    pub fn entries(&self) -> &[TensorEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn index_of(&self, lambda: &[i64]) -> Option<usize> {
        self.offsets.iter().position(|o| o == lambda)
    }

    /// Entry for λ; `None` when λ ∉ Γ (every tensor vanishes there).
    pub fn get(&self, lambda: &[i64]) -> Option<&TensorEntry> {
        self.index_of(lambda).map(|i| &self.entries[i])
    }

    pub fn r(&self, lambda: &[i64]) -> f64 {
        self.get(lambda).map_or(0.0, |e| e.r)
    }

    pub fn rb(&self, lambda: &[i64], beta: usize) -> f64 {
        self.get(lambda).map_or(0.0, |e| e.rb[beta])
    }

    pub fn rab(&self, lambda: &[i64], alpha: usize, beta: usize) -> f64 {
        self.get(lambda)
            .map_or(0.0, |e| e.rab[alpha * self.dim + beta])
    }

    pub fn q(&self, lambda: &[i64], i: usize, j: usize, k: usize, l: usize) -> f64 {
        let d = self.dim;
        self.get(lambda)
            .map_or(0.0, |e| e.q[((i * d + j) * d + k) * d + l])
    }

    pub fn qt(&self, lambda: &[i64], i: usize, k: usize) -> f64 {
        self.get(lambda).map_or(0.0, |e| e.qt[i * self.dim + k])
    }

    /// Largest absolute difference between corresponding entries of two tensor sets over the same Γ.
    pub fn max_abs_diff(&self, other: &ReferenceTensors) -> f64 {
        let mut worst: f64 = 0.0;
        for (lambda, e) in self.offsets.iter().zip(&self.entries) {
            let o = other.get(lambda);
            let pairs = |f: fn(&TensorEntry) -> Vec<f64>| -> f64 {
                let mine = f(e);
                let theirs = o.map_or(vec![0.0; mine.len()], f);
                mine.iter()
                    .zip(&theirs)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            };
            worst = worst
                .max(pairs(|t| vec![t.r]))
                .max(pairs(|t| t.rb.clone()))
                .max(pairs(|t| t.rab.clone()))
                .max(pairs(|t| t.q.clone()))
                .max(pairs(|t| t.qt.clone()));
        }
        worst
    }
}

fn accumulate(d: usize, points: &[OverlapPoint]) -> TensorEntry {
    let mut e = TensorEntry {
        r: 0.0,
        rb: vec![0.0; d],
        rab: vec![0.0; d * d],
        q: vec![0.0; d * d * d * d],
        qt: vec![0.0; d * d],
    };
    for p in points {
        let w = p.weight;
        e.r += w * p.shifted * p.base;
        for beta in 0..d {
            e.rb[beta] += w * p.shifted_grad[beta] * p.base;
        }
        for a in 0..d {
            for b in 0..d {
                let dd = p.shifted_grad[b] * p.base_grad[a];
                e.rab[a * d + b] -= w * dd;
                for k in 0..d {
                    for l in 0..d {
                        e.q[((a * d + b) * d + k) * d + l] -= w * p.z[k] * p.z[l] * dd;
                    }
                }
            }
            for k in 0..d {
                e.qt[a * d + k] += w * p.z[k] * p.shifted_grad[a] * p.base;
            }
        }
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::element::Preset;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-13
    }

    /// Composite Simpson on [−2, 2] with panel ends nudged inward, so one-sided
    /// derivatives are taken from the correct piece. Exact for cubics per panel.
    fn hat_oracle(f: impl Fn(f64) -> f64) -> f64 {
        let panels = 64;
        let nudge = 1e-15;
        let mut total = 0.0;
        for cell in -2..2 {
            let a = cell as f64;
            let h = 1.0 / panels as f64;
            for p in 0..panels {
                let x0 = a + p as f64 * h;
                total += h / 6.0 * (f(x0 + nudge) + 4.0 * f(x0 + 0.5 * h) + f(x0 + h - nudge));
            }
        }
        total
    }

    #[test]
    fn hat1d_tensors_match_brute_force() {
        let e = FiniteElement::preset(Preset::Hat1d).unwrap();
        let t = ReferenceTensors::compute(&e).unwrap();
        let psi = |x: f64| (1.0 - x.abs()).max(0.0);
        // one-sided derivative away from the kinks, which have measure zero
        let dpsi = |x: f64| {
            if x.abs() >= 1.0 {
                0.0
            } else {
                -x.signum()
            }
        };
        for lam in [-1i64, 0, 1] {
            let l = lam as f64;
            let r = hat_oracle(|z| psi(z - l) * psi(z));
            let rb = hat_oracle(|z| dpsi(z - l) * psi(z));
            let rab = -hat_oracle(|z| dpsi(z - l) * dpsi(z));
            let q = -hat_oracle(|z| z * z * dpsi(z - l) * dpsi(z));
            let qt = hat_oracle(|z| z * dpsi(z - l) * psi(z));
            assert!(close(t.r(&[lam]), r), "R_{lam}");
            assert!(close(t.rb(&[lam], 0), rb), "Rb_{lam}");
            assert!(close(t.rab(&[lam], 0, 0), rab), "Rab_{lam}");
            assert!(close(t.q(&[lam], 0, 0, 0, 0), q), "Q_{lam}");
            assert!(close(t.qt(&[lam], 0, 0), qt), "Qt_{lam}");
        }
        assert!(close(t.r(&[0]), 2.0 / 3.0));
        assert!(close(t.r(&[1]), 1.0 / 6.0));
        assert!(close(t.rab(&[0], 0, 0), -2.0));
        assert!(close(t.rab(&[-1], 0, 0), 1.0));
        assert!(close(t.rb(&[1], 0), 0.5));
        assert!(close(t.rb(&[-1], 0), -0.5));
        assert!(close(t.q(&[0], 0, 0, 0, 0), -2.0 / 3.0));
        assert!(close(t.q(&[1], 0, 0, 0, 0), 1.0 / 3.0));
        // ψ is even, so z·ψ'(z − λ)ψ(z) integrates to an even function of λ
        assert!(close(t.qt(&[0], 0, 0), -1.0 / 3.0));
        assert!(close(t.qt(&[1], 0, 0), 1.0 / 6.0));
        assert!(close(t.qt(&[-1], 0, 0), 1.0 / 6.0));
        assert_eq!(t.r(&[2]), 0.0);
    }

    #[test]
    fn triangle2d_published_values() {
        let e = FiniteElement::preset(Preset::Triangle2d).unwrap();
        let t = ReferenceTensors::compute(&e).unwrap();
        assert!(close(t.r(&[0, 0]), 0.5));
        for lam in e.gamma().iter().filter(|l| l.iter().any(|&c| c != 0)) {
            assert!(close(t.r(lam), 1.0 / 12.0), "{lam:?}");
        }
        for (k, l) in [(0usize, 1usize), (1, 0)] {
            let ek = |s: i64| {
                let mut v = vec![0, 0];
                v[k] = s;
                v
            };
            let el = |s: i64| {
                let mut v = vec![0, 0];
                v[l] = s;
                v
            };
            for s in [-1i64, 1] {
                let sf = s as f64;
                assert!(close(t.rb(&ek(s), k), sf / 3.0));
                assert!(close(t.rb(&el(s), k), -sf / 6.0));
                assert!(close(t.rb(&[s, s], k), sf / 6.0));
                // (D_kψ, D_kψ_{εe_k}) = −1 and (D_kψ, D_lψ_{εe_k}) = 1/2
                assert!(close(t.rab(&ek(s), k, k), 1.0));
                assert!(close(t.rab(&ek(s), k, l), -0.5));
                assert!(close(t.rab(&[s, s], k, l), 0.5));
            }
            assert!(close(t.rab(&[0, 0], k, k), -2.0));
            assert!(close(t.rab(&[0, 0], k, l), 1.0));
            assert!(close(t.q(&[0, 0], k, k, k, k), -2.0 / 3.0));
            assert!(close(t.q(&[0, 0], k, k, l, l), -1.0 / 3.0));
            assert!(close(t.q(&[0, 0], k, k, k, l), -1.0 / 6.0));
            assert!(close(t.q(&[0, 0], k, l, k, k), 1.0 / 6.0));
            assert!(close(t.qt(&[0, 0], k, k), -0.25));
            assert!(close(t.qt(&ek(1), k, k), 0.125));
            assert!(close(t.qt(&el(1), k, k), -1.0 / 24.0));
            assert!(close(t.qt(&[1, 1], k, k), 1.0 / 24.0));
            assert!(close(t.qt(&el(1), k, l), -1.0 / 12.0));
            assert!(close(t.qt(&[1, 1], k, l), 1.0 / 12.0));
        }
    }

    #[test]
    fn tensor2_is_a_product_of_hat_integrals() {
        let e = FiniteElement::preset(Preset::Tensor(2)).unwrap();
        let t = ReferenceTensors::compute(&e).unwrap();
        let r1 = |c: i64| if c == 0 { 2.0 / 3.0 } else { 1.0 / 6.0 };
        for lam in e.gamma() {
            assert!(close(t.r(lam), r1(lam[0]) * r1(lam[1])), "{lam:?}");
        }
        assert!(close(t.r(&[1, 0]), 1.0 / 9.0));
    }

    #[test]
    fn doubling_the_order_changes_nothing() {
        for p in [Preset::Hat1d, Preset::Triangle2d, Preset::Tensor(2)] {
            let e = FiniteElement::preset(p).unwrap();
            let a = ReferenceTensors::compute_with_order(&e, 8).unwrap();
            let b = ReferenceTensors::compute_with_order(&e, 16).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-13, "{p}");
        }
    }
}
