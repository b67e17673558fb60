//! Lattice operators built from an element, coefficient fields and a lattice:
//! the mass operator, the drift operator, the noise operators, and the
//! mollified data.
//!
//! Every operator has the form φ(x) ↦ Σ_{λ∈Γ} k(λ, x) φ(x + hλ). Its site
//! coefficients are integrals of a coefficient field at x + hz against a
//! product of ψ_λ, ψ and their derivatives, evaluated by the same overlap
//! quadrature used for the reference tensors.

use std::borrow::Cow;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::element::{overlap_rule, support_rule, FiniteElement, ReferenceTensors};
use crate::error::{Error, Result};
use crate::expr::{Coefficients, Expr};
use crate::lattice::{GridFunction, TorusLattice};

/// Work below this many sites runs on the calling thread.
const PARALLEL_SITES: usize = 4096;

/// A site-dependent stencil over a fixed offset set.
#[derive(Debug, Clone)]
pub struct StencilOperator {
    lattice: TorusLattice,
    offsets: Vec<Vec<i64>>,
    /// `coeffs[k][site]` multiplies U(site + offsets[k]).
    coeffs: Vec<Vec<f64>>,
    neighbours: Arc<Vec<Vec<usize>>>,
    time: f64,
}

fn neighbour_table(lattice: &TorusLattice, offsets: &[Vec<i64>]) -> Vec<Vec<usize>> {
    offsets
        .iter()
        .map(|o| (0..lattice.sites()).map(|s| lattice.shift(s, o)).collect())
        .collect()
}

impl StencilOperator {
    pub fn new(
        lattice: &TorusLattice,
        offsets: Vec<Vec<i64>>,
        coeffs: Vec<Vec<f64>>,
        time: f64,
    ) -> Result<Self> {
        if offsets.len() != coeffs.len() || coeffs.iter().any(|c| c.len() != lattice.sites()) {
            return Err(Error::LatticeMismatch(
                "stencil coefficient table has the wrong shape".into(),
            ));
        }
        if offsets.iter().any(|o| o.len() != lattice.dim()) {
            return Err(Error::LatticeMismatch(
                "stencil offset has the wrong dimension".into(),
            ));
        }
        let neighbours = Arc::new(neighbour_table(lattice, &offsets));
        Ok(StencilOperator {
            lattice: lattice.clone(),
            offsets,
            coeffs,
            neighbours,
            time,
        })
    }

    /// Site-independent stencil.
    pub fn constant(
        lattice: &TorusLattice,
        offsets: Vec<Vec<i64>>,
        weights: &[f64],
        time: f64,
    ) -> Result<Self> {
        let coeffs = weights.iter().map(|&w| vec![w; lattice.sites()]).collect();
        StencilOperator::new(lattice, offsets, coeffs, time)
    }

    pub fn zero(lattice: &TorusLattice, offsets: Vec<Vec<i64>>) -> Self {
        let coeffs = vec![vec![0.0; lattice.sites()]; offsets.len()];
        StencilOperator::new(lattice, offsets, coeffs, 0.0).expect("well-shaped zero stencil")
    }

    /// Zero operator sharing this operator's lattice, offsets and neighbour table.
    pub fn zeroed(&self) -> Self {
        StencilOperator {
            lattice: self.lattice.clone(),
            offsets: self.offsets.clone(),
            coeffs: vec![vec![0.0; self.lattice.sites()]; self.offsets.len()],
            neighbours: Arc::clone(&self.neighbours),
            time: self.time,
        }
    }

    pub fn lattice(&self) -> &TorusLattice {
        &self.lattice
    }

    pub fn offsets(&self) -> &[Vec<i64>] {
        &self.offsets
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coeffs
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Coefficient of the zero offset at each site (zero if 0 ∉ offsets).
    pub fn diagonal(&self) -> Vec<f64> {
        let mut diag = vec![0.0; self.lattice.sites()];
        for (k, o) in self.offsets.iter().enumerate() {
            if o.iter().all(|&c| c == 0) {
                for (d, c) in diag.iter_mut().zip(&self.coeffs[k]) {
                    *d += c;
                }
            }
        }
        diag
    }

    /// V(x) = Σ_k coef_k(x) U(x + offset_k).
    pub fn apply(&self, u: &GridFunction) -> Result<GridFunction> {
        self.lattice.ensure_same(u.lattice())?;
        let mut out = vec![0.0; self.lattice.sites()];
        self.apply_into(u.values(), &mut out);
        GridFunction::new(self.lattice.clone(), out)
    }

    /// Raw-slice application used inside the solver.
    pub(crate) fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        let site = |s: usize| {
            let mut acc = 0.0;
            for k in 0..self.offsets.len() {
                acc += self.coeffs[k][s] * u[self.neighbours[k][s]];
            }
            acc
        };
        if out.len() >= PARALLEL_SITES {
            out.par_iter_mut()
                .enumerate()
                .for_each(|(s, o)| *o = site(s));
        } else {
            for (s, o) in out.iter_mut().enumerate() {
                *o = site(s);
            }
        }
    }

    /// Σ_i w_i · op_i over operators sharing lattice and offsets.
    pub fn linear_combination(terms: &[(f64, &StencilOperator)]) -> Result<StencilOperator> {
        let (_, first) = terms
            .first()
            .ok_or_else(|| Error::LatticeMismatch("empty operator combination".into()))?;
        let mut out = first.zeroed();
        for (w, op) in terms {
            out.lattice.ensure_same(&op.lattice)?;
            if op.offsets != out.offsets {
                return Err(Error::LatticeMismatch(
                    "operators have different offset sets".into(),
                ));
            }
            for (dst, src) in out.coeffs.iter_mut().zip(&op.coeffs) {
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        out.time = first.time;
        Ok(out)
    }

    /// Dense matrix with entry (x, x + offset) = coefficient; repeated targets accumulate.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.lattice.sites();
        let mut m = DMatrix::zeros(n, n);
        for k in 0..self.offsets.len() {
            for s in 0..n {
                m[(s, self.neighbours[k][s])] += self.coeffs[k][s];
            }
        }
        m
    }

    /// Diagnostic CSV: one row per (site, offset) with the coefficient.
    pub fn to_csv(&self) -> String {
        let d = self.lattice.dim();
        let mut out = String::from("site");
        for k in 1..=d {
            write!(out, ",o{k}").expect("write to string");
        }
        out.push_str(",coefficient\n");
        for s in 0..self.lattice.sites() {
            for (k, o) in self.offsets.iter().enumerate() {
                write!(out, "{s}").expect("write to string");
                for c in o {
                    write!(out, ",{c}").expect("write to string");
                }
                writeln!(out, ",{:.16e}", self.coeffs[k][s]).expect("write to string");
            }
        }
        out
    }

    /// True when every coefficient field is bitwise equal to the other operator's.
    pub fn bitwise_eq(&self, other: &StencilOperator) -> bool {
        self.lattice == other.lattice
            && self.offsets == other.offsets
            && self
                .coeffs
                .iter()
                .flatten()
                .zip(other.coeffs.iter().flatten())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Quadrature weights of one offset λ for each kind of coefficient integral.
#[derive(Debug, Clone)]
struct KernelPoint {
    z: Vec<f64>,
    /// −w ∂_jψ_λ ∂_iψ, row-major (i, j).
    second: Vec<f64>,
    /// w ∂_iψ_λ ψ.
    first: Vec<f64>,
    /// w ψ_λ ψ.
    zeroth: f64,
}

#[derive(Debug, Clone)]
struct Kernel {
    points: Vec<KernelPoint>,
    second_sum: Vec<f64>,
    first_sum: Vec<f64>,
    zeroth_sum: f64,
}

impl Kernel {
    fn build(element: &FiniteElement, lambda: &[i64], order: usize) -> Result<Kernel> {
        let d = element.dim();
        let raw = overlap_rule(element, lambda, order)?;
        let points: Vec<KernelPoint> = raw
            .into_iter()
            .map(|p| {
                let mut second = vec![0.0; d * d];
                for i in 0..d {
                    for j in 0..d {
                        second[i * d + j] = -p.weight * p.shifted_grad[j] * p.base_grad[i];
                    }
                }
                KernelPoint {
                    first: p
                        .shifted_grad
                        .iter()
                        .map(|g| p.weight * g * p.base)
                        .collect(),
                    zeroth: p.weight * p.shifted * p.base,
                    second,
                    z: p.z,
                }
            })
            .collect();
        let mut second_sum = vec![0.0; d * d];
        let mut first_sum = vec![0.0; d];
        let mut zeroth_sum = 0.0;
        for p in &points {
            for (s, v) in second_sum.iter_mut().zip(&p.second) {
                *s += v;
            }
            for (s, v) in first_sum.iter_mut().zip(&p.first) {
                *s += v;
            }
            zeroth_sum += p.zeroth;
        }
        Ok(Kernel {
            points,
            second_sum,
            first_sum,
            zeroth_sum,
        })
    }
}

/// Which weight of a kernel point an integral uses.
#[derive(Debug, Clone, Copy)]
enum Weight {
    Second(usize),
    First(usize),
    Zeroth,
}

impl Weight {
    fn of(self, p: &KernelPoint) -> f64 {
        match self {
            Weight::Second(k) => p.second[k],
            Weight::First(k) => p.first[k],
            Weight::Zeroth => p.zeroth,
        }
    }

    fn sum(self, k: &Kernel) -> f64 {
        match self {
            Weight::Second(i) => k.second_sum[i],
            Weight::First(i) => k.first_sum[i],
            Weight::Zeroth => k.zeroth_sum,
        }
    }
}

/// One term Σ_q weight_q · field(x + h z_q), scaled by `scale`.
struct Term<'a> {
    expr: &'a Expr,
    weight: Weight,
    scale: f64,
    label: String,
}

fn wrap(v: f64, length: f64) -> f64 {
    let w = v.rem_euclid(length);
    if w >= length {
        0.0
    } else {
        w
    }
}

/// Assembly context for one element on one lattice.
#[derive(Debug, Clone)]
pub struct Assembler {
    element: FiniteElement,
    tensors: ReferenceTensors,
    lattice: TorusLattice,
    order: usize,
    kernels: Vec<Kernel>,
    support: Vec<(Vec<f64>, f64)>,
    neighbours: Arc<Vec<Vec<usize>>>,
}

impl Assembler {
    /// Precomputes the per-offset quadrature kernels. `order` is the total degree
    /// the sub-cell rules integrate exactly.
    pub fn new(
        element: &FiniteElement,
        tensors: &ReferenceTensors,
        lattice: &TorusLattice,
        order: usize,
    ) -> Result<Self> {
        if element.dim() != lattice.dim() || tensors.dim() != lattice.dim() {
            return Err(Error::LatticeMismatch(format!(
                "element dimension {} vs lattice dimension {}",
                element.dim(),
                lattice.dim()
            )));
        }
        if tensors.offsets() != element.gamma() {
            return Err(Error::InvalidElement(
                "tensors were computed for a different element".into(),
            ));
        }
        let kernels = element
            .gamma()
            .iter()
            .map(|l| Kernel::build(element, l, order))
            .collect::<Result<Vec<_>>>()?;
        let support = support_rule(element, order)
            .into_iter()
            .map(|(z, w, v)| (z, w * v))
            .collect();
        Ok(Assembler {
            neighbours: Arc::new(neighbour_table(lattice, element.gamma())),
            element: element.clone(),
            tensors: tensors.clone(),
            lattice: lattice.clone(),
            order,
            kernels,
            support,
        })
    }

    pub fn lattice(&self) -> &TorusLattice {
        &self.lattice
    }

    pub fn element(&self) -> &FiniteElement {
        &self.element
    }

    pub fn tensors(&self) -> &ReferenceTensors {
        &self.tensors
    }

    pub fn quad_order(&self) -> usize {
        self.order
    }

    fn operator(
        &self,
        offsets: Vec<Vec<i64>>,
        coeffs: Vec<Vec<f64>>,
        time: f64,
    ) -> StencilOperator {
        let neighbours = if offsets.as_slice() == self.element.gamma() {
            Arc::clone(&self.neighbours)
        } else {
            Arc::new(neighbour_table(&self.lattice, &offsets))
        };
        StencilOperator {
            lattice: self.lattice.clone(),
            offsets,
            coeffs,
            neighbours,
            time,
        }
    }

    /// Mass operator: coefficient R_λ at every site.
    pub fn mass(&self) -> StencilOperator {
        let n = self.lattice.sites();
        let coeffs = self
            .tensors
            .entries()
            .iter()
            .map(|e| vec![e.r; n])
            .collect();
        self.operator(self.element.gamma().to_vec(), coeffs, 0.0)
    }

    /// Σ over terms at every (λ, site), with the offset of λ stored as sign(h)·λ.
    fn assemble(&self, terms: &[Term<'_>], t: f64, h: f64) -> Result<StencilOperator> {
        let n = self.lattice.sites();
        let length = self.lattice.length();
        let sign = if h < 0.0 { -1 } else { 1 };
        let mut coeffs = Vec::with_capacity(self.kernels.len());
        for (lambda, kernel) in self.element.gamma().iter().zip(&self.kernels) {
            let constant_part: f64 = terms
                .iter()
                .filter_map(|term| {
                    term.expr
                        .constant_value()
                        .map(|c| term.scale * c * term.weight.sum(kernel))
                })
                .sum();
            let varying: Vec<&Term<'_>> = terms
                .iter()
                .filter(|t| t.expr.constant_value().is_none())
                .collect();
            let site_value = |s: usize| -> Result<f64> {
                let mut acc = constant_part;
                if varying.is_empty() {
                    return Ok(acc);
                }
                let x = self.lattice.coords(s);
                let mut y = vec![0.0; x.len()];
                for term in &varying {
                    let mut integral = 0.0;
                    for p in &kernel.points {
                        let w = term.weight.of(p);
                        if w == 0.0 {
                            continue;
                        }
                        for k in 0..x.len() {
                            y[k] = wrap(x[k] + h * p.z[k], length);
                        }
                        let v = term.expr.eval(&y, t).map_err(|source| Error::Eval {
                            context: format!(
                                "{} at site {s}, offset {lambda:?}, t={t}",
                                term.label
                            ),
                            source,
                        })?;
                        integral += w * v;
                    }
                    acc += term.scale * integral;
                }
                Ok(acc)
            };
            let column: Vec<f64> = if n >= PARALLEL_SITES && !varying.is_empty() {
                (0..n)
                    .into_par_iter()
                    .map(site_value)
                    .collect::<Result<_>>()?
            } else {
                (0..n).map(site_value).collect::<Result<_>>()?
            };
            coeffs.push(column);
        }
        let offsets = self
            .element
            .gamma()
            .iter()
            .map(|l| l.iter().map(|c| sign * c).collect())
            .collect();
        Ok(self.operator(offsets, coeffs, t))
    }

    fn drift_terms<'a>(&self, coeffs: &'a Coefficients, h: f64) -> Vec<Term<'a>> {
        let d = self.lattice.dim();
        let mut terms = Vec::new();
        for i in 0..d {
            for j in 0..d {
                if let Some(e) = &coeffs.a[i][j] {
                    terms.push(Term {
                        expr: e,
                        weight: Weight::Second(i * d + j),
                        scale: 1.0 / (h * h),
                        label: format!("a.{}.{}", i + 1, j + 1),
                    });
                }
            }
            if let Some(e) = &coeffs.b[i] {
                terms.push(Term {
                    expr: e,
                    weight: Weight::First(i),
                    scale: 1.0 / h,
                    label: format!("b.{}", i + 1),
                });
            }
        }
        if let Some(e) = &coeffs.c {
            terms.push(Term {
                expr: e,
                weight: Weight::Zeroth,
                scale: 1.0,
                label: "c".into(),
            });
        }
        terms
    }

    fn noise_terms<'a>(&self, coeffs: &'a Coefficients, rho: usize, h: f64) -> Vec<Term<'a>> {
        let mut terms = Vec::new();
        for i in 0..self.lattice.dim() {
            if let Some(e) = &coeffs.sigma[i][rho] {
                terms.push(Term {
                    expr: e,
                    weight: Weight::First(i),
                    scale: 1.0 / h,
                    label: format!("sigma.{}.{}", i + 1, rho + 1),
                });
            }
        }
        if let Some(e) = &coeffs.nu[rho] {
            terms.push(Term {
                expr: e,
                weight: Weight::Zeroth,
                scale: 1.0,
                label: format!("nu.{}", rho + 1),
            });
        }
        terms
    }

    /// Drift operator Σ_λ [A/h² + B/h + C] φ(x + hλ) at time t.
    pub fn drift(&self, coeffs: &Coefficients, t: f64) -> Result<StencilOperator> {
        self.assemble(
            &self.drift_terms(coeffs, self.lattice.h()),
            t,
            self.lattice.h(),
        )
    }

    /// Noise operator Σ_λ [S/h + N] φ(x + hλ) for channel `rho` (zero-based) at time t.
    pub fn noise(&self, coeffs: &Coefficients, t: f64, rho: usize) -> Result<StencilOperator> {
        self.assemble(
            &self.noise_terms(coeffs, rho, self.lattice.h()),
            t,
            self.lattice.h(),
        )
    }

    /// Drift assembled literally with a mesh size of either sign: points x + hz,
    /// scales 1/h² and 1/h, and offsets stored as the lattice step hλ/|h|.
    pub fn drift_signed(&self, coeffs: &Coefficients, t: f64, h: f64) -> Result<StencilOperator> {
        debug_assert_eq!(h.abs(), self.lattice.h());
        self.assemble(&self.drift_terms(coeffs, h), t, h)
    }

    /// Noise counterpart of [`Assembler::drift_signed`].
    pub fn noise_signed(
        &self,
        coeffs: &Coefficients,
        t: f64,
        rho: usize,
        h: f64,
    ) -> Result<StencilOperator> {
        debug_assert_eq!(h.abs(), self.lattice.h());
        self.assemble(&self.noise_terms(coeffs, rho, h), t, h)
    }

    /// Mollified field φ^h(x) = ∫ φ(x + hz) ψ(z) dz at every site.
    pub fn mollify(&self, field: Option<&Expr>, t: f64, label: &str) -> Result<GridFunction> {
        let Some(expr) = field else {
            return Ok(GridFunction::zeros(&self.lattice));
        };
        if let Some(c) = expr.constant_value() {
            let mass: f64 = self.support.iter().map(|(_, w)| w).sum();
            return Ok(GridFunction::constant(&self.lattice, c * mass));
        }
        let h = self.lattice.h();
        let length = self.lattice.length();
        let site_value = |s: usize| -> Result<f64> {
            let x = self.lattice.coords(s);
            let mut y = vec![0.0; x.len()];
            let mut acc = 0.0;
            for (z, w) in &self.support {
                for k in 0..x.len() {
                    y[k] = wrap(x[k] + h * z[k], length);
                }
                let v = expr.eval(&y, t).map_err(|source| Error::Eval {
                    context: format!("{label} at site {s}, t={t}"),
                    source,
                })?;
                acc += w * v;
            }
            Ok(acc)
        };
        let n = self.lattice.sites();
        let values: Vec<f64> = if n >= PARALLEL_SITES {
            (0..n)
                .into_par_iter()
                .map(site_value)
                .collect::<Result<_>>()?
        } else {
            (0..n).map(site_value).collect::<Result<_>>()?
        };
        GridFunction::new(self.lattice.clone(), values)
    }
}

/// Operators and data of one problem on one lattice, with time-independent parts cached.
#[derive(Debug, Clone)]
pub struct AssembledProblem {
    assembler: Assembler,
    coeffs: Coefficients,
    mass: StencilOperator,
    drift: Option<StencilOperator>,
    noise: Vec<Option<StencilOperator>>,
    forcing: Option<GridFunction>,
    free_noise: Vec<Option<GridFunction>>,
    initial: GridFunction,
}

impl AssembledProblem {
    pub fn new(
        element: &FiniteElement,
        tensors: &ReferenceTensors,
        coeffs: &Coefficients,
        lattice: &TorusLattice,
        order: usize,
    ) -> Result<Self> {
        if coeffs.dim != lattice.dim() {
            return Err(Error::InvalidProblem(format!(
                "problem has dimension {} but the lattice has {}",
                coeffs.dim,
                lattice.dim()
            )));
        }
        let assembler = Assembler::new(element, tensors, lattice, order)?;
        let mass = assembler.mass();
        let drift = if coeffs.drift_depends_on_time() {
            None
        } else {
            Some(assembler.drift(coeffs, 0.0)?)
        };
        let noise_static = !coeffs.noise_depends_on_time();
        let noise = (0..coeffs.rho_max)
            .map(|r| {
                if noise_static && coeffs.channel_active(r) {
                    assembler.noise(coeffs, 0.0, r).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let forcing = match &coeffs.f {
            Some(f) if !f.depends_on_time() => Some(assembler.mollify(Some(f), 0.0, "f")?),
            _ => None,
        };
        let free_noise = coeffs
            .g
            .iter()
            .map(|g| match g {
                Some(g) if !g.depends_on_time() => assembler.mollify(Some(g), 0.0, "g").map(Some),
                _ => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;
        let initial = assembler.mollify(coeffs.phi.as_ref(), 0.0, "phi")?;
        Ok(AssembledProblem {
            assembler,
            coeffs: coeffs.clone(),
            mass,
            drift,
            noise,
            forcing,
            free_noise,
            initial,
        })
    }

    pub fn lattice(&self) -> &TorusLattice {
        self.assembler.lattice()
    }

    pub fn assembler(&self) -> &Assembler {
        &self.assembler
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coeffs
    }

    pub fn mass(&self) -> &StencilOperator {
        &self.mass
    }

    pub fn drift_is_static(&self) -> bool {
        self.drift.is_some()
    }

    pub fn drift(&self, t: f64) -> Result<Cow<'_, StencilOperator>> {
        match &self.drift {
            Some(op) => Ok(Cow::Borrowed(op)),
            None => self.assembler.drift(&self.coeffs, t).map(Cow::Owned),
        }
    }

    /// Noise operator for channel `rho`, or `None` when σ and ν vanish on it.
    pub fn noise(&self, t: f64, rho: usize) -> Result<Option<Cow<'_, StencilOperator>>> {
        let active =
            self.coeffs.sigma.iter().any(|row| row[rho].is_some()) || self.coeffs.nu[rho].is_some();
        if !active {
            return Ok(None);
        }
        match &self.noise[rho] {
            Some(op) => Ok(Some(Cow::Borrowed(op))),
            None => self
                .assembler
                .noise(&self.coeffs, t, rho)
                .map(|op| Some(Cow::Owned(op))),
        }
    }

    /// Mollified forcing f^h_t, or `None` when f is absent.
    pub fn forcing(&self, t: f64) -> Result<Option<Cow<'_, GridFunction>>> {
        match (&self.forcing, &self.coeffs.f) {
            (Some(f), _) => Ok(Some(Cow::Borrowed(f))),
            (None, Some(expr)) => self
                .assembler
                .mollify(Some(expr), t, "f")
                .map(|g| Some(Cow::Owned(g))),
            (None, None) => Ok(None),
        }
    }

    /// Mollified free noise term g^{h,ρ}_t, or `None` when absent.
    pub fn free_noise(&self, t: f64, rho: usize) -> Result<Option<Cow<'_, GridFunction>>> {
        match (&self.free_noise[rho], &self.coeffs.g[rho]) {
            (Some(g), _) => Ok(Some(Cow::Borrowed(g))),
            (None, Some(expr)) => self
                .assembler
                .mollify(Some(expr), t, "g")
                .map(|g| Some(Cow::Owned(g))),
            (None, None) => Ok(None),
        }
    }

    /// Mollified initial data φ^h.
    pub fn initial(&self) -> &GridFunction {
        &self.initial
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::element::{quadrature::DEFAULT_ORDER, Preset};

    fn setup(p: Preset, n: usize, length: f64) -> Assembler {
        let e = FiniteElement::preset(p).unwrap();
        let t = ReferenceTensors::compute(&e).unwrap();
        let l = TorusLattice::with_length(e.dim(), length, n).unwrap();
        Assembler::new(&e, &t, &l, DEFAULT_ORDER).unwrap()
    }

    fn coeffs(text: &str, d: usize) -> Coefficients {
        Coefficients::parse(text, d, 1).unwrap()
    }

    #[test]
    fn mass_on_constants_and_spikes() {
        let a = setup(Preset::Hat1d, 8, 8.0);
        let m = a.mass();
        let one = GridFunction::constant(a.lattice(), 1.0);
        for v in m.apply(&one).unwrap().values() {
            assert!((v - 1.0).abs() < 1e-15);
        }
        let mut spike = GridFunction::zeros(a.lattice());
        spike.values_mut()[0] = 1.0;
        let r = m.apply(&spike).unwrap();
        let v = r.values();
        assert!((v[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((v[1] - 1.0 / 6.0).abs() < 1e-15);
        assert!((v[7] - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(v[3], 0.0);
        let dense = m.to_dense();
        assert_eq!(dense.clone(), dense.transpose());
    }

    #[test]
    fn unit_diffusion_is_the_discrete_laplacian() {
        let n = 64;
        let a = setup(Preset::Hat1d, n, std::f64::consts::TAU);
        let h = a.lattice().h();
        let op = a.drift(&coeffs("a.1.1 = 1", 1), 0.0).unwrap();
        for (k, o) in op.offsets().iter().enumerate() {
            let expect = if o[0] == 0 { -2.0 } else { 1.0 } / (h * h);
            assert!(op.coefficients()[k]
                .iter()
                .all(|c| (c - expect).abs() < 1e-9 * expect.abs()));
        }
        let u = GridFunction::from_fn(a.lattice(), |x| x[0].sin());
        let lu = op.apply(&u).unwrap();
        let eig = (2.0 * h.cos() - 2.0) / (h * h);
        for (v, s) in lu.values().iter().zip(u.values()) {
            assert!((v - eig * s).abs() < 1e-10);
        }
    }

    #[test]
    fn drift_annihilates_constants() {
        let a = setup(Preset::Triangle2d, 8, 4.0);
        let c = coeffs(
            "a.1.1 = \"1 + 0.3*sin(x2)\"\na.2.2 = \"2 + cos(x1)\"\na.1.2 = \"0.2*sin(x1 + x2)\"",
            2,
        );
        let op = a.drift(&c, 0.0).unwrap();
        let lu = op.apply(&GridFunction::constant(a.lattice(), 1.0)).unwrap();
        assert!(lu.max_abs() < 1e-9, "{}", lu.max_abs());
    }

    #[test]
    fn zeroth_order_terms_reduce_to_the_mass() {
        let a = setup(Preset::Tensor(2), 4, 4.0);
        let m = a.mass();
        let c = a.drift(&coeffs("a.1.1 = 0\nc = 1", 2), 0.0).unwrap();
        let nu = a.noise(&coeffs("a.1.1 = 0\nnu.1 = 1", 2), 0.0, 0).unwrap();
        for (x, (y, z)) in m.coefficients().iter().flatten().zip(
            c.coefficients()
                .iter()
                .flatten()
                .zip(nu.coefficients().iter().flatten()),
        ) {
            assert!((x - y).abs() < 1e-15 && (x - z).abs() < 1e-15);
        }
    }

    #[test]
    fn unit_transport_noise_is_a_centred_difference() {
        let a = setup(Preset::Hat1d, 8, 2.0);
        let h = a.lattice().h();
        let op = a
            .noise(&coeffs("a.1.1 = 1\nsigma.1.1 = 1", 1), 0.0, 0)
            .unwrap();
        for (k, o) in op.offsets().iter().enumerate() {
            let expect = 0.5 * o[0] as f64 / h;
            assert!((op.coefficients()[k][3] - expect).abs() < 1e-14);
        }
        let lu = op.apply(&GridFunction::constant(a.lattice(), 1.0)).unwrap();
        assert!(lu.max_abs() < 1e-14);
    }

    #[test]
    fn mollified_data() {
        let a = setup(Preset::Hat1d, 16, 16.0);
        let h = a.lattice().h();
        let one = a
            .mollify(Some(&Expr::parse("1").unwrap()), 0.0, "phi")
            .unwrap();
        assert!(one.values().iter().all(|v| (v - 1.0).abs() < 1e-15));
        let lin = a
            .mollify(Some(&Expr::parse("x1").unwrap()), 0.0, "phi")
            .unwrap();
        let sq = a
            .mollify(Some(&Expr::parse("x1^2").unwrap()), 0.0, "phi")
            .unwrap();
        for s in 2..14 {
            let x = s as f64 * h;
            assert!((lin.values()[s] - x).abs() < 1e-13);
            assert!((sq.values()[s] - (x * x + h * h / 6.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn signed_mesh_size_gives_the_same_operator() {
        let a = setup(Preset::Triangle2d, 8, 4.0);
        let h = a.lattice().h();
        let c = coeffs("a.1.1 = \"1 + 0.3*sin(x2)\"\na.2.2 = 1\nb.1 = \"cos(x1)\"\nc = \"x1*0.1\"\nsigma.2.1 = \"sin(x1)\"", 2);
        let pos = a.drift(&c, 0.0).unwrap().to_dense();
        let neg = a.drift_signed(&c, 0.0, -h).unwrap().to_dense();
        let scale = pos.amax();
        assert!((pos - neg).amax() < 1e-12 * scale);
        let pos = a.noise(&c, 0.0, 0).unwrap().to_dense();
        let neg = a.noise_signed(&c, 0.0, 0, -h).unwrap().to_dense();
        assert!((pos - neg).amax() < 1e-12);
    }
}
