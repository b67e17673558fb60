//! Runtime checks of the element conditions: symmetry, invertibility of the
//! mass form (via its Fourier symbol), the compatibility identities, the
//! cardinal property, and parabolicity of user coefficients.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::element::{support_rule, FiniteElement, ReferenceTensors};
use crate::error::{Error, Result};
use crate::expr::Expr;

/// A PASS needs δ above this.
pub const DELTA_THRESHOLD: f64 = 1e-8;
/// A PASS needs every identity residual below this.
pub const COMPATIBILITY_TOLERANCE: f64 = 1e-10;
/// Largest imaginary part of the symbol tolerated before declaring broken symmetry.
pub const IMAGINARY_TOLERANCE: f64 = 1e-12;
const CARDINAL_TOLERANCE: f64 = 1e-12;

/// One evaluated identity.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub family: &'static str,
    pub label: String,
    pub target: f64,
    pub computed: f64,
}

impl IdentityCheck {
    pub fn residual(&self) -> f64 {
        (self.computed - self.target).abs()
    }
}

/// Identity families in reporting order.
pub const FAMILIES: [&str; 6] = [
    "mass_sum",
    "stiffness_sum",
    "first_moment",
    "second_moment",
    "weighted_stiffness_sum",
    "weighted_gradient_sum",
];

/// Max residual per family plus every individual identity.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityReport {
    pub residuals: BTreeMap<String, f64>,
    pub details: Vec<IdentityCheck>,
}

/// Evaluates every compatibility identity on the tensors.
pub fn check_compatibility(tensors: &ReferenceTensors) -> CompatibilityReport {
    let d = tensors.dim();
    let offsets = tensors.offsets();
    let sum = |f: &dyn Fn(&[i64]) -> f64| offsets.iter().map(|l| f(l)).sum::<f64>();
    let kd = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let mut details = Vec::new();

    details.push(IdentityCheck {
        family: "mass_sum",
        label: "sum R".into(),
        target: 1.0,
        computed: sum(&|l| tensors.r(l)),
    });
    for i in 0..d {
        for j in 0..d {
            details.push(IdentityCheck {
                family: "stiffness_sum",
                label: format!("sum R^{{{},{}}}", i + 1, j + 1),
                target: 0.0,
                computed: sum(&|l| tensors.rab(l, i, j)),
            });
        }
    }
    for i in 0..d {
        for k in 0..d {
            details.push(IdentityCheck {
                family: "first_moment",
                label: format!("sum l_{} R^{}", k + 1, i + 1),
                target: kd(i, k),
                computed: sum(&|l| l[k] as f64 * tensors.rb(l, i)),
            });
        }
    }
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l_ in 0..d {
                    let same_pair = (i == k && j == l_) || (i == l_ && j == k);
                    let target = match (i == j, same_pair) {
                        (_, false) => 0.0,
                        (true, true) => 2.0,
                        (false, true) => 1.0,
                    };
                    details.push(IdentityCheck {
                        family: "second_moment",
                        label: format!("sum l_{} l_{} R^{{{},{}}}", k + 1, l_ + 1, i + 1, j + 1),
                        target,
                        computed: sum(&|l| (l[k] * l[l_]) as f64 * tensors.rab(l, i, j)),
                    });
                }
            }
        }
    }
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l_ in 0..d {
                    details.push(IdentityCheck {
                        family: "weighted_stiffness_sum",
                        label: format!("sum Q^{{{}{},{}{}}}", i + 1, j + 1, k + 1, l_ + 1),
                        target: 0.0,
                        computed: sum(&|l| tensors.q(l, i, j, k, l_)),
                    });
                }
            }
        }
    }
    for i in 0..d {
        for k in 0..d {
            details.push(IdentityCheck {
                family: "weighted_gradient_sum",
                label: format!("sum Qt^{{{},{}}}", i + 1, k + 1),
                target: 0.0,
                computed: sum(&|l| tensors.qt(l, i, k)),
            });
        }
    }

    let mut residuals = BTreeMap::new();
    for fam in FAMILIES {
        let worst = details
            .iter()
            .filter(|c| c.family == fam)
            .map(IdentityCheck::residual)
            .fold(0.0, f64::max);
        residuals.insert(fam.to_string(), worst);
    }
    CompatibilityReport { residuals, details }
}

/// Real and imaginary parts of Σ_λ R_λ e^{iλ·θ}.
fn symbol(tensors: &ReferenceTensors, theta: &[f64]) -> (f64, f64) {
    tensors
        .offsets()
        .iter()
        .zip(tensors.entries())
        .fold((0.0, 0.0), |(re, im), (l, e)| {
            let phase: f64 = l.iter().zip(theta).map(|(&c, t)| c as f64 * t).sum();
            (re + e.r * phase.cos(), im + e.r * phase.sin())
        })
}

/// Calls `f` on every point of a regular grid with `m` points per axis on the box `lo + [0, width)^d`.
fn for_each_grid_point(d: usize, m: usize, lo: &[f64], width: f64, mut f: impl FnMut(&[f64])) {
    let step = width / m as f64;
    let mut idx = vec![0usize; d];
    let mut point = vec![0.0; d];
    loop {
        for k in 0..d {
            point[k] = lo[k] + idx[k] as f64 * step;
        }
        f(&point);
        let mut k = 0;
        loop {
            if k == d {
                return;
            }
            idx[k] += 1;
            if idx[k] < m {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Minimum of the mass symbol over the torus [0, 2π)^d: the sharp constant δ of
/// the Toeplitz form Σ R_{λ−μ} z^λ z^μ ≥ δ Σ |z^λ|².
///
/// Samples a grid with `grid_points_per_axis` points per axis, then zooms in around
/// the best point several times.
pub fn check_invertibility(tensors: &ReferenceTensors, grid_points_per_axis: usize) -> Result<f64> {
    use std::f64::consts::TAU;
    let d = tensors.dim();
    let m = grid_points_per_axis.max(4);
    let mut best = (f64::INFINITY, vec![0.0; d]);
    let mut worst_imag: f64 = 0.0;
    for_each_grid_point(d, m, &vec![0.0; d], TAU, |theta| {
        let (re, im) = symbol(tensors, theta);
        worst_imag = worst_imag.max(im.abs());
        if re < best.0 {
            best = (re, theta.to_vec());
        }
    });
    if worst_imag > IMAGINARY_TOLERANCE {
        return Err(Error::Symmetry(format!(
            "mass symbol has imaginary part {worst_imag:e}; R is not even in λ"
        )));
    }
    let zoom_points = 9;
    let mut width = 2.0 * TAU / m as f64;
    for _ in 0..40 {
        let center = best.1.clone();
        let lo: Vec<f64> = center.iter().map(|c| c - 0.5 * width).collect();
        for_each_grid_point(d, zoom_points, &lo, width, |theta| {
            let (re, _) = symbol(tensors, theta);
            if re < best.0 {
                best = (re, theta.to_vec());
            }
        });
        width *= 2.5 / zoom_points as f64;
    }
    Ok(best.0)
}

/// Grid resolution used by [`verify`], chosen to keep the scan cheap in high dimension.
pub fn default_symbol_grid(dim: usize) -> usize {
    match dim {
        1 => 1024,
        2 => 256,
        3 => 48,
        _ => 20,
    }
}

/// ψ(0) = 1 and ψ vanishes at every other integer point of its support.
pub fn check_cardinal(element: &FiniteElement) -> bool {
    element
        .lattice_points_in_support()
        .iter()
        .chain(std::iter::once(&vec![0; element.dim()]))
        .all(|p| {
            let x: Vec<f64> = p.iter().map(|&c| c as f64).collect();
            let target = if p.iter().all(|&c| c == 0) { 1.0 } else { 0.0 };
            (element.evaluate_psi(&x) - target).abs() <= CARDINAL_TOLERANCE
        })
}

/// Largest violation of ψ(−x) = ψ(x), Λ = −Λ and the reflection rules for R, R^β, R^{αβ}.
pub fn symmetry_residual(element: &FiniteElement, tensors: &ReferenceTensors) -> f64 {
    let mut worst: f64 = 0.0;
    for (z, _, v) in support_rule(element, 4) {
        let minus: Vec<f64> = z.iter().map(|c| -c).collect();
        worst = worst.max((element.evaluate_psi(&minus) - v).abs());
    }
    for piece in element.psi().pieces() {
        let (lo, hi) = piece.cell.bounding_box();
        for corner in [lo, hi] {
            let minus: Vec<f64> = corner.iter().map(|c| -c).collect();
            worst = worst.max((element.evaluate_psi(&minus) - element.evaluate_psi(&corner)).abs());
        }
    }
    let lambda = element.lambda_set();
    if lambda
        .iter()
        .any(|l| !lambda.contains(&l.iter().map(|c| -c).collect::<Vec<_>>()))
    {
        worst = f64::INFINITY;
    }
    let d = tensors.dim();
    for l in tensors.offsets() {
        let m: Vec<i64> = l.iter().map(|c| -c).collect();
        worst = worst.max((tensors.r(l) - tensors.r(&m)).abs());
        for b in 0..d {
            worst = worst.max((tensors.rb(l, b) + tensors.rb(&m, b)).abs());
            for a in 0..d {
                worst = worst.max((tensors.rab(l, a, b) - tensors.rab(&m, a, b)).abs());
            }
        }
    }
    worst
}

/// Full verdict for one element.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub element: String,
    pub symmetry_ok: bool,
    pub symmetry_residual: f64,
    /// Symbol minimum; 0 when the symbol is not real.
    pub delta_estimate: f64,
    pub compatibility_residuals: BTreeMap<String, f64>,
    pub cardinal_ok: bool,
    pub details: Vec<IdentityCheck>,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.symmetry_ok
            && self.cardinal_ok
            && self.delta_estimate > DELTA_THRESHOLD
            && self
                .compatibility_residuals
                .values()
                .all(|r| *r < COMPATIBILITY_TOLERANCE)
    }
}

/// Runs every element check.
pub fn verify(element: &FiniteElement, tensors: &ReferenceTensors) -> Result<AssumptionReport> {
    let symmetry_residual = symmetry_residual(element, tensors);
    let symmetry_ok = symmetry_residual <= COMPATIBILITY_TOLERANCE;
    let delta_estimate = match check_invertibility(tensors, default_symbol_grid(element.dim())) {
        Ok(delta) => delta.max(0.0),
        Err(Error::Symmetry(msg)) => {
            log::warn!("{msg}");
            0.0
        }
        Err(e) => return Err(e),
    };
    let compat = check_compatibility(tensors);
    Ok(AssumptionReport {
        element: element.name().to_string(),
        symmetry_ok,
        symmetry_residual,
        delta_estimate,
        compatibility_residuals: compat.residuals,
        cardinal_ok: check_cardinal(element),
        details: compat.details,
    })
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "element: {}", self.element)?;
        writeln!(
            f,
            "{:<28} {:>24} {:>24} {:>12}  verdict",
            "identity", "target", "computed", "residual"
        )?;
        writeln!(
            f,
            "{:<28} {:>24} {:>24.16e} {:>12.3e}  {}",
            "symmetry",
            "0",
            self.symmetry_residual,
            self.symmetry_residual,
            verdict(self.symmetry_ok)
        )?;
        writeln!(
            f,
            "{:<28} {:>24} {:>24.16e} {:>12}  {}",
            "delta (symbol minimum)",
            format!("> {DELTA_THRESHOLD:e}"),
            self.delta_estimate,
            "-",
            verdict(self.delta_estimate > DELTA_THRESHOLD)
        )?;
        writeln!(
            f,
            "{:<28} {:>24} {:>24} {:>12}  {}",
            "cardinal",
            "psi(0)=1, psi(k)=0",
            self.cardinal_ok,
            "-",
            verdict(self.cardinal_ok)
        )?;
        for c in &self.details {
            writeln!(
                f,
                "{:<28} {:>24.16e} {:>24.16e} {:>12.3e}  {}",
                c.label,
                c.target,
                c.computed,
                c.residual(),
                verdict(c.residual() < COMPATIBILITY_TOLERANCE)
            )?;
        }
        for (family, r) in &self.compatibility_residuals {
            writeln!(
                f,
                "max residual {family:<22} {r:.3e}  {}",
                verdict(*r < COMPATIBILITY_TOLERANCE)
            )?;
        }
        write!(f, "overall: {}", verdict(self.passed()))
    }
}

/// Time and space window over which parabolicity is sampled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleDomain {
    /// Torus side; x ranges over [0, length)^d.
    pub length: f64,
    /// t ranges over [0, t_max].
    pub t_max: f64,
}

/// Minimum over sampled (t, x) of the smallest eigenvalue of a − ½ σσᵀ.
///
/// Sampling can refute strict parabolicity but not prove it. `sample_points` is per axis.
pub fn check_parabolicity(
    a: &[Vec<Option<Expr>>],
    sigma: &[Vec<Option<Expr>>],
    domain: SampleDomain,
    sample_points: usize,
    t_samples: usize,
) -> Result<f64> {
    let d = a.len();
    let eval = |e: &Option<Expr>, x: &[f64], t: f64, what: &str| -> Result<f64> {
        match e {
            None => Ok(0.0),
            Some(e) => e.eval(x, t).map_err(|source| Error::Eval {
                context: format!("{what} at x={x:?}, t={t}"),
                source,
            }),
        }
    };
    let m = sample_points.max(1);
    let nt = t_samples.max(1);
    let mut worst = f64::INFINITY;
    let mut failure = None;
    for s in 0..nt {
        let t = if nt == 1 {
            0.0
        } else {
            domain.t_max * s as f64 / (nt - 1) as f64
        };
        for_each_grid_point(d, m, &vec![0.0; d], domain.length, |x| {
            if failure.is_some() {
                return;
            }
            let result = (|| -> Result<f64> {
                let mut mat = DMatrix::<f64>::zeros(d, d);
                for i in 0..d {
                    for j in 0..d {
                        mat[(i, j)] = eval(&a[i][j], x, t, &format!("a.{}.{}", i + 1, j + 1))?;
                    }
                }
                for i in 0..d {
                    for j in 0..i {
                        if (mat[(i, j)] - mat[(j, i)]).abs() > 1e-12 {
                            return Err(Error::Symmetry(format!(
                                "a is not symmetric at x={x:?}, t={t}: a.{}.{} = {} vs a.{}.{} = {}",
                                i + 1,
                                j + 1,
                                mat[(i, j)],
                                j + 1,
                                i + 1,
                                mat[(j, i)]
                            )));
                        }
                    }
                }
                for i in 0..d {
                    for j in 0..d {
                        let mut ss = 0.0;
                        for (ei, ej) in sigma[i].iter().zip(&sigma[j]) {
                            ss += eval(ei, x, t, "sigma")? * eval(ej, x, t, "sigma")?;
                        }
                        mat[(i, j)] -= 0.5 * ss;
                    }
                }
                let eig = SymmetricEigen::new(mat);
                Ok(eig
                    .eigenvalues
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min))
            })();
            match result {
                Ok(v) => worst = worst.min(v),
                Err(e) => failure = Some(e),
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::element::{Preset, TensorEntry};
    use crate::expr::Coefficients;

    fn tensors(p: Preset) -> (FiniteElement, ReferenceTensors) {
        let e = FiniteElement::preset(p).unwrap();
        let t = ReferenceTensors::compute(&e).unwrap();
        (e, t)
    }

    #[test]
    fn hat1d_delta_is_one_third() {
        let (_, t) = tensors(Preset::Hat1d);
        assert!((check_invertibility(&t, 64).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn identity_symbol_has_delta_one() {
        let entry = TensorEntry {
            r: 1.0,
            rb: vec![0.0],
            rab: vec![0.0],
            q: vec![0.0],
            qt: vec![0.0],
        };
        let t = ReferenceTensors::from_entries(1, vec![vec![0]], vec![entry]);
        assert!((check_invertibility(&t, 16).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn odd_mass_tensor_is_rejected() {
        let entry = |r: f64| TensorEntry {
            r,
            rb: vec![0.0],
            rab: vec![0.0],
            q: vec![0.0],
            qt: vec![0.0],
        };
        let t = ReferenceTensors::from_entries(
            1,
            vec![vec![-1], vec![0], vec![1]],
            vec![entry(0.1), entry(0.7), entry(0.2)],
        );
        assert!(matches!(
            check_invertibility(&t, 16),
            Err(Error::Symmetry(_))
        ));
    }

    #[test]
    fn tensor2_delta_is_one_ninth() {
        let (_, t) = tensors(Preset::Tensor(2));
        assert!((check_invertibility(&t, 64).unwrap() - 1.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn triangle2d_delta_is_one_quarter() {
        let (_, t) = tensors(Preset::Triangle2d);
        // symbol 1/2 + (cos a + cos b + cos(a + b))/6, minimised at a = b = 2π/3
        assert!((check_invertibility(&t, 60).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn builtins_pass() {
        for p in [
            Preset::Hat1d,
            Preset::Tensor(1),
            Preset::Tensor(2),
            Preset::Tensor(3),
            Preset::Triangle2d,
        ] {
            let (e, t) = tensors(p);
            let r = verify(&e, &t).unwrap();
            assert!(r.passed(), "{p}:\n{r}");
            for v in r.compatibility_residuals.values() {
                assert!(*v < 1e-12, "{p}");
            }
        }
    }

    #[test]
    fn hat1d_first_moment_matches_hand_sum() {
        let (_, t) = tensors(Preset::Hat1d);
        let c = check_compatibility(&t);
        let fm = c
            .details
            .iter()
            .find(|c| c.family == "first_moment")
            .unwrap();
        assert!((fm.computed - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scaled_element_fails_with_bilinear_residuals() {
        let (e, _) = tensors(Preset::Hat1d);
        let s = e.scaled(2.0);
        let t = ReferenceTensors::compute(&s).unwrap();
        let r = verify(&s, &t).unwrap();
        assert!(!r.passed());
        assert!(!r.cardinal_ok);
        assert!((r.compatibility_residuals["mass_sum"] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn shifted_hat_is_not_cardinal() {
        let (e, _) = tensors(Preset::Hat1d);
        assert!(check_cardinal(&e));
        assert!(!check_cardinal(&e.shifted(&[0.5]).unwrap()));
        let (tri, _) = tensors(Preset::Triangle2d);
        assert!(check_cardinal(&tri));
    }

    fn coeffs(text: &str, d: usize) -> Coefficients {
        Coefficients::parse(text, d, 1).unwrap()
    }

    #[test]
    fn parabolicity_examples() {
        let dom = SampleDomain {
            length: std::f64::consts::TAU,
            t_max: 1.0,
        };
        let c = coeffs("a.1.1 = 1\na.2.2 = 1", 2);
        assert!((check_parabolicity(&c.a, &c.sigma, dom, 8, 2).unwrap() - 1.0).abs() < 1e-15);
        let c = coeffs("a.1.1 = 1\nsigma.1.1 = \"sqrt(2)\"", 1);
        assert!(
            check_parabolicity(&c.a, &c.sigma, dom, 16, 1)
                .unwrap()
                .abs()
                < 1e-15
        );
        let c = coeffs("a.1.1 = \"1.6 + 0.5*sin(x1)\"\nsigma.1.1 = 1", 1);
        let k = check_parabolicity(&c.a, &c.sigma, dom, 10_000, 1).unwrap();
        assert!((k - 0.6).abs() < 1e-9, "{k}");
        let c = coeffs("a.1.1 = \"1 + 0.5*sin(x1)\"\nsigma.1.1 = 1", 1);
        assert!(check_parabolicity(&c.a, &c.sigma, dom, 10_000, 1).unwrap() < 1e-9);
    }

    #[test]
    fn asymmetric_diffusion_is_an_error() {
        let one = Some(Expr::Num(1.0));
        let a = vec![
            vec![one.clone(), Some(Expr::Num(0.5))],
            vec![Some(Expr::Num(0.25)), one],
        ];
        let sigma = vec![vec![None], vec![None]];
        let dom = SampleDomain {
            length: 1.0,
            t_max: 0.0,
        };
        assert!(matches!(
            check_parabolicity(&a, &sigma, dom, 3, 1),
            Err(Error::Symmetry(_))
        ));
    }
}
