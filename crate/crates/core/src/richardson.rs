//! Richardson mixtures over nested lattices and convergence-order measurement.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::GridFunction;

/// Above this many extra levels the coefficient system is reported as ill-conditioned.
pub const WELL_CONDITIONED_JBAR: usize = 6;

/// Per-halving factor of the leading error term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ratio {
    /// 2^-2: error terms in h², h⁴, …
    #[default]
    Quarter,
    /// 2^-4: error terms in h⁴, h⁸, …
    Sixteenth,
}

impl Ratio {
    pub fn value(self) -> f64 {
        match self {
            Ratio::Quarter => 0.25,
            Ratio::Sixteenth => 0.0625,
        }
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ratio::Quarter => "quarter",
            Ratio::Sixteenth => "sixteenth",
        })
    }
}

impl FromStr for Ratio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Ratio> {
        match s.trim().to_ascii_lowercase().as_str() {
            "quarter" | "1/4" | "0.25" => Ok(Ratio::Quarter),
            "sixteenth" | "1/16" | "0.0625" => Ok(Ratio::Sixteenth),
            other => Err(Error::Config(format!(
                "unknown ratio `{other}` (expected quarter or sixteenth)"
            ))),
        }
    }
}

/// Weights c_0..c_J̄ of the mixture Σ c_j U^{h/2^j}.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtrapolationPlan {
    ratio: f64,
    coefficients: Vec<f64>,
    condition: f64,
    residual: f64,
}

impl ExtrapolationPlan {
    /// Solves Σ c_j = 1 and Σ c_j ratio^{k j} = 0 for k = 1..=jbar.
    pub fn new(jbar: usize, ratio: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::Config(format!(
                "extrapolation ratio must lie in (0, 1), got {ratio}"
            )));
        }
        let m = jbar + 1;
        let v = DMatrix::from_fn(m, m, |k, j| ratio.powi((k * j) as i32));
        let mut rhs = DVector::zeros(m);
        rhs[0] = 1.0;
        let c = v.clone().lu().solve(&rhs).ok_or_else(|| {
            Error::Config(format!("extrapolation system is singular for {m} levels"))
        })?;
        let residual = (&v * &c - &rhs).amax();
        let sv = v.singular_values();
        let condition = sv.max() / sv.min();
        if jbar > WELL_CONDITIONED_JBAR {
            log::warn!("extrapolation with {m} levels is ill-conditioned (condition estimate {condition:.3e})");
        }
        Ok(ExtrapolationPlan {
            ratio,
            coefficients: c.iter().copied().collect(),
            condition,
            residual,
        })
    }

    pub fn with_ratio(jbar: usize, ratio: Ratio) -> Result<Self> {
        Self::new(jbar, ratio.value())
    }

    pub fn jbar(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn levels(&self) -> usize {
        self.coefficients.len()
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// 2-norm condition number of the coefficient system.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Max-norm residual of the coefficient solve.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Σ c_j U^{(j)} on the coarsest lattice; finer levels are injected.
    pub fn combine(&self, solutions: &[&GridFunction]) -> Result<GridFunction> {
        if solutions.len() != self.levels() {
            return Err(Error::LatticeMismatch(format!(
                "mixture needs {} levels, got {}",
                self.levels(),
                solutions.len()
            )));
        }
        let coarse = solutions[0].lattice();
        let mut out = GridFunction::zeros(coarse);
        for (j, (&c, u)) in self.coefficients.iter().zip(solutions).enumerate() {
            if u.lattice().refinement_factor(coarse) != Some(1 << j) {
                return Err(Error::LatticeMismatch(format!(
                    "level {j} is not the coarsest lattice refined {j} times"
                )));
            }
            out.axpy(c, &u.restrict(coarse)?)?;
        }
        Ok(out)
    }
}

/// |U − reference|_{0,h} on U's lattice; a finer nested reference is injected first.
pub fn error_norm(u: &GridFunction, reference: &GridFunction) -> Result<f64> {
    let lattice = u.lattice();
    if reference.lattice() == lattice {
        return Ok(u.sub(reference)?.norm_0h());
    }
    let coarse = reference.restrict(lattice)?;
    Ok(u.sub(&coarse)?.norm_0h())
}

/// Max over recorded times of [`error_norm`]; both sequences share the time grid.
pub fn trajectory_error(states: &[GridFunction], reference: &[GridFunction]) -> Result<f64> {
    if states.len() != reference.len() {
        return Err(Error::LatticeMismatch(format!(
            "{} recorded states against {} reference states",
            states.len(),
            reference.len()
        )));
    }
    states
        .iter()
        .zip(reference)
        .try_fold(0.0f64, |acc, (u, r)| Ok(acc.max(error_norm(u, r)?)))
}

/// Least-squares slope of log(error) against log(h).
pub fn estimate_order(points: &[(f64, f64)]) -> Result<f64> {
    let mut hs: Vec<f64> = points.iter().map(|p| p.0).collect();
    hs.sort_by(f64::total_cmp);
    hs.dedup();
    if hs.len() < 3 {
        return Err(Error::Config(format!(
            "order fit needs at least 3 distinct mesh sizes, got {}",
            hs.len()
        )));
    }
    if let Some(&(h, e)) = points
        .iter()
        .find(|(h, e)| !(*h > 0.0 && *e > 0.0 && e.is_finite()))
    {
        return Err(Error::Config(format!(
            "order fit needs positive errors and mesh sizes, got error {e:e} at h = {h:e}"
        )));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Orders between consecutive points; `None` for the first row or when undefined.
pub fn local_orders(points: &[(f64, f64)]) -> Vec<Option<f64>> {
    let mut out = vec![None; points.len()];
    for i in 1..points.len() {
        let (h0, e0) = points[i - 1];
        let (h1, e1) = points[i];
        let order = (e1 / e0).ln() / (h1 / h0).ln();
        if order.is_finite() {
            out[i] = Some(order);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub n: usize,
    pub error: f64,
    pub order_local: Option<f64>,
}

/// Errors of one scheme over a mesh ladder, coarse to fine.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub label: String,
    pub rows: Vec<ConvergenceRow>,
    /// `None` when fewer than 3 levels or some error is exactly zero.
    pub fitted_order: Option<f64>,
}

impl ConvergenceReport {
    pub fn new(label: impl Into<String>, entries: &[(f64, usize, f64)]) -> Self {
        let points: Vec<(f64, f64)> = entries.iter().map(|&(h, _, e)| (h, e)).collect();
        let orders = local_orders(&points);
        let rows = entries
            .iter()
            .zip(orders)
            .map(|(&(h, n, error), order_local)| ConvergenceRow {
                h,
                n,
                error,
                order_local,
            })
            .collect();
        let fitted_order = estimate_order(&points).ok();
        ConvergenceReport {
            label: label.into(),
            rows,
            fitted_order,
        }
    }

    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error).collect()
    }

    /// Columns h, n, error, order_local; the last row carries the fitted order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,n,error,order_local\n");
        for r in &self.rows {
            let order = r
                .order_local
                .map(|o| format!("{o:.16e}"))
                .unwrap_or_default();
            out.push_str(&format!(
                "{:.16e},{},{:.16e},{}\n",
                r.h, r.n, r.error, order
            ));
        }
        let fitted = self
            .fitted_order
            .map(|o| format!("{o:.16e}"))
            .unwrap_or_default();
        out.push_str(&format!("fitted,,,{fitted}\n"));
        out
    }
}

/// Log-log plot of error against h for several reports.
pub fn convergence_svg(reports: &[&ConvergenceReport]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const PAD: f64 = 60.0;
    const COLOURS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let pts: Vec<(f64, f64)> = reports
        .iter()
        .flat_map(|r| r.rows.iter())
        .filter(|r| r.error > 0.0)
        .map(|r| (r.h.log10(), r.error.log10()))
        .collect();
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    svg.push_str(&format!(
        "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));
    if pts.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let (x0, x1) = (x0.floor(), x1.ceil().max(x0.floor() + 1.0));
    let (y0, y1) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    svg.push_str(&format!(
        "<rect x=\"{PAD}\" y=\"{PAD}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        W - 2.0 * PAD,
        H - 2.0 * PAD
    ));
    for e in x0 as i32..=x1 as i32 {
        let x = sx(e as f64);
        svg.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">1e{e}</text>\n",
            H - PAD + 18.0
        ));
    }
    for e in y0 as i32..=y1 as i32 {
        let y = sy(e as f64);
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{y:.1}\" text-anchor=\"end\">1e{e}</text>\n",
            PAD - 6.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">h</text>\n",
        W / 2.0,
        H - 12.0
    ));
    for (i, r) in reports.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let line: Vec<String> = r
            .rows
            .iter()
            .filter(|row| row.error > 0.0)
            .map(|row| format!("{:.1},{:.1}", sx(row.h.log10()), sy(row.error.log10())))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"2\"/>\n",
            line.join(" ")
        ));
        for p in &line {
            let (x, y) = p.split_once(',').expect("formatted as x,y");
            svg.push_str(&format!(
                "<circle cx=\"{x}\" cy=\"{y}\" r=\"3\" fill=\"{colour}\"/>\n"
            ));
        }
        let legend = match r.fitted_order {
            Some(o) => format!("{} (order {o:.2})", r.label),
            None => r.label.clone(),
        };
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{colour}\">{}</text>\n",
            PAD + 10.0,
            PAD + 18.0 * (i + 1) as f64,
            escape(&legend)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::TorusLattice;

    /// c_j = L_j(0) for the Lagrange basis on nodes ratio^j: the interpolant of
    /// an error polynomial in s = h^2 (or h^4) evaluated at s = 0.
    fn lagrange_oracle(jbar: usize, ratio: f64) -> Vec<f64> {
        let nodes: Vec<f64> = (0..=jbar).map(|j| ratio.powi(j as i32)).collect();
        (0..=jbar)
            .map(|j| {
                (0..=jbar)
                    .filter(|&m| m != j)
                    .map(|m| nodes[m] / (nodes[m] - nodes[j]))
                    .product()
            })
            .collect()
    }

    #[test]
    fn trivial_plan() {
        assert_eq!(
            ExtrapolationPlan::new(0, 0.25).unwrap().coefficients(),
            &[1.0]
        );
    }

    #[test]
    fn one_extra_level() {
        let c = ExtrapolationPlan::new(1, 0.25).unwrap();
        assert!((c.coefficients()[0] + 1.0 / 3.0).abs() < 1e-15);
        assert!((c.coefficients()[1] - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn matches_lagrange_oracle() {
        for ratio in [0.25, 0.0625] {
            for jbar in 0..=4 {
                let plan = ExtrapolationPlan::new(jbar, ratio).unwrap();
                assert!(plan.residual() < 1e-12);
                let sum: f64 = plan.coefficients().iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
                for k in 1..=jbar {
                    let moment: f64 = plan
                        .coefficients()
                        .iter()
                        .enumerate()
                        .map(|(j, c)| c * ratio.powi((k * j) as i32))
                        .sum();
                    assert!(moment.abs() < 1e-12, "jbar {jbar} k {k}: {moment}");
                }
                for (a, b) in plan.coefficients().iter().zip(lagrange_oracle(jbar, ratio)) {
                    assert!((a - b).abs() < 1e-10 * b.abs().max(1.0));
                }
            }
        }
        let two = ExtrapolationPlan::new(2, 0.25).unwrap();
        let expect = [1.0 / 45.0, -20.0 / 45.0, 64.0 / 45.0];
        for (a, b) in two.coefficients().iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_ratio() {
        assert!(ExtrapolationPlan::new(1, 1.0).is_err());
        assert!(ExtrapolationPlan::new(1, 0.0).is_err());
        assert_eq!("quarter".parse::<Ratio>().unwrap(), Ratio::Quarter);
        assert_eq!("1/16".parse::<Ratio>().unwrap(), Ratio::Sixteenth);
        assert!("half".parse::<Ratio>().is_err());
    }

    #[test]
    fn combine_cancels_a_pure_quadratic_error() {
        let coarse = TorusLattice::with_length(1, 1.0, 8).unwrap();
        let fine = coarse.refine();
        let v = |x: &[f64]| (std::f64::consts::TAU * x[0]).sin();
        let e = |x: &[f64]| 1.0 + x[0] * x[0];
        let u0 = GridFunction::from_fn(&coarse, |x| v(x) + e(x));
        let u1 = GridFunction::from_fn(&fine, |x| v(x) + 0.25 * e(x));
        let plan = ExtrapolationPlan::new(1, 0.25).unwrap();
        let mix = plan.combine(&[&u0, &u1]).unwrap();
        let exact = GridFunction::from_fn(&coarse, v);
        assert!(mix.sub(&exact).unwrap().max_abs() < 1e-13);
        // a constant field is reproduced
        let k0 = GridFunction::constant(&coarse, 2.5);
        let k1 = GridFunction::constant(&fine, 2.5);
        let mix = plan.combine(&[&k0, &k1]).unwrap();
        assert!(mix.values().iter().all(|&x| (x - 2.5).abs() < 1e-14));
        assert!(plan.combine(&[&k0, &k0]).is_err());
        assert!(plan.combine(&[&k0]).is_err());
    }

    #[test]
    fn error_norm_of_a_constant_offset() {
        let l = TorusLattice::with_length(2, 3.0, 6).unwrap();
        let a = GridFunction::from_fn(&l, |x| x[0] * x[1]);
        let mut b = a.clone();
        b.values_mut().iter_mut().for_each(|v| *v += 0.1);
        assert_eq!(error_norm(&a, &a).unwrap(), 0.0);
        assert!((error_norm(&b, &a).unwrap() - 0.1 * 3.0).abs() < 1e-14);
        let fine = GridFunction::from_fn(&l.refine(), |x| x[0] * x[1]);
        assert_eq!(error_norm(&a, &fine).unwrap(), 0.0);
    }

    #[test]
    fn order_fits() {
        let hs = [0.4, 0.2, 0.1, 0.05];
        let sq: Vec<_> = hs.iter().map(|&h| (h, h * h)).collect();
        assert!((estimate_order(&sq).unwrap() - 2.0).abs() < 1e-10);
        let quart: Vec<_> = hs.iter().map(|&h| (h, 3.0 * h.powi(4))).collect();
        assert!((estimate_order(&quart).unwrap() - 4.0).abs() < 1e-10);
        let mixed: Vec<_> = hs.iter().map(|&h| (h, h * h + 0.01 * h)).collect();
        let p = estimate_order(&mixed).unwrap();
        assert!(p > 1.0 && p < 2.0);
        let locals = local_orders(&mixed);
        assert!(locals[0].is_none());
        // the linear term dominates more as h shrinks
        for w in locals[1..].windows(2) {
            assert!(w[1].unwrap() < w[0].unwrap());
        }
        assert!(estimate_order(&sq[..2]).is_err());
        assert!(estimate_order(&[(0.4, 1.0), (0.2, 0.0), (0.1, 1.0)]).is_err());
    }

    #[test]
    fn report_csv() {
        let r =
            ConvergenceReport::new("base", &[(0.4, 16, 0.16), (0.2, 32, 0.04), (0.1, 64, 0.01)]);
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "h,n,error,order_local");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].ends_with(','));
        assert!(lines[4].starts_with("fitted,,,2.0000000000000"));
        let svg = convergence_svg(&[&r]);
        assert!(svg.starts_with("<svg") && svg.contains("polyline"));
    }
}
