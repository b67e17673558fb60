//! Property tests for lattice, element, assembly, noise and extrapolation invariants.

use std::sync::OnceLock;

use proptest::prelude::*;
use spdefe::assembly::{AssembledProblem, Assembler, StencilOperator};
use spdefe::checker::check_compatibility;
use spdefe::element::quadrature::DEFAULT_ORDER;
use spdefe::element::{FiniteElement, Preset, ReferenceTensors};
use spdefe::expr::Coefficients;
use spdefe::integrator::{standard_normal, NoisePath};
use spdefe::lattice::{GridFunction, TorusLattice};
use spdefe::richardson::{error_norm, estimate_order, ExtrapolationPlan};

fn prepared(preset: Preset) -> &'static (FiniteElement, ReferenceTensors) {
    static HAT: OnceLock<(FiniteElement, ReferenceTensors)> = OnceLock::new();
    static TENSOR: OnceLock<(FiniteElement, ReferenceTensors)> = OnceLock::new();
    static TRIANGLE: OnceLock<(FiniteElement, ReferenceTensors)> = OnceLock::new();
    let cell = match preset {
        Preset::Hat1d => &HAT,
        Preset::Tensor(_) => &TENSOR,
        Preset::Triangle2d => &TRIANGLE,
    };
    cell.get_or_init(|| {
        let e = FiniteElement::preset(preset).unwrap();
        let t = ReferenceTensors::compute(&e).unwrap();
        (e, t)
    })
}

fn preset() -> impl Strategy<Value = Preset> {
    prop::sample::select(vec![Preset::Hat1d, Preset::Tensor(2), Preset::Triangle2d])
}

fn lattice(dim: usize) -> impl Strategy<Value = TorusLattice> {
    (2usize..=6, 0.5f64..3.0)
        .prop_map(move |(half, len)| TorusLattice::with_length(dim, len, 2 * half).unwrap())
}

fn field(l: &TorusLattice, seed: u64) -> GridFunction {
    let values = (0..l.sites())
        .map(|s| standard_normal(seed, 1, s as u64))
        .collect();
    GridFunction::new(l.clone(), values).unwrap()
}

fn problem_text(dim: usize, k: &[f64; 6]) -> String {
    let mut text = String::new();
    for i in 1..=dim {
        text += &format!("a.{i}.{i} = \"{} + 0.3*sin(x{i} + t)\"\n", 1.0 + k[0].abs());
        text += &format!("b.{i} = \"{}*cos(x1)\"\n", k[1]);
        text += &format!("sigma.{i}.1 = {}\n", k[2]);
    }
    if dim == 2 {
        text += &format!("a.1.2 = {}\n", 0.3 * k[3].tanh());
    }
    text += &format!(
        "c = {}\nnu.1 = \"{}*sin(x1)\"\ng.1 = {}\nf = \"cos(x1)\"\nphi = \"sin(x1)\"\n",
        k[4], k[5], k[0]
    );
    text
}

fn refs(f: &[GridFunction]) -> Vec<&GridFunction> {
    f.iter().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lattice_indexing_is_consistent(l in lattice(2), s in 0usize..144, o in prop::collection::vec(-20i64..20, 2)) {
        let s = s % l.sites();
        prop_assert_eq!(l.flat(&l.multi(s)), s);
        let there = l.shift(s, &o);
        let back: Vec<i64> = o.iter().map(|c| -c).collect();
        prop_assert_eq!(l.shift(there, &back), s);
        let n = l.sites_per_axis() as i64;
        let wrapped: Vec<i64> = o.iter().map(|c| c + n).collect();
        prop_assert_eq!(l.shift(s, &wrapped), there);
    }

    #[test]
    fn prolongation_then_injection_is_identity(l in lattice(2), seed in any::<u64>()) {
        let u = field(&l, seed);
        let fine = u.prolong(&l.refine()).unwrap();
        prop_assert_eq!(fine.restrict(&l).unwrap(), u);
    }

    #[test]
    fn norm_is_a_norm(l in lattice(1), seed in any::<u64>(), alpha in -3.0f64..3.0) {
        let u = field(&l, seed);
        let v = field(&l, seed.wrapping_add(1));
        let mut sum = u.clone();
        sum.axpy(1.0, &v).unwrap();
        prop_assert!(sum.norm_0h() <= u.norm_0h() + v.norm_0h() + 1e-12);
        let mut scaled = u.clone();
        scaled.scale(alpha);
        prop_assert!((scaled.norm_0h() - alpha.abs() * u.norm_0h()).abs() <= 1e-12 * (1.0 + u.norm_0h()));
        prop_assert!((error_norm(&u, &v).unwrap() - u.sub(&v).unwrap().norm_0h()).abs() == 0.0);
    }

    #[test]
    fn tensors_have_the_reflection_symmetries(p in preset()) {
        let (e, t) = prepared(p);
        let d = e.dim();
        for lambda in e.gamma() {
            let minus: Vec<i64> = lambda.iter().map(|c| -c).collect();
            prop_assert!((t.r(lambda) - t.r(&minus)).abs() < 1e-13);
            for a in 0..d {
                prop_assert!((t.rb(lambda, a) + t.rb(&minus, a)).abs() < 1e-13);
                for b in 0..d {
                    prop_assert!((t.rab(lambda, a, b) - t.rab(&minus, b, a)).abs() < 1e-13);
                }
            }
        }
        let report = check_compatibility(t);
        prop_assert!(report.residuals.values().all(|r| *r < 1e-10));
    }

    #[test]
    fn stencils_are_linear(p in preset(), k in prop::array::uniform6(-1.0f64..1.0), seed in any::<u64>(), a in -2.0f64..2.0) {
        let (e, t) = prepared(p);
        let l = TorusLattice::with_length(e.dim(), 2.0, 6).unwrap();
        let coeffs = Coefficients::parse(&problem_text(e.dim(), &k), e.dim(), 1).unwrap();
        let asm = Assembler::new(e, t, &l, DEFAULT_ORDER).unwrap();
        let op = asm.drift(&coeffs, 0.3).unwrap();
        let u = field(&l, seed);
        let v = field(&l, seed ^ 0xabc);
        let mut w = u.clone();
        w.axpy(a, &v).unwrap();
        let mut expect = op.apply(&u).unwrap();
        expect.axpy(a, &op.apply(&v).unwrap()).unwrap();
        let got = op.apply(&w).unwrap();
        prop_assert!(got.sub(&expect).unwrap().max_abs() <= 1e-11 * (1.0 + expect.max_abs()));
    }

    #[test]
    fn mass_is_symmetric_and_reproduces_constants(p in preset(), l in 2usize..=5) {
        let (e, t) = prepared(p);
        let l = TorusLattice::with_length(e.dim(), 1.0, 2 * l).unwrap();
        let mass = Assembler::new(e, t, &l, DEFAULT_ORDER).unwrap().mass();
        let dense = mass.to_dense();
        prop_assert!((&dense - dense.transpose()).amax() < 1e-15);
        let one = mass.apply(&GridFunction::constant(&l, 1.0)).unwrap();
        prop_assert!(one.values().iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn negative_spacing_is_canonicalised(p in preset(), k in prop::array::uniform6(-1.0f64..1.0), half in 2usize..=5) {
        let (e, t) = prepared(p);
        let n = 2 * half;
        let h = 1.5 / n as f64;
        let coeffs = Coefficients::parse(&problem_text(e.dim(), &k), e.dim(), 1).unwrap();
        let build = |h: f64| {
            let l = TorusLattice::from_signed(e.dim(), h, n).unwrap();
            AssembledProblem::new(e, t, &coeffs, &l, DEFAULT_ORDER).unwrap()
        };
        let (plus, minus) = (build(h), build(-h));
        let ops = |p: &AssembledProblem| -> Vec<StencilOperator> {
            vec![
                p.mass().clone(),
                p.drift(0.2).unwrap().into_owned(),
                p.noise(0.2, 0).unwrap().unwrap().into_owned(),
            ]
        };
        for (a, b) in ops(&plus).iter().zip(ops(&minus).iter()) {
            prop_assert!(a.bitwise_eq(b));
        }
        let raw = plus.assembler().drift_signed(&coeffs, 0.2, -h).unwrap();
        prop_assert!((raw.to_dense() - plus.drift(0.2).unwrap().to_dense()).amax() < 1e-10);
    }

    #[test]
    fn noise_is_a_pure_function_of_its_key(seed in any::<u64>(), ch in 0u64..8, step in 0u64..1_000_000) {
        let a = standard_normal(seed, ch, step);
        prop_assert_eq!(a.to_bits(), standard_normal(seed, ch, step).to_bits());
        prop_assert!(a.is_finite());
        let path = NoisePath::generate(seed, 3, 0.25, 2);
        prop_assert_eq!(path.increment(1, 2), 0.5 * standard_normal(seed, 1, 2));
    }

    #[test]
    fn extrapolation_system_is_solved(jbar in 0usize..=4, ratio in 0.05f64..0.6) {
        let plan = ExtrapolationPlan::new(jbar, ratio).unwrap();
        let c = plan.coefficients();
        prop_assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for k in 1..=jbar {
            let m: f64 = c.iter().enumerate().map(|(j, cj)| cj * ratio.powi((k * j) as i32)).sum();
            prop_assert!(m.abs() < 1e-12);
        }
    }

    #[test]
    fn combine_is_linear(seed in any::<u64>(), a in -2.0f64..2.0) {
        let coarse = TorusLattice::with_length(1, 1.0, 8).unwrap();
        let plan = ExtrapolationPlan::new(2, 0.25).unwrap();
        let ls = [coarse.clone(), coarse.refine(), coarse.refine().refine()];
        let u: Vec<GridFunction> = ls.iter().enumerate().map(|(j, l)| field(l, seed ^ j as u64)).collect();
        let v: Vec<GridFunction> = ls.iter().enumerate().map(|(j, l)| field(l, !seed ^ j as u64)).collect();
        let w: Vec<GridFunction> = u.iter().zip(&v).map(|(x, y)| {
            let mut z = x.clone();
            z.axpy(a, y).unwrap();
            z
        }).collect();
        let mut expect = plan.combine(&refs(&u)).unwrap();
        expect.axpy(a, &plan.combine(&refs(&v)).unwrap()).unwrap();
        let got = plan.combine(&refs(&w)).unwrap();
        prop_assert!(got.sub(&expect).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn order_fit_recovers_power_laws(p in 0.5f64..6.0, c in 1e-3f64..1e3, h0 in 0.05f64..1.0) {
        let pts: Vec<(f64, f64)> = (0..4).map(|i| {
            let h = h0 / 2f64.powi(i);
            (h, c * h.powf(p))
        }).collect();
        prop_assert!((estimate_order(&pts).unwrap() - p).abs() < 1e-9);
    }
}
