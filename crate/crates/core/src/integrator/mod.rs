//! Drift-implicit, diffusion-explicit Euler–Maruyama for the lattice system
//!
//! ```text
//! (I − dt·L_{t+dt}) U_{n+1} = I U_n + dt·f_{t+dt} + Σ_ρ (M^ρ_t U_n + g^ρ_t) ΔW^ρ_n
//! ```
//!
//! with I U_0 = φ^h. Drift and forcing are taken at the new time, noise
//! operators and free noise terms at the old one.

mod noise;
mod solver;

use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use noise::{sample_seed, standard_normal, NoisePath};
pub use solver::{solve_linear, SolveStats, SolverConfig};

use crate::assembly::{AssembledProblem, StencilOperator};
use crate::error::{Error, Result};
use crate::lattice::GridFunction;

/// Which states a trajectory keeps. The running suprema are always tracked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "every")]
pub enum RecordPolicy {
    /// Every time level including t = 0.
    All,
    /// t = 0, every k-th step, and the final step.
    Every(usize),
    /// Only the final state.
    Terminal,
}

impl RecordPolicy {
    fn keeps(&self, step: usize, steps: usize) -> bool {
        match self {
            RecordPolicy::All => true,
            RecordPolicy::Every(k) => step == steps || step.is_multiple_of((*k).max(1)),
            RecordPolicy::Terminal => step == steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<GridFunction>,
    /// max over all time levels of |U_n|_{0,h}.
    pub sup_norm_0h: f64,
    /// max over all time levels and sites of |U_n(x)|.
    pub sup_abs: f64,
    /// Largest number of Krylov iterations any step needed.
    pub max_iterations: usize,
}

impl Trajectory {
    pub fn terminal(&self) -> &GridFunction {
        self.states
            .last()
            .expect("a trajectory records its final state")
    }

    /// CSV with one row per recorded (time, site): time, multi-index, coordinates, value.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let Some(first) = self.states.first() else {
            return String::new();
        };
        let lattice = first.lattice();
        let d = lattice.dim();
        let mut out = String::from("t");
        for k in 1..=d {
            write!(out, ",i{k}").expect("write to string");
        }
        for k in 1..=d {
            write!(out, ",x{k}").expect("write to string");
        }
        out.push_str(",value\n");
        for (t, state) in self.times.iter().zip(&self.states) {
            for (s, v) in state.values().iter().enumerate() {
                write!(out, "{t:.16e}").expect("write to string");
                for m in lattice.multi(s) {
                    write!(out, ",{m}").expect("write to string");
                }
                for x in lattice.coords(s) {
                    write!(out, ",{x:.16e}").expect("write to string");
                }
                writeln!(out, ",{v:.16e}").expect("write to string");
            }
        }
        out
    }
}

/// Advances one problem in time with a fixed step.
pub struct Stepper<'a> {
    problem: &'a AssembledProblem,
    dt: f64,
    solver: SolverConfig,
    system: Option<StencilOperator>,
}

impl<'a> Stepper<'a> {
    pub fn new(problem: &'a AssembledProblem, dt: f64, solver: SolverConfig) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!(
                "time step must be positive, got {dt}"
            )));
        }
        let system = if problem.drift_is_static() {
            Some(Self::system_at(problem, dt, 0.0)?)
        } else {
            None
        };
        Ok(Stepper {
            problem,
            dt,
            solver,
            system,
        })
    }

    fn system_at(problem: &AssembledProblem, dt: f64, t: f64) -> Result<StencilOperator> {
        let drift = problem.drift(t)?;
        StencilOperator::linear_combination(&[(1.0, problem.mass()), (-dt, drift.as_ref())])
    }

    /// Operator I − dt·L_t of the implicit solve.
    pub fn system(&self, t: f64) -> Result<Cow<'_, StencilOperator>> {
        match &self.system {
            Some(s) => Ok(Cow::Borrowed(s)),
            None => Self::system_at(self.problem, self.dt, t).map(Cow::Owned),
        }
    }

    /// U_0 solving I U_0 = φ^h.
    pub fn initial_state(&self) -> Result<(GridFunction, SolveStats)> {
        solve_linear(
            self.problem.mass(),
            self.problem.initial(),
            Some(self.problem.initial()),
            &self.solver,
        )
    }

    /// Right-hand side I U_n + dt f_{t+dt} + Σ_ρ (M^ρ_t U_n + g^ρ_t) ΔW^ρ.
    pub fn rhs(&self, u: &GridFunction, t: f64, increments: &[f64]) -> Result<GridFunction> {
        let mut rhs = self.problem.mass().apply(u)?;
        if let Some(f) = self.problem.forcing(t + self.dt)? {
            rhs.axpy(self.dt, &f)?;
        }
        for (rho, &dw) in increments.iter().enumerate() {
            if rho >= self.problem.coefficients().rho_max {
                break;
            }
            if let Some(m) = self.problem.noise(t, rho)? {
                rhs.axpy(dw, &m.apply(u)?)?;
            }
            if let Some(g) = self.problem.free_noise(t, rho)? {
                rhs.axpy(dw, &g)?;
            }
        }
        Ok(rhs)
    }

    /// One step from (t, U_n) with the given channel increments.
    pub fn step(
        &self,
        u: &GridFunction,
        t: f64,
        increments: &[f64],
    ) -> Result<(GridFunction, SolveStats)> {
        let rhs = self.rhs(u, t, increments)?;
        let system = self.system(t + self.dt)?;
        solve_linear(&system, &rhs, Some(u), &self.solver)
    }
}

/// Integrates from U_0 over `noise.steps()` steps of size `noise.dt()`.
pub fn integrate(
    problem: &AssembledProblem,
    noise: &NoisePath,
    solver: &SolverConfig,
    policy: RecordPolicy,
) -> Result<Trajectory> {
    if problem.coefficients().is_stochastic() && noise.channels() < problem.coefficients().rho_max {
        return Err(Error::Config(format!(
            "noise path has {} channels but the problem uses {}",
            noise.channels(),
            problem.coefficients().rho_max
        )));
    }
    let steps = noise.steps();
    let dt = noise.dt();
    let stepper = Stepper::new(problem, dt, *solver)?;
    let (mut u, stats) = stepper.initial_state().map_err(|e| Error::Step {
        step: 0,
        source: Box::new(e),
    })?;
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        sup_norm_0h: u.norm_0h(),
        sup_abs: u.max_abs(),
        max_iterations: stats.iterations,
    };
    if policy.keeps(0, steps) {
        traj.times.push(0.0);
        traj.states.push(u.clone());
    }
    for n in 0..steps {
        let t = n as f64 * dt;
        let (next, stats) = stepper
            .step(&u, t, noise.step(n))
            .map_err(|e| Error::Step {
                step: n + 1,
                source: Box::new(e),
            })?;
        if !next.is_finite() {
            return Err(Error::NonFinite { step: n + 1 });
        }
        u = next;
        traj.sup_norm_0h = traj.sup_norm_0h.max(u.norm_0h());
        traj.sup_abs = traj.sup_abs.max(u.max_abs());
        traj.max_iterations = traj.max_iterations.max(stats.iterations);
        if policy.keeps(n + 1, steps) {
            traj.times.push((n + 1) as f64 * dt);
            traj.states.push(u.clone());
        }
    }
    Ok(traj)
}

/// Integrates every level with the same noise path and time grid; levels run concurrently.
pub fn integrate_multilevel(
    levels: &[AssembledProblem],
    noise: &NoisePath,
    solver: &SolverConfig,
    policy: RecordPolicy,
) -> Result<Vec<Trajectory>> {
    if levels.is_empty() {
        return Err(Error::Config("at least one level is required".into()));
    }
    for pair in levels.windows(2) {
        if pair[1].lattice().refinement_factor(pair[0].lattice()) != Some(2) {
            return Err(Error::LatticeMismatch(
                "levels must be successive halvings of h".into(),
            ));
        }
    }
    levels
        .par_iter()
        .map(|p| integrate(p, noise, solver, policy))
        .collect()
}
