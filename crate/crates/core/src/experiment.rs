//! Serializable run configurations and the simulate / convergence drivers.
//!
//! A [`Manifest`] embeds the element and problem text, so a run can be
//! replayed bit-identically from it alone.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::AssembledProblem;
use crate::checker::{self, AssumptionReport};
use crate::element::{parse_element, FiniteElement, Preset, ReferenceTensors};
use crate::error::{Error, Result};
use crate::expr::{Coefficients, ProblemSpec};
use crate::integrator::{
    integrate, integrate_multilevel, sample_seed, NoisePath, RecordPolicy, SolverConfig, Trajectory,
};
use crate::lattice::{GridFunction, TorusLattice};
use crate::richardson::{trajectory_error, ConvergenceReport, ExtrapolationPlan, Ratio};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ElementSource {
    Preset {
        name: String,
    },
    /// Element file contents; `path` is informational only.
    Inline {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<String>,
        text: String,
    },
}

impl ElementSource {
    pub fn load(&self) -> Result<FiniteElement> {
        match self {
            ElementSource::Preset { name } => FiniteElement::preset(name.parse::<Preset>()?),
            ElementSource::Inline { text, .. } => parse_element(text),
        }
    }
}

/// What the ladder errors are measured against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reference {
    /// A solve `levels` halvings finer than the finest base mesh of the ladder.
    Finer { levels: usize },
    /// A solve with `n` sites per axis.
    Mesh { n: usize },
    /// The mixture of `jbar + 1` solves starting at `n` sites per axis.
    Extrapolated { n: usize, jbar: usize, ratio: Ratio },
}

impl Reference {
    fn base_n(&self, finest_ladder_n: usize) -> usize {
        match *self {
            Reference::Finer { levels } => finest_ladder_n << levels,
            Reference::Mesh { n } | Reference::Extrapolated { n, .. } => n,
        }
    }

    fn plan(&self) -> Result<ExtrapolationPlan> {
        match *self {
            Reference::Extrapolated { jbar, ratio, .. } => {
                ExtrapolationPlan::with_ratio(jbar, ratio)
            }
            _ => ExtrapolationPlan::new(0, Ratio::Quarter.value()),
        }
    }
}

/// Which recorded times enter an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMetric {
    /// Maximum over every recorded time, t = 0 included.
    #[default]
    SupOverTime,
    /// The final time only.
    Terminal,
}

mod seed_string {
    use serde::{Deserialize, Deserializer, Serializer};

    // TOML integers are signed 64-bit, so seeds travel as decimal strings.
    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&seed.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub element: ElementSource,
    /// Problem file contents.
    pub problem: String,
    /// Torus side length.
    pub length: f64,
    /// Sites per axis of the (coarsest) lattice.
    pub n: usize,
    pub t_end: f64,
    /// Fixed step count; otherwise dt = dt_factor · h² of the finest solved mesh.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    pub dt_factor: f64,
    #[serde(with = "seed_string")]
    pub seed: u64,
    /// Noise truncation; defaults to the largest channel the problem names.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_max: Option<usize>,
    pub samples: usize,
    pub jbar: usize,
    pub ratio: Ratio,
    /// Number of base meshes n, 2n, 4n, … in a convergence study.
    pub ladder: usize,
    pub reference: Reference,
    /// Time levels recorded between t = 0 and t_end in a convergence study.
    pub checkpoints: usize,
    #[serde(default)]
    pub metric: ErrorMetric,
    /// Simulation output keeps every k-th state; all states when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
    pub solver: SolverConfig,
    pub quad_order: usize,
    /// Convergence studies also emit a log-log SVG plot.
    #[serde(default)]
    pub plot: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            element: ElementSource::Preset {
                name: "hat1d".into(),
            },
            problem: "a.1.1 = 1\n".into(),
            length: std::f64::consts::TAU,
            n: 16,
            t_end: 0.5,
            steps: None,
            dt_factor: 0.5,
            seed: 0,
            rho_max: None,
            samples: 1,
            jbar: 1,
            ratio: Ratio::Quarter,
            ladder: 4,
            reference: Reference::Finer { levels: 2 },
            checkpoints: 5,
            metric: ErrorMetric::SupOverTime,
            record_every: None,
            solver: SolverConfig::default(),
            quad_order: crate::element::quadrature::DEFAULT_ORDER,
            plot: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.length > 0.0 && self.length.is_finite()) {
            return bad(format!(
                "domain length must be positive, got {}",
                self.length
            ));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("final time must be positive, got {}", self.t_end));
        }
        if !(self.dt_factor > 0.0 && self.dt_factor.is_finite()) {
            return bad(format!(
                "dt factor must be positive, got {}",
                self.dt_factor
            ));
        }
        if self.steps == Some(0) {
            return bad("step count must be at least 1".into());
        }
        if self.samples == 0 {
            return bad("at least one sample is required".into());
        }
        if self.checkpoints == 0 || self.record_every == Some(0) {
            return bad("recording intervals must be at least 1".into());
        }
        if self.solver.tol <= 0.0 || self.solver.max_iter == 0 {
            return bad("solver tolerance and iteration limit must be positive".into());
        }
        Ok(())
    }

    /// Step count for a run whose finest lattice has spacing `h`.
    pub fn steps_for(&self, h: f64) -> usize {
        self.steps
            .unwrap_or_else(|| ((self.t_end / (self.dt_factor * h * h)).ceil() as usize).max(1))
    }
}

/// Element, tensors and coefficients shared by every lattice of a run.
pub struct Setup {
    pub element: FiniteElement,
    pub tensors: ReferenceTensors,
    pub coefficients: Coefficients,
}

impl Setup {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let element = config.element.load()?;
        let tensors = ReferenceTensors::compute_with_order(&element, config.quad_order)?;
        let spec = ProblemSpec::parse(&config.problem)?;
        let rho_max = config.rho_max.unwrap_or_else(|| spec.max_rho());
        let coefficients = spec.build(element.dim(), rho_max)?;
        Ok(Setup {
            element,
            tensors,
            coefficients,
        })
    }

    pub fn lattice(&self, config: &RunConfig, n: usize) -> Result<TorusLattice> {
        TorusLattice::with_length(self.element.dim(), config.length, n)
    }

    pub fn problem(&self, config: &RunConfig, n: usize) -> Result<AssembledProblem> {
        let lattice = self.lattice(config, n)?;
        AssembledProblem::new(
            &self.element,
            &self.tensors,
            &self.coefficients,
            &lattice,
            config.quad_order,
        )
    }

    fn noise(&self, seed: u64, steps: usize, dt: f64) -> NoisePath {
        if self.coefficients.is_stochastic() {
            NoisePath::generate(seed, steps, dt, self.coefficients.rho_max)
        } else {
            NoisePath::silent(steps, dt)
        }
    }
}

pub fn run_verify(config: &RunConfig) -> Result<AssumptionReport> {
    let element = config.element.load()?;
    let tensors = ReferenceTensors::compute_with_order(&element, config.quad_order)?;
    checker::verify(&element, &tensors)
}

/// One trajectory on the base lattice, driven by `config.seed`.
pub fn run_simulate(config: &RunConfig) -> Result<Trajectory> {
    let setup = Setup::new(config)?;
    let problem = setup.problem(config, config.n)?;
    let steps = config.steps_for(problem.lattice().h());
    let dt = config.t_end / steps as f64;
    let policy = match config.record_every {
        Some(k) => RecordPolicy::Every(k),
        None => RecordPolicy::All,
    };
    integrate(
        &problem,
        &setup.noise(config.seed, steps, dt),
        &config.solver,
        policy,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceOutcome {
    pub base: ConvergenceReport,
    /// Present when jbar > 0.
    pub mixture: Option<ConvergenceReport>,
    pub plan: ExtrapolationPlan,
    pub steps: usize,
    pub dt: f64,
    /// Samples that entered the averages.
    pub samples: usize,
}

/// A convergence study that stopped early, with whatever samples finished.
#[derive(Debug)]
pub struct PartialFailure {
    pub error: Error,
    pub partial: Option<Box<ConvergenceOutcome>>,
}

impl From<Error> for PartialFailure {
    fn from(error: Error) -> Self {
        PartialFailure {
            error,
            partial: None,
        }
    }
}

/// Squared errors of one sample, per ladder level.
struct SampleErrors {
    base: Vec<f64>,
    mixture: Vec<f64>,
}

/// Base and mixture errors over the ladder n, 2n, …, with RMS averaging over samples.
pub fn run_convergence(
    config: &RunConfig,
) -> std::result::Result<ConvergenceOutcome, PartialFailure> {
    let setup = Setup::new(config)?;
    if config.ladder == 0 {
        return Err(Error::Config("the mesh ladder needs at least one level".into()).into());
    }
    let plan = ExtrapolationPlan::with_ratio(config.jbar, config.ratio)?;
    let solved = config.ladder + config.jbar;
    let levels: Vec<AssembledProblem> = (0..solved)
        .map(|j| setup.problem(config, config.n << j))
        .collect::<Result<_>>()?;
    let finest_ladder_n = config.n << (config.ladder - 1);
    let ref_n = config.reference.base_n(finest_ladder_n);
    let ref_plan = config.reference.plan()?;
    let references: Vec<AssembledProblem> = (0..ref_plan.levels())
        .map(|j| setup.problem(config, ref_n << j))
        .collect::<Result<_>>()?;
    if ref_n <= config.n << (solved - 1) {
        log::warn!("reference mesh n = {ref_n} is not finer than every solved level");
    }

    let h_finest = levels.last().expect("at least one level").lattice().h();
    let steps = config.steps_for(h_finest);
    let dt = config.t_end / steps as f64;
    let policy = RecordPolicy::Every(steps.div_ceil(config.checkpoints).max(1));
    log::info!(
        "convergence study: {} solved levels, reference n = {ref_n}, {steps} steps of {dt:e}, {} samples",
        solved,
        config.samples
    );

    let samples = if setup.coefficients.is_stochastic() {
        config.samples
    } else {
        1
    };
    let results: Vec<Result<SampleErrors>> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let seed = if samples == 1 {
                config.seed
            } else {
                sample_seed(config.seed, s as u64)
            };
            let noise = setup.noise(seed, steps, dt);
            let study = Study {
                levels: &levels,
                references: &references,
                plan: &plan,
                ref_plan: &ref_plan,
                ladder: config.ladder,
                metric: config.metric,
                solver: &config.solver,
                policy,
            };
            study.sample_errors(&noise)
        })
        .collect();

    let mut first_error = None;
    let mut ok = Vec::new();
    for r in results {
        match r {
            Ok(e) => ok.push(e),
            Err(e) if first_error.is_none() => first_error = Some(e),
            Err(_) => {}
        }
    }
    let outcome = (!ok.is_empty()).then(|| {
        let rms = |pick: &dyn Fn(&SampleErrors) -> &Vec<f64>| -> Vec<f64> {
            (0..config.ladder)
                .map(|i| (ok.iter().map(|e| pick(e)[i]).sum::<f64>() / ok.len() as f64).sqrt())
                .collect()
        };
        let rows = |errors: Vec<f64>| -> Vec<(f64, usize, f64)> {
            errors
                .into_iter()
                .enumerate()
                .map(|(i, e)| {
                    (
                        levels[i].lattice().h(),
                        levels[i].lattice().sites_per_axis(),
                        e,
                    )
                })
                .collect()
        };
        ConvergenceOutcome {
            base: ConvergenceReport::new("base", &rows(rms(&|e| &e.base))),
            mixture: (config.jbar > 0).then(|| {
                ConvergenceReport::new(format!("jbar={}", config.jbar), &rows(rms(&|e| &e.mixture)))
            }),
            plan: plan.clone(),
            steps,
            dt,
            samples: ok.len(),
        }
    });
    match first_error {
        None => Ok(outcome.expect("no failure implies every sample finished")),
        Some(error) => Err(PartialFailure {
            error,
            partial: outcome.map(Box::new),
        }),
    }
}

/// The fixed parts of a convergence study; samples differ only in their noise.
struct Study<'a> {
    levels: &'a [AssembledProblem],
    references: &'a [AssembledProblem],
    plan: &'a ExtrapolationPlan,
    ref_plan: &'a ExtrapolationPlan,
    ladder: usize,
    metric: ErrorMetric,
    solver: &'a SolverConfig,
    policy: RecordPolicy,
}

impl Study<'_> {
    fn error(&self, states: &[GridFunction], reference: &[GridFunction]) -> Result<f64> {
        match self.metric {
            ErrorMetric::SupOverTime => trajectory_error(states, reference),
            ErrorMetric::Terminal => {
                let last = |s: &[GridFunction]| s.len().saturating_sub(1);
                trajectory_error(&states[last(states)..], &reference[last(reference)..])
            }
        }
    }

    fn sample_errors(&self, noise: &NoisePath) -> Result<SampleErrors> {
        let (trajectories, ref_trajectories) = rayon::join(
            || integrate_multilevel(self.levels, noise, self.solver, self.policy),
            || integrate_multilevel(self.references, noise, self.solver, self.policy),
        );
        let trajectories = trajectories?;
        let reference = mixture_states(&ref_trajectories?, self.ref_plan)?;
        let mut base = Vec::with_capacity(self.ladder);
        let mut mixture = Vec::with_capacity(self.ladder);
        for i in 0..self.ladder {
            base.push(self.error(&trajectories[i].states, &reference)?.powi(2));
            let mixed = mixture_states(&trajectories[i..i + self.plan.levels()], self.plan)?;
            mixture.push(self.error(&mixed, &reference)?.powi(2));
        }
        Ok(SampleErrors { base, mixture })
    }
}

/// Time-by-time mixture of trajectories recorded on a common time grid.
pub fn mixture_states(
    trajectories: &[Trajectory],
    plan: &ExtrapolationPlan,
) -> Result<Vec<GridFunction>> {
    let times = trajectories[0].states.len();
    (0..times)
        .map(|k| {
            let at: Vec<&GridFunction> = trajectories.iter().map(|t| &t.states[k]).collect();
            plan.combine(&at)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    VerifyElement,
    Simulate,
    Convergence,
}

/// Everything needed to replay a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: Command,
    pub config: RunConfig,
}

impl Manifest {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialise manifest: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Manifest> {
        toml::from_str(text).map_err(|e| Error::Config(format!("malformed manifest: {e}")))
    }

    pub fn read(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Manifest::from_toml(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heat() -> RunConfig {
        RunConfig {
            problem: "a.1.1 = 1\nphi = \"sin(x1)\"\n".into(),
            n: 8,
            t_end: 0.1,
            ladder: 3,
            ..RunConfig::default()
        }
    }

    #[test]
    fn manifest_round_trips() {
        let m = Manifest {
            command: Command::Convergence,
            config: RunConfig {
                seed: u64::MAX,
                steps: Some(10),
                element: ElementSource::Inline {
                    path: Some("e.toml".into()),
                    text: "dim = 1\n".into(),
                },
                reference: Reference::Extrapolated {
                    n: 64,
                    jbar: 1,
                    ratio: Ratio::Quarter,
                },
                ..heat()
            },
        };
        let text = m.to_toml().unwrap();
        assert_eq!(Manifest::from_toml(&text).unwrap(), m);
        assert!(Manifest::from_toml("command = \"nope\"").is_err());
    }

    #[test]
    fn dt_rule() {
        let c = heat();
        let h = 0.1;
        assert_eq!(c.steps_for(h), 20);
        assert_eq!(
            RunConfig {
                steps: Some(7),
                ..c
            }
            .steps_for(h),
            7
        );
    }

    #[test]
    fn simulate_zero_data() {
        let c = RunConfig {
            problem: "a.1.1 = 1\n".into(),
            ..heat()
        };
        let tr = run_simulate(&c).unwrap();
        assert!(tr.states.iter().all(|s| s.max_abs() == 0.0));
    }

    #[test]
    fn deterministic_convergence_has_second_order_base() {
        let out = run_convergence(&heat()).unwrap();
        assert_eq!(out.samples, 1);
        let order = out.base.fitted_order.unwrap();
        assert!((1.8..2.3).contains(&order), "order {order}");
        let mix = out.mixture.unwrap();
        for (m, b) in mix.errors().iter().zip(out.base.errors()) {
            assert!(*m < b);
        }
    }

    #[test]
    fn jbar_zero_reports_the_base_scheme_only() {
        let out = run_convergence(&RunConfig { jbar: 0, ..heat() }).unwrap();
        assert!(out.mixture.is_none());
    }

    #[test]
    fn invalid_configs() {
        assert!(Setup::new(&RunConfig {
            samples: 0,
            ..heat()
        })
        .is_err());
        assert!(Setup::new(&RunConfig {
            length: -1.0,
            ..heat()
        })
        .is_err());
        assert!(run_convergence(&RunConfig {
            ladder: 0,
            ..heat()
        })
        .is_err());
    }
}
