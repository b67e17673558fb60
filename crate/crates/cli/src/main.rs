//! `spdefe`: element verification, single simulations and convergence studies.
//!
//! Every run writes into a fresh timestamped directory under `--out` together
//! with a `manifest.toml` that `spdefe replay` re-executes byte-identically.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spdefe::experiment::{
    run_convergence, run_simulate, run_verify, Command, ConvergenceOutcome, ElementSource,
    ErrorMetric, Manifest, Reference, RunConfig,
};
use spdefe::integrator::SolverConfig;
use spdefe::richardson::{convergence_svg, Ratio};
use spdefe::Error;

const EXIT_OK: u8 = 0;
const EXIT_INPUT: u8 = 1;
const EXIT_FAIL: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "spdefe",
    version,
    about = "Finite element SPDE solver with Richardson extrapolation in space"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check an element against the symmetry, compatibility, invertibility and cardinal conditions.
    VerifyElement {
        #[command(flatten)]
        element: ElementArgs,
        #[arg(long = "quad-order", default_value_t = RunConfig::default().quad_order)]
        quad_order: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Integrate one trajectory and write it as CSV.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Keep every k-th time level; all levels by default.
        #[arg(long = "record-every")]
        record_every: Option<usize>,
    },
    /// Measure base and extrapolated errors over a mesh ladder.
    Convergence {
        #[command(flatten)]
        run: RunArgs,
        /// Monte Carlo samples for stochastic problems.
        #[arg(long, default_value_t = 1)]
        samples: usize,
        /// Extra levels in the Richardson mixture.
        #[arg(long, default_value_t = 1)]
        jbar: usize,
        #[arg(long, default_value = "quarter")]
        ratio: Ratio,
        /// Number of base meshes n, 2n, 4n, …
        #[arg(long, default_value_t = 4)]
        ladder: usize,
        /// Reference solve with this many sites per axis; otherwise two halvings past the ladder.
        #[arg(long = "reference-n")]
        reference_n: Option<usize>,
        /// Extrapolate the reference with this many extra levels.
        #[arg(long = "reference-jbar", default_value_t = 0, requires = "reference_n")]
        reference_jbar: usize,
        #[arg(long = "reference-ratio", default_value = "quarter")]
        reference_ratio: Ratio,
        /// Recorded time levels over which the error supremum is taken.
        #[arg(long, default_value_t = 5)]
        checkpoints: usize,
        /// Measure the error only at the final time instead of the supremum over recorded times.
        #[arg(long)]
        terminal: bool,
        /// Also write a log-log SVG plot.
        #[arg(long)]
        svg: bool,
    },
    /// Re-run a manifest into a new run directory.
    Replay {
        manifest: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Args)]
#[group(multiple = false)]
struct ElementArgs {
    /// hat1d, tensor(d) or triangle2d.
    #[arg(long)]
    preset: Option<String>,
    /// TOML element description.
    #[arg(long = "element-file")]
    element_file: Option<PathBuf>,
}

#[derive(Args)]
struct OutArgs {
    /// Parent directory of run directories.
    #[arg(long, env = "SPDEFE_OUT", default_value = "runs")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    element: ElementArgs,
    /// Problem coefficient file.
    #[arg(long)]
    problem: PathBuf,
    /// Torus side length.
    #[arg(long = "L", default_value_t = std::f64::consts::TAU)]
    length: f64,
    /// Sites per axis of the base lattice.
    #[arg(long, default_value_t = 16)]
    n: usize,
    /// Final time.
    #[arg(long = "T", default_value_t = 0.5)]
    t_end: f64,
    /// Time steps; otherwise dt = dt-factor · h² of the finest mesh.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long = "dt-factor", default_value_t = 0.5)]
    dt_factor: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Noise channels kept; defaults to every channel the problem names.
    #[arg(long = "rho-max")]
    rho_max: Option<usize>,
    /// Relative residual of the linear solves.
    #[arg(long, default_value_t = SolverConfig::default().tol)]
    tol: f64,
    #[arg(long = "max-iter", default_value_t = SolverConfig::default().max_iter)]
    max_iter: usize,
    #[arg(long = "quad-order", default_value_t = RunConfig::default().quad_order)]
    quad_order: usize,
    #[command(flatten)]
    out: OutArgs,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_INPUT
            },
            message: e.to_string(),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure {
        code: EXIT_INPUT,
        message: format!("cannot read {}: {e}", path.display()),
    })
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure {
        code: EXIT_INPUT,
        message: format!("cannot write {}: {e}", path.display()),
    })
}

impl ElementArgs {
    fn source(&self) -> Result<ElementSource, Failure> {
        match (&self.preset, &self.element_file) {
            (_, Some(path)) => Ok(ElementSource::Inline {
                path: Some(path.display().to_string()),
                text: read(path)?,
            }),
            (Some(name), None) => Ok(ElementSource::Preset { name: name.clone() }),
            (None, None) => Ok(RunConfig::default().element),
        }
    }
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, Failure> {
        Ok(RunConfig {
            element: self.element.source()?,
            problem: read(&self.problem)?,
            length: self.length,
            n: self.n,
            t_end: self.t_end,
            steps: self.steps,
            dt_factor: self.dt_factor,
            seed: self.seed,
            rho_max: self.rho_max,
            solver: SolverConfig {
                tol: self.tol,
                max_iter: self.max_iter,
                ..SolverConfig::default()
            },
            quad_order: self.quad_order,
            ..RunConfig::default()
        })
    }
}

/// A new directory `<parent>/<timestamp>-<command>`.
fn run_directory(parent: &Path, command: Command) -> Result<PathBuf, Failure> {
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S%.3f");
    let name = match command {
        Command::VerifyElement => "verify-element",
        Command::Simulate => "simulate",
        Command::Convergence => "convergence",
    };
    let io = |e: std::io::Error, p: &Path| Failure {
        code: EXIT_INPUT,
        message: format!("cannot create {}: {e}", p.display()),
    };
    fs::create_dir_all(parent).map_err(|e| io(e, parent))?;
    for attempt in 0.. {
        let dir = match attempt {
            0 => parent.join(format!("{stamp}-{name}")),
            k => parent.join(format!("{stamp}-{name}-{k}")),
        };
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(io(e, &dir)),
        }
    }
    unreachable!("some suffix is free")
}

fn execute(manifest: &Manifest, parent: &Path) -> Result<u8, Failure> {
    let dir = run_directory(parent, manifest.command)?;
    write(&dir.join("manifest.toml"), &manifest.to_toml()?)?;
    let config = &manifest.config;
    let code = match manifest.command {
        Command::VerifyElement => {
            let report = run_verify(config)?;
            let text = format!("{report}\n");
            write(&dir.join("report.txt"), &text)?;
            print!("{text}");
            if report.passed() {
                EXIT_OK
            } else {
                EXIT_FAIL
            }
        }
        Command::Simulate => {
            let trajectory = run_simulate(config)?;
            write(&dir.join("trajectory.csv"), &trajectory.to_csv())?;
            println!(
                "{} time levels recorded, sup |U|_0,h = {:.6e}, sup |U| = {:.6e}",
                trajectory.times.len(),
                trajectory.sup_norm_0h,
                trajectory.sup_abs
            );
            EXIT_OK
        }
        Command::Convergence => match run_convergence(config) {
            Ok(outcome) => {
                write_convergence(&dir, &outcome, config)?;
                EXIT_OK
            }
            Err(failure) => {
                if let Some(partial) = &failure.partial {
                    write_convergence(&dir, partial, config)?;
                    eprintln!("partial results from {} samples written", partial.samples);
                }
                return Err(Failure::from(failure.error));
            }
        },
    };
    println!("run directory: {}", dir.display());
    Ok(code)
}

fn write_convergence(
    dir: &Path,
    outcome: &ConvergenceOutcome,
    config: &RunConfig,
) -> Result<(), Failure> {
    println!(
        "{} steps of dt = {:.6e}, {} samples, coefficients {:?}",
        outcome.steps,
        outcome.dt,
        outcome.samples,
        outcome.plan.coefficients()
    );
    let base = outcome.base.to_csv();
    write(&dir.join("convergence_base.csv"), &base)?;
    println!("base\n{base}");
    let mut reports = vec![&outcome.base];
    if let Some(mix) = &outcome.mixture {
        let csv = mix.to_csv();
        write(&dir.join("convergence_mixture.csv"), &csv)?;
        println!("{}\n{csv}", mix.label);
        reports.push(mix);
    }
    if config.plot {
        write(&dir.join("convergence.svg"), &convergence_svg(&reports))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let (manifest, out) = match cli.command {
        Cmd::VerifyElement {
            element,
            quad_order,
            out,
        } => {
            let config = RunConfig {
                element: element.source()?,
                quad_order,
                ..RunConfig::default()
            };
            (
                Manifest {
                    command: Command::VerifyElement,
                    config,
                },
                out.out,
            )
        }
        Cmd::Simulate { run, record_every } => {
            let config = RunConfig {
                record_every,
                ..run.config()?
            };
            (
                Manifest {
                    command: Command::Simulate,
                    config,
                },
                run.out.out,
            )
        }
        Cmd::Convergence {
            run,
            samples,
            jbar,
            ratio,
            ladder,
            reference_n,
            reference_jbar,
            reference_ratio,
            checkpoints,
            terminal,
            svg,
        } => {
            let reference = match reference_n {
                Some(n) if reference_jbar > 0 => Reference::Extrapolated {
                    n,
                    jbar: reference_jbar,
                    ratio: reference_ratio,
                },
                Some(n) => Reference::Mesh { n },
                None => Reference::Finer { levels: 2 },
            };
            let config = RunConfig {
                samples,
                jbar,
                ratio,
                ladder,
                reference,
                checkpoints,
                metric: if terminal {
                    ErrorMetric::Terminal
                } else {
                    ErrorMetric::SupOverTime
                },
                plot: svg,
                ..run.config()?
            };
            (
                Manifest {
                    command: Command::Convergence,
                    config,
                },
                run.out.out,
            )
        }
        Cmd::Replay { manifest, out } => (Manifest::read(&manifest)?, out.out),
    };
    execute(&manifest, &out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { EXIT_OK });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
