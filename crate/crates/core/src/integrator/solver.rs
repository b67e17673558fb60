//! Linear solves for stencil systems: Jacobi-preconditioned BiCGStab, with a
//! dense LU fallback for small lattices.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::assembly::StencilOperator;
use crate::error::{Error, Result};
use crate::lattice::GridFunction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Relative residual ‖b − Ax‖ / ‖b‖ required.
    pub tol: f64,
    pub max_iter: usize,
    /// Dense LU is tried when the Krylov solve fails and the lattice has at most this many sites.
    pub dense_fallback_sites: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-10,
            max_iter: 1000,
            dense_fallback_sites: 4096,
        }
    }
}

/// How a solve finished.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    pub dense: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn residual(system: &StencilOperator, b: &[f64], x: &[f64], r: &mut [f64]) {
    system.apply_into(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
}

/// BiCGStab with a Jacobi right preconditioner. Returns the iterate and its true
/// relative residual; `Err` carries the best residual reached.
fn bicgstab(
    system: &StencilOperator,
    b: &[f64],
    x: &mut [f64],
    cfg: &SolverConfig,
) -> std::result::Result<SolveStats, (usize, f64)> {
    let n = b.len();
    let bnorm = norm(b);
    let inv_diag: Vec<f64> = system
        .diagonal()
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let precond = |v: &[f64], out: &mut [f64]| {
        for ((o, vi), w) in out.iter_mut().zip(v).zip(&inv_diag) {
            *o = vi * w;
        }
    };
    let mut r = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut iterations = 0;

    residual(system, b, x, &mut r);
    let mut rel = norm(&r) / bnorm;
    if rel <= cfg.tol {
        return Ok(SolveStats {
            iterations,
            residual: rel,
            dense: false,
        });
    }
    'restart: while iterations < cfg.max_iter {
        let r_hat = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        p.iter_mut().for_each(|e| *e = 0.0);
        v.iter_mut().for_each(|e| *e = 0.0);
        while iterations < cfg.max_iter {
            iterations += 1;
            let rho_new = dot(&r_hat, &r);
            if rho_new == 0.0 || !rho_new.is_finite() {
                residual(system, b, x, &mut r);
                continue 'restart;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            precond(&p, &mut y);
            system.apply_into(&y, &mut v);
            let denom = dot(&r_hat, &v);
            if denom == 0.0 || !denom.is_finite() {
                residual(system, b, x, &mut r);
                if iterations >= cfg.max_iter || norm(&r) == 0.0 {
                    break 'restart;
                }
                continue 'restart;
            }
            alpha = rho / denom;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            if norm(&s) / bnorm <= cfg.tol {
                for i in 0..n {
                    x[i] += alpha * y[i];
                }
                residual(system, b, x, &mut r);
                rel = norm(&r) / bnorm;
                if rel <= cfg.tol {
                    return Ok(SolveStats {
                        iterations,
                        residual: rel,
                        dense: false,
                    });
                }
                continue 'restart;
            }
            precond(&s, &mut z);
            system.apply_into(&z, &mut t);
            let tt = dot(&t, &t);
            omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
            for i in 0..n {
                x[i] += alpha * y[i] + omega * z[i];
                r[i] = s[i] - omega * t[i];
            }
            if norm(&r) / bnorm <= cfg.tol {
                residual(system, b, x, &mut r);
                rel = norm(&r) / bnorm;
                if rel <= cfg.tol {
                    return Ok(SolveStats {
                        iterations,
                        residual: rel,
                        dense: false,
                    });
                }
                continue 'restart;
            }
            if omega == 0.0 || !omega.is_finite() {
                residual(system, b, x, &mut r);
                continue 'restart;
            }
        }
    }
    residual(system, b, x, &mut r);
    Err((iterations, norm(&r) / bnorm))
}

/// Solves `system · x = rhs` to the configured relative residual.
///
/// `guess` seeds the iteration. A zero right-hand side returns zero.
pub fn solve_linear(
    system: &StencilOperator,
    rhs: &GridFunction,
    guess: Option<&GridFunction>,
    cfg: &SolverConfig,
) -> Result<(GridFunction, SolveStats)> {
    system.lattice().ensure_same(rhs.lattice())?;
    let b = rhs.values();
    let lattice = rhs.lattice().clone();
    if b.iter().all(|&v| v == 0.0) {
        let stats = SolveStats {
            iterations: 0,
            residual: 0.0,
            dense: false,
        };
        return Ok((GridFunction::zeros(&lattice), stats));
    }
    let mut x = match guess {
        Some(g) => {
            g.lattice().ensure_same(&lattice)?;
            g.values().to_vec()
        }
        None => vec![0.0; b.len()],
    };
    if x.iter().any(|v| !v.is_finite()) {
        x.iter_mut().for_each(|v| *v = 0.0);
    }
    match bicgstab(system, b, &mut x, cfg) {
        Ok(stats) => Ok((GridFunction::new(lattice, x)?, stats)),
        Err((iterations, krylov_residual)) => {
            if b.len() > cfg.dense_fallback_sites {
                return Err(Error::NonConvergence {
                    iterations,
                    residual: krylov_residual,
                });
            }
            log::debug!(
                "Krylov solve stalled at relative residual {krylov_residual:e} after {iterations} iterations; using dense LU"
            );
            let dense = system.to_dense();
            let rhs_vec = DVector::from_column_slice(b);
            let solution = dense
                .lu()
                .solve(&rhs_vec)
                .filter(|s| s.iter().all(|v| v.is_finite()));
            let Some(solution) = solution else {
                return Err(Error::NonConvergence {
                    iterations,
                    residual: krylov_residual,
                });
            };
            let x: Vec<f64> = solution.iter().copied().collect();
            let mut r = vec![0.0; b.len()];
            residual(system, b, &x, &mut r);
            let rel = norm(&r) / norm(b);
            if rel > cfg.tol.max(1e3 * f64::EPSILON) {
                return Err(Error::NonConvergence {
                    iterations,
                    residual: rel,
                });
            }
            let stats = SolveStats {
                iterations,
                residual: rel,
                dense: true,
            };
            Ok((GridFunction::new(lattice, x)?, stats))
        }
    }
}
