use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::problem::HorizonProblem;
use crate::error::{Error, Result};
use crate::plant::norm_sq;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Absolute tolerance on the squared-norm constraint residuals.
    pub feasibility_tol: f64,
    /// Projected-gradient tolerance on the augmented Lagrangian.
    pub gradient_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Extra solves from randomly perturbed starting points.
    pub restarts: usize,
    pub seed: u64,
    pub initial_penalty: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-6,
            gradient_tol: 1e-6,
            max_outer: 200,
            max_inner: 500,
            restarts: 0,
            seed: 0,
            initial_penalty: 10.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.feasibility_tol > 0.0 && self.gradient_tol > 0.0) {
            return Err(Error::config("solver tolerances must be positive"));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::config("solver iteration caps must be positive"));
        }
        if !(self.initial_penalty > 0.0) {
            return Err(Error::config("initial penalty must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    FeasibleSuboptimal,
    Infeasible,
    MaxIter,
}

impl SolveStatus {
    pub fn is_feasible(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::FeasibleSuboptimal)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::FeasibleSuboptimal => "feasible_suboptimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::MaxIter => "max_iter",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "optimal" => SolveStatus::Optimal,
            "feasible_suboptimal" => SolveStatus::FeasibleSuboptimal,
            "infeasible" => SolveStatus::Infeasible,
            "max_iter" => SolveStatus::MaxIter,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub controls: Vec<Vec<f64>>,
    pub cost: f64,
    pub max_constraint_violation: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// Augmented-Lagrangian single-shooting solver with a projected BFGS inner loop.
#[derive(Debug, Clone, Default)]
pub struct Solver {
    pub config: SolverConfig,
}

struct InnerOutcome {
    z: Vec<f64>,
    /// Projected gradient infinity norm at `z`.
    stationarity: f64,
    iterations: usize,
    converged: bool,
}

struct Candidate {
    z: Vec<f64>,
    cost: f64,
    violation: f64,
    iterations: usize,
    status: SolveStatus,
}

/// `|P(z - g) - z|_inf`, the first-order measure on a box.
fn projected_gradient_norm(problem: &HorizonProblem<'_>, z: &[f64], g: &[f64]) -> f64 {
    z.iter()
        .zip(g)
        .enumerate()
        .map(|(i, (zi, gi))| {
            let (lo, hi) = problem.input_set.bounds(i);
            ((zi - gi).clamp(lo, hi) - zi).abs()
        })
        .fold(0.0, f64::max)
}

/// Minimise a smooth function over the input box. `f` returns the value and
/// gradient; `Err(NonFinite)` marks points outside the rollout's domain.
fn projected_bfgs(
    problem: &HorizonProblem<'_>,
    f: &dyn Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
    z0: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<InnerOutcome> {
    let n = z0.len();
    let mut z = z0;
    let (mut val, mut grad) = f(&z)?;
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut iterations = 0;

    let try_eval = |z: &[f64]| -> Result<Option<(f64, Vec<f64>)>> {
        match f(z) {
            Ok(v) if v.0.is_finite() => Ok(Some(v)),
            Ok(_) | Err(Error::NonFinite { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };

    loop {
        let stationarity = projected_gradient_norm(problem, &z, &grad);
        if stationarity <= tol {
            return Ok(InnerOutcome {
                z,
                stationarity,
                iterations,
                converged: true,
            });
        }
        if iterations >= max_iter {
            return Ok(InnerOutcome {
                z,
                stationarity,
                iterations,
                converged: false,
            });
        }
        iterations += 1;

        // Variables pinned at a bound with the gradient pointing outward stay fixed.
        let free: Vec<bool> = (0..n)
            .map(|i| {
                let (lo, hi) = problem.input_set.bounds(i);
                !((z[i] <= lo && grad[i] > 0.0) || (z[i] >= hi && grad[i] < 0.0))
            })
            .collect();

        let mut accepted = None;
        for attempt in 0..2 {
            if attempt == 1 {
                if fresh {
                    break;
                }
                hinv = DMatrix::identity(n, n);
                fresh = true;
            }
            let mut d = vec![0.0; n];
            for i in (0..n).filter(|&i| free[i]) {
                d[i] = -(0..n).filter(|&j| free[j]).map(|j| hinv[(i, j)] * grad[j]).sum::<f64>();
            }
            let slope: f64 = d.iter().zip(&grad).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                continue;
            }
            let mut t = 1.0;
            for _ in 0..60 {
                let mut trial: Vec<f64> = z.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                problem.input_set.project(&mut trial);
                let decrease: f64 = trial.iter().zip(&z).zip(&grad).map(|((a, b), g)| (a - b) * g).sum();
                if let Some((v, g)) = try_eval(&trial)? {
                    if v <= val + 1e-4 * decrease {
                        accepted = Some((trial, v, g));
                        break;
                    }
                }
                t *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }

        let Some((z_new, v_new, g_new)) = accepted else {
            let stationarity = projected_gradient_norm(problem, &z, &grad);
            return Ok(InnerOutcome {
                z,
                stationarity,
                iterations,
                converged: stationarity <= tol,
            });
        };

        let s = DVector::from_iterator(n, z_new.iter().zip(&z).map(|(a, b)| a - b));
        let y = DVector::from_iterator(n, g_new.iter().zip(&grad).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        let step_small = s.amax() <= 1e-15 * (1.0 + z.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        z = z_new;
        val = v_new;
        grad = g_new;
        if step_small {
            let stationarity = projected_gradient_norm(problem, &z, &grad);
            return Ok(InnerOutcome {
                z,
                stationarity,
                iterations,
                converged: stationarity <= tol,
            });
        }
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                hinv *= sy / y.dot(&y);
                fresh = false;
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            // H+ = H - rho (H y s' + s y' H) + (rho^2 y'Hy + rho) s s'
            hinv -= (&hy * s.transpose() + &s * hy.transpose()) * rho;
            hinv += (&s * s.transpose()) * (rho * rho * yhy + rho);
        }
    }
}

impl Solver {
    pub fn new(config: SolverConfig) -> Self {
        Self { config }
    }

    /// Solve one horizon problem, starting from `warm_start` (all zeros if absent).
    pub fn solve(
        &self,
        problem: &HorizonProblem<'_>,
        warm_start: Option<&[Vec<f64>]>,
    ) -> Result<SolveResult> {
        problem.validate()?;
        self.config.validate()?;
        let z0 = match warm_start {
            Some(w) => problem.flatten(w)?,
            None => vec![0.0; problem.num_vars()],
        };

        let mut best = self.solve_from(problem, z0.clone())?;
        if self.config.restarts > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
            let scale = z0.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for _ in 0..self.config.restarts {
                let start: Vec<f64> = z0
                    .iter()
                    .map(|v| {
                        let noise: f64 = StandardNormal.sample(&mut rng);
                        v + scale * noise
                    })
                    .collect();
                let cand = self.solve_from(problem, start)?;
                let iterations = best.iterations + cand.iterations;
                if better(&cand, &best) {
                    best = cand;
                }
                best.iterations = iterations;
            }
        }

        // Never hand back something worse than a feasible warm start.
        let mut start = z0;
        problem.input_set.project(&mut start);
        if let Ok((cost, e, t)) = problem.cost_and_constraints(&start) {
            let violation = violation_of(e, t);
            if violation <= self.config.feasibility_tol
                && (!best.status.is_feasible() || cost < best.cost)
            {
                best = Candidate {
                    z: start,
                    cost,
                    violation,
                    iterations: best.iterations,
                    status: SolveStatus::FeasibleSuboptimal,
                };
            }
        }

        Ok(SolveResult {
            controls: problem.unflatten(&best.z),
            cost: best.cost,
            max_constraint_violation: best.violation,
            iterations: best.iterations,
            status: best.status,
        })
    }

    fn solve_from(&self, problem: &HorizonProblem<'_>, mut z: Vec<f64>) -> Result<Candidate> {
        problem.input_set.project(&mut z);
        if problem.cost_and_constraints(&z).is_err() {
            z.iter_mut().for_each(|v| *v = 0.0);
        }
        let cand = self.augmented_lagrangian(problem, z)?;
        if cand.status.is_feasible() {
            return Ok(cand);
        }

        // One restoration attempt: minimise the squared violation, then re-optimise.
        let cfg = &self.config;
        let restoration = |z: &[f64]| -> Result<(f64, Vec<f64>)> {
            let s = problem.sensitivity_with(z, &|e, t| {
                (2.0 * e.unwrap_or(0.0).max(0.0), 2.0 * t.unwrap_or(0.0).max(0.0))
            })?;
            // Strip the cost part of the gradient.
            let base = problem.sensitivity(z, 0.0, 0.0)?;
            let grad = s.grad.iter().zip(&base.grad).map(|(a, b)| a - b).collect();
            let e = s.energy.unwrap_or(0.0).max(0.0);
            let t = s.terminal.unwrap_or(0.0).max(0.0);
            Ok((e * e + t * t, grad))
        };
        let inner = projected_bfgs(problem, &restoration, cand.z.clone(), cfg.gradient_tol * 1e-3, cfg.max_inner)?;
        let (_, e, t) = problem.cost_and_constraints(&inner.z)?;
        let restored_violation = violation_of(e, t);
        let iterations = cand.iterations + inner.iterations;
        if restored_violation > cfg.feasibility_tol {
            let (cost, _, _) = problem.cost_and_constraints(&cand.z)?;
            return Ok(Candidate {
                z: cand.z,
                cost,
                violation: cand.violation,
                iterations,
                status: if inner.converged {
                    SolveStatus::Infeasible
                } else {
                    SolveStatus::MaxIter
                },
            });
        }
        let again = self.augmented_lagrangian(problem, inner.z.clone())?;
        if again.status.is_feasible() {
            return Ok(Candidate {
                iterations: iterations + again.iterations,
                ..again
            });
        }
        let (cost, _, _) = problem.cost_and_constraints(&inner.z)?;
        Ok(Candidate {
            z: inner.z,
            cost,
            violation: restored_violation,
            iterations: iterations + again.iterations,
            status: SolveStatus::FeasibleSuboptimal,
        })
    }

    fn augmented_lagrangian(&self, problem: &HorizonProblem<'_>, mut z: Vec<f64>) -> Result<Candidate> {
        let cfg = &self.config;
        let mut lam_e = 0.0f64;
        let mut lam_t = 0.0f64;
        let mut rho = cfg.initial_penalty;
        let mut prev_violation = f64::INFINITY;
        let mut iterations = 0;
        let mut stationary = false;
        let constrained = problem.energy_window.is_some() || problem.terminal_bound.is_some();

        for _ in 0..cfg.max_outer {
            let (le, lt, r) = (lam_e, lam_t, rho);
            let phi = move |z: &[f64]| -> Result<(f64, Vec<f64>)> {
                let s = problem.sensitivity_with(z, &|e, t| {
                    (
                        e.map_or(0.0, |g| (le + r * g).max(0.0)),
                        t.map_or(0.0, |g| (lt + r * g).max(0.0)),
                    )
                })?;
                let pen = |lam: f64, g: Option<f64>| {
                    g.map_or(0.0, |g| ((lam + r * g).max(0.0).powi(2) - lam * lam) / (2.0 * r))
                };
                Ok((s.cost + pen(le, s.energy) + pen(lt, s.terminal), s.grad))
            };
            let inner = projected_bfgs(problem, &phi, z, cfg.gradient_tol, cfg.max_inner)?;
            iterations += inner.iterations;
            z = inner.z;
            stationary = inner.converged && inner.stationarity <= cfg.gradient_tol;
            if !constrained {
                break;
            }

            let (_, e, t) = problem.cost_and_constraints(&z)?;
            let violation = violation_of(e, t);
            let new_e = e.map_or(0.0, |g| (lam_e + rho * g).max(0.0));
            let new_t = t.map_or(0.0, |g| (lam_t + rho * g).max(0.0));
            let complementarity = [(e, new_e), (t, new_t)]
                .iter()
                .filter_map(|(g, l)| g.map(|g| (-g).min(*l).abs()))
                .fold(0.0, f64::max);
            lam_e = new_e;
            lam_t = new_t;
            if violation <= cfg.feasibility_tol && complementarity <= cfg.feasibility_tol && stationary {
                break;
            }
            if violation > 0.25 * prev_violation {
                rho = (rho * 10.0).min(1e12);
            }
            prev_violation = violation;
        }

        let (cost, e, t) = problem.cost_and_constraints(&z)?;
        let violation = violation_of(e, t);
        let status = if violation > cfg.feasibility_tol {
            SolveStatus::MaxIter
        } else if stationary {
            SolveStatus::Optimal
        } else {
            SolveStatus::FeasibleSuboptimal
        };
        Ok(Candidate {
            z,
            cost,
            violation,
            iterations,
            status,
        })
    }
}

fn violation_of(e: Option<f64>, t: Option<f64>) -> f64 {
    e.unwrap_or(0.0).max(t.unwrap_or(0.0)).max(0.0)
}

fn better(a: &Candidate, b: &Candidate) -> bool {
    match (a.status.is_feasible(), b.status.is_feasible()) {
        (true, false) => true,
        (false, true) => false,
        (true, true) => a.cost < b.cost,
        (false, false) => a.violation < b.violation,
    }
}

/// Squared norm of a flattened sequence; used by callers tracking spent energy.
pub fn energy(controls: &[Vec<f64>]) -> f64 {
    controls.iter().map(|u| norm_sq(u)).sum()
}
