use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{norm_sq, DiscreteSystem};
use crate::trajopt::{EnergyWindow, HorizonProblem, InputSet, SolveStatus, Solver};

/// Outcome of one membership test at a single state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub feasible: bool,
    /// Cost of the best control sequence found, if the solver reached feasibility.
    pub cost: Option<f64>,
    pub witness: Option<Vec<Vec<f64>>>,
    pub status: SolveStatus,
}

fn contractive_problem<'a>(
    system: &'a dyn DiscreteSystem,
    x: &[f64],
    beta: f64,
    n: usize,
    input_set: &InputSet,
) -> HorizonProblem<'a> {
    HorizonProblem::new(system, x.to_vec(), n)
        .with_input_set(input_set.clone())
        .with_terminal_bound(beta * norm_sq(x))
}

fn itec_problem<'a>(
    system: &'a dyn DiscreteSystem,
    x: &[f64],
    n: usize,
    budget: f64,
    input_set: &InputSet,
) -> HorizonProblem<'a> {
    HorizonProblem::new(system, x.to_vec(), n)
        .with_input_set(input_set.clone())
        .with_terminal_bound(norm_sq(x))
        .with_energy_window(EnergyWindow {
            start: 0,
            end: n - 1,
            budget,
        })
}

fn membership(problem: &HorizonProblem<'_>, sigma: f64, solver: &Solver) -> Result<Membership> {
    if !(sigma > 0.0) {
        return Err(Error::config("sigma must be positive"));
    }
    let result = solver.solve(problem, None)?;
    if !result.status.is_feasible() {
        return Ok(Membership {
            feasible: false,
            cost: None,
            witness: None,
            status: result.status,
        });
    }
    let feasible = result.cost <= sigma * norm_sq(&problem.x_init);
    Ok(Membership {
        feasible,
        cost: Some(result.cost),
        witness: feasible.then_some(result.controls),
        status: result.status,
    })
}

fn check_horizon(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::config("horizon N must be at least 1"));
    }
    Ok(())
}

/// Search for `N` controls with cost at most `sigma |x|^2` ending inside `beta |x|^2`.
pub fn certify_contractive(
    system: &dyn DiscreteSystem,
    x: &[f64],
    beta: f64,
    n: usize,
    sigma: f64,
    input_set: &InputSet,
    solver: &Solver,
) -> Result<Membership> {
    check_horizon(n)?;
    membership(&contractive_problem(system, x, beta, n, input_set), sigma, solver)
}

/// Search for `N` controls with cost at most `sigma |x|^2`, energy at most `C`,
/// and no growth of the state norm.
pub fn certify_itec(
    system: &dyn DiscreteSystem,
    x: &[f64],
    n: usize,
    budget: f64,
    sigma: f64,
    input_set: &InputSet,
    solver: &Solver,
) -> Result<Membership> {
    check_horizon(n)?;
    if !(budget >= 0.0) {
        return Err(Error::config("energy budget C must be nonnegative"));
    }
    membership(&itec_problem(system, x, n, budget, input_set), sigma, solver)
}

/// Least costs found at one sample for the two membership problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleCosts {
    pub state: Vec<f64>,
    pub contractive_cost: Option<f64>,
    /// Absent when the ITEC problem was not part of the certificate.
    pub itec_cost: Option<f64>,
    pub itec_feasible: bool,
}

impl SampleCosts {
    fn feasible(&self) -> bool {
        self.contractive_cost.is_some() && self.itec_feasible
    }

    /// Smallest `sigma` that admits this sample.
    fn ratio(&self) -> f64 {
        let worst = self.contractive_cost.unwrap_or(f64::INFINITY).max(self.itec_cost.unwrap_or(0.0));
        self.scaled(worst)
    }

    /// Smallest `sigma` that admits whichever of the two problems were solvable here.
    fn solvable_ratio(&self) -> f64 {
        let worst = self.contractive_cost.unwrap_or(0.0).max(self.itec_cost.unwrap_or(0.0));
        self.scaled(worst)
    }

    fn scaled(&self, cost: f64) -> f64 {
        if cost == 0.0 {
            0.0
        } else {
            cost / norm_sq(&self.state)
        }
    }
}

/// Solve both membership problems without a cost cap at every sample.
///
/// `budget` is `None` when only the contractive problem matters.
pub fn minimal_costs(
    system: &dyn DiscreteSystem,
    samples: &[Vec<f64>],
    beta: f64,
    n: usize,
    budget: Option<f64>,
    input_set: &InputSet,
    solver: &Solver,
) -> Result<Vec<SampleCosts>> {
    check_horizon(n)?;
    samples
        .par_iter()
        .map(|x| {
            let cost_of = |p: HorizonProblem<'_>| -> Result<Option<f64>> {
                let r = solver.solve(&p, None)?;
                Ok(r.status.is_feasible().then_some(r.cost))
            };
            let contractive_cost = cost_of(contractive_problem(system, x, beta, n, input_set))?;
            let (itec_cost, itec_feasible) = match budget {
                Some(c) => {
                    let cost = cost_of(itec_problem(system, x, n, c, input_set))?;
                    (cost, cost.is_some())
                }
                None => (None, true),
            };
            Ok(SampleCosts {
                state: x.clone(),
                contractive_cost,
                itec_cost,
                itec_feasible,
            })
        })
        .collect()
}

/// Smallest `sigma` on a bisection grid (1% relative) that admits every sample.
pub fn estimate_sigma(
    system: &dyn DiscreteSystem,
    samples: &[Vec<f64>],
    beta: f64,
    n: usize,
    budget: Option<f64>,
    input_set: &InputSet,
    solver: &Solver,
    cap: f64,
) -> Result<f64> {
    let costs = checked_costs(system, samples, beta, n, budget, input_set, solver)?;
    sigma_from_costs(&costs, cap)
}

fn checked_costs(
    system: &dyn DiscreteSystem,
    samples: &[Vec<f64>],
    beta: f64,
    n: usize,
    budget: Option<f64>,
    input_set: &InputSet,
    solver: &Solver,
) -> Result<Vec<SampleCosts>> {
    if samples.is_empty() {
        return Err(Error::config("at least one sample state is required"));
    }
    if samples.iter().any(|x| norm_sq(x) == 0.0) {
        return Err(Error::config("sample states must be nonzero"));
    }
    minimal_costs(system, samples, beta, n, budget, input_set, solver)
}

fn sigma_from_costs(costs: &[SampleCosts], cap: f64) -> Result<f64> {
    if let Some(bad) = costs.iter().find(|c| !c.feasible()) {
        return Err(Error::CertificationFailed(format!(
            "no admissible control sequence found at state {:?}",
            bad.state
        )));
    }
    bisect_sigma(costs.iter().map(SampleCosts::ratio).collect(), cap)
}

fn bisect_sigma(ratios: Vec<f64>, cap: f64) -> Result<f64> {
    let admits = |sigma: f64| ratios.iter().all(|&r| r <= sigma);
    let mut hi = 1.0;
    while !admits(hi) {
        hi *= 2.0;
        if hi > cap {
            if admits(cap) {
                hi = cap;
                break;
            }
            return Err(Error::CertificationFailed(format!("no sigma up to {cap} admits every sample")));
        }
    }
    let mut lo = if hi > 1.0 { hi / 2.0 } else { 0.0 };
    for _ in 0..200 {
        if hi - lo <= 0.01 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if admits(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `x0` (if nonzero), then `directions` seeded unit directions at radii
/// `r/radii, 2r/radii, ..., r`.
pub fn sample_states(x0: &[f64], radius: f64, directions: usize, radii: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(directions * radii + 1);
    if norm_sq(x0) > 0.0 {
        out.push(x0.to_vec());
    }
    let n = x0.len();
    for _ in 0..directions {
        let dir = loop {
            let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let len = norm_sq(&v).sqrt();
            if len > 1e-12 {
                break v.into_iter().map(|c| c / len).collect::<Vec<_>>();
            }
        };
        for j in 1..=radii {
            let r = radius * j as f64 / radii as f64;
            out.push(dir.iter().map(|c| c * r).collect());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyOptions {
    /// Defaults to `|x0|`.
    pub ball_radius: Option<f64>,
    pub directions: usize,
    pub radii: usize,
    pub seed: u64,
    pub sigma_cap: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            ball_radius: None,
            directions: 32,
            radii: 3,
            seed: 0,
            sigma_cap: 1e6,
        }
    }
}

/// Sample-based evidence that the plant is beta-stabilizable near `x0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub beta: f64,
    /// Estimated cost constant; absent if some sample had no admissible sequence.
    pub sigma: Option<f64>,
    /// Smallest `sigma` admitting every membership problem that was solvable.
    /// Equals `sigma` when the certificate is complete.
    pub sigma_partial: Option<f64>,
    /// Samples where at least one membership problem had no admissible sequence.
    pub infeasible_samples: usize,
    #[serde(rename = "N")]
    pub interval: usize,
    /// Energy budget of the ITEC membership problem; absent when it was not tested.
    #[serde(rename = "C")]
    pub budget: Option<f64>,
    pub itec: bool,
    pub ball_radius: f64,
    pub sample_states: Vec<Vec<f64>>,
    pub all_feasible: bool,
    pub samples: Vec<SampleCosts>,
}

/// Sample the ball, solve both membership problems everywhere and bisect for sigma.
pub fn certify(
    system: &dyn DiscreteSystem,
    x0: &[f64],
    beta: f64,
    interval: usize,
    budget: Option<f64>,
    input_set: &InputSet,
    solver: &Solver,
    opts: &CertifyOptions,
) -> Result<Certificate> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::config(format!("beta must lie in [0, 1), got {beta}")));
    }
    Error::check_dim("initial state", system.state_dim(), x0.len())?;
    let radius = opts.ball_radius.unwrap_or_else(|| norm_sq(x0).sqrt());
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::config("ball radius must be positive"));
    }
    if opts.directions == 0 || opts.radii == 0 {
        return Err(Error::config("need at least one direction and one radius"));
    }
    let samples = sample_states(x0, radius, opts.directions, opts.radii, opts.seed);
    let costs = checked_costs(system, &samples, beta, interval, budget, input_set, solver)?;
    let all_feasible = costs.iter().all(SampleCosts::feasible);
    let sigma = match sigma_from_costs(&costs, opts.sigma_cap) {
        Ok(s) => Some(s),
        Err(Error::CertificationFailed(_)) => None,
        Err(e) => return Err(e),
    };
    let sigma_partial = match bisect_sigma(costs.iter().map(SampleCosts::solvable_ratio).collect(), opts.sigma_cap) {
        Ok(s) => Some(s),
        Err(Error::CertificationFailed(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(Certificate {
        beta,
        sigma,
        sigma_partial,
        infeasible_samples: costs.iter().filter(|c| !c.feasible()).count(),
        interval,
        budget,
        itec: budget.is_some(),
        ball_radius: radius,
        sample_states: samples,
        all_feasible: all_feasible && sigma.is_some(),
        samples: costs,
    })
}
