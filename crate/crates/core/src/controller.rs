//! The interval-wise receding horizon controller.
//!
//! The horizon starts at `2N` and shrinks by one each step. When it would
//! reach `N` it is pushed back out to `2N`, so every solve sees the whole of
//! the active (or next) energy window `[(2p-1)N, 2pN-1]`. Each solve carries
//! a terminal constraint `|x(k+h)|^2 <= beta^(i+1) |x(0)|^2` at the end of the
//! horizon; the exponent `i` grows by one at the push that lines the window
//! up with the start of the horizon. In non-ITEC mode there is no window and
//! the exponent grows at every push.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{norm_sq, DiscreteSystem};
use crate::record::{RunRecord, RunRow, Termination};
use crate::trajopt::{EnergyWindow, HorizonProblem, InputSet, SolveResult, SolveStatus, Solver};

/// Budget `C` on `sum |u(k)|^2` over every window `[(2p-1)N, 2pN-1]`, `p >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItecSpec {
    pub budget: f64,
    pub interval: usize,
}

impl ItecSpec {
    pub fn new(budget: f64, interval: usize) -> Result<Self> {
        if interval == 0 {
            return Err(Error::config("interval length N must be at least 1"));
        }
        // An infinite budget keeps the schedule but never constrains the solve.
        if !(budget >= 0.0) {
            return Err(Error::config("energy budget C must be nonnegative"));
        }
        Ok(Self { budget, interval })
    }

    /// Inclusive bounds of the `p`-th constrained window (`p >= 1`).
    pub fn window(&self, p: usize) -> (usize, usize) {
        let n = self.interval;
        ((2 * p - 1) * n, 2 * p * n - 1)
    }

    /// Index `p` of the window containing step `k`, if any.
    pub fn window_index(&self, k: usize) -> Option<usize> {
        let block = k / self.interval;
        (block % 2 == 1).then_some(block / 2 + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Itec,
    NonItec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub k: usize,
    pub horizon: usize,
    /// Energy spent so far inside the active window.
    pub gamma: f64,
    /// Contraction exponent counter `i`.
    pub exponent: u32,
    /// Window-position flag, kept for traces only.
    pub flag: u8,
    /// First step `p` of the active or next window.
    pub window_start: usize,
    pub x0_norm_sq: f64,
    pub beta: f64,
    pub itec: ItecSpec,
    pub mode: Mode,
}

impl ControllerState {
    pub fn init(beta: f64, itec: ItecSpec, x0: &[f64], mode: Mode) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::config(format!("beta must lie in [0, 1), got {beta}")));
        }
        let itec = ItecSpec::new(itec.budget, itec.interval)?;
        Ok(Self {
            k: 0,
            horizon: 2 * itec.interval,
            gamma: 0.0,
            exponent: 0,
            flag: 0,
            window_start: itec.interval,
            x0_norm_sq: norm_sq(x0),
            beta,
            itec,
            mode,
        })
    }

    pub fn terminal_bound(&self) -> f64 {
        self.beta.powi(self.exponent as i32 + 1) * self.x0_norm_sq
    }

    /// Absolute time at which the terminal constraint sits.
    pub fn terminal_time(&self) -> usize {
        self.k + self.horizon
    }

    /// The active window as offsets from `k`, in ITEC mode.
    pub fn energy_window(&self) -> Option<EnergyWindow> {
        if self.mode == Mode::NonItec || self.itec.budget.is_infinite() {
            return None;
        }
        let n = self.itec.interval;
        let p = self.window_start;
        let end = p + n - 1;
        if self.k > end {
            return None;
        }
        Some(EnergyWindow {
            start: p.max(self.k) - self.k,
            end: end - self.k,
            budget: (self.itec.budget - self.gamma).max(0.0),
        })
    }

    pub fn build_problem<'a>(
        &self,
        x_k: &[f64],
        system: &'a dyn DiscreteSystem,
        input_set: &InputSet,
    ) -> HorizonProblem<'a> {
        let mut problem = HorizonProblem::new(system, x_k.to_vec(), self.horizon)
            .with_input_set(input_set.clone())
            .with_terminal_bound(self.terminal_bound());
        if let Some(w) = self.energy_window() {
            problem = problem.with_energy_window(w);
        }
        problem
    }

    /// Bookkeeping after applying `u` at step `k`. Returns whether the horizon was pushed.
    pub fn advance(&mut self, u: &[f64]) -> bool {
        let n = self.itec.interval;
        let p = self.window_start;
        if self.mode == Mode::Itec && (p..p + n).contains(&self.k) {
            self.gamma += norm_sq(u);
        }
        self.horizon -= 1;
        let pushed = self.horizon == n;
        if pushed {
            self.horizon = 2 * n;
            self.gamma = 0.0;
            match self.mode {
                Mode::Itec => {
                    if self.k + 1 == p {
                        self.exponent += 1;
                        self.flag = 1;
                    } else if self.k == p + n - 1 {
                        self.window_start = p + 2 * n;
                        self.flag = 0;
                    }
                }
                Mode::NonItec => {
                    self.exponent += 1;
                    if self.k == p + n - 1 {
                        self.window_start = p + 2 * n;
                    }
                }
            }
        }
        self.k += 1;
        pushed
    }
}

/// What a policy decided at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub control: Vec<f64>,
    pub horizon: usize,
    pub gamma: f64,
    pub exponent: u32,
    pub terminal_bound: Option<f64>,
    pub status: Option<SolveStatus>,
}

/// A state-feedback law driven one step at a time by [`run`].
pub trait Policy {
    fn name(&self) -> &'static str;

    /// Decide the control for the current step from the measured state.
    fn decide(&mut self, system: &dyn DiscreteSystem, x: &[f64]) -> Result<Decision>;
}

/// Shift a plan one step forward and pad it with zeros to `len`.
pub(crate) fn shift_plan(plan: &[Vec<f64>], len: usize, m: usize) -> Vec<Vec<f64>> {
    let mut next: Vec<Vec<f64>> = plan.iter().skip(1).take(len).cloned().collect();
    next.resize(len, vec![0.0; m]);
    next
}

pub struct IrhcController {
    pub state: ControllerState,
    pub solver: Solver,
    pub input_set: InputSet,
    warm: Option<Vec<Vec<f64>>>,
    last_solve: Option<SolveResult>,
}

impl IrhcController {
    pub fn new(state: ControllerState, solver: Solver, input_set: InputSet) -> Self {
        Self {
            state,
            solver,
            input_set,
            warm: None,
            last_solve: None,
        }
    }

    /// The solver output of the most recent step.
    pub fn last_solve(&self) -> Option<&SolveResult> {
        self.last_solve.as_ref()
    }

    /// Solve at the current state, apply the first control and advance the schedule.
    pub fn step(&mut self, system: &dyn DiscreteSystem, x_k: &[f64]) -> Result<(Vec<f64>, Decision)> {
        let problem = self.state.build_problem(x_k, system, &self.input_set);
        problem.validate()?;
        let warm = self.warm.take().filter(|w| w.len() == problem.horizon);
        let result = self.solver.solve(&problem, warm.as_deref())?;
        if !result.status.is_feasible() {
            return Err(Error::Controller {
                step: self.state.k,
                state: x_k.to_vec(),
                status: result.status,
            });
        }
        let u = result.controls[0].clone();
        let decision = Decision {
            control: u.clone(),
            horizon: self.state.horizon,
            gamma: self.state.gamma,
            exponent: self.state.exponent,
            terminal_bound: Some(problem.terminal_bound.unwrap_or_default()),
            status: Some(result.status),
        };
        self.state.advance(&u);
        self.warm = Some(shift_plan(&result.controls, self.state.horizon, system.input_dim()));
        self.last_solve = Some(result);
        Ok((u, decision))
    }
}

impl Policy for IrhcController {
    fn name(&self) -> &'static str {
        "irhc"
    }

    fn decide(&mut self, system: &dyn DiscreteSystem, x: &[f64]) -> Result<Decision> {
        self.step(system, x).map(|(_, d)| d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub max_steps: usize,
    pub convergence_eps: f64,
    /// Stop as diverged once `|x(k)| > divergence_factor * |x(0)|`.
    pub divergence_factor: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            max_steps: 400,
            convergence_eps: 1e-3,
            divergence_factor: 10.0,
        }
    }
}

/// Closed loop: decide, apply, step the plant, until convergence, divergence,
/// an infeasible solve, or `max_steps`.
pub fn run(
    policy: &mut dyn Policy,
    system: &dyn DiscreteSystem,
    x0: &[f64],
    opts: &RunOptions,
) -> Result<RunRecord> {
    if opts.max_steps == 0 {
        return Err(Error::config("max_steps must be at least 1"));
    }
    Error::check_dim("initial state", system.state_dim(), x0.len())?;
    let x0_norm = norm_sq(x0).sqrt();
    let mut x = x0.to_vec();
    let mut rows = Vec::new();
    let mut termination = Termination::MaxSteps;
    for k in 0..opts.max_steps {
        let d = match policy.decide(system, &x) {
            Ok(d) => d,
            Err(Error::Controller { step, status, .. }) => {
                termination = Termination::Aborted { step, status };
                break;
            }
            Err(e) => return Err(e),
        };
        let next = match system.step(&x, &d.control) {
            Ok(next) => next,
            Err(Error::NonFinite { .. }) => {
                termination = Termination::Diverged;
                break;
            }
            Err(e) => return Err(e),
        };
        rows.push(RunRow {
            k,
            state: x,
            control: d.control.clone(),
            horizon: d.horizon,
            gamma: d.gamma,
            exponent: d.exponent,
            terminal_bound: d.terminal_bound,
            status: d.status,
            stage_cost: norm_sq(&next) + norm_sq(&d.control),
        });
        x = next;
        let norm = norm_sq(&x).sqrt();
        if !norm.is_finite() || (x0_norm > 0.0 && norm > opts.divergence_factor * x0_norm) {
            termination = Termination::Diverged;
            break;
        }
        if norm < opts.convergence_eps {
            termination = Termination::Converged;
            break;
        }
    }
    Ok(RunRecord {
        rows,
        final_state: x,
        termination,
    })
}
