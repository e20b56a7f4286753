//! Comparison controllers: fixed-horizon RHC, RHC with the energy budget
//! spread proportionally over a fixed horizon, and static state feedback.

use crate::controller::{shift_plan, Decision, ItecSpec, Policy};
use crate::error::{Error, Result};
use crate::plant::{norm_sq, DiscreteSystem};
use crate::trajopt::{EnergyWindow, HorizonProblem, InputSet, SolveResult, Solver};

fn solve_checked(
    solver: &Solver,
    problem: &HorizonProblem<'_>,
    warm: Option<&[Vec<f64>]>,
    step: usize,
) -> Result<SolveResult> {
    let result = solver.solve(problem, warm)?;
    if !result.status.is_feasible() {
        return Err(Error::Controller {
            step,
            state: problem.x_init.clone(),
            status: result.status,
        });
    }
    Ok(result)
}

/// One cold-started step of fixed-horizon RHC without terminal or energy constraints.
pub fn traditional_rhc_step(
    system: &dyn DiscreteSystem,
    x_k: &[f64],
    horizon: usize,
    solver: &Solver,
) -> Result<Vec<f64>> {
    if horizon == 0 {
        return Err(Error::config("RHC horizon must be at least 1"));
    }
    let problem = HorizonProblem::new(system, x_k.to_vec(), horizon);
    let result = solve_checked(solver, &problem, None, 0)?;
    Ok(result.controls[0].clone())
}

/// Fixed-horizon RHC with shifted warm starts.
pub struct TraditionalRhc {
    pub horizon: usize,
    pub solver: Solver,
    pub input_set: InputSet,
    k: usize,
    warm: Option<Vec<Vec<f64>>>,
}

impl TraditionalRhc {
    pub fn new(horizon: usize, solver: Solver, input_set: InputSet) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::config("RHC horizon must be at least 1"));
        }
        Ok(Self {
            horizon,
            solver,
            input_set,
            k: 0,
            warm: None,
        })
    }
}

impl Policy for TraditionalRhc {
    fn name(&self) -> &'static str {
        "rhc"
    }

    fn decide(&mut self, system: &dyn DiscreteSystem, x: &[f64]) -> Result<Decision> {
        let problem =
            HorizonProblem::new(system, x.to_vec(), self.horizon).with_input_set(self.input_set.clone());
        let result = solve_checked(&self.solver, &problem, self.warm.as_deref(), self.k)?;
        self.warm = Some(shift_plan(&result.controls, self.horizon, system.input_dim()));
        self.k += 1;
        Ok(Decision {
            control: result.controls[0].clone(),
            horizon: self.horizon,
            gamma: 0.0,
            exponent: 0,
            terminal_bound: None,
            status: Some(result.status),
        })
    }
}

/// Energy constraint seen by a length-`N` horizon starting at `k`.
///
/// If `k` is inside a window the remaining steps of that window share `C - gamma`.
/// Otherwise, when the horizon tail reaches `j` steps into the next window,
/// those steps get `j * C / N`.
pub fn proportional_window(itec: &ItecSpec, k: usize, gamma: f64) -> Option<EnergyWindow> {
    let n = itec.interval;
    if let Some(p) = itec.window_index(k) {
        let (_, end) = itec.window(p);
        return Some(EnergyWindow {
            start: 0,
            end: (end - k).min(n - 1),
            budget: (itec.budget - gamma).max(0.0),
        });
    }
    let (start, _) = itec.window(k / (2 * n) + 1);
    let overlap = (k + n).saturating_sub(start);
    (overlap > 0).then(|| EnergyWindow {
        start: start - k,
        end: n - 1,
        budget: overlap as f64 * itec.budget / n as f64,
    })
}

/// Receding horizon of length `N` with proportionally allocated budgets.
pub struct ProportionalItecRhc {
    pub itec: ItecSpec,
    pub solver: Solver,
    pub input_set: InputSet,
    k: usize,
    gamma: f64,
    warm: Option<Vec<Vec<f64>>>,
}

impl ProportionalItecRhc {
    pub fn new(itec: ItecSpec, solver: Solver, input_set: InputSet) -> Self {
        Self {
            itec,
            solver,
            input_set,
            k: 0,
            gamma: 0.0,
            warm: None,
        }
    }
}

impl Policy for ProportionalItecRhc {
    fn name(&self) -> &'static str {
        "proportional"
    }

    fn decide(&mut self, system: &dyn DiscreteSystem, x: &[f64]) -> Result<Decision> {
        let n = self.itec.interval;
        let mut problem =
            HorizonProblem::new(system, x.to_vec(), n).with_input_set(self.input_set.clone());
        if let Some(w) = proportional_window(&self.itec, self.k, self.gamma) {
            problem = problem.with_energy_window(w);
        }
        let result = solve_checked(&self.solver, &problem, self.warm.as_deref(), self.k)?;
        let u = result.controls[0].clone();
        let decision = Decision {
            control: u.clone(),
            horizon: n,
            gamma: self.gamma,
            exponent: 0,
            terminal_bound: None,
            status: Some(result.status),
        };
        match self.itec.window_index(self.k) {
            Some(p) if self.itec.window(p).1 == self.k => self.gamma = 0.0,
            Some(_) => self.gamma += norm_sq(&u),
            None => {}
        }
        self.warm = Some(shift_plan(&result.controls, n, system.input_dim()));
        self.k += 1;
        Ok(decision)
    }
}

/// `u = -K x` with `K` stored row-major, `input_dim x state_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticFeedback {
    pub gain: Vec<Vec<f64>>,
}

impl StaticFeedback {
    pub fn new(gain: Vec<Vec<f64>>) -> Result<Self> {
        let cols = gain.first().map_or(0, Vec::len);
        if gain.is_empty() || cols == 0 || gain.iter().any(|r| r.len() != cols) {
            return Err(Error::config("feedback gain must be a nonempty rectangular matrix"));
        }
        Ok(Self { gain })
    }

    /// The oscillator's `u = -3 x2`.
    pub fn oscillator() -> Self {
        Self {
            gain: vec![vec![0.0, 3.0]],
        }
    }

    pub fn control(&self, x: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim("feedback state", self.gain[0].len(), x.len())?;
        Ok(self
            .gain
            .iter()
            .map(|row| -row.iter().zip(x).map(|(k, xi)| k * xi).sum::<f64>())
            .collect())
    }
}

/// `u = -3 x2` for a two-dimensional state.
pub fn static_feedback(x_k: &[f64]) -> Result<Vec<f64>> {
    StaticFeedback::oscillator().control(x_k)
}

impl Policy for StaticFeedback {
    fn name(&self) -> &'static str {
        "feedback"
    }

    fn decide(&mut self, system: &dyn DiscreteSystem, x: &[f64]) -> Result<Decision> {
        Error::check_dim("feedback input", system.input_dim(), self.gain.len())?;
        Ok(Decision {
            control: self.control(x)?,
            horizon: 0,
            gamma: 0.0,
            exponent: 0,
            terminal_bound: None,
            status: None,
        })
    }
}
