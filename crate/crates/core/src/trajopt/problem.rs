use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{norm_sq, DiscreteSystem};

/// Admissible set for each control vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSet {
    #[default]
    Unbounded,
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

impl InputSet {
    pub fn validate(&self, input_dim: usize) -> Result<()> {
        match self {
            InputSet::Unbounded => Ok(()),
            InputSet::Box { lower, upper } => {
                Error::check_dim("box lower bound", input_dim, lower.len())?;
                Error::check_dim("box upper bound", input_dim, upper.len())?;
                for (lo, hi) in lower.iter().zip(upper) {
                    if !(lo <= hi) {
                        return Err(Error::config(format!("box bounds out of order: {lo} > {hi}")));
                    }
                    if *lo > 0.0 || *hi < 0.0 {
                        return Err(Error::config("the input box must contain the origin"));
                    }
                }
                Ok(())
            }
        }
    }

    /// Clamp a flattened control sequence into the set in place.
    pub fn project(&self, z: &mut [f64]) {
        if let InputSet::Box { lower, upper } = self {
            let m = lower.len();
            for (idx, v) in z.iter_mut().enumerate() {
                *v = v.clamp(lower[idx % m], upper[idx % m]);
            }
        }
    }

    pub(crate) fn bounds(&self, idx: usize) -> (f64, f64) {
        match self {
            InputSet::Unbounded => (f64::NEG_INFINITY, f64::INFINITY),
            InputSet::Box { lower, upper } => {
                let m = lower.len();
                (lower[idx % m], upper[idx % m])
            }
        }
    }

    /// Largest distance from the set over a flattened sequence.
    pub fn violation(&self, z: &[f64]) -> f64 {
        (0..z.len())
            .map(|i| {
                let (lo, hi) = self.bounds(i);
                (lo - z[i]).max(z[i] - hi).max(0.0)
            })
            .fold(0.0, f64::max)
    }
}

/// `sum_{j=start..=end} |u(k+j)|^2 <= budget`, offsets relative to the current step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyWindow {
    pub start: usize,
    pub end: usize,
    pub budget: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintId {
    EnergyWindow,
    Terminal,
}

/// Cost and per-constraint residuals `max(0, g)` of a candidate sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub cost: f64,
    pub violations: Vec<(ConstraintId, f64)>,
}

impl Evaluation {
    pub fn max_violation(&self) -> f64 {
        self.violations.iter().map(|(_, r)| *r).fold(0.0, f64::max)
    }
}

/// One finite-horizon problem: minimise `sum_{j=1..h} |x(j)|^2 + |u(j-1)|^2`
/// from `x_init` subject to the optional energy window and terminal bound.
#[derive(Clone)]
pub struct HorizonProblem<'a> {
    pub x_init: Vec<f64>,
    pub horizon: usize,
    pub system: &'a dyn DiscreteSystem,
    pub input_set: InputSet,
    pub energy_window: Option<EnergyWindow>,
    pub terminal_bound: Option<f64>,
}

impl std::fmt::Debug for HorizonProblem<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HorizonProblem")
            .field("x_init", &self.x_init)
            .field("horizon", &self.horizon)
            .field("input_set", &self.input_set)
            .field("energy_window", &self.energy_window)
            .field("terminal_bound", &self.terminal_bound)
            .finish()
    }
}

/// Values and gradients of the cost and both constraints at one point.
#[derive(Debug, Clone)]
pub(crate) struct Sensitivity {
    pub cost: f64,
    pub energy: Option<f64>,
    pub terminal: Option<f64>,
    /// Gradient of `cost + w_e * g_energy + w_t * g_terminal`.
    pub grad: Vec<f64>,
}

impl<'a> HorizonProblem<'a> {
    pub fn new(system: &'a dyn DiscreteSystem, x_init: Vec<f64>, horizon: usize) -> Self {
        Self {
            x_init,
            horizon,
            system,
            input_set: InputSet::Unbounded,
            energy_window: None,
            terminal_bound: None,
        }
    }

    pub fn with_input_set(mut self, input_set: InputSet) -> Self {
        self.input_set = input_set;
        self
    }

    pub fn with_energy_window(mut self, window: EnergyWindow) -> Self {
        self.energy_window = Some(window);
        self
    }

    pub fn with_terminal_bound(mut self, bound: f64) -> Self {
        self.terminal_bound = Some(bound);
        self
    }

    pub fn input_dim(&self) -> usize {
        self.system.input_dim()
    }

    /// Number of scalar decision variables.
    pub fn num_vars(&self) -> usize {
        self.horizon * self.input_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("horizon must be positive"));
        }
        Error::check_dim("initial state", self.system.state_dim(), self.x_init.len())?;
        self.input_set.validate(self.input_dim())?;
        if let Some(w) = &self.energy_window {
            if w.start > w.end || w.end >= self.horizon {
                return Err(Error::config(format!(
                    "energy window [{}, {}] does not fit a horizon of {}",
                    w.start, w.end, self.horizon
                )));
            }
            if !(w.budget >= 0.0) {
                return Err(Error::config("energy budget must be nonnegative"));
            }
        }
        if let Some(b) = self.terminal_bound {
            if !(b >= 0.0) {
                return Err(Error::config("terminal bound must be nonnegative"));
            }
        }
        Ok(())
    }

    pub fn flatten(&self, controls: &[Vec<f64>]) -> Result<Vec<f64>> {
        Error::check_dim("control sequence length", self.horizon, controls.len())?;
        let m = self.input_dim();
        let mut z = Vec::with_capacity(self.num_vars());
        for u in controls {
            Error::check_dim("control", m, u.len())?;
            z.extend_from_slice(u);
        }
        Ok(z)
    }

    pub fn unflatten(&self, z: &[f64]) -> Vec<Vec<f64>> {
        z.chunks(self.input_dim()).map(<[f64]>::to_vec).collect()
    }

    pub(crate) fn rollout(&self, z: &[f64]) -> Result<Vec<Vec<f64>>> {
        let m = self.input_dim();
        let mut xs = Vec::with_capacity(self.horizon + 1);
        xs.push(self.x_init.clone());
        for (t, u) in z.chunks(m).enumerate() {
            let next = self.system.step(&xs[t], u).map_err(|e| match e {
                Error::NonFinite { .. } => Error::NonFinite { step: t },
                other => other,
            })?;
            xs.push(next);
        }
        Ok(xs)
    }

    fn energy_of(&self, z: &[f64], w: &EnergyWindow) -> f64 {
        let m = self.input_dim();
        norm_sq(&z[w.start * m..(w.end + 1) * m])
    }

    /// Raw constraint values `g <= 0` at a flattened point, without the cost.
    pub fn constraint_values(&self, z: &[f64]) -> Result<(Option<f64>, Option<f64>)> {
        let energy = self.energy_window.map(|w| self.energy_of(z, &w) - w.budget);
        let terminal = match self.terminal_bound {
            Some(b) => Some(norm_sq(self.rollout(z)?.last().unwrap()) - b),
            None => None,
        };
        Ok((energy, terminal))
    }

    pub(crate) fn cost_and_constraints(&self, z: &[f64]) -> Result<(f64, Option<f64>, Option<f64>)> {
        let xs = self.rollout(z)?;
        let cost = xs.iter().skip(1).map(|x| norm_sq(x)).sum::<f64>() + norm_sq(z);
        let energy = self.energy_window.map(|w| self.energy_of(z, &w) - w.budget);
        let terminal = self.terminal_bound.map(|b| norm_sq(xs.last().unwrap()) - b);
        Ok((cost, energy, terminal))
    }

    /// Adjoint sweep for `cost + w_e g_energy + w_t g_terminal`.
    pub(crate) fn sensitivity(&self, z: &[f64], w_e: f64, w_t: f64) -> Result<Sensitivity> {
        self.sensitivity_with(z, &|_, _| (w_e, w_t))
    }

    /// Like [`Self::sensitivity`], with the weights chosen from the constraint
    /// values after the forward pass.
    pub(crate) fn sensitivity_with(
        &self,
        z: &[f64],
        weights: &dyn Fn(Option<f64>, Option<f64>) -> (f64, f64),
    ) -> Result<Sensitivity> {
        let m = self.input_dim();
        let h = self.horizon;
        let mut xs = Vec::with_capacity(h + 1);
        let mut lins = Vec::with_capacity(h);
        xs.push(self.x_init.clone());
        for (t, u) in z.chunks(m).enumerate() {
            let lin = self.system.linearize(&xs[t], u).map_err(|e| match e {
                Error::NonFinite { .. } => Error::NonFinite { step: t },
                other => other,
            })?;
            xs.push(lin.next.clone());
            lins.push(lin);
        }
        let cost = xs.iter().skip(1).map(|x| norm_sq(x)).sum::<f64>() + norm_sq(z);
        let energy = self.energy_window.map(|w| self.energy_of(z, &w) - w.budget);
        let terminal = self.terminal_bound.map(|b| norm_sq(&xs[h]) - b);
        let (w_e, w_t) = weights(energy, terminal);

        let n = self.x_init.len();
        let mut grad = vec![0.0; z.len()];
        let mut lam = vec![0.0; n];
        if terminal.is_some() {
            for (l, x) in lam.iter_mut().zip(&xs[h]) {
                *l += 2.0 * w_t * x;
            }
        }
        for t in (0..h).rev() {
            for (l, x) in lam.iter_mut().zip(&xs[t + 1]) {
                *l += 2.0 * x;
            }
            let lin = &lins[t];
            let in_window = self
                .energy_window
                .is_some_and(|w| (w.start..=w.end).contains(&t));
            let scale = if in_window { 2.0 + 2.0 * w_e } else { 2.0 };
            for j in 0..m {
                let btl: f64 = (0..n).map(|i| lin.b[(i, j)] * lam[i]).sum();
                grad[t * m + j] = scale * z[t * m + j] + btl;
            }
            lam = (0..n).map(|j| (0..n).map(|i| lin.a[(i, j)] * lam[i]).sum()).collect();
        }
        Ok(Sensitivity {
            cost,
            energy,
            terminal,
            grad,
        })
    }

    /// Single-shooting cost and residuals `max(0, g)` per inequality.
    pub fn evaluate(&self, controls: &[Vec<f64>]) -> Result<Evaluation> {
        let z = self.flatten(controls)?;
        let (cost, energy, terminal) = self.cost_and_constraints(&z)?;
        let mut violations = Vec::new();
        if let Some(g) = energy {
            violations.push((ConstraintId::EnergyWindow, g.max(0.0)));
        }
        if let Some(g) = terminal {
            violations.push((ConstraintId::Terminal, g.max(0.0)));
        }
        Ok(Evaluation { cost, violations })
    }

    /// Gradient of the cost with respect to every control entry, by a backward sweep.
    pub fn gradient(&self, controls: &[Vec<f64>]) -> Result<Vec<f64>> {
        let z = self.flatten(controls)?;
        Ok(self.sensitivity(&z, 0.0, 0.0)?.grad)
    }

    /// Gradients of the raw constraint functions (energy, terminal), when present.
    pub fn constraint_gradients(&self, controls: &[Vec<f64>]) -> Result<(Option<Vec<f64>>, Option<Vec<f64>>)> {
        let z = self.flatten(controls)?;
        let base = self.sensitivity(&z, 0.0, 0.0)?.grad;
        let diff = |w_e: f64, w_t: f64| -> Result<Vec<f64>> {
            let g = self.sensitivity(&z, w_e, w_t)?.grad;
            Ok(g.iter().zip(&base).map(|(a, b)| a - b).collect())
        };
        let energy = match self.energy_window {
            Some(_) => Some(diff(1.0, 0.0)?),
            None => None,
        };
        let terminal = match self.terminal_bound {
            Some(_) => Some(diff(0.0, 1.0)?),
            None => None,
        };
        Ok((energy, terminal))
    }
}
