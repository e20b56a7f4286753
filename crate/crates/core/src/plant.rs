//! Plant models, fixed-step discretization and open-loop simulation.
//!
//! Continuous models implement [`ContinuousModel`]; the controller and the
//! optimizer only ever see a [`DiscreteSystem`], which is either a
//! continuous model wrapped in a [`Discretized`] zero-order-hold integrator
//! or a natively discrete map such as [`ScalarLinear`].

use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Squared Euclidean norm.
pub fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub trait ContinuousModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;

    /// Right-hand side of `x' = f(x, u)`. Dimensions are checked by the caller.
    fn derivative(&self, x: &[f64], u: &[f64]) -> Vec<f64>;

    /// Partial derivatives `(df/dx, df/du)`.
    fn jacobian(&self, x: &[f64], u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>);
}

/// Two-state nonlinear oscillator with an anti-damping term:
///
/// ```text
/// x1' = x2
/// x2' = -x1 (pi/2 + atan(5 x1)) - 5 x1^2 / (2 (1 + 25 x1^2)) + 4 x2 + 3 u
/// ```
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Oscillator;

impl ContinuousModel for Oscillator {
    fn state_dim(&self) -> usize {
        2
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn derivative(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let (x1, x2) = (x[0], x[1]);
        let s = 1.0 + 25.0 * x1 * x1;
        vec![
            x2,
            -x1 * (FRAC_PI_2 + (5.0 * x1).atan()) - 5.0 * x1 * x1 / (2.0 * s) + 4.0 * x2 + 3.0 * u[0],
        ]
    }

    fn jacobian(&self, x: &[f64], _u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let x1 = x[0];
        let s = 1.0 + 25.0 * x1 * x1;
        let d21 = -(FRAC_PI_2 + (5.0 * x1).atan()) - 5.0 * x1 / s - 5.0 * x1 / (s * s);
        let jx = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, d21, 4.0]);
        let ju = DMatrix::from_row_slice(2, 1, &[0.0, 3.0]);
        (jx, ju)
    }
}

/// `x' = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearContinuous {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LinearContinuous {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::config("state matrix must be square"));
        }
        Error::check_dim("input matrix rows", a.nrows(), b.nrows())?;
        Ok(Self { a, b })
    }

    /// Scalar decay `x' = -x` with a unit input channel.
    pub fn decay() -> Self {
        Self {
            a: DMatrix::from_element(1, 1, -1.0),
            b: DMatrix::from_element(1, 1, 1.0),
        }
    }
}

impl ContinuousModel for LinearContinuous {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn derivative(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let n = self.state_dim();
        (0..n)
            .map(|i| {
                let ax: f64 = (0..n).map(|j| self.a[(i, j)] * x[j]).sum();
                let bu: f64 = (0..u.len()).map(|j| self.b[(i, j)] * u[j]).sum();
                ax + bu
            })
            .collect()
    }

    fn jacobian(&self, _x: &[f64], _u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.a.clone(), self.b.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscretizerConfig {
    pub dt: f64,
    pub method: Method,
}

impl DiscretizerConfig {
    pub fn new(dt: f64, method: Method) -> Result<Self> {
        let cfg = Self { dt, method };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dt.is_finite() && self.dt > 0.0 {
            Ok(())
        } else {
            Err(Error::config(format!(
                "sampling period must be positive, got {}",
                self.dt
            )))
        }
    }
}

fn check_inputs(model: &dyn ContinuousModel, x: &[f64], u: &[f64]) -> Result<()> {
    Error::check_dim("state", model.state_dim(), x.len())?;
    Error::check_dim("input", model.input_dim(), u.len())
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { step: 0 })
    }
}

/// Evaluates the continuous-time dynamics with dimension checks.
pub fn eval_continuous(model: &dyn ContinuousModel, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    check_inputs(model, x, u)?;
    Ok(model.derivative(x, u))
}

fn axpy(x: &[f64], scale: f64, k: &[f64]) -> Vec<f64> {
    x.iter().zip(k).map(|(a, b)| a + scale * b).collect()
}

/// One zero-order-hold step of length `cfg.dt`.
pub fn discretize_step(
    model: &dyn ContinuousModel,
    x: &[f64],
    u: &[f64],
    cfg: &DiscretizerConfig,
) -> Result<Vec<f64>> {
    check_inputs(model, x, u)?;
    check_finite(x)?;
    check_finite(u)?;
    let dt = cfg.dt;
    let next = match cfg.method {
        Method::Euler => axpy(x, dt, &model.derivative(x, u)),
        Method::Rk4 => {
            let k1 = model.derivative(x, u);
            let k2 = model.derivative(&axpy(x, 0.5 * dt, &k1), u);
            let k3 = model.derivative(&axpy(x, 0.5 * dt, &k2), u);
            let k4 = model.derivative(&axpy(x, dt, &k3), u);
            (0..x.len())
                .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                .collect()
        }
    };
    check_finite(&next)?;
    Ok(next)
}

/// Next state together with the step map's Jacobians.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub next: Vec<f64>,
    /// d next / d x
    pub a: DMatrix<f64>,
    /// d next / d u
    pub b: DMatrix<f64>,
}

/// A discrete-time system `x(k+1) = phi(x(k), u(k))`.
pub trait DiscreteSystem: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>>;
    fn linearize(&self, x: &[f64], u: &[f64]) -> Result<Linearization>;
}

/// A continuous model sampled with a fixed-step integrator.
#[derive(Debug, Clone)]
pub struct Discretized<M> {
    pub model: M,
    pub cfg: DiscretizerConfig,
}

impl<M: ContinuousModel> Discretized<M> {
    pub fn new(model: M, cfg: DiscretizerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { model, cfg })
    }
}

impl<M: ContinuousModel> DiscreteSystem for Discretized<M> {
    fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        discretize_step(&self.model, x, u, &self.cfg)
    }

    fn linearize(&self, x: &[f64], u: &[f64]) -> Result<Linearization> {
        check_inputs(&self.model, x, u)?;
        check_finite(x)?;
        check_finite(u)?;
        let n = x.len();
        let dt = self.cfg.dt;
        let eye = DMatrix::<f64>::identity(n, n);
        let (next, a, b) = match self.cfg.method {
            Method::Euler => {
                let (jx, ju) = self.model.jacobian(x, u);
                let next = axpy(x, dt, &self.model.derivative(x, u));
                (next, &eye + jx * dt, ju * dt)
            }
            Method::Rk4 => {
                // Forward sensitivities through the four stages.
                let stage = |xs: &[f64], dx: &DMatrix<f64>, du: &DMatrix<f64>| {
                    let (jx, ju) = self.model.jacobian(xs, u);
                    let k = self.model.derivative(xs, u);
                    (k, &jx * dx, &jx * du + ju)
                };
                let zero_u = DMatrix::<f64>::zeros(n, u.len());
                let (k1, k1x, k1u) = stage(x, &eye, &zero_u);
                let x2 = axpy(x, 0.5 * dt, &k1);
                let (k2, k2x, k2u) = stage(&x2, &(&eye + &k1x * (0.5 * dt)), &(&k1u * (0.5 * dt)));
                let x3 = axpy(x, 0.5 * dt, &k2);
                let (k3, k3x, k3u) = stage(&x3, &(&eye + &k2x * (0.5 * dt)), &(&k2u * (0.5 * dt)));
                let x4 = axpy(x, dt, &k3);
                let (k4, k4x, k4u) = stage(&x4, &(&eye + &k3x * dt), &(&k3u * dt));
                let next = (0..n)
                    .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                    .collect();
                let a = &eye + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (dt / 6.0);
                let b = (k1u + k2u * 2.0 + k3u * 2.0 + k4u) * (dt / 6.0);
                (next, a, b)
            }
        };
        check_finite(&next)?;
        Ok(Linearization { next, a, b })
    }
}

/// `x(k+1) = a x(k) + b u(k)` on scalars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarLinear {
    pub a: f64,
    pub b: f64,
}

impl ScalarLinear {
    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }
}

impl DiscreteSystem for ScalarLinear {
    fn state_dim(&self) -> usize {
        1
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim("state", 1, x.len())?;
        Error::check_dim("input", 1, u.len())?;
        let next = [self.a * x[0] + self.b * u[0]];
        check_finite(&next)?;
        Ok(next.to_vec())
    }

    fn linearize(&self, x: &[f64], u: &[f64]) -> Result<Linearization> {
        Ok(Linearization {
            next: self.step(x, u)?,
            a: DMatrix::from_element(1, 1, self.a),
            b: DMatrix::from_element(1, 1, self.b),
        })
    }
}

/// Named plant presets selectable from configuration files.
#[derive(Debug, Clone)]
pub enum Plant {
    Oscillator(Discretized<Oscillator>),
    ScalarLinear(ScalarLinear),
}

impl Plant {
    pub fn oscillator(cfg: DiscretizerConfig) -> Result<Self> {
        Ok(Plant::Oscillator(Discretized::new(Oscillator, cfg)?))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Plant::Oscillator(_) => "oscillator",
            Plant::ScalarLinear(_) => "scalar_linear",
        }
    }

    fn inner(&self) -> &dyn DiscreteSystem {
        match self {
            Plant::Oscillator(p) => p,
            Plant::ScalarLinear(p) => p,
        }
    }
}

impl DiscreteSystem for Plant {
    fn state_dim(&self) -> usize {
        self.inner().state_dim()
    }

    fn input_dim(&self) -> usize {
        self.inner().input_dim()
    }

    fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.inner().step(x, u)
    }

    fn linearize(&self, x: &[f64], u: &[f64]) -> Result<Linearization> {
        self.inner().linearize(x, u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Rolls `controls` forward from `x0`.
pub fn simulate(system: &dyn DiscreteSystem, x0: &[f64], controls: &[Vec<f64>]) -> Result<Trajectory> {
    if controls.is_empty() {
        return Err(Error::config("control sequence must be nonempty"));
    }
    Error::check_dim("initial state", system.state_dim(), x0.len())?;
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(x0.to_vec());
    for (k, u) in controls.iter().enumerate() {
        let next = system.step(&states[k], u).map_err(|e| match e {
            Error::NonFinite { .. } => Error::NonFinite { step: k },
            other => other,
        })?;
        states.push(next);
    }
    Ok(Trajectory {
        states,
        controls: controls.to_vec(),
    })
}

/// Sum of `|x(k)|^2 + |u(k-1)|^2` for `k = 1..K`; the initial state is not charged.
pub fn trajectory_cost(traj: &Trajectory) -> f64 {
    traj.states
        .iter()
        .skip(1)
        .zip(&traj.controls)
        .map(|(x, u)| norm_sq(x) + norm_sq(u))
        .sum()
}
