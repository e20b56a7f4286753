use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{norm_sq, simulate, DiscreteSystem};
use crate::record::RunRecord;

/// `sum_{j >= s} beta^ceil(j/2)` for `s >= 1`, in closed form.
fn tail_closed(beta: f64, s: usize) -> f64 {
    let m = s.div_ceil(2);
    let geo = |e: usize| 2.0 * beta.powi(e as i32) / (1.0 - beta);
    if s % 2 == 1 {
        geo(m)
    } else {
        beta.powi(m as i32) + geo(m + 1)
    }
}

/// `sum_{j >= start} beta^ceil(j/2)`: the first `terms` summands explicitly,
/// the geometric remainder in closed form.
pub fn tail_sum(beta: f64, start: usize, terms: usize) -> f64 {
    assert!(start >= 1, "tail index starts at 1");
    let head: f64 = (start..start + terms).map(|j| beta.powi(j.div_ceil(2) as i32)).sum();
    head + tail_closed(beta, start + terms)
}

/// The five pieces of one `Gamma_q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaSplit {
    pub q: usize,
    /// Cost over `j = 1..(q-1)N`.
    pub g1: f64,
    /// Cost over `j = (q-1)N+1..qN`.
    pub g2: f64,
    /// Cost over `j = qN+1..(q+1)N`.
    pub g3: f64,
    /// `beta^ceil((q+1)/2) sigma |x0|^2`.
    pub g4: f64,
    /// `sum_{j >= q+2} beta^ceil(j/2) sigma |x0|^2`.
    pub g5: f64,
}

impl GammaSplit {
    pub fn total(&self) -> f64 {
        self.g1 + self.g2 + self.g3 + self.g4 + self.g5
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSequence {
    /// `Gamma_q` for `q = 1..=Q`, summed directly.
    pub values: Vec<f64>,
    pub splits: Vec<GammaSplit>,
    pub sigma_used: f64,
    pub beta: f64,
    #[serde(rename = "N")]
    pub interval: usize,
    pub x0_norm_sq: f64,
    /// `(1 + beta) / (1 - beta) sigma |x0|^2`.
    pub bound: f64,
}

/// `Gamma_q` for every `q` whose control prefix `v_q` (the applied controls up
/// to step `(q+1)N`) lies inside the record.
pub fn gamma_sequence(
    record: &RunRecord,
    system: &dyn DiscreteSystem,
    sigma: f64,
    beta: f64,
    interval: usize,
    tail_terms: usize,
) -> Result<GammaSequence> {
    if interval == 0 {
        return Err(Error::config("interval length N must be at least 1"));
    }
    if !(0.0..1.0).contains(&beta) || !(sigma > 0.0) {
        return Err(Error::config("need beta in [0, 1) and sigma > 0"));
    }
    let x0 = record.initial_state().to_vec();
    let scale = sigma * norm_sq(&x0);
    let controls = record.controls();
    let n = interval;
    let q_max = (controls.len() / n).saturating_sub(1);
    let mut values = Vec::with_capacity(q_max);
    let mut splits = Vec::with_capacity(q_max);
    for q in 1..=q_max {
        let v_q = &controls[..(q + 1) * n];
        let traj = simulate(system, &x0, v_q)?;
        let stage: Vec<f64> = (1..=v_q.len())
            .map(|j| norm_sq(&traj.states[j]) + norm_sq(&v_q[j - 1]))
            .collect();
        let window = |from: usize, to: usize| -> f64 { stage[from - 1..to].iter().sum() };
        values.push(stage.iter().sum::<f64>() + scale * tail_sum(beta, q + 1, tail_terms));
        splits.push(GammaSplit {
            q,
            g1: if q > 1 { window(1, (q - 1) * n) } else { 0.0 },
            g2: window((q - 1) * n + 1, q * n),
            g3: window(q * n + 1, (q + 1) * n),
            g4: scale * beta.powi((q + 1).div_ceil(2) as i32),
            g5: scale * tail_sum(beta, q + 2, tail_terms),
        });
    }
    Ok(GammaSequence {
        values,
        splits,
        sigma_used: sigma,
        beta,
        interval,
        x0_norm_sq: norm_sq(&x0),
        bound: (1.0 + beta) / (1.0 - beta) * scale,
    })
}
