use serde::{Deserialize, Serialize};

use super::certify::Certificate;
use super::gamma::{gamma_sequence, GammaSequence};
use crate::error::{Error, Result};
use crate::plant::{norm_sq, DiscreteSystem};
use crate::record::RunRecord;

const IDENTITY_TOL: f64 = 1e-9;
const ENVELOPE_TOL: f64 = 1e-6;
const ENERGY_TOL: f64 = 1e-6;

/// One named check. `margin` is positive when the check holds with room to spare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub passed: bool,
    pub margin: f64,
    pub detail: String,
}

impl BoundCheck {
    /// Every `lhs <= rhs + tol`; the margin is the smallest `rhs - lhs`.
    fn inequality(name: &str, pairs: impl IntoIterator<Item = (String, f64, f64)>, tol: f64) -> Self {
        let mut margin = f64::INFINITY;
        let mut worst = String::from("no instances");
        for (label, lhs, rhs) in pairs {
            let m = rhs - lhs;
            if m < margin {
                margin = m;
                worst = format!("worst at {label}: {lhs} <= {rhs}");
            }
        }
        Self {
            name: name.into(),
            passed: margin >= -tol,
            margin,
            detail: worst,
        }
    }

    /// Every `a == b` to relative tolerance; the margin is `tol` minus the worst relative error.
    fn identity(name: &str, pairs: impl IntoIterator<Item = (String, f64, f64)>, tol: f64) -> Self {
        let mut worst_err = 0.0f64;
        let mut worst = String::from("no instances");
        for (label, a, b) in pairs {
            let scale = a.abs().max(b.abs());
            let err = if scale == 0.0 { 0.0 } else { (a - b).abs() / scale };
            if err >= worst_err {
                worst_err = err;
                worst = format!("worst at {label}: {a} vs {b}");
            }
        }
        Self {
            name: name.into(),
            passed: worst_err <= tol,
            margin: tol - worst_err,
            detail: worst,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    /// Estimated from samples, not proven.
    pub sigma: f64,
    /// False when `sigma` is the partial estimate of an incomplete certificate.
    pub certificate_complete: bool,
    pub beta: f64,
    #[serde(rename = "N")]
    pub interval: usize,
    pub itec: bool,
    pub x0_norm_sq: f64,
    /// Truncated closed-loop cost of the record.
    pub total_cost: f64,
    /// `(1+beta)/(1-beta) sigma |x0|^2` with ITEC, `sigma/(1-beta) |x0|^2` without.
    pub bound: f64,
    pub gamma: Option<GammaSequence>,
    pub checks: Vec<BoundCheck>,
    pub all_passed: bool,
}

impl BoundsReport {
    pub fn check(&self, name: &str) -> Option<&BoundCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// `(m, |x(mN)|^2, bound)` for every `m >= 2` reached by the record.
///
/// The bound is `beta^ceil(m/2) |x0|^2` with ITEC and `beta^(m-1) |x0|^2` without.
pub fn envelope_points(record: &RunRecord, beta: f64, interval: usize, itec: bool) -> Vec<(usize, f64, f64)> {
    let states = record.states();
    let x0 = norm_sq(&states[0]);
    (2..)
        .map(|m| m * interval)
        .take_while(|&k| k < states.len())
        .map(|k| {
            let m = k / interval;
            let exp = if itec { m.div_ceil(2) } else { m - 1 };
            (m, norm_sq(&states[k]), beta.powi(exp as i32) * x0)
        })
        .collect()
}

/// Re-evaluate the cost bound chain on a recorded run using the certificate's
/// beta and sigma.
pub fn check_bounds(
    record: &RunRecord,
    system: &dyn DiscreteSystem,
    cert: &Certificate,
    tail_terms: usize,
) -> Result<BoundsReport> {
    let sigma = cert
        .sigma
        .or(cert.sigma_partial)
        .ok_or_else(|| Error::CertificationFailed("certificate carries no sigma".into()))?;
    let beta = cert.beta;
    let n = cert.interval;
    let x0_norm_sq = norm_sq(record.initial_state());
    let total_cost = record.total_cost();
    let mut checks = Vec::new();

    let envelope = envelope_points(record, beta, n, cert.itec);
    checks.push(BoundCheck::inequality(
        "contraction_envelope",
        envelope.iter().map(|&(m, l, r)| (format!("m={m}"), l, r)),
        ENVELOPE_TOL,
    ));

    let (bound, gamma) = if cert.itec {
        let g = gamma_sequence(record, system, sigma, beta, n, tail_terms)?;
        let label = |q: usize| format!("q={q}");
        checks.push(BoundCheck::inequality(
            "itec_window_energy",
            record
                .window_energies(n)
                .into_iter()
                .enumerate()
                .map(|(p, e)| (format!("p={}", p + 1), e, cert.budget.unwrap_or(f64::INFINITY))),
            ENERGY_TOL,
        ));
        checks.push(BoundCheck::identity(
            "gamma_split_sum",
            g.values.iter().zip(&g.splits).map(|(v, s)| (label(s.q), *v, s.total())),
            IDENTITY_TOL,
        ));
        checks.push(BoundCheck::identity(
            "gamma_telescoping",
            g.splits.windows(2).map(|w| (label(w[0].q), w[1].g1, w[0].g1 + w[0].g2)),
            IDENTITY_TOL,
        ));
        checks.push(BoundCheck::identity(
            "gamma_tail_identity",
            g.splits.windows(2).map(|w| (label(w[0].q), w[1].g4 + w[1].g5, w[0].g5)),
            IDENTITY_TOL,
        ));
        checks.push(BoundCheck::inequality(
            "gamma_block_decrease",
            g.splits
                .windows(2)
                .map(|w| (label(w[0].q), w[1].g2 + w[1].g3, w[0].g3 + w[0].g4)),
            IDENTITY_TOL,
        ));
        checks.push(BoundCheck::inequality(
            "gamma_nonincreasing",
            g.values
                .windows(2)
                .enumerate()
                .map(|(i, w)| (label(i + 1), w[1], w[0])),
            IDENTITY_TOL,
        ));
        checks.push(BoundCheck::inequality(
            "gamma_below_bound",
            g.values.iter().enumerate().map(|(i, &v)| (label(i + 1), v, g.bound)),
            0.0,
        ));
        if let Some(&last) = g.values.last() {
            checks.push(BoundCheck::inequality(
                "cost_below_last_gamma",
                [(label(g.values.len()), total_cost, last)],
                0.0,
            ));
        }
        (g.bound, Some(g))
    } else {
        (sigma / (1.0 - beta) * x0_norm_sq, None)
    };
    checks.push(BoundCheck::inequality(
        "cost_bound",
        [("G".to_string(), total_cost, bound)],
        0.0,
    ));

    let all_passed = checks.iter().all(|c| c.passed);
    Ok(BoundsReport {
        sigma,
        certificate_complete: cert.sigma.is_some(),
        beta,
        interval: n,
        itec: cert.itec,
        x0_norm_sq,
        total_cost,
        bound,
        gamma,
        checks,
        all_passed,
    })
}
