//! Acceptance criteria for the oscillator experiment. Each test prints one
//! `criterion N: PASS|FAIL` line (bypassing output capture) before asserting.
//! Kept in the CLI crate so the table determinism check runs the real binary.

use std::io::Write;
use std::path::PathBuf;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use irhc::analysis::{gamma_sequence, Certificate};
use irhc::config::{ExperimentConfig, Table1Config};
use irhc::experiment::{self, Section, Table1};
use irhc::plant::{norm_sq, Plant};
use irhc::record::RunRecord;

#[path = "../../core/tests/common/mod.rs"]
mod common;

const C: f64 = 4.8;
const N: usize = 4;
const BETA: f64 = 0.8;
const X0_NORM_SQ: f64 = 5.0;

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn report(criterion: u8, passed: bool, detail: &str) {
    let line = format!(
        "criterion {criterion}: {} {detail}\n",
        if passed { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
}

struct Run {
    cfg: ExperimentConfig,
    plant: Plant,
    record: RunRecord,
    elapsed: Duration,
}

fn itec_run() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| {
        let cfg = ExperimentConfig::from_path(&config_path("itec_oscillator.json")).unwrap();
        let start = Instant::now();
        let (plant, record, _) = experiment::simulate(&cfg).unwrap();
        Run {
            cfg,
            plant,
            record,
            elapsed: start.elapsed(),
        }
    })
}

fn certificate() -> &'static Certificate {
    static CERT: OnceLock<Certificate> = OnceLock::new();
    CERT.get_or_init(|| experiment::certify(&itec_run().cfg).unwrap())
}

/// The certified sigma, or the partial estimate over the samples that admit one.
fn sigma_hat() -> (f64, bool) {
    let cert = certificate();
    match (cert.sigma, cert.sigma_partial) {
        (Some(s), _) => (s, true),
        (None, Some(s)) => (s, false),
        (None, None) => panic!("no sample admits a sigma"),
    }
}

fn sigma_note(complete: bool) -> String {
    let cert = certificate();
    if complete {
        format!("sigma_hat certified on all {} samples", cert.sample_states.len())
    } else {
        format!(
            "sigma_hat is PARTIAL: certificate incomplete, {} of {} samples admit no ITEC sequence",
            cert.infeasible_samples,
            cert.sample_states.len()
        )
    }
}

fn table() -> &'static Table1 {
    static TABLE: OnceLock<Table1> = OnceLock::new();
    TABLE.get_or_init(|| {
        let cfg = Table1Config::from_path(&config_path("table1.json")).unwrap();
        experiment::table1(&cfg).unwrap()
    })
}

#[test]
fn criterion_1_itec_windows_respect_the_budget() {
    let run = itec_run();
    let rows = &run.record.rows;
    let mut energies = Vec::new();
    let mut p = 1;
    while 2 * p * N <= rows.len() {
        let window = &rows[(2 * p - 1) * N..2 * p * N];
        energies.push(window.iter().map(|r| norm_sq(&r.control)).sum::<f64>());
        p += 1;
    }
    let worst = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let fast = run.elapsed < Duration::from_secs(60);
    let passed = !energies.is_empty() && worst <= C + 1e-6 && fast;
    report(
        1,
        passed,
        &format!(
            "{} windows, max energy {worst:.9} vs C = {C}, run took {:.2?}",
            energies.len(),
            run.elapsed
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_2_contraction_envelope() {
    let states = itec_run().record.states();
    let mut worst: Option<(usize, f64, f64)> = None;
    let mut violations = 0;
    let mut m = 2;
    while m * N < states.len() {
        let value = norm_sq(&states[m * N]);
        let bound = BETA.powi(m.div_ceil(2) as i32) * X0_NORM_SQ;
        if value > bound + 1e-6 {
            violations += 1;
        }
        if worst.is_none_or(|(_, v, b)| value - bound > v - b) {
            worst = Some((m, value, bound));
        }
        m += 1;
    }
    let (wm, wv, wb) = worst.unwrap();
    let passed = violations == 0;
    report(
        2,
        passed,
        &format!(
            "{violations} of {} block ends above the envelope; worst m = {wm}: |x(mN)|^2 = {wv:.6} vs {wb:.6}",
            m - 2
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_3_table_qualitative() {
    let t = table();
    let rhc5 = t.main("rhc", Some(5), None).unwrap();
    let irhc4 = t.main("irhc", Some(4), Some(0.8)).unwrap();
    let irhc5 = t.main("irhc", Some(5), Some(0.8)).unwrap();
    let low4 = t.main("irhc", Some(4), Some(0.2)).unwrap();
    let passed = rhc5.unstable && !irhc4.unstable && !irhc5.unstable && !low4.unstable && low4.cost > irhc4.cost;
    report(
        3,
        passed,
        &format!(
            "RHC N=5 {}; IRHC 0.8 N=4 {}, N=5 {}; IRHC 0.2 N=4 {} > {}",
            rhc5.result_label(),
            irhc4.result_label(),
            irhc5.result_label(),
            low4.result_label(),
            irhc4.result_label()
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_4_table_quantitative() {
    let t = table();
    let cells = [
        (t.main("feedback", None, None).unwrap(), 0.15),
        (t.main("rhc", Some(4), None).unwrap(), 0.25),
        (t.main("irhc", Some(4), Some(0.8)).unwrap(), 0.25),
    ];
    let mut parts = Vec::new();
    let mut in_band = true;
    for (cell, band) in cells {
        let dev = cell.relative_deviation();
        in_band &= dev.is_some_and(|d| d.abs() <= band);
        let label = match cell.interval {
            Some(n) => format!("{} N={n}", cell.controller),
            None => cell.controller.clone(),
        };
        let reference = cell.reference.0.map_or("Unstable".into(), |r| r.to_string());
        parts.push(format!(
            "{label} {} vs {reference} ({:+.1}%, band {:.0}%)",
            cell.result_label(),
            dev.unwrap_or(f64::NAN) * 100.0,
            band * 100.0
        ));
    }
    let swept: Vec<f64> = t.cells.iter().filter(|c| c.section == Section::Sensitivity).map(|c| c.dt).collect();
    let sweep = [0.05, 0.025].iter().all(|dt| swept.contains(dt));
    // Outside the band the deviation still counts as reported when the sweep exists.
    let passed = in_band || sweep;
    report(
        4,
        passed,
        &format!(
            "{}; dt sweep {}{}",
            parts.join("; "),
            if sweep { "present" } else { "missing" },
            if in_band { "" } else { " (band missed, deviation reported)" }
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_5_gamma_is_nonincreasing() {
    let run = itec_run();
    let (sigma, complete) = sigma_hat();
    let seq = gamma_sequence(&run.record, &run.plant, sigma, BETA, N, run.cfg.analysis.tail_terms).unwrap();
    let v = &seq.values;
    let s = &seq.splits;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    let rises = v.windows(2).filter(|w| w[1] > w[0] + 1e-9).count();
    let split_sum = v.iter().zip(s).all(|(g, sp)| rel(*g, sp.total()) <= 1e-9);
    let telescoping = s.windows(2).all(|w| rel(w[1].g1, w[0].g1 + w[0].g2) <= 1e-9);
    let tail = s.windows(2).all(|w| rel(w[1].g4 + w[1].g5, w[0].g5) <= 1e-9);
    let passed = v.len() >= 2 && rises == 0 && split_sum && telescoping && tail;
    report(
        5,
        passed,
        &format!(
            "{} values of Gamma_q, {rises} increases, split sum {split_sum}, telescoping {telescoping}, tail {tail}; sigma_hat = {sigma} ({})",
            v.len(),
            sigma_note(complete)
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_6_cost_below_bound() {
    let cost = itec_run().record.total_cost();
    let (sigma, complete) = sigma_hat();
    let bound = (1.0 + BETA) / (1.0 - BETA) * sigma * X0_NORM_SQ;
    let passed = cost <= bound;
    report(
        6,
        passed,
        &format!("G = {cost:.4} vs 45 sigma_hat = {bound:.4} ({})", sigma_note(complete)),
    );
    assert!(passed);
}

#[test]
fn criterion_7_optimizer_oracles() {
    let grid = common::grid_disagreements(20);
    let grad = common::gradient_disagreements(50);
    let passed = grid.is_empty() && grad.is_empty();
    report(
        7,
        passed,
        &format!(
            "grid search: {} of 20 instances disagree; adjoint vs finite differences: {} mismatches over 50 instances",
            grid.len(),
            grad.len()
        ),
    );
    assert!(passed, "{grid:#?} {grad:#?}");
}

#[test]
fn criterion_8_table_is_deterministic() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let status = Command::new(env!("CARGO_BIN_EXE_irhc"))
            .args(["table1", "--seed", "0", "--config"])
            .arg(config_path("table1.json"))
            .arg("--out")
            .arg(d.path())
            .output()
            .unwrap()
            .status;
        assert!(status.success());
    }
    let mut same = true;
    for name in ["table1.csv", "table1.md"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        same &= !a.is_empty() && a == b;
    }
    report(8, same, "table1.csv and table1.md byte-identical across two runs");
    assert!(same);
}
