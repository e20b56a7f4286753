//! Experiment drivers behind the CLI and the files they write.
//!
//! | command        | files                                  |
//! |----------------|----------------------------------------|
//! | simulate       | `trace.csv`, `summary.json`            |
//! | certify        | `certificate.json`                     |
//! | check-bounds   | `bounds.json`                          |
//! | table1         | `table1.csv`, `table1.md`              |
//!
//! Every artifact is a pure function of the configuration, so reruns are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, BoundsReport, Certificate};
use crate::config::{ControllerConfig, ControllerKind, ExperimentConfig, Table1Config, Table1Irhc};
use crate::controller::run;
use crate::error::{Error, Result};
use crate::plant::{Method, Plant};
use crate::record::{RunRecord, RunSummary, Termination};
use crate::trajopt::Solver;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub controller: String,
    pub plant: String,
    #[serde(flatten)]
    pub run: RunSummary,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Run the configured controller on the configured plant.
pub fn simulate(cfg: &ExperimentConfig) -> Result<(Plant, RunRecord, SimulationSummary)> {
    let plant = cfg.validate()?;
    let mut policy = cfg
        .controller
        .build(&cfg.x0, Solver::new(cfg.solver.clone()), cfg.input_set.clone())?;
    let record = run(policy.as_mut(), &plant, &cfg.x0, &cfg.controller.run_options()?)?;
    let window = match cfg.controller.mode {
        ControllerKind::Irhc if cfg.controller.itec => cfg.controller.interval,
        ControllerKind::Proportional => cfg.controller.interval,
        _ => None,
    };
    let summary = SimulationSummary {
        controller: policy.name().to_string(),
        plant: plant.name().to_string(),
        run: record.summary(window),
    };
    Ok((plant, record, summary))
}

pub fn write_simulation(cfg: &ExperimentConfig, out: &Path) -> Result<(RunRecord, SimulationSummary)> {
    let (_, record, summary) = simulate(cfg)?;
    fs::create_dir_all(out)?;
    record.write_csv(fs::File::create(out.join("trace.csv"))?)?;
    write_json(&out.join("summary.json"), &summary)?;
    Ok((record, summary))
}

/// Certificate for the configured controller's beta, N and (in ITEC mode) C around `x0`.
pub fn certify(cfg: &ExperimentConfig) -> Result<Certificate> {
    let plant = cfg.validate()?;
    let c = &cfg.controller;
    let budget = if c.itec {
        Some(c.budget.ok_or_else(|| Error::config("ITEC certification needs a budget C"))?)
    } else {
        None
    };
    analysis::certify(
        &plant,
        &cfg.x0,
        c.beta()?,
        c.interval()?,
        budget,
        &cfg.input_set,
        &Solver::new(cfg.solver.clone()),
        &cfg.certify,
    )
}

pub fn write_certificate(cfg: &ExperimentConfig, out: &Path) -> Result<Certificate> {
    let cert = certify(cfg)?;
    fs::create_dir_all(out)?;
    write_json(&out.join("certificate.json"), &cert)?;
    Ok(cert)
}

/// Bound checks on a trace and certificate, either loaded from disk or produced from `cfg`.
pub fn check_bounds(cfg: &ExperimentConfig, trace: Option<&Path>, certificate: Option<&Path>) -> Result<BoundsReport> {
    let plant = cfg.validate()?;
    let record = match trace {
        Some(path) => RunRecord::read_csv(fs::File::open(path)?, &plant, Termination::MaxSteps)?,
        None => simulate(cfg)?.1,
    };
    let cert: Certificate = match certificate {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => certify(cfg)?,
    };
    analysis::check_bounds(&record, &plant, &cert, cfg.analysis.tail_terms)
}

pub fn write_bounds(
    cfg: &ExperimentConfig,
    trace: Option<&Path>,
    certificate: Option<&Path>,
    out: &Path,
) -> Result<BoundsReport> {
    let report = check_bounds(cfg, trace, certificate)?;
    fs::create_dir_all(out)?;
    write_json(&out.join("bounds.json"), &report)?;
    Ok(report)
}

/// Published cost for a cell, `None` meaning unstable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reference(pub Option<f64>);

impl Reference {
    fn label(self) -> String {
        match self.0 {
            Some(v) => format!("{v}"),
            None => "Unstable".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Main,
    Variant,
    Sensitivity,
}

impl Section {
    fn as_str(self) -> &'static str {
        match self {
            Section::Main => "main",
            Section::Variant => "variant",
            Section::Sensitivity => "sensitivity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Cell {
    pub section: Section,
    pub controller: String,
    #[serde(rename = "N")]
    pub interval: Option<usize>,
    pub beta: Option<f64>,
    pub method: Method,
    pub dt: f64,
    pub steps: usize,
    pub cost: f64,
    /// `cost * dt / dt_ref`, comparable across sampling periods.
    pub cost_time_scaled: f64,
    pub unstable: bool,
    pub termination: Termination,
    pub reference: Reference,
}

impl Table1Cell {
    pub fn result_label(&self) -> String {
        if self.unstable {
            "Unstable".into()
        } else {
            format!("{:.1}", self.cost)
        }
    }

    /// `(cost - reference) / reference` when both sides are finite costs.
    pub fn relative_deviation(&self) -> Option<f64> {
        match (self.unstable, self.reference.0) {
            (false, Some(r)) => Some((self.cost - r) / r),
            _ => None,
        }
    }

    pub fn is(&self, controller: &str, interval: Option<usize>, beta: Option<f64>) -> bool {
        self.controller == controller && self.interval == interval && self.beta == beta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1 {
    pub cells: Vec<Table1Cell>,
}

impl Table1 {
    pub fn main(&self, controller: &str, interval: Option<usize>, beta: Option<f64>) -> Option<&Table1Cell> {
        self.cells
            .iter()
            .find(|c| c.section == Section::Main && c.is(controller, interval, beta))
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "section",
            "controller",
            "N",
            "beta",
            "method",
            "dt",
            "steps",
            "termination",
            "cost",
            "cost_time_scaled",
            "result",
            "reference",
            "relative_deviation",
        ])?;
        for c in &self.cells {
            w.write_record([
                c.section.as_str().to_string(),
                c.controller.clone(),
                c.interval.map(|n| n.to_string()).unwrap_or_default(),
                c.beta.map(|b| b.to_string()).unwrap_or_default(),
                method_name(c.method).to_string(),
                c.dt.to_string(),
                c.steps.to_string(),
                termination_name(c.termination).to_string(),
                c.cost.to_string(),
                c.cost_time_scaled.to_string(),
                c.result_label(),
                c.reference.label(),
                c.relative_deviation().map(|d| format!("{d:.4}")).unwrap_or_default(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Record(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Record(e.to_string()))
    }

    pub fn to_markdown(&self) -> String {
        let mut md = String::from("# Performance comparison\n\n");
        md.push_str("Truncated closed-loop cost from x0 = [2, -1]. `Unstable` means the run diverged or ");
        md.push_str("had not decayed below its initial norm at the step cap.\n\n");
        md.push_str("| controller | N = 4 | reference | N = 5 | reference |\n|---|---|---|---|---|\n");
        let rows: [(&str, &str, Option<f64>); 4] = [
            ("u = -3 x2", "feedback", None),
            ("RHC", "rhc", None),
            ("IRHC (beta = 0.8)", "irhc", Some(0.8)),
            ("IRHC (beta = 0.2)", "irhc", Some(0.2)),
        ];
        for (label, ctrl, beta) in rows {
            let cell = |n: usize| {
                let key = if ctrl == "feedback" { None } else { Some(n) };
                self.main(ctrl, key, beta)
                    .map(|c| (c.result_label(), c.reference.label()))
                    .unwrap_or_else(|| ("-".into(), "-".into()))
            };
            let (a, ra) = cell(4);
            let (b, rb) = cell(5);
            let _ = writeln!(md, "| {label} | {a} | {ra} | {b} | {rb} |");
        }
        for (section, title) in [
            (Section::Variant, "IRHC variant"),
            (Section::Sensitivity, "Discretization sensitivity"),
        ] {
            let cells: Vec<&Table1Cell> = self.cells.iter().filter(|c| c.section == section).collect();
            if cells.is_empty() {
                continue;
            }
            let _ = writeln!(md, "\n## {title}\n");
            md.push_str("| controller | N | beta | method | dt | steps | result | cost x dt/dt_ref | reference |\n");
            md.push_str("|---|---|---|---|---|---|---|---|---|\n");
            for c in cells {
                let _ = writeln!(
                    md,
                    "| {} | {} | {} | {} | {} | {} | {} | {:.1} | {} |",
                    c.controller,
                    c.interval.map(|n| n.to_string()).unwrap_or_else(|| "-".into()),
                    c.beta.map(|b| b.to_string()).unwrap_or_else(|| "-".into()),
                    method_name(c.method),
                    c.dt,
                    c.steps,
                    c.result_label(),
                    c.cost_time_scaled,
                    c.reference.label(),
                );
            }
        }
        md
    }
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Euler => "euler",
        Method::Rk4 => "rk4",
    }
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::Converged => "converged",
        Termination::MaxSteps => "max_steps",
        Termination::Diverged => "diverged",
        Termination::Aborted { .. } => "aborted",
    }
}

struct CellSpec {
    section: Section,
    controller: ControllerConfig,
    irhc_label: Option<Table1Irhc>,
    method: Method,
    dt: f64,
    reference: Reference,
}

fn controller(mode: ControllerKind, n: Option<usize>, beta: Option<f64>, variant: Table1Irhc, cfg: &Table1Config) -> ControllerConfig {
    ControllerConfig {
        mode,
        itec: variant == Table1Irhc::ItecSchedule,
        beta,
        budget: None,
        interval: n,
        max_steps: cfg.max_steps,
        convergence_eps: cfg.convergence_eps,
        divergence_factor: cfg.divergence_factor,
        horizon: None,
        gain: None,
    }
}

fn base_cells(cfg: &Table1Config, variant: Table1Irhc) -> Vec<(ControllerConfig, Reference)> {
    let mut cells = vec![(
        controller(ControllerKind::Feedback, None, None, variant, cfg),
        Reference(Some(325.4)),
    )];
    for (n, reference) in [(4, Some(437.2)), (5, None)] {
        cells.push((controller(ControllerKind::Rhc, Some(n), None, variant, cfg), Reference(reference)));
    }
    for (beta, refs) in [(0.8, [412.9, 539.4]), (0.2, [3947.0, 2053.0])] {
        for (n, r) in [4, 5].into_iter().zip(refs) {
            cells.push((
                controller(ControllerKind::Irhc, Some(n), Some(beta), variant, cfg),
                Reference(Some(r)),
            ));
        }
    }
    cells
}

fn run_cell(cfg: &Table1Config, spec: &CellSpec, dt_ref: f64) -> Result<Table1Cell> {
    let plant_cfg = match cfg.plant {
        crate::config::PlantConfig::Oscillator { .. } => crate::config::PlantConfig::Oscillator {
            dt: spec.dt,
            method: spec.method,
        },
        ref other => other.clone(),
    };
    let mut controller = spec.controller.clone();
    // Keep the simulated time span fixed across sampling periods.
    controller.max_steps = ((cfg.max_steps as f64) * dt_ref / spec.dt).round() as usize;
    let exp = ExperimentConfig {
        plant: plant_cfg,
        x0: cfg.x0.clone(),
        controller,
        input_set: cfg.input_set.clone(),
        solver: cfg.solver.clone(),
        certify: Default::default(),
        analysis: Default::default(),
    };
    let (_, record, summary) = simulate(&exp)?;
    let name = match (summary.controller.as_str(), spec.irhc_label) {
        ("irhc", Some(Table1Irhc::NonItec)) => "irhc_non_itec".to_string(),
        ("irhc", Some(Table1Irhc::ItecSchedule)) => "irhc_itec_schedule".to_string(),
        (other, _) => other.to_string(),
    };
    let unstable = record.is_unstable() || matches!(record.termination, Termination::Aborted { .. });
    Ok(Table1Cell {
        section: spec.section,
        controller: if spec.section == Section::Main { summary.controller } else { name },
        interval: spec.controller.interval.filter(|_| spec.controller.mode != ControllerKind::Feedback),
        beta: spec.controller.beta,
        method: spec.method,
        dt: spec.dt,
        steps: record.steps(),
        cost: record.total_cost(),
        cost_time_scaled: record.total_cost() * spec.dt / dt_ref,
        unstable,
        termination: record.termination,
        reference: spec.reference,
    })
}

/// The seven comparison cells, the other IRHC variant, and a sweep over
/// sampling period and integration method.
pub fn table1(cfg: &Table1Config) -> Result<Table1> {
    cfg.validate()?;
    let (dt_ref, method) = match cfg.plant {
        crate::config::PlantConfig::Oscillator { dt, method } => (dt, method),
        crate::config::PlantConfig::ScalarLinear { .. } => {
            return Err(Error::config("the comparison table is defined for the oscillator preset"))
        }
    };
    let other_variant = match cfg.irhc {
        Table1Irhc::NonItec => Table1Irhc::ItecSchedule,
        Table1Irhc::ItecSchedule => Table1Irhc::NonItec,
    };
    let mut specs = Vec::new();
    for (controller, reference) in base_cells(cfg, cfg.irhc) {
        specs.push(CellSpec {
            section: Section::Main,
            controller,
            irhc_label: Some(cfg.irhc),
            method,
            dt: dt_ref,
            reference,
        });
    }
    for (controller, reference) in base_cells(cfg, other_variant) {
        if controller.mode == ControllerKind::Irhc {
            specs.push(CellSpec {
                section: Section::Variant,
                controller,
                irhc_label: Some(other_variant),
                method,
                dt: dt_ref,
                reference,
            });
        }
    }
    for m in [Method::Euler, Method::Rk4] {
        for &dt in &cfg.sensitivity_dts {
            for (controller, reference) in base_cells(cfg, cfg.irhc) {
                specs.push(CellSpec {
                    section: Section::Sensitivity,
                    controller,
                    irhc_label: Some(cfg.irhc),
                    method: m,
                    dt,
                    reference,
                });
            }
        }
    }
    let cells = specs
        .par_iter()
        .map(|s| run_cell(cfg, s, dt_ref))
        .collect::<Result<Vec<_>>>()?;
    Ok(Table1 { cells })
}

pub fn write_table1(cfg: &Table1Config, out: &Path) -> Result<Table1> {
    let table = table1(cfg)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("table1.csv"), table.to_csv()?)?;
    fs::write(out.join("table1.md"), table.to_markdown())?;
    Ok(table)
}
