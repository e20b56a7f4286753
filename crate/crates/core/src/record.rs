//! Closed-loop run records and their CSV/JSON forms.
//!
//! Trace CSV column order: `k, x1..xn, u1..um, h, gamma, i, terminal_bound,
//! solver_status, stage_cost`. `gamma` is the energy already spent in the
//! active window when the step's problem was solved. `terminal_bound` is
//! empty and `solver_status` is `none` for controllers without them.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{norm_sq, DiscreteSystem};
use crate::trajopt::SolveStatus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub k: usize,
    pub state: Vec<f64>,
    pub control: Vec<f64>,
    pub horizon: usize,
    pub gamma: f64,
    pub exponent: u32,
    pub terminal_bound: Option<f64>,
    pub status: Option<SolveStatus>,
    /// `|x(k+1)|^2 + |u(k)|^2`
    pub stage_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxSteps,
    Diverged,
    Aborted { step: usize, status: SolveStatus },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<RunRow>,
    /// State after the last applied control.
    pub final_state: Vec<f64>,
    pub termination: Termination,
}

/// Serialisable digest of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub total_cost: f64,
    pub steps: usize,
    pub converged: bool,
    pub diverged: bool,
    pub unstable: bool,
    pub termination: Termination,
    pub initial_state: Vec<f64>,
    pub final_state: Vec<f64>,
    pub itec_window_energies: Vec<f64>,
}

impl RunRecord {
    pub fn total_cost(&self) -> f64 {
        self.rows.iter().map(|r| r.stage_cost).sum()
    }

    pub fn steps(&self) -> usize {
        self.rows.len()
    }

    pub fn initial_state(&self) -> &[f64] {
        self.rows
            .first()
            .map(|r| r.state.as_slice())
            .unwrap_or(&self.final_state)
    }

    pub fn controls(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.control.clone()).collect()
    }

    /// `x(0), ..., x(K)`.
    pub fn states(&self) -> Vec<Vec<f64>> {
        let mut xs: Vec<Vec<f64>> = self.rows.iter().map(|r| r.state.clone()).collect();
        xs.push(self.final_state.clone());
        xs
    }

    /// Diverged, or stopped at the step cap without decaying below the initial norm.
    pub fn is_unstable(&self) -> bool {
        match self.termination {
            Termination::Diverged => true,
            Termination::MaxSteps => norm_sq(&self.final_state) >= norm_sq(self.initial_state()),
            _ => false,
        }
    }

    /// Applied energy in every fully elapsed window `[(2p-1)N, 2pN-1]`.
    pub fn window_energies(&self, interval: usize) -> Vec<f64> {
        let mut out = Vec::new();
        let mut p = 1;
        loop {
            let start = (2 * p - 1) * interval;
            let end = 2 * p * interval - 1;
            if end >= self.rows.len() {
                return out;
            }
            out.push(self.rows[start..=end].iter().map(|r| norm_sq(&r.control)).sum());
            p += 1;
        }
    }

    pub fn summary(&self, itec_interval: Option<usize>) -> RunSummary {
        RunSummary {
            total_cost: self.total_cost(),
            steps: self.steps(),
            converged: self.termination == Termination::Converged,
            diverged: self.termination == Termination::Diverged,
            unstable: self.is_unstable(),
            termination: self.termination,
            initial_state: self.initial_state().to_vec(),
            final_state: self.final_state.clone(),
            itec_window_energies: itec_interval.map(|n| self.window_energies(n)).unwrap_or_default(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let (n, m) = match self.rows.first() {
            Some(r) => (r.state.len(), r.control.len()),
            None => (self.final_state.len(), 0),
        };
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["k".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=m).map(|i| format!("u{i}")));
        header.extend(
            ["h", "gamma", "i", "terminal_bound", "solver_status", "stage_cost"].map(String::from),
        );
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.k.to_string()];
            rec.extend(r.state.iter().map(f64::to_string));
            rec.extend(r.control.iter().map(f64::to_string));
            rec.push(r.horizon.to_string());
            rec.push(r.gamma.to_string());
            rec.push(r.exponent.to_string());
            rec.push(r.terminal_bound.map(|b| b.to_string()).unwrap_or_default());
            rec.push(r.status.map_or("none", SolveStatus::as_str).to_string());
            rec.push(r.stage_cost.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parse a trace CSV. The final state is recovered by stepping `system`
    /// once from the last row; `termination` is supplied by the caller.
    pub fn read_csv<R: Read>(input: R, system: &dyn DiscreteSystem, termination: Termination) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        let n = header.iter().filter(|h| is_indexed(h, 'x')).count();
        let m = header.iter().filter(|h| is_indexed(h, 'u')).count();
        Error::check_dim("trace state columns", system.state_dim(), n)?;
        Error::check_dim("trace input columns", system.input_dim(), m)?;
        if header.len() != n + m + 7 {
            return Err(Error::Record(format!("unexpected column count {}", header.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| Error::Record(format!("bad number `{s}`")))
        };
        let int = |s: &str| -> Result<usize> {
            s.parse::<usize>().map_err(|_| Error::Record(format!("bad integer `{s}`")))
        };
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let f = |i: usize| rec.get(i).unwrap_or("");
            let state = (1..=n).map(|i| num(f(i))).collect::<Result<Vec<_>>>()?;
            let control = (n + 1..=n + m).map(|i| num(f(i))).collect::<Result<Vec<_>>>()?;
            let base = n + m + 1;
            let bound = f(base + 3);
            let status = f(base + 4);
            rows.push(RunRow {
                k: int(f(0))?,
                state,
                control,
                horizon: int(f(base))?,
                gamma: num(f(base + 1))?,
                exponent: int(f(base + 2))? as u32,
                terminal_bound: if bound.is_empty() { None } else { Some(num(bound)?) },
                status: match status {
                    "none" => None,
                    s => Some(SolveStatus::parse(s).ok_or_else(|| Error::Record(format!("bad status `{s}`")))?),
                },
                stage_cost: num(f(base + 5))?,
            });
        }
        for (idx, r) in rows.iter().enumerate() {
            if r.k != idx {
                return Err(Error::Record(format!("row {idx} carries k = {}", r.k)));
            }
        }
        let final_state = match rows.last() {
            Some(r) => system.step(&r.state, &r.control)?,
            None => return Err(Error::Record("trace has no rows".into())),
        };
        Ok(Self {
            rows,
            final_state,
            termination,
        })
    }
}

fn is_indexed(name: &str, prefix: char) -> bool {
    name.strip_prefix(prefix)
        .is_some_and(|rest| !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()))
}
