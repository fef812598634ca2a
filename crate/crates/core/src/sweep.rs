//! Budget sweeps and CSV output.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::allocator::{centralized_allocate, Allocation, Scenario};
use crate::error::{domain, Error, Result};
use crate::protocol::{run_distributed, run_distributed_basic, DistributedOutcome, IterTrace, RunStatus, SimConfig};
use crate::scenario::ScenarioFile;

/// Which allocation procedure a row runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// One-stage solve at the eNB.
    Centralized,
    /// Bid / price loop with fluctuation decay, then the per-UE split.
    Distributed,
    /// Bid / price loop without decay, then the per-UE split.
    EuraBasic,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Centralized => "centralized",
            Mode::Distributed => "distributed",
            Mode::EuraBasic => "eura-basic",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centralized" => Ok(Mode::Centralized),
            "distributed" => Ok(Mode::Distributed),
            "eura-basic" => Ok(Mode::EuraBasic),
            other => Err(domain(format!("unknown mode `{other}`"))),
        }
    }
}

/// Outcome of one row.
#[derive(Debug, Clone, PartialEq)]
pub enum RowStatus {
    Converged,
    Oscillating,
    MaxItersExceeded,
    Failed(String),
}

impl RowStatus {
    pub fn label(&self) -> &str {
        match self {
            RowStatus::Converged => "converged",
            RowStatus::Oscillating => "oscillating",
            RowStatus::MaxItersExceeded => "max-iters",
            RowStatus::Failed(_) => "failed",
        }
    }

    pub fn is_converged(&self) -> bool {
        matches!(self, RowStatus::Converged)
    }
}

impl From<RunStatus> for RowStatus {
    fn from(s: RunStatus) -> Self {
        match s {
            RunStatus::Converged => RowStatus::Converged,
            RunStatus::Oscillating => RowStatus::Oscillating,
            RunStatus::MaxItersExceeded => RowStatus::MaxItersExceeded,
        }
    }
}

/// Budget grid and procedure of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpec {
    pub r_min: f64,
    pub r_max: f64,
    pub r_step: f64,
    pub mode: Mode,
    pub sim: SimConfig,
}

impl SweepSpec {
    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.r_min) || !ok(self.r_step) || !self.r_max.is_finite() || self.r_max < self.r_min {
            return Err(domain(format!(
                "sweep needs r_min > 0, r_step > 0 and r_max >= r_min (got {}, {}, {})",
                self.r_min, self.r_step, self.r_max
            )));
        }
        Ok(())
    }

    /// `floor((r_max - r_min) / r_step) + 1` budgets, ascending.
    pub fn budgets(&self) -> Vec<f64> {
        let count = ((self.r_max - self.r_min) / self.r_step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| self.r_min + k as f64 * self.r_step).collect()
    }
}

/// Allocation at one budget.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub budget: f64,
    pub mode: Mode,
    pub status: RowStatus,
    pub iterations: usize,
    /// Final shadow price at the eNB.
    pub price: Option<f64>,
    /// Per-UE rates and bids; absent unless converged.
    pub ue_rates: Option<Vec<f64>>,
    pub ue_bids: Option<Vec<f64>>,
    /// Per-application rates and bids `p * r_ij`; absent unless converged.
    pub app_rates: Option<Vec<Vec<f64>>>,
    pub app_bids: Option<Vec<Vec<f64>>>,
}

/// Rows of a sweep, ordered by budget.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Applications per UE, fixing the CSV layout of every row.
    pub shape: Vec<usize>,
    pub rows: Vec<SweepRow>,
}

fn bids_of(a: &Allocation) -> Vec<Vec<f64>> {
    a.rates
        .iter()
        .map(|row| row.iter().map(|r| a.shadow_price * r).collect())
        .collect()
}

fn failed(budget: f64, mode: Mode, e: &Error) -> SweepRow {
    SweepRow {
        budget,
        mode,
        status: RowStatus::Failed(e.to_string()),
        iterations: 0,
        price: None,
        ue_rates: None,
        ue_bids: None,
        app_rates: None,
        app_bids: None,
    }
}

fn from_distributed(budget: f64, mode: Mode, out: DistributedOutcome) -> SweepRow {
    let price = out.eura.price.is_finite().then_some(out.eura.price);
    let converged = out.allocation.is_some();
    SweepRow {
        budget,
        mode,
        status: out.eura.status.into(),
        iterations: out.eura.iterations,
        price,
        ue_rates: out.eura.ue_rates.clone(),
        ue_bids: converged.then(|| out.eura.bids.clone()),
        app_bids: out.allocation.as_ref().map(bids_of),
        app_rates: out.allocation.map(|a| a.rates),
    }
}

/// Runs `mode` on `s`. Failures are reported in the row, not returned.
pub fn evaluate(s: &Scenario, mode: Mode, sim: &SimConfig) -> SweepRow {
    let budget = s.budget();
    match mode {
        Mode::Centralized => match centralized_allocate(s) {
            Ok((a, _)) => SweepRow {
                budget,
                mode,
                status: RowStatus::Converged,
                iterations: 1,
                price: Some(a.shadow_price),
                ue_bids: Some(a.ue_totals.iter().map(|r| a.shadow_price * r).collect()),
                ue_rates: Some(a.ue_totals.clone()),
                app_bids: Some(bids_of(&a)),
                app_rates: Some(a.rates),
            },
            Err(e) => failed(budget, mode, &e),
        },
        Mode::Distributed => match run_distributed(s, sim) {
            Ok(out) => from_distributed(budget, mode, out),
            Err(e) => failed(budget, mode, &e),
        },
        Mode::EuraBasic => match run_distributed_basic(s, sim) {
            Ok(out) => from_distributed(budget, mode, out),
            Err(e) => failed(budget, mode, &e),
        },
    }
}

/// Evaluates every budget of `spec` on the UEs of `file`. Rows are
/// independent and run in parallel; their order follows the budgets.
pub fn run_sweep(file: &ScenarioFile, spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let base = file.to_scenario(Some(spec.r_min))?;
    let rows = spec
        .budgets()
        .par_iter()
        .map(|&r| match base.with_budget(r) {
            Ok(s) => evaluate(&s, spec.mode, &spec.sim),
            Err(e) => failed(r, spec.mode, &e),
        })
        .collect();
    Ok(SweepResult {
        shape: file.ues.iter().map(|ue| ue.app_count()).collect(),
        rows,
    })
}

/// Number rendering shared by every CSV column: 16 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.15e}")
}

pub const SWEEP_HEADER: &str = "R,mode,status,iters,p,ue,app,rate,bid";
pub const TRACE_HEADER: &str = "n,p,ue,w,r";

/// Sweep CSV: one line per (budget, UE, application); UEs and applications
/// are numbered from 1. Rate and bid are empty on rows that did not converge.
pub fn sweep_csv(res: &SweepResult) -> String {
    let mut out = String::new();
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for row in &res.rows {
        let price = row.price.map(fmt_num).unwrap_or_default();
        for (i, &apps) in res.shape.iter().enumerate() {
            for j in 0..apps {
                let cell = |m: &Option<Vec<Vec<f64>>>| m.as_ref().map(|v| fmt_num(v[i][j])).unwrap_or_default();
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    fmt_num(row.budget),
                    row.mode.as_str(),
                    row.status.label(),
                    row.iterations,
                    price,
                    i + 1,
                    j + 1,
                    cell(&row.app_rates),
                    cell(&row.app_bids),
                )
                .unwrap();
            }
        }
    }
    out
}

/// Trace CSV: one line per (iteration, UE) with the bid held by the eNB and
/// the UE rate of that iteration.
pub fn trace_csv(trace: &IterTrace) -> String {
    let mut out = String::new();
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for rec in &trace.records {
        for (i, (w, r)) in rec.bids.iter().zip(&rec.rates).enumerate() {
            writeln!(out, "{},{},{},{},{}", rec.n, fmt_num(rec.price), i + 1, fmt_num(*w), fmt_num(*r)).unwrap();
        }
    }
    out
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_sweep_csv(res: &SweepResult, path: &Path) -> Result<()> {
    write_file(path, &sweep_csv(res))
}

pub fn write_trace_csv(trace: &IterTrace, path: &Path) -> Result<()> {
    write_file(path, &trace_csv(trace))
}
