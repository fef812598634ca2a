use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hybrid_ra::allocator::{centralized_allocate, verify_kkt, Allocation};
use hybrid_ra::protocol::{run_distributed, run_distributed_basic, DecaySpec, SimConfig};
use hybrid_ra::scenario::ScenarioFile;
use hybrid_ra::sweep::{
    evaluate, run_sweep, sweep_csv, write_sweep_csv, write_trace_csv, Mode, SweepResult, SweepSpec,
};
use hybrid_ra::Error;

#[derive(Parser)]
#[command(name = "hybrid-ra", version, about = "Utility-proportional rate allocation for multi-application UEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Allocate one budget and print or write the per-application rates.
    Allocate {
        #[arg(long)]
        scenario: PathBuf,
        /// Defaults to the `budget` line of the scenario file.
        #[arg(long)]
        budget: Option<f64>,
        #[arg(long, value_parser = parse_mode)]
        mode: Mode,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the bid / price iterations of a distributed run here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Allocate every budget of an evenly spaced grid.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        r_min: f64,
        #[arg(long)]
        r_max: f64,
        #[arg(long)]
        r_step: f64,
        #[arg(long, value_parser = parse_mode)]
        mode: Mode,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the centralized and distributed allocations at one budget.
    Verify {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        budget: Option<f64>,
        #[command(flatten)]
        sim: SimArgs,
    },
}

#[derive(Args)]
struct SimArgs {
    /// Bid-difference termination threshold.
    #[arg(long, default_value_t = 1e-4)]
    delta: f64,
    /// `exp:L1,L2`, `rational:L3` or `none`.
    #[arg(long, value_parser = parse_decay, default_value = "exp:10,100")]
    decay: DecaySpec,
    #[arg(long, default_value_t = 5000)]
    max_iters: usize,
}

impl SimArgs {
    fn config(&self) -> SimConfig {
        SimConfig {
            delta: self.delta,
            max_iters: self.max_iters,
            decay: self.decay,
            ..SimConfig::default()
        }
    }
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_decay(s: &str) -> Result<DecaySpec, String> {
    let num = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("bad number `{v}` in decay `{s}`"));
    if s == "none" {
        return Ok(DecaySpec::None);
    }
    if let Some(rest) = s.strip_prefix("exp:") {
        let (l1, l2) = rest.split_once(',').ok_or_else(|| format!("expected exp:L1,L2, got `{s}`"))?;
        return Ok(DecaySpec::Exponential { l1: num(l1)?, l2: num(l2)? });
    }
    if let Some(rest) = s.strip_prefix("rational:") {
        return Ok(DecaySpec::Rational { l3: num(rest)? });
    }
    Err(format!("expected exp:L1,L2, rational:L3 or none, got `{s}`"))
}

enum Failure {
    Usage(String),
    NotConverged(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_) => Failure::Usage(e.to_string()),
            _ => Failure::Other(e.to_string()),
        }
    }
}

fn load(path: &Path) -> Result<ScenarioFile, Failure> {
    ScenarioFile::load(path).map_err(|e| Failure::Usage(e.to_string()))
}

fn emit(text: &str, out: Option<&Path>, write: impl FnOnce(&Path) -> hybrid_ra::Result<()>) -> Result<(), Failure> {
    match out {
        Some(path) => write(path).map_err(Failure::from),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn allocate(
    scenario: &Path,
    budget: Option<f64>,
    mode: Mode,
    sim: &SimArgs,
    out: Option<&Path>,
    trace: Option<&Path>,
) -> Result<(), Failure> {
    let file = load(scenario)?;
    let s = file.to_scenario(budget)?;
    let cfg = sim.config();
    let row = evaluate(&s, mode, &cfg);
    let res = SweepResult {
        shape: file.ues.iter().map(|ue| ue.app_count()).collect(),
        rows: vec![row],
    };
    emit(&sweep_csv(&res), out, |p| write_sweep_csv(&res, p))?;
    if let Some(path) = trace {
        let run = match mode {
            Mode::Distributed => run_distributed(&s, &cfg)?,
            Mode::EuraBasic => run_distributed_basic(&s, &cfg)?,
            Mode::Centralized => return Err(Failure::Usage("--trace needs a distributed mode".into())),
        };
        write_trace_csv(&run.eura.trace, path)?;
    }
    let row = &res.rows[0];
    if !row.status.is_converged() {
        return Err(Failure::NotConverged(format!(
            "{} run at R = {} ended with status {} after {} iterations",
            mode.as_str(),
            row.budget,
            row.status.label(),
            row.iterations
        )));
    }
    Ok(())
}

fn sweep(file: &Path, spec: SweepSpec, out: Option<&Path>) -> Result<(), Failure> {
    let file = load(file)?;
    let res = run_sweep(&file, &spec)?;
    emit(&sweep_csv(&res), out, |p| write_sweep_csv(&res, p))
}

fn verify(scenario: &Path, budget: Option<f64>, sim: &SimArgs) -> Result<(), Failure> {
    let file = load(scenario)?;
    let s = file.to_scenario(budget)?;
    let (central, kkt) = centralized_allocate(&s)?;
    let dist = run_distributed(&s, &sim.config())?;
    println!("R = {}", s.budget());
    println!("centralized price = {}", central.shadow_price);
    println!(
        "centralized KKT residuals: stationarity = {:e}, budget = {:e}, complementary slackness = {:e}",
        kkt.stationarity_residual, kkt.budget_residual, kkt.complementary_slackness
    );
    let Some(alloc) = dist.allocation else {
        return Err(Failure::NotConverged(format!(
            "distributed run ended with status {} after {} iterations",
            dist.eura.status.as_str(),
            dist.eura.iterations
        )));
    };
    let dkkt = verify_kkt(&s, &alloc)?;
    println!("distributed price = {} after {} iterations", alloc.shadow_price, dist.eura.iterations);
    println!(
        "distributed KKT residuals: stationarity = {:e}, budget = {:e}, complementary slackness = {:e}",
        dkkt.stationarity_residual, dkkt.budget_residual, dkkt.complementary_slackness
    );
    println!("max rate discrepancy = {:e}", max_discrepancy(&central, &alloc));
    Ok(())
}

fn max_discrepancy(a: &Allocation, b: &Allocation) -> f64 {
    a.rates
        .iter()
        .flatten()
        .zip(b.rates.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Allocate { scenario, budget, mode, sim, out, trace } => {
            allocate(scenario, *budget, *mode, sim, out.as_deref(), trace.as_deref())
        }
        Command::Sweep { scenario, r_min, r_max, r_step, mode, sim, out } => {
            let spec = SweepSpec {
                r_min: *r_min,
                r_max: *r_max,
                r_step: *r_step,
                mode: *mode,
                sim: SimConfig { record_trace: false, ..sim.config() },
            };
            sweep(scenario, spec, out.as_deref())
        }
        Command::Verify { scenario, budget, sim } => verify(scenario, *budget, sim),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::NotConverged(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_flag() {
        assert_eq!(parse_decay("none").unwrap(), DecaySpec::None);
        assert_eq!(parse_decay("exp:10,100").unwrap(), DecaySpec::DEFAULT_EXPONENTIAL);
        assert_eq!(parse_decay("rational:10").unwrap(), DecaySpec::DEFAULT_RATIONAL);
        assert!(parse_decay("exp:10").is_err());
        assert!(parse_decay("linear:1").is_err());
    }
}
