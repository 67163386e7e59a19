//! `delpolar`: construction, simulation and oracle runs for polar codes on
//! the binary deletion channel.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use delpolar::channels::DeletionParams;
use delpolar::construction::{
    estimate_index_stats, estimate_information_rate, polarization_profile, profile_to_csv,
    select_information_set, stats_to_csv, CodeConfig, ProcessSpec, RateMethod, Selection, StatsOptions,
};
use delpolar::hmm_input::ProcessFile;
use delpolar::oracle::{run_oracle_suite, OracleOptions};
use delpolar::scheme::{run_experiment, Timings};
use delpolar::{Error, Execution};

#[derive(Parser)]
#[command(name = "delpolar", version, about = "Polar codes for the binary deletion channel")]
struct Cli {
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate per-index statistics and pick an information set.
    Construct(ConstructArgs),
    /// Encode, transmit, segment and decode; emit a JSON report.
    Run(RunArgs),
    /// Fractions of low, mid and high TDC entropies per depth, as CSV.
    Polarize(PolarizeArgs),
    /// Exhaustive trellis checks against direct enumeration.
    Oracle(OracleArgs),
    /// Information rate of an input process over the deletion channel.
    Rate(RateArgs),
}

#[derive(Args)]
struct ChannelArgs {
    /// `uniform`, `markov:<p_same>` or a process JSON file.
    #[arg(long, default_value = "uniform")]
    process: String,
    #[arg(long)]
    delta: f64,
}

#[derive(Args)]
struct ConstructArgs {
    #[command(flatten)]
    channel: ChannelArgs,
    #[arg(long)]
    n: u32,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    nu: f64,
    /// Defaults to nu / 2.
    #[arg(long)]
    nu_prime: Option<f64>,
    /// Defaults to (1 - nu''/nu) / 4.
    #[arg(long)]
    xi: Option<f64>,
    /// Block depth; sets nu = n0 / n.
    #[arg(long)]
    n0: Option<u32>,
    #[arg(long)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of indices carrying payload.
    #[arg(long, conflicts_with = "threshold")]
    rate: Option<f64>,
    /// Select indices with both Z and K below this value.
    #[arg(long)]
    threshold: Option<f64>,
    /// Seed of the common randomness shared by encoder and decoder.
    #[arg(long, default_value_t = 0)]
    common_seed: u64,
    /// Skip the untrimmed and state-informed entropies.
    #[arg(long)]
    tdc_only: bool,
    /// Directory receiving stats.csv and config.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Configuration written by `construct`.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Record wall time (makes the report machine dependent).
    #[arg(long)]
    timings: bool,
    /// Omit per-trial records from the report.
    #[arg(long)]
    summary_only: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PolarizeArgs {
    #[command(flatten)]
    channel: ChannelArgs,
    /// Comma-separated depths.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<u32>,
    #[arg(long)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 8)]
    max_len: usize,
    #[arg(long, default_value_t = 0.2)]
    delta: f64,
    /// Scale one trellis edge weight; the suite must then fail.
    #[arg(long, hide = true)]
    perturb: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RateMode {
    Exact,
    Mc,
}

#[derive(Args)]
struct RateArgs {
    #[command(flatten)]
    channel: ChannelArgs,
    /// Input block length N.
    #[arg(long)]
    len: usize,
    #[arg(long, value_enum, default_value = "mc")]
    method: RateMode,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    bootstrap: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential { Execution::Sequential } else { Execution::default() };
    match dispatch(cli.command, exec) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let invalid = e.chain().any(|c| {
                matches!(
                    c.downcast_ref::<Error>(),
                    Some(Error::InvalidConfig(_) | Error::InvalidArgument(_) | Error::InvalidProcess(_))
                )
            });
            ExitCode::from(if invalid { 2 } else { 1 })
        }
    }
}

fn dispatch(command: Command, exec: Execution) -> Result<ExitCode> {
    match command {
        Command::Construct(a) => construct(a, exec),
        Command::Run(a) => run(a, exec),
        Command::Polarize(a) => polarize(a, exec),
        Command::Oracle(a) => oracle(a),
        Command::Rate(a) => rate(a, exec),
    }
}

fn process_spec(arg: &str) -> Result<ProcessSpec> {
    if let Some(spec) = ProcessSpec::from_keyword(arg) {
        return Ok(spec?);
    }
    let text = fs::read_to_string(arg).with_context(|| format!("reading process file {arg}"))?;
    let process: ProcessFile =
        serde_json::from_str(&text).map_err(|e| Error::InvalidProcess(format!("{arg}: {e}")))?;
    let spec = ProcessSpec::Inline { process };
    spec.build()?;
    Ok(spec)
}

fn params(delta: f64) -> Result<DeletionParams> {
    Ok(DeletionParams::new(delta)?)
}

fn positive_trials(trials: u64) -> Result<()> {
    if trials == 0 {
        return Err(Error::InvalidArgument("--trials must be at least 1".into()).into());
    }
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn construct(a: ConstructArgs, exec: Execution) -> Result<ExitCode> {
    positive_trials(a.trials)?;
    let spec = process_spec(&a.channel.process)?;
    let mut cfg = CodeConfig::new(a.n, a.nu, a.channel.delta, spec)?;
    if let Some(np) = a.nu_prime {
        cfg.nu_prime = np;
        cfg.xi = delpolar::construction::default_xi(cfg.nu, np);
    }
    if let Some(n0) = a.n0 {
        cfg = cfg.with_block_depth(n0)?;
        if a.nu_prime.is_none() {
            cfg.nu_prime = cfg.nu / 2.0;
        }
        cfg.xi = delpolar::construction::default_xi(cfg.nu, cfg.nu_prime);
    }
    if let Some(xi) = a.xi {
        cfg.xi = xi;
    }
    cfg.common_seed = a.common_seed;
    for w in cfg.validate()? {
        eprintln!("warning: {w}");
    }
    let opts = StatsOptions { trials: a.trials, seed: a.seed, exec, untrimmed: !a.tdc_only, state_informed: !a.tdc_only };
    let stats = estimate_index_stats(&cfg, &opts)?;
    let selection = match (a.rate, a.threshold) {
        (_, Some(eps)) => Selection::Threshold(eps),
        (Some(r), None) => Selection::Rate(r),
        (None, None) => Selection::Rate(0.0),
    };
    cfg.information_set = select_information_set(&stats, selection)?;
    cfg.target_rate = match selection {
        Selection::Rate(r) => r,
        Selection::Threshold(_) => cfg.rate(),
    };
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    fs::write(a.out.join("stats.csv"), stats_to_csv(&stats)?)?;
    fs::write(a.out.join("config.json"), serde_json::to_string_pretty(&cfg)? + "\n")?;
    eprintln!(
        "selected {} of {} indices; wrote {}",
        cfg.information_set.len(),
        cfg.len(),
        a.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn run(a: RunArgs, exec: Execution) -> Result<ExitCode> {
    positive_trials(a.trials)?;
    let text = fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let cfg: CodeConfig =
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", a.config.display())))?;
    let start = Instant::now();
    let mut report = run_experiment(&cfg, a.trials, a.seed, exec)?;
    if a.timings {
        report.timings = Some(Timings { total_seconds: start.elapsed().as_secs_f64() });
    }
    if a.summary_only {
        report.records.clear();
    }
    let agg = &report.aggregates;
    eprintln!(
        "FER {:.6} [{:.6}, {:.6}] over {} trials, BER {:.3e}, segmentation failures {}",
        agg.fer, agg.fer_interval.0, agg.fer_interval.1, report.trials, agg.ber, agg.segmentation_failures
    );
    emit(a.out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    Ok(ExitCode::SUCCESS)
}

fn polarize(a: PolarizeArgs, exec: Execution) -> Result<ExitCode> {
    positive_trials(a.trials)?;
    let p = process_spec(&a.channel.process)?.build()?;
    let mut opts = StatsOptions::new(a.trials, a.seed);
    opts.exec = exec;
    let rows = polarization_profile(&p, params(a.channel.delta)?, a.n.iter().copied(), a.eps, &opts)?;
    emit(a.out.as_deref(), &profile_to_csv(&rows)?)?;
    Ok(ExitCode::SUCCESS)
}

fn oracle(a: OracleArgs) -> Result<ExitCode> {
    let start = Instant::now();
    let report = run_oracle_suite(&OracleOptions { max_len: a.max_len, delta: a.delta, perturb: a.perturb })?;
    for c in &report.checks {
        println!(
            "{:<32} cases {:>9}  max rel dev {:.3e}  {}",
            c.name,
            c.cases,
            c.max_rel_dev,
            if c.passed() { "pass" } else { "FAIL" }
        );
    }
    eprintln!("oracle suite finished in {:.1?}", start.elapsed());
    if !report.passed() {
        bail!("oracle suite failed");
    }
    Ok(ExitCode::SUCCESS)
}

fn rate(a: RateArgs, exec: Execution) -> Result<ExitCode> {
    let p = process_spec(&a.channel.process)?.build()?;
    let method = match a.method {
        RateMode::Exact => RateMethod::Exact,
        RateMode::Mc => {
            positive_trials(a.trials)?;
            RateMethod::MonteCarlo { trials: a.trials, seed: a.seed, bootstrap: a.bootstrap, exec }
        }
    };
    let est = estimate_information_rate(&p, params(a.channel.delta)?, a.len, method)?;
    emit(a.out.as_deref(), &(serde_json::to_string_pretty(&est)? + "\n"))?;
    Ok(ExitCode::SUCCESS)
}
