//! `grwsim`: run scenarios, regenerate oracle values, check acceptance
//! criteria, and summarize result directories.

mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use grwsim_core::acceptance::{self, AcceptanceSettings, BUNDLED_REFERENCE, CRITERIA};
use grwsim_core::ensemble::{run_ensemble, with_threads};
use grwsim_core::oracle::{FlashSequenceQuery, ReferenceValues};
use grwsim_core::scenario::{parse_ontology, run_scenario_detailed, ScenarioConfig};
use grwsim_core::{GrwError, RngStream};

use output::{density_csv, events_jsonl, flashes_csv, read_summary_csv, write_atomic};

#[derive(Parser)]
#[command(name = "grwsim", version, about = "GRW collapse Monte Carlo with flash and matter-density ontologies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an ensemble of a scenario and write its outputs.
    Run(RunArgs),
    /// Regenerate the oracle reference values.
    Oracle(OracleArgs),
    /// Run the acceptance criteria.
    Check(CheckArgs),
    /// Summarize a results directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct Threads {
    /// Worker threads; results do not depend on this.
    #[arg(long, env = "GRWSIM_THREADS")]
    threads: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    trajectories: usize,
    #[command(flatten)]
    threads: Threads,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Overrides the config's ontology.
    #[arg(long, value_parser = ["grw0", "grwf", "grwm"])]
    ontology: Option<String>,
    /// Trajectories whose event log, flashes and densities are written.
    #[arg(long, default_value_t = 1)]
    logged: usize,
    /// Sampling times at which to write matter density; default the
    /// first and last.
    #[arg(long, value_delimiter = ',')]
    density_times: Vec<f64>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value = "reference_values.json")]
    out: PathBuf,
    #[arg(long, default_value_t = 1_000_000)]
    sequences: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CheckArgs {
    /// Reference values; the bundled file when omitted.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    threads: Threads,
    /// Criteria to run; all when omitted.
    #[arg(long, value_delimiter = ',')]
    criteria: Vec<u8>,
    /// Directory for acceptance.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report time budgets without failing on them.
    #[arg(long)]
    no_budgets: bool,
}

#[derive(Args)]
struct ReportArgs {
    dir: PathBuf,
}

/// Why a command did not succeed, mapped to the exit code.
enum Failure {
    Statistical(String),
    Usage(anyhow::Error),
    Numerical(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<GrwError>() {
            Some(g) if g.is_numerical() => Failure::Numerical(e),
            Some(GrwError::Inconclusive(m)) => Failure::Statistical(m.clone()),
            _ => Failure::Usage(e),
        }
    }
}

impl From<GrwError> for Failure {
    fn from(e: GrwError) -> Self {
        anyhow::Error::new(e).into()
    }
}

fn load_config(args: &RunArgs) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let mut config =
        ScenarioConfig::parse(&text).map_err(|e| anyhow::Error::new(e).context(args.config.display().to_string()))?;
    if let Some(o) = &args.ontology {
        config.ontology = parse_ontology(o).expect("clap restricts the value");
    }
    Ok(config)
}

fn time_label(t: f64) -> String {
    format!("{t:.6}")
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let config = load_config(&args)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let summary = with_threads(args.threads.threads, || run_ensemble(&config, args.trajectories, args.seed))??;
    let out = &args.out;
    write_atomic(&out.join("scenario.cfg"), config.to_config_text().as_bytes())?;
    write_atomic(&out.join("summary.csv"), summary.to_csv().as_bytes())?;
    let json = serde_json::to_string_pretty(&summary).context("serializing summary")?;
    write_atomic(&out.join("summary.json"), json.as_bytes())?;

    // The ensemble may have extended the horizon; log with the same one.
    let logged_config = ScenarioConfig {
        total_time: Some(summary.horizon),
        ..config
    };
    for i in 0..args.logged.min(args.trajectories) as u64 {
        let (_, detail) = run_scenario_detailed(&logged_config, RngStream::new(args.seed, i), true)?;
        let detail = detail.expect("detail requested");
        write_atomic(&out.join(format!("trajectory_{i}.jsonl")), events_jsonl(&detail.events)?.as_bytes())?;
        let (past, own): (Vec<_>, Vec<_>) = detail.flashes.iter().partition(|f| f.time < 0.0);
        write_atomic(&out.join(format!("flashes_{i}.csv")), flashes_csv(&own).as_bytes())?;
        if !past.is_empty() {
            write_atomic(&out.join(format!("past_flashes_{i}.csv")), flashes_csv(&past).as_bytes())?;
        }
        let wanted: Vec<f64> = if args.density_times.is_empty() {
            vec![detail.sample_times[0], *detail.sample_times.last().expect("nonempty")]
        } else {
            args.density_times.clone()
        };
        for t in wanted {
            let j = detail
                .sample_times
                .iter()
                .position(|s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
                .ok_or_else(|| anyhow::anyhow!("density time {t} is not a sampling time"))?;
            let name = format!("density_{i}_t{}.csv", time_label(detail.sample_times[j]));
            write_atomic(&out.join(name), density_csv(&detail.densities[j]).as_bytes())?;
        }
    }

    for r in &summary.records {
        println!("{} {}", if r.pass { "PASS" } else { "FAIL" }, r.csv_row());
    }
    if summary.passed() {
        Ok(())
    } else {
        Err(Failure::Statistical("some statistics failed".into()))
    }
}

fn oracle(args: OracleArgs) -> Result<(), Failure> {
    let defaults = FlashSequenceQuery::default();
    let query = FlashSequenceQuery {
        sequences: args.sequences,
        seed: args.seed.unwrap_or(defaults.seed),
        ..defaults
    };
    let values = ReferenceValues::generate(&query)?;
    write_atomic(&args.out, (values.to_json() + "\n").as_bytes())?;
    println!(
        "p*(inside) = {} +/- {} over {} sequences -> {}",
        values.flash_verdicts.inside,
        values.flash_verdicts.se,
        values.flash_verdicts.sequences,
        args.out.display()
    );
    Ok(())
}

fn check(args: CheckArgs) -> Result<(), Failure> {
    let reference = match &args.reference {
        Some(p) => ReferenceValues::from_json(
            &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )?,
        None => ReferenceValues::from_json(BUNDLED_REFERENCE)?,
    };
    let defaults = AcceptanceSettings::default();
    let settings = AcceptanceSettings {
        master_seed: args.seed.unwrap_or(defaults.master_seed),
        threads: args.threads.threads,
        enforce_budgets: !args.no_budgets,
        ..defaults
    };
    let ids: Vec<u8> = if args.criteria.is_empty() {
        CRITERIA.iter().map(|c| c.0).collect()
    } else {
        args.criteria.clone()
    };
    if let Some(bad) = ids.iter().find(|id| !CRITERIA.iter().any(|c| c.0 == **id)) {
        return Err(Failure::Usage(anyhow::anyhow!("no criterion {bad}")));
    }
    let mut outcomes = Vec::new();
    for id in ids {
        let o = acceptance::run_criterion(id, &settings, &reference);
        println!("{}", o.line());
        outcomes.push(o);
    }
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_atomic(&dir.join("acceptance.csv"), acceptance::outcomes_csv(&outcomes).as_bytes())?;
    }
    let failed: Vec<u8> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Statistical(format!("criteria failed: {failed:?}")))
    }
}

fn report(args: ReportArgs) -> Result<(), Failure> {
    let mut failed = 0;
    let mut found = false;
    for name in ["summary.csv", "acceptance.csv"] {
        let path: &Path = &args.dir.join(name);
        if !path.exists() {
            continue;
        }
        found = true;
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let rows = read_summary_csv(&text).with_context(|| path.display().to_string())?;
        println!("{}", path.display());
        println!("  {:<36} {:>14} {:>12} {:>14} {:>8}  pass", "statistic", "estimate", "se", "target", "z");
        for r in &rows {
            println!(
                "  {:<36} {:>14} {:>12} {:>14} {:>8}  {}",
                r.statistic,
                short(&r.estimate),
                short(&r.se),
                short(&r.target),
                short(&r.z),
                r.pass
            );
        }
        failed += rows.iter().filter(|r| !r.pass).count();
    }
    if !found {
        return Err(Failure::Usage(anyhow::anyhow!(
            "{} holds neither summary.csv nor acceptance.csv",
            args.dir.display()
        )));
    }
    let flash_files = fs::read_dir(&args.dir)
        .with_context(|| format!("listing {}", args.dir.display()))?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with("flashes_"))
        .count();
    println!("{flash_files} flash log(s)");
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Statistical(format!("{failed} statistic(s) failed")))
    }
}

fn short(v: &str) -> String {
    v.parse::<f64>().map_or_else(|_| v.to_string(), |x| format!("{x:.6}"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Oracle(a) => oracle(a),
        Command::Check(a) => check(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Statistical(m)) => {
            eprintln!("statistical failure: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("numerical error: {e:#}");
            ExitCode::from(3)
        }
    }
}
