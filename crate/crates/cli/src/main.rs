use std::fs::{self, File};
use std::io::BufWriter;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use log::{info, LevelFilter};
use serde::Serialize;

use safenav::sim::{monte_carlo, run_scenario, BoxStats, MonteCarloResult, OutcomeCounts, ScenarioConfig};
use safenav::verify::{run_suite, Suite};
use safenav::Error;

const EXIT_OK: u8 = 0;
const EXIT_FAILURE: u8 = 1;
const EXIT_COLLISION: u8 = 2;
const EXIT_PRECONDITION: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "safenav", version, about = "Safe navigation from periodic range scans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write trajectory.csv and metrics.json.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Recorded with the run; the closed loop itself is deterministic.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Randomized moving-obstacle sweep; writes table2.json and boxstats.json.
    Montecarlo {
        #[arg(long)]
        scenario: PathBuf,
        /// Obstacle counts, `a..b` (inclusive) or a single count.
        #[arg(long, value_parser = parse_obstacles)]
        obstacles: RangeInclusive<usize>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        #[arg(long, default_value_t = default_jobs(), value_parser = clap::value_parser!(u64).range(1..))]
        jobs: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a randomized property suite.
    Verify {
        #[arg(long, value_parser = parse_suite)]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn default_jobs() -> u64 {
    std::thread::available_parallelism().map_or(1, |n| n.get() as u64)
}

fn parse_obstacles(s: &str) -> Result<RangeInclusive<usize>, String> {
    let num = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    let range = match s.split_once("..") {
        Some((a, b)) => num(a)?..=num(b.strip_prefix('=').unwrap_or(b))?,
        None => num(s)?..=num(s)?,
    };
    if range.is_empty() {
        return Err(format!("empty obstacle range {s:?}"));
    }
    Ok(range)
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn init_logging() {
    let level = match std::env::var("SAFENAV_LOG").as_deref() {
        Ok("quiet") => LevelFilter::Off,
        Ok("debug") => LevelFilter::Debug,
        _ => LevelFilter::Info,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .format_target(false)
        .init();
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> safenav::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    Ok(())
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Precondition { .. } => EXIT_PRECONDITION,
        _ => EXIT_FAILURE,
    }
}

fn cmd_run(scenario: &Path, out: &Path, seed: Option<u64>) -> safenav::Result<u8> {
    let mut cfg = ScenarioConfig::load(scenario)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    info!("running {} ({} s)", scenario.display(), cfg.duration);
    let run = run_scenario(&cfg)?;
    fs::create_dir_all(out)?;
    run.log.write_csv(BufWriter::new(File::create(out.join("trajectory.csv"))?))?;
    write_json(&out.join("metrics.json"), &run.metrics)?;
    let m = &run.metrics;
    println!("settling_time_s  {}", m.settling_time_s);
    println!("rms_u            {:?}", m.rms_u);
    println!("min_psi0         {:.6e}", m.min_psi0);
    println!("min_psi1         {:.6e}", m.min_psi1);
    println!("min_clearance    {:.6e}", m.min_clearance);
    println!("collided         {}", m.collided);
    println!("reached          {}", m.reached);
    if run.assumption_warnings > 0 {
        log::warn!("{} control steps clamped a vanishing input gain", run.assumption_warnings);
    }
    if run.saturated_steps > 0 {
        info!("tilt limit active on {} integrator steps", run.saturated_steps);
    }
    Ok(if m.collided { EXIT_COLLISION } else { EXIT_OK })
}

#[derive(Serialize)]
struct Table2Row {
    n_obstacles: usize,
    percent_safe: f64,
    percent_successful: f64,
    counts: OutcomeCounts,
}

#[derive(Serialize)]
struct Table2 {
    seed: u64,
    trials: usize,
    rows: Vec<Table2Row>,
}

#[derive(Serialize)]
struct BoxRow {
    n_obstacles: usize,
    min_psi0: Option<BoxStats>,
    settling_time_s: Option<BoxStats>,
    rms_u: Vec<Option<BoxStats>>,
}

#[derive(Serialize)]
struct BoxTable {
    seed: u64,
    trials: usize,
    boxstats: Vec<BoxRow>,
}

fn cmd_montecarlo(
    scenario: &Path,
    obstacles: RangeInclusive<usize>,
    trials: usize,
    jobs: usize,
    seed: Option<u64>,
    out: &Path,
) -> safenav::Result<u8> {
    let cfg = ScenarioConfig::load(scenario)?;
    let seed = seed.unwrap_or(cfg.seed);
    let base = cfg.load_world()?;
    let mut results: Vec<MonteCarloResult> = Vec::new();
    for n in obstacles {
        let r = monte_carlo(&cfg, &base, n, trials, seed, jobs)?;
        println!(
            "n_obstacles {n:>3}  safe {:>6.2}%  successful {:>6.2}%",
            r.percent_safe, r.percent_successful
        );
        results.push(r);
    }
    fs::create_dir_all(out)?;
    let table = Table2 {
        seed,
        trials,
        rows: results
            .iter()
            .map(|r| Table2Row {
                n_obstacles: r.n_obstacles,
                percent_safe: r.percent_safe,
                percent_successful: r.percent_successful,
                counts: r.counts.clone(),
            })
            .collect(),
    };
    write_json(&out.join("table2.json"), &table)?;
    let boxes = BoxTable {
        seed,
        trials,
        boxstats: results
            .into_iter()
            .map(|r| BoxRow {
                n_obstacles: r.n_obstacles,
                min_psi0: r.min_psi0,
                settling_time_s: r.settling_time_s,
                rms_u: r.rms_u,
            })
            .collect(),
    };
    write_json(&out.join("boxstats.json"), &boxes)?;
    Ok(EXIT_OK)
}

fn cmd_verify(suite: Suite, seed: u64) -> u8 {
    let reports = run_suite(suite, seed);
    for r in &reports {
        println!("{r}");
    }
    let failed = reports.iter().filter(|r| !r.passed()).count();
    println!("{} passed, {failed} failed", reports.len() - failed);
    if failed == 0 {
        EXIT_OK
    } else {
        EXIT_FAILURE
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_FAILURE,
            });
        }
    };
    init_logging();
    let result = match cli.command {
        Command::Run { scenario, out, seed } => cmd_run(&scenario, &out, seed),
        Command::Montecarlo {
            scenario,
            obstacles,
            trials,
            jobs,
            seed,
            out,
        } => cmd_montecarlo(&scenario, obstacles, trials as usize, jobs as usize, seed, &out),
        Command::Verify { suite, seed } => Ok(cmd_verify(suite, seed)),
    };
    ExitCode::from(match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    })
}
