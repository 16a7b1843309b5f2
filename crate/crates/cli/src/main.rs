use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use plugvod::harness::{
    analyze, compare_runs, read_run_dir, resolve_scenario, write_analysis_dir, write_run_dir,
    ScenarioConfig, Summary, DEFAULT_TAIL,
};
use plugvod::sim::{self, MetricsLog};

#[derive(Parser)]
#[command(name = "plugvod", version, about = "Helper-assisted P2P VoD simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write metrics.csv and summary.txt.
    Run(RunArgs),
    /// Compare tail-mean server load of two run directories.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TAIL)]
        tail: f64,
    },
    /// Enumerate a tiny scenario's configurations and check the chain's
    /// stationary behavior.
    Analyze {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, env = "PLUGVOD_OUT_DIR")]
        out: PathBuf,
    },
    /// Parse and check a scenario file without running it.
    Validate {
        #[arg(long)]
        scenario: String,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file, or the name of a bundled scenario.
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, env = "PLUGVOD_OUT_DIR")]
    out: PathBuf,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    no_topology_update: bool,
    #[arg(long)]
    no_churn: bool,
    /// Independent seeds `seed..seed+n`, one subdirectory each.
    #[arg(long, default_value_t = 1)]
    replications: u64,
    /// Also write per-helper helpers.csv.
    #[arg(long)]
    helpers: bool,
    #[arg(long, default_value_t = DEFAULT_TAIL)]
    tail: f64,
}

fn scenario_for(args: &RunArgs) -> Result<ScenarioConfig> {
    let mut scenario = resolve_scenario(&args.scenario)?;
    if let Some(h) = args.horizon {
        scenario.horizon_s = h;
    }
    if args.no_topology_update {
        scenario.topology_update = false;
    }
    if args.no_churn {
        scenario.churn = None;
    }
    scenario.validate()?;
    Ok(scenario)
}

fn run(args: RunArgs) -> Result<()> {
    if args.replications == 0 {
        bail!("--replications must be at least 1");
    }
    let scenario = scenario_for(&args)?;
    let seeds: Vec<u64> = (0..args.replications).map(|i| args.seed + i).collect();
    let logs: Vec<(u64, MetricsLog)> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let scenario = &scenario;
                scope.spawn(move || sim::run(scenario, seed).map(|log| (seed, log)))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect::<plugvod::Result<Vec<_>>>()
    })?;

    let mut written: Vec<PathBuf> = Vec::new();
    for (seed, log) in &logs {
        let dir = if args.replications == 1 {
            args.out.clone()
        } else {
            args.out.join(format!("seed-{seed}"))
        };
        match write_run_dir(&dir, log, args.helpers, args.tail) {
            Ok(files) => written.extend(files),
            Err(e) => {
                for f in &written {
                    let _ = fs::remove_file(f);
                }
                return Err(e).with_context(|| format!("writing {}", dir.display()));
            }
        }
        let summary = Summary::of(log, args.tail)?;
        println!(
            "seed {seed}: mean server load {:.1} kbps, deficit {:.1} kbps, gap {:.2}% -> {}",
            summary.mean_server_load_kbps,
            summary.mean_intrinsic_deficit_kbps,
            summary.gap_pct,
            dir.display()
        );
    }
    Ok(())
}

fn compare(a: &Path, b: &Path, tail: f64) -> Result<()> {
    let log_a = read_run_dir(a).with_context(|| format!("reading {}", a.display()))?;
    let log_b = read_run_dir(b).with_context(|| format!("reading {}", b.display()))?;
    let c = compare_runs(&log_a, &log_b, tail)?;
    print!(
        "{}",
        c.render(&a.display().to_string(), &b.display().to_string())
    );
    Ok(())
}

fn analyze_cmd(scenario: &str, seed: u64, out: &Path) -> Result<()> {
    let scenario = resolve_scenario(scenario)?;
    let report = analyze(&scenario, seed)?;
    write_analysis_dir(out, &report).with_context(|| format!("writing {}", out.display()))?;
    print!("{}", report.render());
    Ok(())
}

fn validate(scenario: &str) -> Result<()> {
    let s = resolve_scenario(scenario)?;
    println!(
        "{}: ok ({} users, {} helpers, {} videos, horizon {} s)",
        s.name,
        s.users.count,
        s.helpers.count,
        s.catalog.videos.len(),
        s.horizon_s
    );
    println!("config digest: {}", s.digest());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Compare { a, b, tail } => compare(&a, &b, tail),
        Command::Analyze {
            scenario,
            seed,
            out,
        } => analyze_cmd(&scenario, seed, &out),
        Command::Validate { scenario } => validate(&scenario),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
