use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fhlab_cli::{bundled_scenario, run, RunOptions, Scenario, Status, BUNDLED_SCENARIOS};

#[derive(Parser)]
#[command(name = "fhlab", version, about = "Fractional heat operator laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment declared in the scenario.
    Run(Common),
    /// Multiplier, subordination and Neumann-trace evaluations of H^s u.
    OpCheck(Common),
    /// Neumann constant, Poisson formula and PDE residual of the extension.
    ExtendCheck(Common),
    /// Frequency curve on a list of radii.
    Frequency(Common),
    /// Almgren rescalings and the power-law fit of the height.
    Blowup(Common),
    /// Harnack quotients over parabolic cylinders.
    Harnack(Common),
    /// Vanishing order over shrinking backward cylinders.
    VanishingOrder(Common),
    /// Smallest constant making the adjusted frequency monotone.
    #[command(name = "calibrate-C")]
    CalibrateC(Common),
    /// List the scenarios bundled with the binary.
    Scenarios,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
    config: Option<PathBuf>,
    /// Name of a bundled scenario.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, default_value = "fhlab-out")]
    out_dir: PathBuf,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, env = "FHLAB_THREADS")]
    threads: Option<usize>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Multiplies every tolerance and slack.
    #[arg(long, default_value_t = 1.0)]
    tolerance_scale: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (only, common) = match cli.command {
        Command::Run(c) => (None, c),
        Command::OpCheck(c) => (Some("op-check"), c),
        Command::ExtendCheck(c) => (Some("extend-check"), c),
        Command::Frequency(c) => (Some("frequency"), c),
        Command::Blowup(c) => (Some("blowup"), c),
        Command::Harnack(c) => (Some("harnack"), c),
        Command::VanishingOrder(c) => (Some("vanishing-order"), c),
        Command::CalibrateC(c) => (Some("calibrate-C"), c),
        Command::Scenarios => {
            for (name, _) in BUNDLED_SCENARIOS {
                println!("{name}");
            }
            return ExitCode::SUCCESS;
        }
    };
    if !(common.tolerance_scale > 0.0 && common.tolerance_scale.is_finite()) {
        eprintln!("config error, field `--tolerance-scale`: must be positive, got {}", common.tolerance_scale);
        return ExitCode::from(2);
    }
    let (parsed, base_dir) = match (&common.config, &common.scenario) {
        (Some(path), _) => {
            (Scenario::from_path(path), path.parent().map(PathBuf::from).unwrap_or_default())
        }
        (None, Some(name)) => match bundled_scenario(name) {
            Some(text) => (Scenario::parse(text), PathBuf::from(".")),
            None => {
                eprintln!("config error, field `--scenario`: no bundled scenario named `{name}`");
                return ExitCode::from(2);
            }
        },
        (None, None) => unreachable!("clap requires one of --config and --scenario"),
    };
    let scenario = match parsed {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let threads = match common.threads {
        Some(0) => {
            eprintln!("config error, field `--threads`: must be at least 1");
            return ExitCode::from(2);
        }
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let opts = RunOptions {
        out_dir: common.out_dir,
        threads,
        seed: common.seed,
        tolerance_scale: common.tolerance_scale,
        only: only.map(String::from),
        base_dir,
    };
    let report = match run(&scenario, &opts) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    for e in &report.experiments {
        let status = match e.status {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
            Status::ReportOnly => "report",
            Status::Error => "ERROR",
        };
        println!("[{status}] {} -> {}", e.kind, e.outputs.join(", "));
        for line in &e.summary {
            println!("    {line}");
        }
    }
    println!("outputs in {}", opts.out_dir.display());
    if report.failed() {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
