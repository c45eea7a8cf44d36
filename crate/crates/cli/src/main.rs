use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use robust_power::experiment::{run_scenario, sweep_surface};
use robust_power::scenario::{preset, Scenario, UtilityName, PRESETS};
use robust_power::verify::{verify, Status};

/// CVaR-constrained power allocation simulator.
#[derive(Parser)]
#[command(name = "robust-power", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its tables.
    Run(RunArgs),
    /// Run every point of the scenario's phi grid and write surface.txt.
    Sweep(RunArgs),
    /// Run the self-check suite and check any tables in the directory.
    Verify {
        #[arg(long)]
        out: PathBuf,
    },
    /// Built-in scenarios.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Preset name or path to a scenario file.
    scenario: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iters: Option<usize>,
    /// Override the scenario's utility.
    #[arg(long, value_enum)]
    utility: Option<Utility>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Utility {
    Sumrate,
    ProportionalFairness,
}

#[derive(Subcommand)]
enum PresetAction {
    /// List preset names.
    List,
    /// Print a preset as a scenario file.
    Show { name: String },
}

fn load(args: &RunArgs) -> Result<Scenario> {
    let mut s = Scenario::resolve(&args.scenario)
        .with_context(|| format!("loading scenario {}", args.scenario))?;
    if let Some(seed) = args.seed {
        s = s.with_seed(seed);
    }
    if let Some(iters) = args.iters {
        s = s.with_iterations(iters);
    }
    if let Some(u) = args.utility {
        s = s.with_utility(match u {
            Utility::Sumrate => UtilityName::Sumrate,
            Utility::ProportionalFairness => UtilityName::ProportionalFairness,
        });
    }
    s.validate()?;
    Ok(s)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(args) => {
            let s = load(&args)?;
            info!("running {} for {} iterations", s.name, s.solver.iterations);
            let out = run_scenario(&s, &args.out)?;
            let sum = &out.summary;
            println!(
                "{}: rate {:.6}, sum cvar {:.4} (p0 {}), mu {:.6}",
                sum.name, sum.rate, sum.sum_cvar_p, sum.p0, sum.mu
            );
            Ok(true)
        }
        Command::Sweep(args) => {
            let s = load(&args)?;
            if s.sweep.is_none() {
                bail!("scenario {} has no [sweep] grid", s.name);
            }
            let surface = sweep_surface(&s, &args.out)?;
            for p in &surface {
                println!("{} {} {:.6}", p.phi_low, p.phi_high, p.rate);
            }
            Ok(true)
        }
        Command::Verify { out } => {
            let report = verify(&out)?;
            for c in &report.checks {
                let tag = match c.status {
                    Status::Pass => "PASS",
                    Status::Fail => "FAIL",
                    Status::Skipped => "SKIP",
                };
                println!("{tag} {}: {}", c.name, c.detail);
            }
            Ok(report.passed)
        }
        Command::Presets { action } => {
            match action {
                PresetAction::List => {
                    for (name, about) in PRESETS {
                        println!("{name}\t{about}");
                    }
                }
                PresetAction::Show { name } => match preset(&name) {
                    Some(s) => print!("{}", s.to_toml()),
                    None => bail!("unknown preset {name}"),
                },
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
