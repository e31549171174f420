//! Command-line entry point: one subcommand per verification suite, plus `report`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wave4d::experiment::summary::{discover, render, Summary};
use wave4d::experiment::{run_suite, ExperimentConfig, ProfileChoice, RunError, Suite};

#[derive(Parser)]
#[command(name = "wave4d", version, about = "Verification suites for multi-soliton dynamics of the 4D cubic wave equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root (overrides WAVE4D_OUT and the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the resolved config and exit.
    #[arg(long, global = true)]
    print_config: bool,
}

#[derive(Subcommand)]
enum StatesAction {
    /// Residuals, Kelvin identity, decay fits, kernel generators and cancellation.
    Verify {
        #[arg(long)]
        profile: Option<ProfileChoice>,
    },
}

#[derive(Subcommand)]
enum Command {
    /// Stationary-state checks; run with `verify`.
    States {
        #[command(subcommand)]
        action: StatesAction,
        #[command(flatten)]
        common: Common,
    },
    /// Unstable radial spectrum and exponential directions.
    Spectrum {
        #[arg(long)]
        profile: Option<ProfileChoice>,
        #[arg(long)]
        cells: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Decay laws of interaction integrals and terms.
    Interactions {
        #[arg(long)]
        profile: Option<ProfileChoice>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        speeds: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// Initial-data construction and decomposition round trip.
    Modulate {
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// Coercivity probes of the linearized energy.
    Energy {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        speeds: Option<Vec<f64>>,
        #[arg(long)]
        samples: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Single-soliton evolution: persistence, speed, conservation, mode rates.
    Evolve {
        /// Coarsest grid step.
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Exit times from the deviation tube against the unstable amplitude.
    Shoot {
        #[arg(long, allow_hyphen_values = true)]
        speed: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        scan: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Renders the pass/fail table of existing summaries without recomputing.
    Report {
        /// Summary files; defaults to every `<root>/*/summary.json`.
        files: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn resolve(common: &Common, apply: impl FnOnce(&mut ExperimentConfig)) -> Result<ExperimentConfig, RunError> {
    let mut cfg = ExperimentConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn run(suite: Suite, common: &Common, apply: impl FnOnce(&mut ExperimentConfig)) -> Result<bool, RunError> {
    let cfg = resolve(common, apply)?;
    if common.print_config {
        print!("{}", cfg.to_toml());
        return Ok(true);
    }
    let root = cfg.output_root(common.out.as_deref());
    let summary = run_suite(suite, &cfg, &root)?;
    print!("{}", render(std::slice::from_ref(&summary)));
    println!("artifacts in {}", root.join(suite.name()).display());
    Ok(summary.passed)
}

fn report(files: &[PathBuf], common: &Common) -> Result<bool, RunError> {
    let paths = if files.is_empty() {
        let cfg = resolve(common, |_| {})?;
        discover(&cfg.output_root(common.out.as_deref()))?
    } else {
        files.to_vec()
    };
    let summaries = paths.iter().map(|p| Summary::read(p)).collect::<Result<Vec<_>, _>>()?;
    print!("{}", render(&summaries));
    Ok(summaries.iter().all(|s| s.passed))
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn dispatch(cli: Cli) -> Result<bool, RunError> {
    match cli.command {
        Command::States { action: StatesAction::Verify { profile }, common } => {
            run(Suite::States, &common, |c| set(&mut c.profile, profile))
        }
        Command::Spectrum { profile, cells, common } => run(Suite::Spectrum, &common, |c| {
            set(&mut c.profile, profile);
            set(&mut c.spectrum.cells, cells);
        }),
        Command::Interactions { profile, speeds, common } => run(Suite::Interactions, &common, |c| {
            if let Some(p) = profile {
                c.profile = p;
                c.interactions.g1_profiles = vec![p];
            }
            set(&mut c.interactions.speeds, speeds);
        }),
        Command::Modulate { times, common } => run(Suite::Modulate, &common, |c| set(&mut c.modulate.times, times)),
        Command::Energy { speeds, samples, common } => run(Suite::Energy, &common, |c| {
            set(&mut c.energy.speeds, speeds);
            set(&mut c.energy.samples, samples);
        }),
        Command::Evolve { step, horizon, common } => run(Suite::Evolve, &common, |c| {
            set(&mut c.evolve.step, step);
            set(&mut c.evolve.horizon, horizon);
        }),
        Command::Shoot { speed, step, scan, common } => run(Suite::Shoot, &common, |c| {
            set(&mut c.shoot.speed, speed);
            set(&mut c.shoot.step, step);
            set(&mut c.shoot.scan, scan);
        }),
        Command::Report { files, common } => report(&files, &common),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.kind() == clap::error::ErrorKind::InvalidSubcommand => {
            eprintln!("schema error: unknown suite\n{e}");
            return ExitCode::from(2);
        }
        Err(e) => e.exit(),
    };
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
