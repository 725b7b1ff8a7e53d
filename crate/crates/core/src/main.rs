use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qboost::config::{ExperimentConfig, MethodName};
use qboost::pipeline::{Pipeline, Stage};
use qboost::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;

/// Boosted neural-network ensembles for Burgers' equation with QUBO-trained weights.
#[derive(Parser, Debug)]
#[command(name = "qboost", version)]
struct Cli {
    /// Experiment JSON. Without it the `--preset` is used.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Built-in configuration used when `--config` is absent.
    #[arg(long, global = true, default_value = "desk")]
    preset: String,

    /// Last stage to run (`pipeline` only).
    #[arg(long, global = true, value_name = "NAME")]
    stage: Option<String>,

    /// Master seed override. For `solve` it sets the solver seed instead.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Output directory override.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample the analytic solution into dataset.csv.
    GenData,
    /// Train every configured architecture.
    Train,
    /// Build qubo.json from the trained learners.
    BuildQubo,
    /// Minimise qubo.json into solutions.json.
    Solve(SolveArgs),
    /// Solution curves and low-lying spectrum of the current QUBO.
    Evaluate,
    /// Ensemble error against the ridge weight.
    SweepLambda,
    /// Ensemble error against the number of bits per weight.
    SweepPrecision,
    /// Run all stages, skipping those whose outputs exist.
    Pipeline,
    /// Print a preset as JSON.
    InitConfig,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long, value_enum)]
    method: Option<CliMethod>,
    /// Number of energy levels to keep (exact).
    #[arg(long)]
    levels: Option<usize>,
    /// Independent annealing runs (sa).
    #[arg(long)]
    reads: Option<usize>,
    /// Sweeps per run (sa).
    #[arg(long)]
    sweeps: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CliMethod {
    Exact,
    Sa,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::preset(&cli.preset)?,
    };
    if let Some(dir) = &cli.out {
        cfg.output_dir = dir.clone();
    }
    match (&cli.command, cli.seed) {
        (Command::Solve(_), Some(s)) => cfg.solver.seed = Some(s),
        (_, Some(s)) => cfg.seed = s,
        _ => {}
    }
    if let Command::Solve(a) = &cli.command {
        if let Some(m) = a.method {
            cfg.solver.method = match m {
                CliMethod::Exact => MethodName::Exact,
                CliMethod::Sa => MethodName::Sa,
            };
        }
        if let Some(l) = a.levels {
            cfg.solver.levels = l;
        }
        if let Some(r) = a.reads {
            cfg.solver.sa.num_reads = r;
        }
        if let Some(s) = a.sweeps {
            cfg.solver.sa.sweeps = s;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), ExitCode> {
    let config_err = |e: Error| {
        eprintln!("config error: {e}");
        ExitCode::from(EXIT_CONFIG)
    };
    let cfg = load_config(&cli).map_err(config_err)?;
    let stage = cli
        .stage
        .as_deref()
        .map(str::parse::<Stage>)
        .transpose()
        .map_err(config_err)?;

    let single = match &cli.command {
        Command::InitConfig => {
            println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
            return Ok(());
        }
        Command::Pipeline => None,
        Command::GenData => Some(Stage::GenData),
        Command::Train => Some(Stage::Train),
        Command::BuildQubo => Some(Stage::BuildQubo),
        Command::Solve(_) => Some(Stage::Solve),
        Command::Evaluate => Some(Stage::Evaluate),
        Command::SweepLambda => Some(Stage::SweepLambda),
        Command::SweepPrecision => Some(Stage::SweepPrecision),
    };
    if let (Some(s), Some(sel)) = (single, stage) {
        if s != sel {
            return Err(config_err(Error::Config(format!(
                "--stage {sel} conflicts with subcommand {s}"
            ))));
        }
    }

    let pipeline = Pipeline::new(cfg).map_err(config_err)?;
    let stage_err = |e: qboost::pipeline::StageError| {
        eprintln!("{e}");
        ExitCode::from(EXIT_STAGE)
    };
    match single {
        Some(Stage::Evaluate) => {
            let ev = pipeline.evaluate().map_err(|source| {
                stage_err(qboost::pipeline::StageError {
                    stage: Stage::Evaluate,
                    source,
                })
            })?;
            println!("{:<12} {:>12} {:>12}", "model", "train_mse", "test_mse");
            for (label, tr, te) in &ev.learners {
                println!("{label:<12} {tr:>12.6} {te:>12.6}");
            }
            println!(
                "{:<12} {:>12.6} {:>12.6}",
                "ensemble", ev.ensemble_train_mse, ev.ensemble_test_mse
            );
        }
        Some(s) => {
            pipeline.run_stage(s).map_err(stage_err)?;
            eprintln!("{s}: done");
        }
        None => {
            let ran = pipeline.run(stage.unwrap_or(Stage::SweepLambda)).map_err(stage_err)?;
            for s in ran {
                eprintln!("{s}: done");
            }
        }
    }
    eprintln!("artifacts in {}", pipeline.cfg.output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}
