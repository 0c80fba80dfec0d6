use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lbirl::pipeline::{cmd_collect_demos, cmd_evaluate, cmd_report, cmd_train_policy, cmd_train_reward, RunConfig};
use lbirl::trex::SamplerKind;
use lbirl::Error;

#[derive(Parser, Debug)]
#[command(name = "lbirl", version, about = "Learned-reward load balancing pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Training seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Restrict the run to these scenario ids.
    #[arg(long, global = true, value_delimiter = ',')]
    scenario: Vec<u32>,

    #[arg(long, global = true, value_enum)]
    sampler: Option<Sampler>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Roll out the random controller and rank the demonstrations.
    CollectDemos,
    /// Learn a reward model from ranked demonstrations.
    TrainReward,
    /// Train a PPO policy on a learned reward.
    TrainPolicy,
    /// Evaluate the learned policies and the baselines.
    Evaluate,
    /// Consolidate evaluation and reward artifacts.
    Report,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Sampler {
    Tcs,
    Contiguous,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_MISSING: u8 = 3;

fn build_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if !cli.scenario.is_empty() {
        cfg.scenarios = cli.scenario.clone();
    }
    if let Some(s) = cli.sampler {
        cfg.sampler = match s {
            Sampler::Tcs => SamplerKind::Tcs,
            Sampler::Contiguous => SamplerKind::Contiguous,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = build_config(cli)?;
    match cli.command {
        Command::CollectDemos => {
            for d in cmd_collect_demos(&cfg)? {
                println!("{}", d.display());
            }
        }
        Command::TrainReward => {
            for d in cmd_train_reward(&cfg)? {
                println!("{}", d.display());
            }
        }
        Command::TrainPolicy => {
            for d in cmd_train_policy(&cfg)? {
                println!("{}", d.display());
            }
        }
        Command::Evaluate => {
            for d in cmd_evaluate(&cfg)? {
                println!("{}", d.display());
            }
        }
        Command::Report => println!("{}", cmd_report(&cfg)?.display()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(EXIT_CONFIG),
                Error::MissingArtifact(_) => ExitCode::from(EXIT_MISSING),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
