use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use signalq::dqn::RewardMode;
use signalq::harness::{self, ControllerChoice, EvalConfig, HarnessError, TrainConfig};

#[derive(Parser)]
#[command(name = "signalq", version, about = "Traffic-signal simulation, training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerKind {
    Fixed,
    Dqn,
}

#[derive(Subcommand)]
enum Command {
    /// Train one DQN agent per signalized junction.
    Train {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        reward_mode: Option<RewardMode>,
        #[arg(long)]
        weights_out: PathBuf,
        #[arg(long)]
        curve_out: Option<PathBuf>,
        /// Hyperparameter override, `key=value`. Repeatable.
        #[arg(long = "hp", value_name = "KEY=VALUE")]
        hp: Vec<String>,
    },
    /// Evaluate a controller over a list of seeds.
    Eval {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum)]
        controller: ControllerKind,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a baseline evaluation against a candidate.
    Compare {
        baseline: PathBuf,
        candidate: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{s}` is not of the form key=value"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            scenario,
            episodes,
            seed,
            reward_mode,
            weights_out,
            curve_out,
            hp,
        } => {
            let overrides = hp.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>>>()?;
            let config = TrainConfig {
                scenario,
                episodes,
                seed,
                reward_mode,
                weights_out,
                curve_out,
                overrides,
            };
            let outcome = harness::train(&config)?;
            let last = outcome.curve.last().expect("at least one episode");
            println!(
                "trained {} episodes; final return {:.3}; weights written to {}",
                outcome.curve.len(),
                last.episode_return,
                config.weights_out.display()
            );
        }
        Command::Eval {
            scenario,
            controller,
            weights,
            seeds,
            out,
        } => {
            let controller = match (controller, weights) {
                (ControllerKind::Fixed, _) => ControllerChoice::FixedTime,
                (ControllerKind::Dqn, Some(weights)) => ControllerChoice::Dqn { weights },
                (ControllerKind::Dqn, None) => {
                    return Err(HarnessError::Config("--controller dqn requires --weights".into()).into())
                }
            };
            let report = harness::evaluate(&EvalConfig {
                scenario,
                controller,
                seeds,
                out: out.clone(),
            })?;
            println!(
                "{}: mean per-vehicle waiting time {:.3} s over {} seeds; report in {}",
                report.controller,
                report.summary.waiting_time.mean,
                report.seeds.len(),
                out.display()
            );
        }
        Command::Compare { baseline, candidate, out } => {
            let cmp = harness::compare_files(&baseline, &candidate, &out)
                .with_context(|| format!("comparing {} and {}", baseline.display(), candidate.display()))?;
            print!("{}", cmp.to_markdown());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let kind = err
                .chain()
                .find_map(|e| e.downcast_ref::<HarnessError>())
                .map_or("error", HarnessError::kind);
            let line = serde_json::json!({
                "error": kind,
                "message": format!("{err:#}"),
            });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
