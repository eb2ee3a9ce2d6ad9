use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use agr_cli::config::{Overrides, RunConfig};
use agr_cli::pipeline;
use agr_cli::CliError;

#[derive(Parser)]
#[command(name = "agr", version, about = "Age-group fairness reward pipeline")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root (data, checkpoints, reports, manifests).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Fairness coefficient, overriding the profile default.
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// KL penalty coefficient.
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Fairness gate tolerance.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build preference, instruction and scenario datasets.
    BuildData,
    /// Supervised fine-tuning on the instruction split.
    Sft,
    /// Train the reward model on preference pairs.
    TrainRm,
    /// ReMax reinforcement learning with the fairness reward.
    Rl,
    /// Generate answers and report bias metrics.
    Eval {
        /// Policy checkpoint (default: the RL checkpoint).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Instruction records to evaluate (default: the test split).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run the planted-bias synthetic experiment over lambdas and seeds.
    Synthetic {
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.apply(&Overrides { seed: cli.seed, out: cli.out, lambda: cli.lambda, beta: cli.beta, epsilon: cli.epsilon });
    match cli.command {
        Command::BuildData => {
            let m = pipeline::cmd_build_data(&cfg)?;
            for (k, v) in &m.counts {
                println!("{k}: {v}");
            }
        }
        Command::Sft => {
            let r = pipeline::cmd_sft(&cfg)?;
            println!("sft final loss {:.6}", r.epoch_losses.last().copied().unwrap_or(f64::NAN));
        }
        Command::TrainRm => {
            let r = pipeline::cmd_train_rm(&cfg)?;
            println!("reward model held-out accuracy {:.4}", r.final_metrics["accuracy"]);
        }
        Command::Rl => {
            let r = pipeline::cmd_rl(&cfg)?;
            println!(
                "rl mean reward {:.6}, mean kl {:.6} (lambda {}, beta {})",
                r.final_metrics["mean_reward"],
                r.final_metrics["mean_kl"],
                r.final_metrics["lambda"],
                r.final_metrics["beta"]
            );
        }
        Command::Eval { checkpoint, data } => {
            let r = pipeline::cmd_eval(&cfg, checkpoint.as_deref(), data.as_deref())?;
            print!("{}", agr_core::eval::render_table(&[("AGR", &r)]));
        }
        Command::Synthetic { lambdas, seeds } => {
            if let Some(l) = lambdas {
                cfg.synthetic.lambdas = l;
            }
            if let Some(s) = seeds {
                cfg.synthetic.seeds = s;
            }
            let r = pipeline::cmd_synthetic(&cfg)?;
            print!("{}", pipeline::render_synthetic(&r));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
