//! The `dann` command-line front end: argument parsing, config resolution
//! and the `prepare`, `train`, `sweep`, `diagnose` and `eval` commands.

mod commands;
mod config;

pub use commands::{
    cmd_diagnose, cmd_eval, cmd_prepare, cmd_sweep, cmd_train, load_dataset, sweep_csv, Dataset, Metrics, SweepRow,
};
pub use config::{DataSource, Overrides, RunConfig};

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::extractors::ExtractorKind;
use crate::trainer::CriticLoss;

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dann", version, about = "Domain-adversarial text classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Flat JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// avg, tfidf, cnn or han.
    #[arg(long, global = true)]
    pub extractor: Option<ExtractorKind>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    /// wasserstein or ce.
    #[arg(long = "critic-loss", global = true)]
    pub critic_loss: Option<CriticLoss>,
    /// Train without any target labels.
    #[arg(long = "zero-shot", global = true)]
    pub zero_shot: bool,
    #[arg(long, global = true, value_name = "BOOL")]
    pub adversarial: Option<bool>,
    /// Number of domains the critic separates.
    #[arg(long, global = true)]
    pub domains: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load the corpus and write the split manifest and corpus statistics.
    Prepare,
    /// Train a model; writes checkpoint, history and metrics.
    Train,
    /// Train once per λ (and critic loss and seed) and tabulate the results.
    Sweep {
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        losses: Option<Vec<CriticLoss>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Feature-space report (and attention maps) for a checkpoint.
    Diagnose {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Write normalized attention for this many target test documents.
        #[arg(long)]
        attention: Option<usize>,
    },
    /// Accuracy of a checkpoint on the test splits.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

impl CommonArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            extractor: self.extractor,
            lambda: self.lambda,
            critic_loss: self.critic_loss,
            zero_shot: self.zero_shot,
            adversarial: self.adversarial,
            domains: self.domains,
        }
    }
}

/// Exit status for a failed command.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_config() {
        EXIT_CONFIG
    } else {
        EXIT_RUNTIME
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::resolve(cli.common.config.as_deref(), &cli.common.overrides())?;
    match cli.command {
        Command::Prepare => {
            let m = cmd_prepare(&cfg)?;
            println!(
                "source train {} test {}, target labeled {} unlabeled {} test {}",
                m.source_train.len(),
                m.source_test.len(),
                m.target_train_labeled.len(),
                m.target_train_unlabeled.len(),
                m.target_test.len()
            );
        }
        Command::Train => {
            let m = cmd_train(&cfg)?;
            println!("{}", serde_json::to_string(&m)?);
        }
        Command::Sweep { lambdas, losses, seeds } => {
            if let Some(v) = lambdas {
                cfg.lambdas = v;
            }
            if let Some(v) = losses {
                cfg.sweep_losses = v;
            }
            if let Some(v) = seeds {
                cfg.sweep_seeds = v;
            }
            let rows = cmd_sweep(&cfg)?;
            print!("{}", sweep_csv(&rows));
        }
        Command::Diagnose { checkpoint, attention } => {
            let r = cmd_diagnose(&cfg, checkpoint.as_deref(), attention)?;
            println!("domain_sep {} class_sep {:?}", r.domain_sep, r.class_sep);
            for h in &r.hausdorff {
                println!(
                    "hausdorff {} -> {}: before {} after {}",
                    h.source_domain, h.target_domain, h.before, h.after
                );
            }
        }
        Command::Eval { checkpoint } => {
            let m = cmd_eval(&cfg, checkpoint.as_deref())?;
            println!("{}", serde_json::to_string(&m)?);
        }
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
