//! `ff-forge`: Forward-Forward training, FF-SCP out-of-distribution scoring
//! and latent attribution from the command line.

mod attr;
mod common;
mod eval;
mod latents;
mod metrics;
mod ood;
mod train;

use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use ff_forge_core::FfError;

use crate::common::GlobalArgs;

#[derive(Debug, Parser)]
#[command(name = "ff-forge", version, about = "Forward-Forward networks, FF-SCP OoD scores and attributions")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a network with one or both negative-label modes
    Train(train::TrainArgs),
    /// Classification accuracy of a checkpoint
    Eval(eval::EvalArgs),
    /// Build or export latent stores
    #[command(subcommand)]
    Latents(latents::LatentsCommand),
    /// FF-SCP out-of-distribution scoring
    #[command(subcommand)]
    Ood(ood::OodCommand),
    /// AUROC, AUPR and FPR95 of a score file
    Metrics(metrics::MetricsArgs),
    /// Attribution map for one input
    Attr(attr::AttrArgs),
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Train(args) => train::run(args, &cli.global),
        Command::Eval(args) => eval::run(args, &cli.global),
        Command::Latents(cmd) => latents::run(cmd, &cli.global),
        Command::Ood(cmd) => ood::run(cmd, &cli.global),
        Command::Metrics(args) => metrics::run(args, &cli.global),
        Command::Attr(args) => attr::run(args, &cli.global),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let config = err
                .chain()
                .any(|e| matches!(e.downcast_ref::<FfError>(), Some(FfError::Config(_))));
            ExitCode::from(if config { 2 } else { 1 })
        }
    }
}
