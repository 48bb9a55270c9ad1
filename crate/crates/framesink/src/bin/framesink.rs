//! Command-line front end: run one policy rollout to a trace file, or run
//! all three policies over one seed and write a comparison summary.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use framesink::sim::{
    compare_policies, render_trace, run_rollout, Policy, RolloutConfig, Scenario,
};
use framesink::Result;

#[derive(Parser)]
#[command(name = "framesink", version, about = "Bounded-memory streaming attention-context rollouts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Config file: flat `key = value` lines (unknown keys are errors).
    #[arg(long)]
    config: PathBuf,
    /// Output path.
    #[arg(long)]
    out: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the policy: window | static:<S> | dysink.
    #[arg(long)]
    policy: Option<String>,
    /// Override the scenario: drift | revisit | adversarial.
    #[arg(long)]
    scenario: Option<String>,
    /// Override the number of blocks to roll out.
    #[arg(long)]
    blocks: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out one policy and write the per-step trace.
    Run(CommonArgs),
    /// Roll out window, static-sink, and dynamic-sink policies over the
    /// same seed and write the aggregate summary.
    ///
    /// A `static:<S>` policy (from the config or --policy) sets the static
    /// sink budget; any other policy defaults it to k*L frames, matching
    /// the dynamic policy's retrieved budget.
    Compare(CommonArgs),
}

fn load_config(args: &CommonArgs) -> Result<RolloutConfig> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut config = RolloutConfig::parse(&text)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(policy) = &args.policy {
        config.policy = Policy::parse(policy)?;
    }
    if let Some(scenario) = &args.scenario {
        config.scenario = Scenario::parse(scenario)?;
    }
    if let Some(blocks) = args.blocks {
        config.total_blocks = blocks;
    }
    config.validate()?;
    Ok(config)
}

fn run(args: &CommonArgs) -> Result<()> {
    let config = load_config(args)?;
    let records = run_rollout(&config)?;
    std::fs::write(&args.out, render_trace(&config, &records))?;
    println!(
        "wrote {} step records ({} policy, {} scenario) to {}",
        records.len(),
        config.policy.token(),
        config.scenario.token(),
        args.out.display()
    );
    Ok(())
}

fn compare(args: &CommonArgs) -> Result<()> {
    let config = load_config(args)?;
    let summary = compare_policies(&config)?;
    std::fs::write(&args.out, summary.render())?;
    println!(
        "wrote policy comparison ({} blocks, {} scenario) to {}",
        config.total_blocks,
        config.scenario.token(),
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Compare(args) => compare(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
