//! Command-line driver: load a scenario, run it, emit trace and metrics.
//!
//! Exit code 0 means the run completed (converged or not); nonzero is
//! reserved for input or internal errors.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;

use qdvsim::scenario::{load_scenario, ProtocolVariant};
use qdvsim::sim::run;
use qdvsim::trace::emit;

#[derive(Parser, Debug)]
#[command(
    name = "qdvsim",
    about = "Deterministic distance-vector routing simulator with \
             entanglement-assisted failure notification"
)]
struct Args {
    /// Scenario file to run.
    #[arg(long)]
    scenario: PathBuf,

    /// Override the scenario's random seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the scenario's round cap.
    #[arg(long)]
    max_rounds: Option<u64>,

    /// Override the scenario's protocol variant (plain, split_horizon,
    /// poisoned_reverse, gateway_sentinel, entangled_handshake).
    #[arg(long)]
    variant: Option<String>,

    /// Write the line-delimited trace here.
    #[arg(long)]
    trace_out: Option<PathBuf>,

    /// Write the metrics summary here.
    #[arg(long)]
    metrics_out: Option<PathBuf>,

    /// Suppress the summary printed to stdout.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    match try_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn try_main() -> anyhow::Result<()> {
    let args = Args::parse();
    let text = std::fs::read_to_string(&args.scenario)
        .with_context(|| format!("cannot read scenario {}", args.scenario.display()))?;
    let mut config = load_scenario(&text)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(max_rounds) = args.max_rounds {
        config.max_rounds = max_rounds;
    }
    if let Some(variant) = &args.variant {
        let parsed: ProtocolVariant = variant.parse().map_err(|e: String| anyhow::anyhow!(e))?;
        config.set_variant(parsed);
    }

    let output = run(&config)?;
    emit(
        &output.trace,
        &output.metrics,
        args.trace_out.as_deref(),
        args.metrics_out.as_deref(),
    )?;

    if !args.quiet {
        let m = &output.metrics;
        println!(
            "variant={} converged={} rounds={} loop_detected={} messages={} pairs={}",
            config.variant.as_str(),
            m.converged,
            m.total_rounds,
            m.loop_detected,
            m.total_messages,
            m.pairs_allocated,
        );
        if let Some(r) = m.rounds_to_convergence {
            println!("rounds_to_convergence={r}");
        }
        if let Some(l) = m.notification_latency_events {
            println!("notification_latency_events={l}");
        }
    }
    Ok(())
}
