//! Minimal protocol worker for smoke tests. Answers every request with a
//! deterministic error that falls as more channels are kept.

use std::io::{self, BufRead, Write};

use clap::Parser;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "dcprune-echo-worker")]
struct Args {
    /// Sub-network count announced in the handshake.
    #[arg(long, default_value_t = 3)]
    subnets: usize,
    /// Report every n-th request as failed (0 disables).
    #[arg(long, default_value_t = 0)]
    fail_every: u64,
    /// Accepted and ignored, like a training worker's options.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    no_feature_constraint: bool,
    #[arg(long)]
    objective: Option<String>,
}

fn error_for(genes: &[u64]) -> f64 {
    let kept: u64 = genes.iter().sum();
    0.05 + 1.0 / (1.0 + kept as f64)
}

fn main() -> io::Result<()> {
    let args = Args::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "{}", json!({"protocol": "emo-eval/1", "subnets": args.subnets}))?;
    out.flush()?;
    let mut served = 0u64;
    for line in io::stdin().lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let req: Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                writeln!(
                    out,
                    "{}",
                    json!({"id": null, "status": "failed", "reason": e.to_string()})
                )?;
                out.flush()?;
                continue;
            }
        };
        served += 1;
        let id = req["id"].clone();
        let genes: Vec<u64> = req["genes"]
            .as_array()
            .map(|a| a.iter().filter_map(Value::as_u64).collect())
            .unwrap_or_default();
        let reply = if args.fail_every > 0 && served.is_multiple_of(args.fail_every) {
            json!({"id": id, "status": "failed", "reason": "scheduled failure"})
        } else {
            json!({"id": id, "error": error_for(&genes)})
        };
        writeln!(out, "{reply}")?;
        out.flush()?;
    }
    Ok(())
}
