// Copyright 2026 The impulse-gcac Authors
// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use impulse_gcac::cli::{self, Overrides, Task};

/// Constrained impulse control for coupled heat equations.
///
/// Exit status: 0 on success, 1 on input or precondition errors, 2 when a
/// synthesis honestly fails within the horizon cap.
#[derive(Debug, Parser)]
#[command(name = "impulse-gcac", version)]
struct Args {
    task: Task,
    /// Scenario JSON or an earlier report; repeat for a concurrent batch.
    #[arg(long, required = true)]
    scenario: Vec<PathBuf>,
    /// Directory for report.json and trajectory.csv (one subdirectory per
    /// scenario in batch mode). Without it the report goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Truncation order N.
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let overrides = Overrides {
        task: Some(args.task),
        seed: args.seed,
        modes: args.modes,
        k_max: args.k_max,
    };
    let outcomes = cli::run_batch(&args.scenario, &overrides);
    let batch = outcomes.len() > 1;
    let mut code = 0;
    for (i, outcome) in outcomes.iter().enumerate() {
        eprintln!("{}", cli::summary(outcome));
        match &args.out {
            Some(dir) => {
                let dir = if batch {
                    dir.join(format!(
                        "{i:02}-{}",
                        outcome.name.as_deref().unwrap_or("scenario")
                    ))
                } else {
                    dir.clone()
                };
                if let Err(e) = cli::write_outcome(outcome, &dir) {
                    eprintln!("cannot write {}: {e}", dir.display());
                    code = code.max(1);
                }
            }
            None => match serde_json::to_string_pretty(&outcome.report) {
                Ok(s) => println!("{s}"),
                Err(e) => {
                    eprintln!("cannot serialize report: {e}");
                    code = code.max(1);
                }
            },
        }
        code = code.max(outcome.exit_code);
    }
    ExitCode::from(code as u8)
}
