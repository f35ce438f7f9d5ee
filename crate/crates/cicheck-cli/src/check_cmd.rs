//! `cicheck check`: decide consistency of a CI statement file.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;

use cicheck_core::cir::{decide, CirInstance, DecisionTrace, StageTimings};
use cicheck_core::model::{read_statements_jsonl, Verdict};

use crate::report::{emit_json, RunSpec};
use crate::{SolveArgs, EXIT_INCONSISTENT, EXIT_OK};

/// Arguments for `cicheck check`.
#[derive(Debug, Args, Serialize)]
pub struct CheckArgs {
    /// CI statements, one JSON record per line.
    pub statements: PathBuf,
    /// Report file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report real stage timings instead of zeros (breaks byte-identical
    /// reruns).
    #[arg(long)]
    pub timings: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub solve: SolveArgs,
}

/// The report printed by `check`: the verdict plus the full decision trace
/// (stage attribution, per-stage results, solver status, timings).
#[derive(Debug, Serialize)]
struct CheckReport<'a> {
    run_spec: RunSpec<'a, CheckArgs>,
    verdict: Verdict,
    #[serde(flatten)]
    trace: DecisionTrace,
}

pub fn run(args: &CheckArgs) -> Result<u8> {
    let file = File::open(&args.statements)
        .with_context(|| format!("opening {}", args.statements.display()))?;
    let (domain, statements) = read_statements_jsonl(BufReader::new(file))
        .with_context(|| format!("reading {}", args.statements.display()))?;
    let inst = CirInstance::new(domain, statements)?;
    let config = args.solve.decide_config();
    let (verdict, mut trace) = decide(&inst, None, &config)?;
    if !args.timings {
        trace.timings_ms = StageTimings::default();
    }
    let report = CheckReport {
        run_spec: RunSpec {
            subcommand: "check",
            args,
        },
        verdict,
        trace,
    };
    emit_json(&report, args.out.as_deref())?;
    Ok(match verdict {
        Verdict::Consistent => EXIT_OK,
        Verdict::Inconsistent => EXIT_INCONSISTENT,
    })
}
