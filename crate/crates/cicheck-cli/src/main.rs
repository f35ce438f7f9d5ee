//! `cicheck`: command-line harness for CI consistency checking and
//! constraint-based causal discovery runs.
//!
//! Subcommands:
//! - `check`: decide whether a JSONL file of CI statements is consistent
//!   under the integrity axioms.
//! - `pc`: run PC structure learning against an oracle network or a CSV
//!   dataset, optionally wrapped by a runtime checker and with injected
//!   CI-test errors.
//! - `gen`: sample a random discrete Bayesian network, a forward-sampled
//!   dataset, and the ground-truth DAG to disk.
//! - `bench`: run the stage-ablation benchmark over a corpus of consistency
//!   instances.
//!
//! Every subcommand is deterministic given its flags and seeds: timing
//! fields are zeroed unless `--timings` is passed, so repeated runs emit
//! byte-identical reports.

mod bench_cmd;
mod check_cmd;
mod gen_cmd;
mod pc_cmd;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cicheck_core::checkers::{CheckerMode, EdPolicy};
use cicheck_core::cir::{DecideConfig, DEFAULT_O2_CAP, DEFAULT_TIMEOUT_MS};
use cicheck_core::smt::{resolve_solver, AxiomSet, AxiomStyle};

/// Process exit codes: success (including a consistent verdict) is 0, an
/// inconsistent verdict is 1, usage and runtime failures are 2, and a PC run
/// aborted by the reliability checker is 3.
pub const EXIT_OK: u8 = 0;
pub const EXIT_INCONSISTENT: u8 = 1;
pub const EXIT_ERROR: u8 = 2;
pub const EXIT_ABORTED: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "cicheck",
    version,
    about = "Consistency checking for conditional-independence knowledge bases"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decide consistency of a JSONL file of CI statements.
    Check(check_cmd::CheckArgs),
    /// Run PC structure learning with optional checker and error injection.
    Pc(pc_cmd::PcArgs),
    /// Generate a seeded random network, dataset, and ground-truth DAG.
    Gen(gen_cmd::GenArgs),
    /// Benchmark stage configurations over a corpus of instances.
    Bench(bench_cmd::BenchArgs),
}

/// Stage, solver, and axiom flags shared by every command that runs the
/// decision procedure.
#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveArgs {
    /// Solver executable; overrides the CICHECK_SOLVER environment variable
    /// (final default: `z3` on PATH).
    #[arg(long)]
    pub solver: Option<PathBuf>,
    /// Wall-clock budget per solver call, in milliseconds.
    #[arg(long, default_value_t = DEFAULT_TIMEOUT_MS)]
    pub timeout_ms: u64,
    /// Disable the marginality screen (stage O1).
    #[arg(long)]
    pub no_o1: bool,
    /// Disable graphoid saturation (stage O2).
    #[arg(long)]
    pub no_o2: bool,
    /// Disable solver subproblem rescue (stage O3).
    #[arg(long)]
    pub no_o3: bool,
    /// Disable the full solver instance, leaving only the enabled O-stages.
    #[arg(long)]
    pub no_smt: bool,
    /// Axiom rendering style for solver instances.
    #[arg(long, value_enum, default_value_t)]
    pub axioms: AxiomsArg,
    /// Ceiling on the graphoid closure size explored by O2.
    #[arg(long, default_value_t = DEFAULT_O2_CAP)]
    pub o2_cap: usize,
}

impl SolveArgs {
    /// Translates the flag set into a decision-procedure configuration.
    pub fn decide_config(&self) -> DecideConfig {
        DecideConfig {
            solver: resolve_solver(self.solver.as_deref()),
            timeout_ms: self.timeout_ms,
            axioms: AxiomSet::all(),
            style: self.axioms.into(),
            use_o1: !self.no_o1,
            use_o2: !self.no_o2,
            use_o3: !self.no_o3,
            use_smt: !self.no_smt,
            o2_cap: self.o2_cap,
        }
    }
}

/// `--axioms` choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxiomsArg {
    /// Disjunctive weak transitivity and chordality.
    #[default]
    Standard,
    /// Split single-conclusion weak transitivity and chordality.
    AppendixVerbatim,
}

impl From<AxiomsArg> for AxiomStyle {
    fn from(arg: AxiomsArg) -> Self {
        match arg {
            AxiomsArg::Standard => AxiomStyle::Standard,
            AxiomsArg::AppendixVerbatim => AxiomStyle::AppendixVerbatim,
        }
    }
}

/// `--checker` choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckerArg {
    /// Pass backend answers through unexamined.
    #[default]
    Off,
    /// Reject backend answers that contradict the knowledge base.
    Ed,
    /// Skip backend tests whose outcome is already entailed.
    P,
}

impl From<CheckerArg> for CheckerMode {
    fn from(arg: CheckerArg) -> Self {
        match arg {
            CheckerArg::Off => CheckerMode::Off,
            CheckerArg::Ed => CheckerMode::Ed,
            CheckerArg::P => CheckerMode::P,
        }
    }
}

/// `--backend` choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendArg {
    /// d-separation oracle over a known network (input: network JSON).
    #[default]
    Oracle,
    /// Stratified chi-squared test (input: dataset CSV).
    Chi2,
}

/// `--ed-policy` choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EdPolicyArg {
    /// Stop the run at the first detected contradiction.
    #[default]
    Abort,
    /// Record an alert, discard the statement, and continue.
    Alert,
}

impl From<EdPolicyArg> for EdPolicy {
    fn from(arg: EdPolicyArg) -> Self {
        match arg {
            EdPolicyArg::Abort => EdPolicy::Abort,
            EdPolicyArg::Alert => EdPolicy::Alert,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Check(args) => check_cmd::run(&args),
        Command::Pc(args) => pc_cmd::run(&args),
        Command::Gen(args) => gen_cmd::run(&args),
        Command::Bench(args) => bench_cmd::run(&args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_args_default_to_all_stages() {
        let cli = Cli::try_parse_from(["cicheck", "check", "kb.jsonl"]).unwrap();
        let Command::Check(args) = cli.command else {
            panic!("expected check");
        };
        let config = args.solve.decide_config();
        assert!(config.use_o1 && config.use_o2 && config.use_o3 && config.use_smt);
        assert_eq!(config.timeout_ms, DEFAULT_TIMEOUT_MS);
        assert_eq!(config.o2_cap, DEFAULT_O2_CAP);
        assert_eq!(config.style, AxiomStyle::Standard);
    }

    #[test]
    fn stage_toggles_and_style_map_through() {
        let cli = Cli::try_parse_from([
            "cicheck",
            "check",
            "kb.jsonl",
            "--no-o1",
            "--no-o3",
            "--axioms",
            "appendix-verbatim",
            "--timeout-ms",
            "250",
        ])
        .unwrap();
        let Command::Check(args) = cli.command else {
            panic!("expected check");
        };
        let config = args.solve.decide_config();
        assert!(!config.use_o1);
        assert!(config.use_o2);
        assert!(!config.use_o3);
        assert!(config.use_smt);
        assert_eq!(config.style, AxiomStyle::AppendixVerbatim);
        assert_eq!(config.timeout_ms, 250);
    }

    #[test]
    fn subcommand_is_mandatory() {
        assert!(Cli::try_parse_from(["cicheck"]).is_err());
    }

    #[test]
    fn enum_flags_reject_unknown_values() {
        assert!(Cli::try_parse_from(["cicheck", "pc", "net.json", "--checker", "both"]).is_err());
        assert!(Cli::try_parse_from(["cicheck", "pc", "net.json", "--backend", "exact"]).is_err());
    }
}
