//! `cicheck pc`: PC structure learning with optional runtime checking and
//! injected CI-test errors.
//!
//! Rate-based injection (`--inject rate=R`) first measures an uninjected,
//! checker-off run of the same configuration so flip positions are drawn
//! over the true number of backend tests; that reference count also serves
//! as the denominator for the normalized detection metrics in the report.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde::Serialize;

use cicheck_core::bayes::{net_from_json, Dataset};
use cicheck_core::checkers::{CheckerConfig, CheckerState, DEFAULT_INCONSISTENCY_THRESHOLD};
use cicheck_core::ci::{
    flip_indices_for_rate, write_test_log, Chi2Backend, CiBackend, CiQuery, CiTestResult,
    InjectingBackend, OracleBackend,
};
use cicheck_core::graph::{shd, Dag, DagRecord, Pdag};
use cicheck_core::model::Domain;
use cicheck_core::pc::{run_pc, PcConfig, PcRunReport};

use crate::report::{emit_json, RunSpec};
use crate::{BackendArg, CheckerArg, EdPolicyArg, SolveArgs, EXIT_ABORTED, EXIT_OK};

/// Arguments for `cicheck pc`.
#[derive(Debug, Args, Serialize)]
pub struct PcArgs {
    /// Network JSON (oracle backend) or dataset CSV (chi2 backend).
    pub input: PathBuf,
    /// CI-test backend.
    #[arg(long, value_enum, default_value_t)]
    pub backend: BackendArg,
    /// Chi-squared significance level.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Runtime checker wrapped around the backend.
    #[arg(long, value_enum, default_value_t)]
    pub checker: CheckerArg,
    /// ED-Check response to a detected contradiction.
    #[arg(long, value_enum, default_value_t)]
    pub ed_policy: EdPolicyArg,
    /// Registered inconsistencies before P-Check stops consulting the
    /// knowledge base.
    #[arg(long, default_value_t = DEFAULT_INCONSISTENCY_THRESHOLD)]
    pub fallback_threshold: u32,
    /// Error injection: `rate=R` (percent of backend tests, seeded) or
    /// `indices=3,17,...` (1-based backend-test positions).
    #[arg(long)]
    pub inject: Option<String>,
    /// Seed for rate-based injection planning.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Largest conditioning-set size PC may try.
    #[arg(long)]
    pub max_order: Option<usize>,
    /// Enable the fourth Meek orientation rule.
    #[arg(long)]
    pub meek_r4: bool,
    /// Ground-truth DAG JSON for structural-Hamming-distance reporting
    /// (the oracle backend's own network is used when omitted).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Query log destination (JSONL), one record per answered query.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Report file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report real wall times instead of zeros.
    #[arg(long)]
    pub timings: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub solve: SolveArgs,
}

/// Parsed `--inject` value.
#[derive(Debug, Clone, PartialEq)]
enum InjectSpec {
    Rate(f64),
    Indices(BTreeSet<usize>),
}

fn parse_inject(text: &str) -> Result<InjectSpec> {
    if let Some(rate) = text.strip_prefix("rate=") {
        let rate: f64 = rate.parse().with_context(|| format!("bad rate {rate:?}"))?;
        return Ok(InjectSpec::Rate(rate));
    }
    if let Some(list) = text.strip_prefix("indices=") {
        let mut indices = BTreeSet::new();
        for part in list.split(',').filter(|p| !p.is_empty()) {
            let index: usize = part
                .parse()
                .with_context(|| format!("bad index {part:?}"))?;
            if index == 0 {
                bail!("injection indices are 1-based");
            }
            indices.insert(index);
        }
        if indices.is_empty() {
            bail!("indices= lists at least one position");
        }
        return Ok(InjectSpec::Indices(indices));
    }
    bail!("--inject takes rate=R or indices=a,b,..., got {text:?}")
}

/// Concrete backend dispatch so the injection wrapper has a single type.
enum BaseBackend {
    Oracle(OracleBackend),
    Chi2(Box<Chi2Backend>),
}

impl CiBackend for BaseBackend {
    fn test(&mut self, q: &CiQuery) -> cicheck_core::Result<CiTestResult> {
        match self {
            BaseBackend::Oracle(b) => b.test(q),
            BaseBackend::Chi2(b) => b.test(q),
        }
    }
}

struct LoadedInput {
    domain: Domain,
    base: BaseBackend,
    truth: Option<Dag>,
}

fn load_input(args: &PcArgs) -> Result<LoadedInput> {
    let explicit_truth = match &args.truth {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let record: DagRecord = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            Some(record.to_dag()?)
        }
        None => None,
    };
    match args.backend {
        BackendArg::Oracle => {
            let text = fs::read_to_string(&args.input)
                .with_context(|| format!("reading {}", args.input.display()))?;
            let bn = net_from_json(&text)?;
            let domain = Domain::new(bn.names().to_vec())?;
            let truth = explicit_truth.or_else(|| Some(bn.dag().clone()));
            let base = BaseBackend::Oracle(OracleBackend::new(bn.dag().clone()));
            Ok(LoadedInput {
                domain,
                base,
                truth,
            })
        }
        BackendArg::Chi2 => {
            let file = File::open(&args.input)
                .with_context(|| format!("opening {}", args.input.display()))?;
            let data = Dataset::read_csv(BufReader::new(file))
                .with_context(|| format!("reading {}", args.input.display()))?;
            let domain = Domain::new(data.names().to_vec())?;
            let base = BaseBackend::Chi2(Box::new(Chi2Backend::new(data, args.alpha)));
            Ok(LoadedInput {
                domain,
                base,
                truth: explicit_truth,
            })
        }
    }
}

/// Injection positions actually planned and how many fell inside the run.
#[derive(Debug, Serialize)]
struct InjectionReport {
    indices: Vec<usize>,
    applied: usize,
}

/// Where errors entered and where the checker first reacted, normalized by
/// the reference (uninjected) backend-test count when one was measured.
#[derive(Debug, Serialize)]
struct DetectionReport {
    first_injection: Option<usize>,
    first_alarm: Option<usize>,
    reference_tests: Option<usize>,
    /// `first_alarm / reference_tests`, in [0, 1].
    normalized_position: Option<f64>,
    /// `(first_alarm - first_injection) / reference_tests`.
    normalized_gap: Option<f64>,
}

/// The report printed by `pc`: the run report plus injection, detection,
/// and ground-truth-distance context.
#[derive(Debug, Serialize)]
struct PcReport<'a> {
    run_spec: RunSpec<'a, PcArgs>,
    #[serde(skip_serializing_if = "Option::is_none")]
    injection: Option<InjectionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    detection: Option<DetectionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    shd_to_truth: Option<usize>,
    #[serde(flatten)]
    report: PcRunReport,
}

pub fn run(args: &PcArgs) -> Result<u8> {
    let pc_config = PcConfig {
        max_order: args.max_order,
        meek_r4: args.meek_r4,
    };

    let (flips, reference_tests) = match args.inject.as_deref().map(parse_inject).transpose()? {
        None => (BTreeSet::new(), None),
        Some(InjectSpec::Indices(indices)) => (indices, None),
        Some(InjectSpec::Rate(rate)) => {
            let seed = args
                .seed
                .ok_or_else(|| anyhow!("--inject rate=R needs --seed to place the flips"))?;
            let loaded = load_input(args)?;
            let mut checker = CheckerState::new(loaded.domain.clone(), CheckerConfig::default());
            let mut backend = InjectingBackend::new(loaded.base, BTreeSet::new());
            let (dry, _) = run_pc(&loaded.domain, &mut checker, &mut backend, &pc_config)?;
            let flips = flip_indices_for_rate(dry.backend_tests, rate, seed)?;
            (flips, Some(dry.backend_tests))
        }
    };

    let loaded = load_input(args)?;
    let checker_config = CheckerConfig {
        mode: args.checker.into(),
        ed_policy: args.ed_policy.into(),
        inconsistency_threshold: args.fallback_threshold,
        commit_entailed: true,
        decide: args.solve.decide_config(),
    };
    let mut checker = CheckerState::new(loaded.domain.clone(), checker_config);
    let mut backend = InjectingBackend::new(loaded.base, flips.clone());
    let (mut report, log) = run_pc(&loaded.domain, &mut checker, &mut backend, &pc_config)?;
    if !args.timings {
        report.wall_ms = 0.0;
    }

    let issued = backend.issued();
    let injection = (!flips.is_empty()).then(|| InjectionReport {
        indices: flips.iter().copied().collect(),
        applied: flips.iter().filter(|&&i| i <= issued).count(),
    });
    let detection = injection.as_ref().map(|inj| {
        let first_injection = inj.indices.iter().copied().find(|&i| i <= issued);
        let first_alarm = report.abort_query;
        let normalized_position = match (first_alarm, reference_tests) {
            (Some(alarm), Some(total)) if total > 0 => Some(alarm as f64 / total as f64),
            _ => None,
        };
        let normalized_gap = match (first_injection, first_alarm, reference_tests) {
            (Some(fault), Some(alarm), Some(total)) if total > 0 => {
                Some((alarm as f64 - fault as f64) / total as f64)
            }
            _ => None,
        };
        DetectionReport {
            first_injection,
            first_alarm,
            reference_tests,
            normalized_position,
            normalized_gap,
        }
    });

    let shd_to_truth = match &loaded.truth {
        Some(dag) => {
            let learned = report.pdag.to_pdag()?;
            let mut truth_pdag = Pdag::empty(dag.n());
            for (parent, child) in dag.edges() {
                truth_pdag.add_directed(parent, child);
            }
            Some(shd(&learned, &truth_pdag)?)
        }
        None => None,
    };

    if let Some(path) = &args.log {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_test_log(BufWriter::new(file), &log)?;
    }

    let aborted = report.aborted;
    let out = PcReport {
        run_spec: RunSpec {
            subcommand: "pc",
            args,
        },
        injection,
        detection,
        shd_to_truth,
        report,
    };
    emit_json(&out, args.out.as_deref())?;
    Ok(if aborted { EXIT_ABORTED } else { EXIT_OK })
}
