//! `cicheck bench`: stage-ablation benchmark over consistency instances.
//!
//! Corpus sources: a directory of JSONL statement files, or a seeded
//! generator that corrupts the CI-test log of an oracle PC run by flipping a
//! fraction of its statements. Statements are stored canonically, so one
//! flip covers a statement and its symmetric counterpart at once. Generated
//! instances are verified inconsistent before being admitted: the flip seed
//! is re-salted until the full decision procedure refutes the corrupted
//! knowledge base.
//!
//! Each instance runs under a fixed ablation grid (`o2`, `o2+o3`, `smt`,
//! `full`); the grid sets its own stage toggles, so `--no-*` flags do not
//! alter it. `--check-toggles` additionally re-decides every instance with
//! one O-stage disabled at a time (solver fallback on) and records whether
//! any verdict deviates from the full pipeline's.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde::Serialize;

use cicheck_core::checkers::{CheckerConfig, CheckerState};
use cicheck_core::ci::flip_indices_for_rate;
use cicheck_core::ci::OracleBackend;
use cicheck_core::cir::{decide, CirInstance, DecideConfig};
use cicheck_core::graph::sample_er_dag;
use cicheck_core::model::{
    read_statements_jsonl, write_statements_jsonl, CiStatement, Domain, Verdict,
};
use cicheck_core::pc::{run_pc, PcConfig};

use crate::report::{emit_json, RunSpec};
use crate::{SolveArgs, EXIT_OK};

/// Ceiling on the per-call solver budget while verifying that a generated
/// instance is genuinely inconsistent. Refutations are fast; the cap only
/// bounds the rare satisfiable draw before it is re-salted away.
const VERIFY_TIMEOUT_CAP_MS: u64 = 2_000;

/// Re-salt attempts per generated instance before giving up.
const MAX_FLIP_RETRIES: u64 = 64;

/// Arguments for `cicheck bench`.
#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    /// Directory of instance files (*.jsonl), benched in name order.
    #[arg(long, conflicts_with = "generate")]
    pub corpus: Option<PathBuf>,
    /// Generate this many corrupted knowledge bases instead of reading
    /// --corpus.
    #[arg(long)]
    pub generate: Option<usize>,
    /// Variables in the generated oracle network.
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    /// Edge probability of the generated DAG.
    #[arg(long, default_value_t = 0.4)]
    pub p: f64,
    /// Percentage of log statements flipped per generated instance.
    #[arg(long, default_value_t = 5.0)]
    pub rate: f64,
    /// Seed for generation (graph and flip placement).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Persist generated instances to this directory as JSONL.
    #[arg(long)]
    pub corpus_out: Option<PathBuf>,
    /// Worker threads for the per-instance fan-out.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Re-decide each instance with one O-stage disabled at a time and
    /// record verdict deviations from the full pipeline.
    #[arg(long)]
    pub check_toggles: bool,
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

/// One corpus entry: a named statement set over its own domain.
struct BenchInstance {
    name: String,
    domain: Domain,
    statements: Vec<CiStatement>,
    /// 1-based positions flipped by the generator, when generated.
    flipped: Option<Vec<usize>>,
}

/// One decision run of one instance.
#[derive(Debug, Serialize)]
struct ConfigRun {
    config: String,
    verdict: Verdict,
    stage: String,
    wall_ms: f64,
}

/// Per-instance results across the ablation grid.
#[derive(Debug, Serialize)]
struct InstanceReport {
    name: String,
    statements: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    flipped: Option<Vec<usize>>,
    runs: Vec<ConfigRun>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    toggle_mismatches: Vec<String>,
}

/// Refutability and timing statistics for one grid configuration.
#[derive(Debug, Serialize)]
struct ConfigAggregate {
    config: String,
    refuted: usize,
    total: usize,
    wall_ms_mean: f64,
    wall_ms_median: f64,
    wall_ms_max: f64,
}

/// The report printed by `bench`.
#[derive(Debug, Serialize)]
struct BenchReport<'a> {
    run_spec: RunSpec<'a, BenchArgs>,
    instances: Vec<InstanceReport>,
    configs: Vec<ConfigAggregate>,
    toggles_checked: bool,
    toggle_mismatches: usize,
}

/// The fixed ablation grid, from cheapest to most complete. The `full`
/// entry doubles as the reference verdict for the toggle check.
fn config_grid(base: &DecideConfig) -> Vec<(String, DecideConfig)> {
    let stages = [
        ("o2", (false, true, false, false)),
        ("o2+o3", (false, true, true, false)),
        ("smt", (false, false, false, true)),
        ("full", (true, true, true, true)),
    ];
    stages
        .into_iter()
        .map(|(name, (o1, o2, o3, smt))| {
            let mut config = base.clone();
            config.use_o1 = o1;
            config.use_o2 = o2;
            config.use_o3 = o3;
            config.use_smt = smt;
            (name.to_string(), config)
        })
        .collect()
}

/// Single-stage ablations of the full pipeline, solver fallback kept on.
fn toggle_grid(base: &DecideConfig) -> Vec<(String, DecideConfig)> {
    ["no-o1", "no-o2", "no-o3"]
        .into_iter()
        .map(|name| {
            let mut config = base.clone();
            config.use_o1 = name != "no-o1";
            config.use_o2 = name != "no-o2";
            config.use_o3 = name != "no-o3";
            config.use_smt = true;
            (name.to_string(), config)
        })
        .collect()
}

fn load_corpus(dir: &PathBuf) -> Result<Vec<BenchInstance>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "jsonl"))
        .collect();
    paths.sort();
    let mut instances = Vec::with_capacity(paths.len());
    for path in paths {
        let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        let (domain, statements) = read_statements_jsonl(BufReader::new(file))
            .with_context(|| format!("reading {}", path.display()))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        instances.push(BenchInstance {
            name,
            domain,
            statements,
            flipped: None,
        });
    }
    Ok(instances)
}

/// Builds the corrupted-KB corpus: one oracle PC log, many seeded flip
/// patterns, each verified inconsistent before admission.
fn generate_corpus(args: &BenchArgs, count: usize) -> Result<Vec<BenchInstance>> {
    let seed = args
        .seed
        .ok_or_else(|| anyhow!("--generate needs --seed to place the graph and flips"))?;
    let dag = sample_er_dag(args.n, args.p, seed)?;
    let domain = Domain::with_default_names(args.n)?;
    let mut checker = CheckerState::new(domain.clone(), CheckerConfig::default());
    let mut backend = OracleBackend::new(dag);
    let pc_config = PcConfig {
        max_order: None,
        meek_r4: false,
    };
    let (_, log) = run_pc(&domain, &mut checker, &mut backend, &pc_config)?;

    let mut seen = BTreeSet::new();
    let mut base = Vec::new();
    for record in &log {
        let stmt = record.to_statement(&domain)?.canonicalize();
        if seen.insert(stmt.key()) {
            base.push(stmt);
        }
    }
    if base.is_empty() {
        bail!("oracle run produced no statements to corrupt");
    }

    let mut verify = args.solve.decide_config();
    verify.timeout_ms = verify.timeout_ms.min(VERIFY_TIMEOUT_CAP_MS);

    let mut instances = Vec::with_capacity(count);
    for i in 0..count {
        let variant_seed = seed.wrapping_add(1 + i as u64);
        let mut admitted = false;
        for salt in 0..MAX_FLIP_RETRIES {
            let flip_seed = variant_seed.wrapping_add(salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let flips = flip_indices_for_rate(base.len(), args.rate, flip_seed)?;
            let statements: Vec<CiStatement> = base
                .iter()
                .enumerate()
                .map(|(j, &s)| if flips.contains(&(j + 1)) { s.negate() } else { s })
                .collect();
            let inst = CirInstance::new(domain.clone(), statements.clone())?;
            let (verdict, _) = decide(&inst, None, &verify)?;
            if verdict == Verdict::Inconsistent {
                instances.push(BenchInstance {
                    name: format!("gen-{i:03}"),
                    domain: domain.clone(),
                    statements,
                    flipped: Some(flips.into_iter().collect()),
                });
                admitted = true;
                break;
            }
        }
        if !admitted {
            bail!("instance {i}: no refutable flip pattern within {MAX_FLIP_RETRIES} salts");
        }
    }
    Ok(instances)
}

fn bench_one(
    instance: &BenchInstance,
    grid: &[(String, DecideConfig)],
    toggles: &[(String, DecideConfig)],
) -> Result<InstanceReport> {
    let inst = CirInstance::new(instance.domain.clone(), instance.statements.clone())?;
    let mut runs = Vec::with_capacity(grid.len());
    let mut full_verdict = None;
    for (name, config) in grid {
        let (verdict, trace) = decide(&inst, None, config)?;
        if name == "full" {
            full_verdict = Some(verdict);
        }
        runs.push(ConfigRun {
            config: name.clone(),
            verdict,
            stage: trace.stage,
            wall_ms: trace.timings_ms.total,
        });
    }
    let mut toggle_mismatches = Vec::new();
    for (name, config) in toggles {
        let (verdict, _) = decide(&inst, None, config)?;
        if Some(verdict) != full_verdict {
            toggle_mismatches.push(name.clone());
        }
    }
    Ok(InstanceReport {
        name: instance.name.clone(),
        statements: instance.statements.len(),
        flipped: instance.flipped.clone(),
        runs,
        toggle_mismatches,
    })
}

/// Fans instances out over `jobs` workers; results land in instance order
/// regardless of completion order.
fn run_instances(
    instances: &[BenchInstance],
    jobs: usize,
    grid: &[(String, DecideConfig)],
    toggles: &[(String, DecideConfig)],
) -> Result<Vec<InstanceReport>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<InstanceReport>>>> =
        Mutex::new((0..instances.len()).map(|_| None).collect());
    let workers = jobs.max(1).min(instances.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= instances.len() {
                    break;
                }
                let result = bench_one(&instances[i], grid, toggles);
                slots.lock().unwrap()[i] = Some(result);
            });
        }
    });
    let mut reports = Vec::with_capacity(instances.len());
    for (instance, slot) in instances.iter().zip(slots.into_inner().unwrap()) {
        let report = slot
            .unwrap_or_else(|| Err(anyhow!("worker dropped the instance")))
            .with_context(|| format!("benching {}", instance.name))?;
        reports.push(report);
    }
    Ok(reports)
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(|a, b| a.total_cmp(b));
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        (xs[mid - 1] + xs[mid]) / 2.0
    }
}

fn aggregate(
    grid: &[(String, DecideConfig)],
    instances: &[InstanceReport],
) -> Vec<ConfigAggregate> {
    grid.iter()
        .map(|(name, _)| {
            let runs: Vec<&ConfigRun> = instances
                .iter()
                .flat_map(|inst| inst.runs.iter().filter(|r| &r.config == name))
                .collect();
            let times: Vec<f64> = runs.iter().map(|r| r.wall_ms).collect();
            ConfigAggregate {
                config: name.clone(),
                refuted: runs
                    .iter()
                    .filter(|r| r.verdict == Verdict::Inconsistent)
                    .count(),
                total: runs.len(),
                wall_ms_mean: if times.is_empty() {
                    0.0
                } else {
                    times.iter().sum::<f64>() / times.len() as f64
                },
                wall_ms_median: median(times.clone()),
                wall_ms_max: times.iter().copied().fold(0.0, f64::max),
            }
        })
        .collect()
}

pub fn run(args: &BenchArgs) -> Result<u8> {
    let instances = match (&args.corpus, args.generate) {
        (Some(dir), None) => load_corpus(dir)?,
        (None, Some(count)) => generate_corpus(args, count)?,
        (None, None) => bail!("pass --corpus DIR or --generate COUNT"),
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    };

    if let (Some(dir), Some(_)) = (&args.corpus_out, args.generate) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for instance in &instances {
            let path = dir.join(format!("{}.jsonl", instance.name));
            let file =
                File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            write_statements_jsonl(BufWriter::new(file), &instance.domain, &instance.statements)?;
        }
    }

    let base = args.solve.decide_config();
    let grid = config_grid(&base);
    let toggles = if args.check_toggles {
        toggle_grid(&base)
    } else {
        Vec::new()
    };
    let mut reports = run_instances(&instances, args.jobs, &grid, &toggles)?;
    if !args.timings {
        for report in &mut reports {
            for run in &mut report.runs {
                run.wall_ms = 0.0;
            }
        }
    }

    let configs = aggregate(&grid, &reports);
    let toggle_mismatches = reports.iter().map(|r| r.toggle_mismatches.len()).sum();
    let report = BenchReport {
        run_spec: RunSpec {
            subcommand: "bench",
            args,
        },
        instances: reports,
        configs,
        toggles_checked: args.check_toggles,
        toggle_mismatches,
    };
    emit_json(&report, args.out.as_deref())?;
    Ok(EXIT_OK)
}
