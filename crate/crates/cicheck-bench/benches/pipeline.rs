//! Pipeline benchmarks: graphoid saturation, solver-script emission, the
//! staged decision procedure, d-separation enumeration, a PC run against a
//! perfect oracle, and one stratified chi-squared test.
//!
//! The two `decide` benchmarks spawn the external solver per iteration, so
//! their groups run with reduced sample counts.

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use cicheck_bench::{conflict_statements, dsep_statements};
use cicheck_core::bayes::{forward_sample, sample_cpts};
use cicheck_core::checkers::{CheckerConfig, CheckerState};
use cicheck_core::ci::{chi2_test, CiQuery, OracleBackend};
use cicheck_core::cir::{decide, o2_graphoid, CirInstance, DecideConfig, DEFAULT_O2_CAP};
use cicheck_core::graph::enumerate_dsep_statements;
use cicheck_core::model::VarSet;
use cicheck_core::pc::{run_pc, PcConfig};
use cicheck_core::smt::{AxiomSet, AxiomStyle, SmtInstance};

fn bench_o2_saturation(c: &mut Criterion) {
    let (domain, statements) = conflict_statements();
    let conflict = CirInstance::new(domain, statements).unwrap();
    let (domain, statements, _) = dsep_statements(5, 11).unwrap();
    let dsep = CirInstance::new(domain, statements).unwrap();

    let mut group = c.benchmark_group("o2_saturation");
    group.bench_function("conflict_w3", |b| {
        b.iter(|| o2_graphoid(black_box(&conflict), DEFAULT_O2_CAP))
    });
    group.bench_function("dsep_w5", |b| {
        b.iter(|| o2_graphoid(black_box(&dsep), DEFAULT_O2_CAP))
    });
    group.finish();
}

fn bench_script_emission(c: &mut Criterion) {
    let (_, statements, _) = dsep_statements(4, 3).unwrap();
    let ground =
        SmtInstance::new(4, statements, AxiomSet::all(), AxiomStyle::Standard, 1_000).unwrap();
    let (_, statements, _) = dsep_statements(8, 3).unwrap();
    let quantified =
        SmtInstance::new(8, statements, AxiomSet::all(), AxiomStyle::Standard, 1_000).unwrap();

    let mut group = c.benchmark_group("script_emission");
    group.bench_function("ground_w4", |b| {
        b.iter(|| black_box(&ground).solver_script())
    });
    group.bench_function("quantified_w8", |b| {
        b.iter(|| black_box(&quantified).solver_script())
    });
    group.finish();
}

fn bench_decide(c: &mut Criterion) {
    let (domain, statements) = conflict_statements();
    let conflict = CirInstance::new(domain, statements).unwrap();
    let (domain, statements, _) = dsep_statements(3, 7).unwrap();
    let dsep = CirInstance::new(domain, statements).unwrap();
    let config = DecideConfig::default();
    let solver_only = DecideConfig {
        use_o1: false,
        use_o2: false,
        use_o3: false,
        ..DecideConfig::default()
    };

    let mut group = c.benchmark_group("decide");
    group.sample_size(20);
    group.bench_function("staged_conflict_w3", |b| {
        b.iter(|| decide(black_box(&conflict), None, &config).unwrap())
    });
    group.bench_function("solver_consistent_w3", |b| {
        b.iter(|| decide(black_box(&dsep), None, &solver_only).unwrap())
    });
    group.finish();
}

fn bench_dsep_enumeration(c: &mut Criterion) {
    let (_, _, dag) = dsep_statements(5, 11).unwrap();
    c.bench_function("dsep_enumeration_w5", |b| {
        b.iter(|| enumerate_dsep_statements(black_box(&dag), 5).unwrap())
    });
}

fn bench_pc_oracle(c: &mut Criterion) {
    let (domain, _, dag) = dsep_statements(6, 5).unwrap();
    let pc_config = PcConfig {
        max_order: None,
        meek_r4: false,
    };
    c.bench_function("pc_oracle_w6", |b| {
        b.iter(|| {
            let mut checker = CheckerState::new(domain.clone(), CheckerConfig::default());
            let mut backend = OracleBackend::new(dag.clone());
            run_pc(black_box(&domain), &mut checker, &mut backend, &pc_config).unwrap()
        })
    });
}

fn bench_chi2(c: &mut Criterion) {
    let (_, _, dag) = dsep_statements(5, 11).unwrap();
    let bn = sample_cpts(&dag, &[2; 5], 1.0, 11).unwrap();
    let data = forward_sample(&bn, 10_000, 13).unwrap();
    let query = CiQuery::new(
        VarSet::from_bits(0b00001),
        VarSet::from_bits(0b00010),
        VarSet::from_bits(0b00100),
        1,
    )
    .unwrap();
    c.bench_function("chi2_m10000", |b| {
        b.iter(|| chi2_test(black_box(&data), &query, 0.05).unwrap())
    });
}

criterion_group!(
    benches,
    bench_o2_saturation,
    bench_script_emission,
    bench_decide,
    bench_dsep_enumeration,
    bench_pc_oracle,
    bench_chi2
);
criterion_main!(benches);
