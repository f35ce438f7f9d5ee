//! Order-increasing constraint-based structure learning (the PC algorithm).
//!
//! Skeleton learning starts from the complete undirected graph and, for
//! growing conditioning-set sizes, removes an edge as soon as some subset of
//! the current neighborhood separates its endpoints, recording that subset.
//! Orientation then applies the collider rule and the Meek propagation
//! rules. Every CI query flows through a [`CheckerState`], so the same loop
//! serves raw, reliability-checked, and pruning runs.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::checkers::{CheckAction, CheckerState};
use crate::ci::{CiBackend, CiQuery, TestLogRecord};
use crate::error::Result;
use crate::graph::{orient_cpdag, OrientConfig, Pdag, PdagRecord, SepsetTable};
use crate::model::{Domain, VarSet};

/// PC run parameters.
#[derive(Debug, Clone, Default)]
pub struct PcConfig {
    /// Largest conditioning-set size to try; defaults to n-2, the largest
    /// size a neighborhood can supply.
    pub max_order: Option<usize>,
    /// Enable the fourth Meek rule during orientation.
    pub meek_r4: bool,
}

/// Queries issued at one conditioning-set size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderCount {
    pub order: usize,
    pub queries: usize,
}

/// Everything a PC run produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcRunReport {
    pub pdag: PdagRecord,
    pub sepsets: Vec<SepsetRecord>,
    /// All queries issued, including entailed ones.
    pub total_queries: usize,
    /// Queries answered by the backend (tested, possibly injected).
    pub backend_tests: usize,
    /// Queries answered from the knowledge base.
    pub entailed: usize,
    pub aborted: bool,
    /// 1-based sequence index of the aborting query.
    pub abort_query: Option<usize>,
    pub per_order: Vec<OrderCount>,
    /// Collider orientations overwritten by conflicting triples.
    pub orientation_conflicts: usize,
    /// ED-Check alerts recorded under the alert policy.
    pub alerts: u32,
    /// Knowledge-base rollbacks performed by P-Check.
    pub rollbacks: u32,
    pub wall_ms: f64,
}

/// One recorded separating set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SepsetRecord {
    pub x: String,
    pub y: String,
    pub sepset: Vec<String>,
}

/// Skeleton phase output.
#[derive(Debug)]
pub struct SkeletonOutcome {
    pub pdag: Pdag,
    pub sepsets: SepsetTable,
    pub per_order: Vec<OrderCount>,
    pub total_queries: usize,
    pub backend_tests: usize,
    pub entailed: usize,
    pub aborted: bool,
    pub abort_query: Option<usize>,
    pub log: Vec<TestLogRecord>,
}

/// Lexicographic k-subsets of an ascending index slice.
fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > items.len() {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        // Advance to the next combination.
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + items.len() - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Learns the skeleton. Ordered pairs are visited in lexicographic index
/// order, conditioning subsets in lexicographic combination order, and
/// adjacency is re-read after every deletion. A checker abort stops the scan
/// immediately and returns the partial state.
pub fn learn_skeleton(
    domain: &Domain,
    checker: &mut CheckerState,
    backend: &mut dyn CiBackend,
    config: &PcConfig,
) -> Result<SkeletonOutcome> {
    let n = domain.n();
    let max_order = config.max_order.unwrap_or(n.saturating_sub(2));
    let mut pdag = Pdag::complete_undirected(n);
    let mut sepsets = SepsetTable::new();
    let mut log = Vec::new();
    let mut per_order = Vec::new();
    let mut seq = 0usize;
    let mut backend_tests = 0usize;
    let mut entailed = 0usize;
    let mut aborted = false;
    let mut abort_query = None;

    let mut order = 0usize;
    'orders: loop {
        let mut order_queries = 0usize;
        let mut any_eligible = false;
        for x in 0..n {
            for y in 0..n {
                if x == y || !pdag.is_adjacent(x, y) {
                    continue;
                }
                let neighbors: Vec<usize> = pdag.adjacents(x).remove(y).iter().collect();
                if neighbors.len() < order {
                    continue;
                }
                any_eligible = true;
                for subset in combinations(&neighbors, order) {
                    if !pdag.is_adjacent(x, y) {
                        break;
                    }
                    seq += 1;
                    order_queries += 1;
                    let z = VarSet::from_indices(&subset);
                    let query = CiQuery::new(VarSet::singleton(x), VarSet::singleton(y), z, seq)?;
                    let outcome = checker.check(&query, backend)?;
                    log.push(TestLogRecord::from_result(seq, &outcome.result, domain));
                    match outcome.action {
                        CheckAction::Tested => backend_tests += 1,
                        CheckAction::Entailed => entailed += 1,
                        CheckAction::Aborted => {
                            backend_tests += 1;
                            aborted = true;
                            abort_query = Some(seq);
                            per_order.push(OrderCount {
                                order,
                                queries: order_queries,
                            });
                            break 'orders;
                        }
                    }
                    if outcome.result.statement.independent() {
                        pdag.remove_edge(x, y);
                        sepsets.record(x, y, z);
                        break;
                    }
                }
            }
        }
        per_order.push(OrderCount {
            order,
            queries: order_queries,
        });
        if !any_eligible || order >= max_order {
            break;
        }
        order += 1;
    }

    Ok(SkeletonOutcome {
        pdag,
        sepsets,
        per_order,
        total_queries: seq,
        backend_tests,
        entailed,
        aborted,
        abort_query,
        log,
    })
}

/// Runs skeleton learning plus orientation and assembles the report. On
/// abort the partial skeleton is reported unoriented.
pub fn run_pc(
    domain: &Domain,
    checker: &mut CheckerState,
    backend: &mut dyn CiBackend,
    config: &PcConfig,
) -> Result<(PcRunReport, Vec<TestLogRecord>)> {
    let start = Instant::now();
    let skeleton = learn_skeleton(domain, checker, backend, config)?;
    let (pdag, conflicts) = if skeleton.aborted {
        (skeleton.pdag.clone(), 0)
    } else {
        let outcome = orient_cpdag(
            &skeleton.pdag,
            &skeleton.sepsets,
            OrientConfig {
                meek_r4: config.meek_r4,
            },
        );
        (outcome.pdag, outcome.conflicts)
    };
    let sepsets = skeleton
        .sepsets
        .entries()
        .into_iter()
        .map(|(x, y, s)| SepsetRecord {
            x: domain.name(x).to_string(),
            y: domain.name(y).to_string(),
            sepset: domain.set_names(s),
        })
        .collect();
    let report = PcRunReport {
        pdag: PdagRecord::from_pdag(&pdag, domain.names())?,
        sepsets,
        total_queries: skeleton.total_queries,
        backend_tests: skeleton.backend_tests,
        entailed: skeleton.entailed,
        aborted: skeleton.aborted,
        abort_query: skeleton.abort_query,
        per_order: skeleton.per_order,
        orientation_conflicts: conflicts,
        alerts: checker.alerts(),
        rollbacks: checker.kb().inconsistency_count(),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok((report, skeleton.log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checkers::{CheckerConfig, CheckerMode};
    use crate::ci::{InjectingBackend, OracleBackend};
    use crate::graph::Dag;
    use std::collections::BTreeSet;

    fn raw_checker(n: usize) -> CheckerState {
        CheckerState::new(
            Domain::with_default_names(n).unwrap(),
            CheckerConfig::default(),
        )
    }

    fn oracle(n: usize, edges: &[(usize, usize)]) -> OracleBackend {
        OracleBackend::new(Dag::from_edges(n, edges).unwrap())
    }

    #[test]
    fn combinations_are_lexicographic() {
        assert_eq!(
            combinations(&[1, 3, 5], 2),
            vec![vec![1, 3], vec![1, 5], vec![3, 5]]
        );
        assert_eq!(combinations(&[2, 4], 0), vec![Vec::<usize>::new()]);
        assert_eq!(combinations(&[7], 2), Vec::<Vec<usize>>::new());
    }

    #[test]
    fn chain_recovers_skeleton_and_sepset() {
        let domain = Domain::with_default_names(3).unwrap();
        let mut checker = raw_checker(3);
        let mut backend = oracle(3, &[(0, 1), (1, 2)]);
        let skeleton =
            learn_skeleton(&domain, &mut checker, &mut backend, &PcConfig::default()).unwrap();
        assert!(skeleton.pdag.has_undirected(0, 1));
        assert!(skeleton.pdag.has_undirected(1, 2));
        assert!(!skeleton.pdag.is_adjacent(0, 2));
        assert_eq!(skeleton.sepsets.get(0, 2), Some(VarSet::singleton(1)));
        assert_eq!(skeleton.sepsets.get(2, 0), Some(VarSet::singleton(1)));
        // Deterministic enumeration: six order-0 queries (all dependent),
        // four order-1 queries, then a final pass with no eligible pair.
        assert_eq!(skeleton.total_queries, 10);
        assert_eq!(
            skeleton.per_order,
            vec![
                OrderCount {
                    order: 0,
                    queries: 6
                },
                OrderCount {
                    order: 1,
                    queries: 4
                }
            ]
        );
    }

    #[test]
    fn collider_is_oriented() {
        let domain = Domain::with_default_names(3).unwrap();
        let mut checker = raw_checker(3);
        let mut backend = oracle(3, &[(0, 2), (1, 2)]);
        let (report, log) =
            run_pc(&domain, &mut checker, &mut backend, &PcConfig::default()).unwrap();
        assert_eq!(report.pdag.edges, vec![(0, 2), (1, 2)]);
        assert!(report.pdag.undirected.is_empty());
        assert!(!report.aborted);
        assert_eq!(report.total_queries, report.backend_tests);
        assert_eq!(report.entailed, 0);
        assert_eq!(log.len(), report.total_queries);
        // The separating set for the nonadjacent pair is empty.
        let sep = report
            .sepsets
            .iter()
            .find(|s| s.x == "X0" && s.y == "X1")
            .unwrap();
        assert!(sep.sepset.is_empty());
    }

    #[test]
    fn chain_stays_undirected() {
        let domain = Domain::with_default_names(3).unwrap();
        let mut checker = raw_checker(3);
        let mut backend = oracle(3, &[(0, 1), (1, 2)]);
        let (report, _) =
            run_pc(&domain, &mut checker, &mut backend, &PcConfig::default()).unwrap();
        assert!(report.pdag.edges.is_empty());
        assert_eq!(report.pdag.undirected, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn independent_pair_yields_empty_graph() {
        let domain = Domain::with_default_names(2).unwrap();
        let mut checker = raw_checker(2);
        let mut backend = oracle(2, &[]);
        let (report, _) =
            run_pc(&domain, &mut checker, &mut backend, &PcConfig::default()).unwrap();
        assert!(report.pdag.edges.is_empty());
        assert!(report.pdag.undirected.is_empty());
        // The reverse direction is never queried once the edge is gone.
        assert_eq!(report.total_queries, 1);
    }

    #[test]
    fn perfect_oracle_recovers_er_skeletons() {
        for seed in [11, 23, 37] {
            let n = 5;
            let dag = crate::graph::sample_er_dag(n, 0.4, seed).unwrap();
            let domain = Domain::with_default_names(n).unwrap();
            let mut checker = raw_checker(n);
            let mut backend = OracleBackend::new(dag.clone());
            let skeleton =
                learn_skeleton(&domain, &mut checker, &mut backend, &PcConfig::default()).unwrap();
            let truth = dag.skeleton();
            assert_eq!(
                skeleton.pdag.undirected_edges(),
                truth.undirected_edges(),
                "skeleton mismatch for seed {seed}"
            );
        }
    }

    #[test]
    fn injected_error_removes_true_edge_without_checker() {
        // Flipping the fourth issued test (the first order-1 query on the
        // collider) deletes an edge the ground truth keeps.
        let domain = Domain::with_default_names(3).unwrap();
        let mut checker = raw_checker(3);
        let mut backend = InjectingBackend::new(oracle(3, &[(0, 2), (1, 2)]), BTreeSet::from([4]));
        let (report, _) =
            run_pc(&domain, &mut checker, &mut backend, &PcConfig::default()).unwrap();
        let truth_edges = 2;
        let learned = report.pdag.edges.len() + report.pdag.undirected.len();
        assert!(
            learned < truth_edges,
            "flip should have removed a true edge"
        );
    }

    #[test]
    fn ed_checker_aborts_on_injected_flip() {
        let domain = Domain::with_default_names(3).unwrap();
        let config = CheckerConfig {
            mode: CheckerMode::Ed,
            ..CheckerConfig::default()
        };
        let mut checker = CheckerState::new(domain.clone(), config);
        let mut backend = InjectingBackend::new(oracle(3, &[(0, 2), (1, 2)]), BTreeSet::from([4]));
        let (report, log) =
            run_pc(&domain, &mut checker, &mut backend, &PcConfig::default()).unwrap();
        assert!(report.aborted);
        assert_eq!(report.abort_query, Some(4));
        assert_eq!(report.total_queries, 4);
        assert_eq!(log.len(), 4);
    }
}
