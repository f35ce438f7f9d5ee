//! Runtime checkers wrapping CI test backends.
//!
//! ED-Check verifies every incoming test result against the knowledge base
//! and aborts (or alerts) on contradiction; P-Check answers queries from the
//! knowledge base when an answer is entailed, skipping the backend test
//! entirely. Both share the knowledge-base lifecycle: snapshot-per-commit,
//! rollback on detected inconsistency, and a fallback that bypasses checking
//! once rollbacks exceed a threshold.

use serde::{Deserialize, Serialize};

use crate::ci::{CiBackend, CiQuery, CiTestResult, Source};
use crate::cir::{decide, CirInstance, DecideConfig, DecisionTrace};
use crate::error::Result;
use crate::model::{CiStatement, Domain, KnowledgeBase, Verdict};

/// Default number of observed inconsistencies before P-Check falls back to
/// raw testing.
pub const DEFAULT_INCONSISTENCY_THRESHOLD: u32 = 10;

/// Which checker wraps the backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckerMode {
    #[default]
    Off,
    Ed,
    P,
}

/// ED-Check response to a detected contradiction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdPolicy {
    /// Stop the run, surfacing the offending statement.
    #[default]
    Abort,
    /// Record the alert, discard the statement, and continue.
    Alert,
}

/// Checker configuration.
#[derive(Debug, Clone)]
pub struct CheckerConfig {
    pub mode: CheckerMode,
    pub ed_policy: EdPolicy,
    pub inconsistency_threshold: u32,
    /// Whether entailed answers are committed to the knowledge base so later
    /// queries can chain on them.
    pub commit_entailed: bool,
    pub decide: DecideConfig,
}

impl Default for CheckerConfig {
    fn default() -> Self {
        CheckerConfig {
            mode: CheckerMode::Off,
            ed_policy: EdPolicy::Abort,
            inconsistency_threshold: DEFAULT_INCONSISTENCY_THRESHOLD,
            commit_entailed: true,
            decide: DecideConfig::default(),
        }
    }
}

/// What the checker did with one query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckAction {
    /// The backend ran and its answer stands.
    Tested,
    /// The answer was derived from the knowledge base; no backend call.
    Entailed,
    /// ED-Check detected a contradiction under the abort policy.
    Aborted,
}

/// Checker verdict for one query.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    /// The effective test result (backend answer or entailed synthesis).
    pub result: CiTestResult,
    pub action: CheckAction,
    /// Decision trace of the probe that settled this query, when one ran.
    pub trace: Option<DecisionTrace>,
    /// Set when ED-Check under the alert policy flagged this result.
    pub alerted: bool,
}

/// A checker bound to one discovery run.
#[derive(Debug, Clone)]
pub struct CheckerState {
    domain: Domain,
    kb: KnowledgeBase,
    config: CheckerConfig,
    fallback_active: bool,
    alerts: u32,
}

impl CheckerState {
    pub fn new(domain: Domain, config: CheckerConfig) -> Self {
        CheckerState {
            domain,
            kb: KnowledgeBase::new(),
            config,
            fallback_active: false,
            alerts: 0,
        }
    }

    /// The accumulated knowledge base.
    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn config(&self) -> &CheckerConfig {
        &self.config
    }

    /// True once P-Check has stopped consulting the knowledge base.
    pub fn fallback_active(&self) -> bool {
        self.fallback_active
    }

    /// ED-Check alerts recorded under the alert policy.
    pub fn alerts(&self) -> u32 {
        self.alerts
    }

    /// Commits a statement unconditionally under its own snapshot (used to
    /// seed or replay a knowledge base).
    pub fn commit_statement(&mut self, stmt: CiStatement) {
        self.kb.snapshot();
        self.kb.add(stmt);
    }

    /// Routes a query through the configured checker.
    pub fn check(&mut self, q: &CiQuery, backend: &mut dyn CiBackend) -> Result<CheckOutcome> {
        match self.config.mode {
            CheckerMode::Off => {
                let result = backend.test(q)?;
                Ok(CheckOutcome {
                    result,
                    action: CheckAction::Tested,
                    trace: None,
                    alerted: false,
                })
            }
            CheckerMode::Ed => ed_check(self, q, backend),
            CheckerMode::P => p_check(self, q, backend),
        }
    }

    /// Decides consistency of the knowledge base extended with `gamma`,
    /// reverting the speculative addition before returning.
    fn probe(&mut self, gamma: &CiStatement) -> Result<(Verdict, DecisionTrace)> {
        self.kb.snapshot();
        self.kb.add(*gamma);
        let inst = CirInstance::new(self.domain.clone(), self.kb.statements().to_vec())?;
        let decided = decide(&inst, Some(gamma), &self.config.decide);
        self.kb.revert()?;
        decided
    }
}

/// Reliability checker: test first, then verify the result is consistent
/// with everything accepted so far before committing it.
pub fn ed_check(
    state: &mut CheckerState,
    q: &CiQuery,
    backend: &mut dyn CiBackend,
) -> Result<CheckOutcome> {
    let result = backend.test(q)?;
    let gamma = result.statement;
    let (verdict, trace) = state.probe(&gamma)?;
    match verdict {
        Verdict::Consistent => {
            state.commit_statement(gamma);
            Ok(CheckOutcome {
                result,
                action: CheckAction::Tested,
                trace: Some(trace),
                alerted: false,
            })
        }
        Verdict::Inconsistent => match state.config.ed_policy {
            EdPolicy::Abort => Ok(CheckOutcome {
                result,
                action: CheckAction::Aborted,
                trace: Some(trace),
                alerted: false,
            }),
            EdPolicy::Alert => {
                state.alerts += 1;
                Ok(CheckOutcome {
                    result,
                    action: CheckAction::Tested,
                    trace: Some(trace),
                    alerted: true,
                })
            }
        },
    }
}

/// Privacy checker: answer from the knowledge base when either polarity of
/// the query is refuted, otherwise run the backend test once.
pub fn p_check(
    state: &mut CheckerState,
    q: &CiQuery,
    backend: &mut dyn CiBackend,
) -> Result<CheckOutcome> {
    loop {
        if state.fallback_active {
            let result = backend.test(q)?;
            return Ok(CheckOutcome {
                result,
                action: CheckAction::Tested,
                trace: None,
                alerted: false,
            });
        }
        let gamma = CiStatement::new(q.x, q.y, q.z, true)?;
        let (indep_verdict, indep_trace) = state.probe(&gamma)?;
        if indep_verdict == Verdict::Inconsistent {
            let negated = gamma.negate();
            let (dep_verdict, _) = state.probe(&negated)?;
            if dep_verdict == Verdict::Inconsistent {
                // Both polarities refuted: the base itself is contradictory.
                register_inconsistency(state)?;
                continue;
            }
            return Ok(entailed_outcome(state, negated, indep_trace));
        }
        let negated = gamma.negate();
        let (dep_verdict, dep_trace) = state.probe(&negated)?;
        if dep_verdict == Verdict::Inconsistent {
            return Ok(entailed_outcome(state, gamma, dep_trace));
        }
        let result = backend.test(q)?;
        state.commit_statement(result.statement);
        return Ok(CheckOutcome {
            result,
            action: CheckAction::Tested,
            trace: None,
            alerted: false,
        });
    }
}

fn entailed_outcome(
    state: &mut CheckerState,
    stmt: CiStatement,
    trace: DecisionTrace,
) -> CheckOutcome {
    if state.config.commit_entailed {
        state.commit_statement(stmt);
    }
    CheckOutcome {
        result: CiTestResult {
            statement: stmt,
            p_value: None,
            statistic: None,
            df: None,
            source: Source::Entailed,
            low_support: false,
        },
        action: CheckAction::Entailed,
        trace: Some(trace),
        alerted: false,
    }
}

/// Backtracks one commit, counts the inconsistency, and engages the fallback
/// once the count reaches the threshold.
pub fn register_inconsistency(state: &mut CheckerState) -> Result<()> {
    if state.kb.rollback().is_err() {
        // Nothing left to roll back; checking cannot make progress.
        state.fallback_active = true;
        return Ok(());
    }
    if state.kb.inconsistency_count() >= state.config.inconsistency_threshold {
        state.fallback_active = true;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ci::{InjectingBackend, OracleBackend};
    use crate::graph::Dag;
    use crate::model::VarSet;
    use std::collections::BTreeSet;
    use std::path::PathBuf;

    /// Backend wrapper that counts calls, for asserting pruning behavior.
    struct Counting<B> {
        inner: B,
        calls: usize,
    }

    impl<B: CiBackend> CiBackend for Counting<B> {
        fn test(&mut self, q: &CiQuery) -> Result<CiTestResult> {
            self.calls += 1;
            self.inner.test(q)
        }
    }

    fn collider_oracle() -> OracleBackend {
        // X0 -> X2 <- X1: only X0 and X1 are marginally independent.
        OracleBackend::new(Dag::from_edges(3, &[(0, 2), (1, 2)]).unwrap())
    }

    fn q(x: usize, y: usize, z: &[usize], seq: usize) -> CiQuery {
        CiQuery::new(
            VarSet::singleton(x),
            VarSet::singleton(y),
            VarSet::from_indices(z),
            seq,
        )
        .unwrap()
    }

    fn stmt(x: u64, y: u64, z: u64, independent: bool) -> CiStatement {
        CiStatement::new(
            VarSet::from_bits(x),
            VarSet::from_bits(y),
            VarSet::from_bits(z),
            independent,
        )
        .unwrap()
    }

    fn ed_state(domain_size: usize) -> CheckerState {
        let config = CheckerConfig {
            mode: CheckerMode::Ed,
            ..CheckerConfig::default()
        };
        CheckerState::new(Domain::with_default_names(domain_size).unwrap(), config)
    }

    #[test]
    fn ed_detects_injected_conflict_and_aborts() {
        // Replay of the motivating sequence: three correct marginal answers,
        // then a flipped conditional answer that contradicts them.
        let mut state = ed_state(3);
        let mut backend = InjectingBackend::new(collider_oracle(), BTreeSet::from([4]));
        let queries = [
            q(0, 2, &[], 1),
            q(1, 2, &[], 2),
            q(0, 1, &[], 3),
            q(1, 2, &[0], 4),
        ];
        let mut actions = Vec::new();
        for query in &queries {
            let outcome = ed_check(&mut state, query, &mut backend).unwrap();
            actions.push(outcome.action);
        }
        assert_eq!(
            actions,
            [
                CheckAction::Tested,
                CheckAction::Tested,
                CheckAction::Tested,
                CheckAction::Aborted
            ]
        );
        assert_eq!(state.kb().len(), 3);
    }

    #[test]
    fn ed_with_correct_oracle_never_aborts() {
        let mut state = ed_state(3);
        let mut backend = collider_oracle();
        let queries = [
            q(0, 2, &[], 1),
            q(1, 2, &[], 2),
            q(0, 1, &[], 3),
            q(1, 2, &[0], 4),
            q(0, 2, &[1], 5),
        ];
        for query in &queries {
            let outcome = ed_check(&mut state, query, &mut backend).unwrap();
            assert_eq!(outcome.action, CheckAction::Tested);
            assert!(!outcome.alerted);
        }
        assert_eq!(state.kb().len(), 5);
    }

    #[test]
    fn ed_alert_policy_discards_and_continues() {
        let mut state = ed_state(3);
        state.config.ed_policy = EdPolicy::Alert;
        let mut backend = InjectingBackend::new(collider_oracle(), BTreeSet::from([4]));
        let queries = [
            q(0, 2, &[], 1),
            q(1, 2, &[], 2),
            q(0, 1, &[], 3),
            q(1, 2, &[0], 4),
            q(0, 2, &[1], 5),
        ];
        let mut alerted = 0;
        for query in &queries {
            let outcome = ed_check(&mut state, query, &mut backend).unwrap();
            assert_ne!(outcome.action, CheckAction::Aborted);
            if outcome.alerted {
                alerted += 1;
            }
        }
        assert_eq!(alerted, 1);
        assert_eq!(state.alerts(), 1);
        // The flagged statement was rolled back; the other four committed.
        assert_eq!(state.kb().len(), 4);
    }

    #[test]
    fn ed_misses_error_in_lone_marginal_statement() {
        // A flipped answer on an isolated pair stays marginal and
        // non-degenerate, so nothing contradicts it.
        let mut state = ed_state(2);
        let oracle = OracleBackend::new(Dag::from_edges(2, &[]).unwrap());
        let mut backend = InjectingBackend::new(oracle, BTreeSet::from([1]));
        let outcome = ed_check(&mut state, &q(0, 1, &[], 1), &mut backend).unwrap();
        assert_eq!(outcome.action, CheckAction::Tested);
        assert!(!outcome.result.statement.independent());
        assert_eq!(state.kb().len(), 1);
    }

    fn p_state(domain_size: usize) -> CheckerState {
        let config = CheckerConfig {
            mode: CheckerMode::P,
            ..CheckerConfig::default()
        };
        CheckerState::new(Domain::with_default_names(domain_size).unwrap(), config)
    }

    #[test]
    fn p_check_entails_dependence_without_backend_call() {
        let mut state = p_state(3);
        // X0 and X2 dependent, X1 and X2 dependent, X0 and X1 independent.
        state.commit_statement(stmt(0b001, 0b100, 0b000, false));
        state.commit_statement(stmt(0b010, 0b100, 0b000, false));
        state.commit_statement(stmt(0b001, 0b010, 0b000, true));
        let mut backend = Counting {
            inner: collider_oracle(),
            calls: 0,
        };
        let outcome = p_check(&mut state, &q(1, 2, &[0], 1), &mut backend).unwrap();
        assert_eq!(outcome.action, CheckAction::Entailed);
        assert!(!outcome.result.statement.independent());
        assert_eq!(outcome.result.source, Source::Entailed);
        assert_eq!(backend.calls, 0);
        // The entailed dependence is committed for later chaining.
        assert_eq!(state.kb().len(), 4);
    }

    #[test]
    fn p_check_entails_independence_from_joint_statement() {
        let mut state = p_state(3);
        // X0 independent of {X1, X2} jointly entails the marginal pair.
        state.commit_statement(stmt(0b001, 0b110, 0b000, true));
        let mut backend = Counting {
            inner: collider_oracle(),
            calls: 0,
        };
        let outcome = p_check(&mut state, &q(0, 1, &[], 1), &mut backend).unwrap();
        assert_eq!(outcome.action, CheckAction::Entailed);
        assert!(outcome.result.statement.independent());
        assert_eq!(backend.calls, 0);
    }

    #[test]
    fn p_check_empty_kb_falls_through_to_backend() {
        let mut state = p_state(3);
        let mut backend = Counting {
            inner: collider_oracle(),
            calls: 0,
        };
        let outcome = p_check(&mut state, &q(0, 1, &[], 1), &mut backend).unwrap();
        assert_eq!(outcome.action, CheckAction::Tested);
        assert_eq!(backend.calls, 1);
        assert_eq!(state.kb().len(), 1);
    }

    #[test]
    fn p_check_rolls_back_contradictory_base_and_reruns() {
        let mut state = p_state(3);
        state.commit_statement(stmt(0b001, 0b100, 0b000, false));
        state.commit_statement(stmt(0b010, 0b100, 0b000, false));
        state.commit_statement(stmt(0b001, 0b010, 0b000, true));
        // A corrupt commit that contradicts the three above.
        state.commit_statement(stmt(0b010, 0b100, 0b001, true));
        let mut backend = Counting {
            inner: collider_oracle(),
            calls: 0,
        };
        let outcome = p_check(&mut state, &q(1, 2, &[0], 1), &mut backend).unwrap();
        // One rollback removes the corrupt commit; the re-run then entails
        // dependence from the repaired base.
        assert_eq!(state.kb().inconsistency_count(), 1);
        assert_eq!(outcome.action, CheckAction::Entailed);
        assert!(!outcome.result.statement.independent());
        assert_eq!(backend.calls, 0);
        assert!(!state.fallback_active());
    }

    #[test]
    fn p_check_threshold_engages_fallback() {
        let mut state = p_state(3);
        state.config.inconsistency_threshold = 1;
        // A nonexistent solver proves no decide call happens after fallback.
        state.config.decide = DecideConfig {
            solver: PathBuf::from("/nonexistent/solver"),
            ..Default::default()
        };
        state.commit_statement(stmt(0b001, 0b100, 0b000, false));
        state.commit_statement(stmt(0b010, 0b100, 0b000, false));
        state.commit_statement(stmt(0b001, 0b010, 0b000, true));
        state.commit_statement(stmt(0b010, 0b100, 0b001, true));
        let mut backend = Counting {
            inner: collider_oracle(),
            calls: 0,
        };
        let outcome = p_check(&mut state, &q(1, 2, &[0], 1), &mut backend).unwrap();
        assert!(state.fallback_active());
        assert_eq!(outcome.action, CheckAction::Tested);
        assert_eq!(backend.calls, 1);
        // Subsequent queries bypass checking entirely.
        let outcome = p_check(&mut state, &q(0, 2, &[], 2), &mut backend).unwrap();
        assert_eq!(outcome.action, CheckAction::Tested);
        assert_eq!(backend.calls, 2);
    }

    #[test]
    fn register_inconsistency_counts_and_engages_threshold() {
        let mut state = p_state(2);
        state.config.inconsistency_threshold = 2;
        state.commit_statement(stmt(0b01, 0b10, 0b00, true));
        state.commit_statement(stmt(0b01, 0b10, 0b00, false));
        register_inconsistency(&mut state).unwrap();
        assert_eq!(state.kb().inconsistency_count(), 1);
        assert!(!state.fallback_active());
        register_inconsistency(&mut state).unwrap();
        assert!(state.fallback_active());
    }
}
