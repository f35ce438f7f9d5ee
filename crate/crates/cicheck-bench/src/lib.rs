//! Shared fixtures for the pipeline benchmarks: canned knowledge bases and
//! seeded graphs with deterministic shapes.

use cicheck_core::graph::{enumerate_dsep_statements, sample_er_dag, Dag};
use cicheck_core::model::{CiStatement, Domain, VarSet};
use cicheck_core::Result;

/// The four-statement conflicting knowledge base: two marginal dependences,
/// a marginal independence, and a conditional independence whose graphoid
/// closure contradicts them.
pub fn conflict_statements() -> (Domain, Vec<CiStatement>) {
    let domain = Domain::with_default_names(3).unwrap();
    let stmt = |x: u64, y: u64, z: u64, independent| {
        CiStatement::new(
            VarSet::from_bits(x),
            VarSet::from_bits(y),
            VarSet::from_bits(z),
            independent,
        )
        .unwrap()
    };
    let statements = vec![
        stmt(0b001, 0b100, 0b000, false),
        stmt(0b010, 0b100, 0b000, false),
        stmt(0b001, 0b010, 0b000, true),
        stmt(0b010, 0b100, 0b001, true),
    ];
    (domain, statements)
}

/// A seeded random DAG together with its full d-separation statement set
/// (every singleton pair under every disjoint conditioning set).
pub fn dsep_statements(n: usize, seed: u64) -> Result<(Domain, Vec<CiStatement>, Dag)> {
    let dag = sample_er_dag(n, 0.4, seed)?;
    let domain = Domain::with_default_names(n)?;
    let statements = enumerate_dsep_statements(&dag, n)?;
    Ok((domain, statements, dag))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conflict_fixture_has_four_statements_over_three_variables() {
        let (domain, statements) = conflict_statements();
        assert_eq!(domain.n(), 3);
        assert_eq!(statements.len(), 4);
        assert_eq!(statements.iter().filter(|s| s.independent()).count(), 2);
    }

    #[test]
    fn dsep_fixture_is_deterministic() {
        let (_, a, _) = dsep_statements(5, 11).unwrap();
        let (_, b, _) = dsep_statements(5, 11).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b);
    }
}
