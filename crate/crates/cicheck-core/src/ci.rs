//! Conditional-independence test backends behind one interface: an exact
//! d-separation oracle, a stratified chi-squared test on discrete data, and
//! a wrapper that injects controlled errors by flipping selected outcomes.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::bayes::Dataset;
use crate::error::{Error, Result};
use crate::graph::{d_separated, Dag};
use crate::model::{CiStatement, Domain, VarSet};

/// Origin of a CI answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// Ground-truth d-separation on a known DAG.
    Oracle,
    /// Chi-squared test on data.
    Chi2,
    /// A backend answer flipped by the injection wrapper.
    Injected,
    /// Entailed from the knowledge base without running a test.
    Entailed,
}

/// One CI query. `sequence_index` is the 1-based position in the issuing
/// run's query stream; backends that count issued tests keep their own
/// counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CiQuery {
    pub x: VarSet,
    pub y: VarSet,
    pub z: VarSet,
    pub sequence_index: usize,
}

impl CiQuery {
    /// Builds a query, validating the set constraints.
    pub fn new(x: VarSet, y: VarSet, z: VarSet, sequence_index: usize) -> Result<Self> {
        if x.is_empty() || y.is_empty() {
            return Err(Error::InvalidQuery("x and y must be non-empty".into()));
        }
        if !x.is_disjoint(y) || !x.is_disjoint(z) || !y.is_disjoint(z) {
            return Err(Error::InvalidQuery(format!(
                "x={x}, y={y}, z={z} must be pairwise disjoint"
            )));
        }
        Ok(CiQuery {
            x,
            y,
            z,
            sequence_index,
        })
    }
}

/// Outcome of one CI test.
#[derive(Debug, Clone, PartialEq)]
pub struct CiTestResult {
    pub statement: CiStatement,
    pub p_value: Option<f64>,
    pub statistic: Option<f64>,
    pub df: Option<u64>,
    pub source: Source,
    /// Set when every stratum was skipped for insufficient counts and the
    /// independent verdict is a no-evidence default.
    pub low_support: bool,
}

/// A CI test backend. Backends may keep state (the injection wrapper counts
/// issued tests), so testing takes `&mut self`.
pub trait CiBackend {
    fn test(&mut self, q: &CiQuery) -> Result<CiTestResult>;
}

/// Perfect oracle: answers with the d-separation truth of a known DAG.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    dag: Dag,
}

impl OracleBackend {
    pub fn new(dag: Dag) -> Self {
        OracleBackend { dag }
    }
}

impl CiBackend for OracleBackend {
    fn test(&mut self, q: &CiQuery) -> Result<CiTestResult> {
        let independent = d_separated(&self.dag, q.x, q.y, q.z)?;
        Ok(CiTestResult {
            statement: CiStatement::new(q.x, q.y, q.z, independent)?,
            p_value: None,
            statistic: None,
            df: None,
            source: Source::Oracle,
            low_support: false,
        })
    }
}

/// Pearson chi-squared CI test, stratified by the conditioning assignment.
///
/// Each stratum contributes a contingency table over the categories observed
/// in that stratum; strata with fewer than [`MIN_STRATUM_COUNT`] samples are
/// skipped. Statistics and degrees of freedom are summed across strata and
/// the p-value is the upper tail of the chi-squared distribution. Dependence
/// is declared iff `p < alpha`.
pub fn chi2_test(data: &Dataset, q: &CiQuery, alpha: f64) -> Result<CiTestResult> {
    if q.x.len() != 1 || q.y.len() != 1 {
        return Err(Error::InvalidQuery(
            "chi-squared test needs singleton x and y".into(),
        ));
    }
    let n = data.n();
    if q.x.union(q.y).union(q.z).iter().any(|v| v >= n) {
        return Err(Error::InvalidQuery(
            "query mentions columns outside the dataset".into(),
        ));
    }
    let xcol = q.x.iter().next().unwrap();
    let ycol = q.y.iter().next().unwrap();
    let zcols: Vec<usize> = q.z.iter().collect();

    // Group rows by conditioning assignment; BTreeMap fixes summation order.
    let mut strata: BTreeMap<Vec<usize>, Vec<(usize, usize)>> = BTreeMap::new();
    for row in data.rows() {
        let key: Vec<usize> = zcols.iter().map(|&c| row[c]).collect();
        strata.entry(key).or_default().push((row[xcol], row[ycol]));
    }

    let mut statistic = 0.0f64;
    let mut df = 0u64;
    let mut usable = 0usize;
    for pairs in strata.values() {
        let total = pairs.len();
        if total < MIN_STRATUM_COUNT {
            continue;
        }
        usable += 1;
        let xcats: BTreeSet<usize> = pairs.iter().map(|&(a, _)| a).collect();
        let ycats: BTreeSet<usize> = pairs.iter().map(|&(_, b)| b).collect();
        let r = xcats.len();
        let c = ycats.len();
        if r < 2 || c < 2 {
            continue;
        }
        let xindex: BTreeMap<usize, usize> =
            xcats.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let yindex: BTreeMap<usize, usize> =
            ycats.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut counts = vec![vec![0usize; c]; r];
        for &(a, b) in pairs {
            counts[xindex[&a]][yindex[&b]] += 1;
        }
        let row_tot: Vec<usize> = counts.iter().map(|row| row.iter().sum()).collect();
        let mut col_tot = vec![0usize; c];
        for row in &counts {
            for (j, &v) in row.iter().enumerate() {
                col_tot[j] += v;
            }
        }
        for i in 0..r {
            for j in 0..c {
                let expected = row_tot[i] as f64 * col_tot[j] as f64 / total as f64;
                let observed = counts[i][j] as f64;
                statistic += (observed - expected).powi(2) / expected;
            }
        }
        df += ((r - 1) * (c - 1)) as u64;
    }

    let low_support = usable == 0;
    let p_value = if df == 0 {
        1.0
    } else {
        gamma_ur(df as f64 / 2.0, statistic / 2.0)
    };
    let independent = p_value >= alpha;
    Ok(CiTestResult {
        statement: CiStatement::new(q.x, q.y, q.z, independent)?,
        p_value: Some(p_value),
        statistic: Some(statistic),
        df: Some(df),
        source: Source::Chi2,
        low_support,
    })
}

/// Minimum per-stratum sample count for a contingency table to contribute.
pub const MIN_STRATUM_COUNT: usize = 5;

/// Chi-squared backend bound to a dataset and significance level.
#[derive(Debug, Clone)]
pub struct Chi2Backend {
    data: Dataset,
    alpha: f64,
}

impl Chi2Backend {
    pub fn new(data: Dataset, alpha: f64) -> Self {
        Chi2Backend { data, alpha }
    }
}

impl CiBackend for Chi2Backend {
    fn test(&mut self, q: &CiQuery) -> Result<CiTestResult> {
        chi2_test(&self.data, q, self.alpha)
    }
}

/// Wrapper that negates the statement of the k-th issued test for each `k`
/// in `flips` (1-based over the tests this wrapper has issued), leaving
/// everything else to the inner backend.
#[derive(Debug)]
pub struct InjectingBackend<B> {
    inner: B,
    flips: BTreeSet<usize>,
    issued: usize,
}

impl<B: CiBackend> InjectingBackend<B> {
    pub fn new(inner: B, flips: BTreeSet<usize>) -> Self {
        InjectingBackend {
            inner,
            flips,
            issued: 0,
        }
    }

    /// Indices this wrapper will flip.
    pub fn flips(&self) -> &BTreeSet<usize> {
        &self.flips
    }

    /// Number of tests issued so far.
    pub fn issued(&self) -> usize {
        self.issued
    }
}

impl<B: CiBackend> CiBackend for InjectingBackend<B> {
    fn test(&mut self, q: &CiQuery) -> Result<CiTestResult> {
        let mut result = self.inner.test(q)?;
        self.issued += 1;
        if self.flips.contains(&self.issued) {
            result.statement = result.statement.negate();
            result.source = Source::Injected;
        }
        Ok(result)
    }
}

/// Draws `max(1, round(total * rate_percent / 100))` flip indices from
/// `1..=total` without replacement. Deterministic per seed.
pub fn flip_indices_for_rate(
    total: usize,
    rate_percent: f64,
    seed: u64,
) -> Result<BTreeSet<usize>> {
    if total == 0 {
        return Err(Error::InvalidQuery(
            "cannot draw flip indices from zero tests".into(),
        ));
    }
    if !(0.0..=100.0).contains(&rate_percent) {
        return Err(Error::InvalidQuery(format!(
            "rate {rate_percent}% outside [0,100]"
        )));
    }
    let k = ((total as f64 * rate_percent / 100.0).round() as usize).clamp(1, total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = rand::seq::index::sample(&mut rng, total, k);
    Ok(chosen.iter().map(|i| i + 1).collect())
}

/// One line of the test log: the artifact consumed by error-injection replay
/// and corpus generation. Field order is fixed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestLogRecord {
    pub index: usize,
    pub x: Vec<String>,
    pub y: Vec<String>,
    pub z: Vec<String>,
    pub independent: bool,
    pub p_value: Option<f64>,
    pub source: Source,
}

impl TestLogRecord {
    /// Renders a result against its domain.
    pub fn from_result(index: usize, result: &CiTestResult, domain: &Domain) -> Self {
        TestLogRecord {
            index,
            x: domain.set_names(result.statement.x()),
            y: domain.set_names(result.statement.y()),
            z: domain.set_names(result.statement.z()),
            independent: result.statement.independent(),
            p_value: result.p_value,
            source: result.source,
        }
    }

    /// Parses the statement against a domain.
    pub fn to_statement(&self, domain: &Domain) -> Result<CiStatement> {
        CiStatement::new(
            domain.set_from_names(&self.x)?,
            domain.set_from_names(&self.y)?,
            domain.set_from_names(&self.z)?,
            self.independent,
        )
    }
}

/// Writes a test log as JSONL.
pub fn write_test_log<W: Write>(mut writer: W, records: &[TestLogRecord]) -> Result<()> {
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writeln!(writer)?;
    }
    Ok(())
}

/// Reads a test log written by [`write_test_log`].
pub fn read_test_log<R: BufRead>(reader: R) -> Result<Vec<TestLogRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TestLogRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
                line: lineno + 1,
                message: e.to_string(),
            })?;
        out.push(record);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn q(x: usize, y: usize, z: &[usize], index: usize) -> CiQuery {
        CiQuery::new(
            VarSet::singleton(x),
            VarSet::singleton(y),
            VarSet::from_indices(z),
            index,
        )
        .unwrap()
    }

    fn two_column_data(rows: Vec<(usize, usize)>) -> Dataset {
        Dataset::new(
            vec!["X".to_string(), "Y".to_string()],
            rows.into_iter().map(|(a, b)| vec![a, b]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn oracle_answers_dsep_truth() {
        // X=0, Y=1, Z=2 with X -> Z <- Y.
        let dag = Dag::from_edges(3, &[(0, 2), (1, 2)]).unwrap();
        let mut backend = OracleBackend::new(dag);
        assert!(!backend
            .test(&q(1, 2, &[0], 1))
            .unwrap()
            .statement
            .independent());
        assert!(backend
            .test(&q(0, 1, &[], 2))
            .unwrap()
            .statement
            .independent());
        // Chain A -> B -> C.
        let chain = Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let mut backend = OracleBackend::new(chain);
        assert!(backend
            .test(&q(0, 2, &[1], 1))
            .unwrap()
            .statement
            .independent());
        assert!(!backend
            .test(&q(0, 2, &[], 2))
            .unwrap()
            .statement
            .independent());
    }

    #[test]
    fn chi2_perfect_association_statistic_equals_m() {
        // Y a copy of X: the 2x2 statistic is exactly m.
        let rows: Vec<(usize, usize)> = (0..1000)
            .map(|i| if i < 600 { (0, 0) } else { (1, 1) })
            .collect();
        let data = two_column_data(rows);
        let result = chi2_test(&data, &q(0, 1, &[], 1), 0.05).unwrap();
        assert!((result.statistic.unwrap() - 1000.0).abs() < 1e-9);
        assert_eq!(result.df, Some(1));
        assert!(result.p_value.unwrap() < 1e-100);
        assert!(!result.statement.independent());
    }

    #[test]
    fn chi2_matches_reference_contingency_routine() {
        // Independent fair binary columns; the reference value below comes
        // from a direct 2x2 computation over the same draws.
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        let rows: Vec<(usize, usize)> = (0..10000)
            .map(|_| (rng.gen_range(0..2usize), rng.gen_range(0..2usize)))
            .collect();
        let mut counts = [[0f64; 2]; 2];
        for &(a, b) in &rows {
            counts[a][b] += 1.0;
        }
        let m = 10000f64;
        let rt = [counts[0][0] + counts[0][1], counts[1][0] + counts[1][1]];
        let ct = [counts[0][0] + counts[1][0], counts[0][1] + counts[1][1]];
        let mut reference = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let e = rt[i] * ct[j] / m;
                reference += (counts[i][j] - e).powi(2) / e;
            }
        }
        let data = two_column_data(rows);
        let result = chi2_test(&data, &q(0, 1, &[], 1), 0.05).unwrap();
        assert!((result.statistic.unwrap() - reference).abs() < 1e-9);
        assert!(result.statement.independent(), "p={:?}", result.p_value);
    }

    #[test]
    fn chi2_degenerate_table_is_independent() {
        let rows: Vec<(usize, usize)> = (0..100).map(|i| (0, i % 2)).collect();
        let data = two_column_data(rows);
        let result = chi2_test(&data, &q(0, 1, &[], 1), 0.05).unwrap();
        assert_eq!(result.statistic, Some(0.0));
        assert_eq!(result.df, Some(0));
        assert!(result.statement.independent());
        assert!(!result.low_support);
    }

    #[test]
    fn chi2_all_strata_skipped_flags_low_support() {
        // Three z-strata of three rows each: all below the count threshold.
        let rows: Vec<Vec<usize>> = (0..9).map(|i| vec![i % 2, (i / 2) % 2, i / 3]).collect();
        let data = Dataset::new(
            vec!["X".to_string(), "Y".to_string(), "Z".to_string()],
            rows,
        )
        .unwrap();
        let result = chi2_test(&data, &q(0, 1, &[2], 1), 0.05).unwrap();
        assert!(result.low_support);
        assert!(result.statement.independent());
        assert_eq!(result.df, Some(0));
    }

    #[test]
    fn chi2_stratified_detects_conditional_structure() {
        // X and Y independent within each stratum of Z but marginally
        // associated through Z.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut rows = Vec::new();
        for _ in 0..4000 {
            let z = rng.gen_range(0..2usize);
            let flip = |r: &mut ChaCha8Rng| {
                if r.gen::<f64>() < 0.8 {
                    z
                } else {
                    1 - z
                }
            };
            let x = flip(&mut rng);
            let y = flip(&mut rng);
            rows.push(vec![x, y, z]);
        }
        let data = Dataset::new(
            vec!["X".to_string(), "Y".to_string(), "Z".to_string()],
            rows,
        )
        .unwrap();
        let marginal = chi2_test(&data, &q(0, 1, &[], 1), 0.05).unwrap();
        assert!(!marginal.statement.independent());
        let conditional = chi2_test(&data, &q(0, 1, &[2], 1), 0.05).unwrap();
        assert!(conditional.statement.independent());
    }

    #[test]
    fn chi2_statistic_invariant_under_label_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<(usize, usize)> = (0..500)
            .map(|_| (rng.gen_range(0..3usize), rng.gen_range(0..2usize)))
            .collect();
        let permuted: Vec<(usize, usize)> =
            rows.iter().map(|&(a, b)| ((a + 1) % 3, 1 - b)).collect();
        let s1 = chi2_test(&two_column_data(rows), &q(0, 1, &[], 1), 0.05)
            .unwrap()
            .statistic
            .unwrap();
        let s2 = chi2_test(&two_column_data(permuted), &q(0, 1, &[], 1), 0.05)
            .unwrap()
            .statistic
            .unwrap();
        assert!((s1 - s2).abs() < 1e-9);
    }

    #[test]
    fn injection_flips_only_selected_indices() {
        let dag = Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let mut plain = OracleBackend::new(dag.clone());
        let mut injected = InjectingBackend::new(OracleBackend::new(dag), BTreeSet::from([1]));
        let first_plain = plain.test(&q(0, 2, &[1], 1)).unwrap();
        let first = injected.test(&q(0, 2, &[1], 1)).unwrap();
        assert_eq!(
            first.statement.independent(),
            !first_plain.statement.independent()
        );
        assert_eq!(first.source, Source::Injected);
        let second = injected.test(&q(0, 2, &[], 2)).unwrap();
        let second_plain = plain.test(&q(0, 2, &[], 2)).unwrap();
        assert_eq!(second.statement, second_plain.statement);
        assert_eq!(second.source, Source::Oracle);
    }

    #[test]
    fn empty_flip_set_is_identity_and_double_flip_restores() {
        let dag = Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let queries = [q(0, 1, &[], 1), q(0, 2, &[1], 2), q(1, 2, &[], 3)];
        let mut plain = OracleBackend::new(dag.clone());
        let mut empty = InjectingBackend::new(OracleBackend::new(dag.clone()), BTreeSet::new());
        let mut double = InjectingBackend::new(
            InjectingBackend::new(OracleBackend::new(dag), BTreeSet::from([2])),
            BTreeSet::from([2]),
        );
        for query in &queries {
            let reference = plain.test(query).unwrap().statement;
            assert_eq!(empty.test(query).unwrap().statement, reference);
            assert_eq!(double.test(query).unwrap().statement, reference);
        }
    }

    #[test]
    fn rate_based_flip_selection_is_seeded() {
        let a = flip_indices_for_rate(100, 5.0, 9).unwrap();
        assert_eq!(a.len(), 5);
        assert!(a.iter().all(|&i| (1..=100).contains(&i)));
        assert_eq!(a, flip_indices_for_rate(100, 5.0, 9).unwrap());
        let b = flip_indices_for_rate(100, 5.0, 10).unwrap();
        assert_ne!(a, b);
        // Tiny rates still flip at least one test.
        assert_eq!(flip_indices_for_rate(10, 0.1, 1).unwrap().len(), 1);
    }

    #[test]
    fn test_log_round_trip() {
        let domain = Domain::new(vec!["A", "B", "C"]).unwrap();
        let dag = Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let mut backend = OracleBackend::new(dag);
        let result = backend.test(&q(0, 2, &[1], 1)).unwrap();
        let record = TestLogRecord::from_result(1, &result, &domain);
        let mut buf = Vec::new();
        write_test_log(&mut buf, std::slice::from_ref(&record)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text.trim(),
            r#"{"index":1,"x":["A"],"y":["C"],"z":["B"],"independent":true,"p_value":null,"source":"oracle"}"#
        );
        let back = read_test_log(&buf[..]).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].to_statement(&domain).unwrap(), result.statement);
    }
}
