//! Discrete Bayesian networks over a DAG: Dirichlet-sampled conditional
//! probability tables, forward (ancestral) sampling of datasets, and strict
//! JSON persistence.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Dag;

/// Tolerance for CPT row normalization checks.
const ROW_SUM_TOL: f64 = 1e-9;

/// A discrete Bayesian network: a DAG, per-variable category counts, and one
/// conditional distribution per parent assignment.
///
/// CPT rows are indexed by the rank of the parent assignment: parents sorted
/// by variable index, ranked lexicographically with the last (highest-index)
/// parent varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteBayesNet {
    dag: Dag,
    names: Vec<String>,
    cards: Vec<usize>,
    /// cpts[v][parent_rank][category]
    cpts: Vec<Vec<Vec<f64>>>,
}

impl DiscreteBayesNet {
    /// Validates and assembles a network.
    pub fn new(
        dag: Dag,
        names: Vec<String>,
        cards: Vec<usize>,
        cpts: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let n = dag.n();
        if names.len() != n || cards.len() != n || cpts.len() != n {
            return Err(Error::InvalidNetwork(format!(
                "expected {n} names/cards/cpts, got {}/{}/{}",
                names.len(),
                cards.len(),
                cpts.len()
            )));
        }
        for (v, &card) in cards.iter().enumerate() {
            if card < 2 {
                return Err(Error::InvalidNetwork(format!(
                    "variable {} has cardinality {card}; need at least 2",
                    names[v]
                )));
            }
        }
        for v in 0..n {
            let rows = parent_rank_count(&dag, &cards, v);
            if cpts[v].len() != rows {
                return Err(Error::InvalidNetwork(format!(
                    "variable {} has {} CPT rows; expected {rows}",
                    names[v],
                    cpts[v].len()
                )));
            }
            for (r, row) in cpts[v].iter().enumerate() {
                if row.len() != cards[v] {
                    return Err(Error::InvalidNetwork(format!(
                        "variable {} row {r} has {} entries; expected {}",
                        names[v],
                        row.len(),
                        cards[v]
                    )));
                }
                if row
                    .iter()
                    .any(|&p| !(0.0..=1.0).contains(&p) || !p.is_finite())
                {
                    return Err(Error::InvalidNetwork(format!(
                        "variable {} row {r} has entries outside [0,1]",
                        names[v]
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::InvalidNetwork(format!(
                        "variable {} row {r} sums to {sum}, not 1",
                        names[v]
                    )));
                }
            }
        }
        Ok(DiscreteBayesNet {
            dag,
            names,
            cards,
            cpts,
        })
    }

    /// The underlying DAG.
    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    /// Variable names in index order.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Per-variable category counts.
    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    /// The CPT of one variable.
    pub fn cpt(&self, v: usize) -> &[Vec<f64>] {
        &self.cpts[v]
    }

    /// Number of variables.
    pub fn n(&self) -> usize {
        self.dag.n()
    }

    /// Rank of a full assignment restricted to `v`'s parents: parents sorted
    /// ascending, last parent fastest-varying.
    pub fn parent_rank(&self, v: usize, assignment: &[usize]) -> usize {
        let mut rank = 0usize;
        for p in self.dag.parents(v).iter() {
            rank = rank * self.cards[p] + assignment[p];
        }
        rank
    }
}

fn parent_rank_count(dag: &Dag, cards: &[usize], v: usize) -> usize {
    dag.parents(v).iter().map(|p| cards[p]).product()
}

/// Draws every CPT row of a network from a symmetric Dirichlet distribution
/// with concentration `alpha`, by normalizing Gamma(alpha, 1) draws.
/// Variables are processed in index order and rows in rank order, so output
/// is deterministic per seed.
pub fn sample_cpts(dag: &Dag, cards: &[usize], alpha: f64, seed: u64) -> Result<DiscreteBayesNet> {
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::InvalidNetwork(format!(
            "alpha {alpha} must be positive"
        )));
    }
    if cards.len() != dag.n() {
        return Err(Error::InvalidNetwork(format!(
            "{} cardinalities for {} nodes",
            cards.len(),
            dag.n()
        )));
    }
    if let Some(&bad) = cards.iter().find(|&&c| c < 2) {
        return Err(Error::InvalidNetwork(format!("cardinality {bad} below 2")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = Gamma::new(alpha, 1.0)
        .map_err(|e| Error::InvalidNetwork(format!("bad Dirichlet concentration: {e}")))?;
    let mut cpts = Vec::with_capacity(dag.n());
    for v in 0..dag.n() {
        let rows = parent_rank_count(dag, cards, v);
        let mut table = Vec::with_capacity(rows);
        for _ in 0..rows {
            let mut row: Vec<f64> = (0..cards[v]).map(|_| gamma.sample(&mut rng)).collect();
            let sum: f64 = row.iter().sum();
            // A zero sum has probability zero but guard against underflow.
            if sum <= 0.0 {
                row = vec![1.0 / cards[v] as f64; cards[v]];
            } else {
                for p in row.iter_mut() {
                    *p /= sum;
                }
            }
            table.push(row);
        }
        cpts.push(table);
    }
    let names: Vec<String> = (0..dag.n()).map(|i| format!("X{i}")).collect();
    DiscreteBayesNet::new(dag.clone(), names, cards.to_vec(), cpts)
}

/// A dataset of integer category codes, one column per variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    names: Vec<String>,
    rows: Vec<Vec<usize>>,
}

impl Dataset {
    /// Assembles a dataset, checking rectangular shape.
    pub fn new(names: Vec<String>, rows: Vec<Vec<usize>>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if row.len() != names.len() {
                return Err(Error::InvalidDataset(format!(
                    "row {i} has {} values for {} columns",
                    row.len(),
                    names.len()
                )));
            }
        }
        Ok(Dataset { names, rows })
    }

    /// Column names.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Sample count.
    pub fn m(&self) -> usize {
        self.rows.len()
    }

    /// Number of columns.
    pub fn n(&self) -> usize {
        self.names.len()
    }

    /// The rows.
    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    /// Index of a column by name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Writes the dataset as CSV: a header of names, then integer codes.
    /// No quoting; newline-terminated.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "{}", self.names.join(","))?;
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(writer, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Reads a CSV written by [`Dataset::write_csv`].
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidDataset("empty CSV".into()))??;
        let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        if names.iter().any(|n| n.is_empty()) {
            return Err(Error::InvalidDataset("empty column name in header".into()));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: std::result::Result<Vec<usize>, _> =
                line.split(',').map(|s| s.trim().parse::<usize>()).collect();
            let row = row.map_err(|e| Error::MalformedLine {
                line: i + 2,
                message: format!("bad category code: {e}"),
            })?;
            if row.len() != names.len() {
                return Err(Error::MalformedLine {
                    line: i + 2,
                    message: format!("{} values for {} columns", row.len(), names.len()),
                });
            }
            rows.push(row);
        }
        Dataset::new(names, rows)
    }
}

/// Draws `m` joint samples by ancestral sampling: variables in topological
/// order, each from its CPT row given already-sampled parents. Deterministic
/// per seed.
pub fn forward_sample(bn: &DiscreteBayesNet, m: usize, seed: u64) -> Result<Dataset> {
    if m == 0 {
        return Err(Error::InvalidDataset(
            "sample count must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = bn.n();
    let mut rows = Vec::with_capacity(m);
    for _ in 0..m {
        let mut assignment = vec![0usize; n];
        for &v in bn.dag().topo_order() {
            let row = &bn.cpt(v)[bn.parent_rank(v, &assignment)];
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut chosen = row.len() - 1;
            for (cat, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    chosen = cat;
                    break;
                }
            }
            assignment[v] = chosen;
        }
        rows.push(assignment);
    }
    Dataset::new(bn.names().to_vec(), rows)
}

/// Strict wire format of a network. `cpts` maps variable name to its rows in
/// rank order; the map is sorted by name, so serialization is canonical.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetRecord {
    pub n: usize,
    pub names: Vec<String>,
    pub cards: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
    pub cpts: BTreeMap<String, Vec<Vec<f64>>>,
}

impl NetRecord {
    /// Renders a network.
    pub fn from_net(bn: &DiscreteBayesNet) -> Self {
        let mut cpts = BTreeMap::new();
        for v in 0..bn.n() {
            cpts.insert(bn.names()[v].clone(), bn.cpt(v).to_vec());
        }
        NetRecord {
            n: bn.n(),
            names: bn.names().to_vec(),
            cards: bn.cards().to_vec(),
            edges: bn.dag().edges(),
            cpts,
        }
    }

    /// Parses and validates a network.
    pub fn to_net(&self) -> Result<DiscreteBayesNet> {
        if self.names.len() != self.n {
            return Err(Error::InvalidNetwork(format!(
                "{} names for n={}",
                self.names.len(),
                self.n
            )));
        }
        let dag = Dag::from_edges(self.n, &self.edges)?;
        let mut cpts = Vec::with_capacity(self.n);
        for name in &self.names {
            let table = self
                .cpts
                .get(name)
                .ok_or_else(|| Error::InvalidNetwork(format!("missing CPT for variable {name}")))?;
            cpts.push(table.clone());
        }
        if self.cpts.len() != self.n {
            return Err(Error::InvalidNetwork(format!(
                "{} CPT entries for {} variables",
                self.cpts.len(),
                self.n
            )));
        }
        DiscreteBayesNet::new(dag, self.names.clone(), self.cards.clone(), cpts)
    }
}

/// Serializes a network to its canonical JSON text.
pub fn net_to_json(bn: &DiscreteBayesNet) -> Result<String> {
    Ok(serde_json::to_string(&NetRecord::from_net(bn))?)
}

/// Parses a network from JSON, rejecting unknown fields and malformed CPTs.
pub fn net_from_json(text: &str) -> Result<DiscreteBayesNet> {
    let record: NetRecord = serde_json::from_str(text)?;
    record.to_net()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::sample_er_dag;

    fn chain3() -> Dag {
        Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn cpt_rows_normalized_and_deterministic() {
        let dag = sample_er_dag(5, 0.5, 3).unwrap();
        let bn = sample_cpts(&dag, &[2, 3, 2, 4, 2], 1.0, 42).unwrap();
        for v in 0..5 {
            for row in bn.cpt(v) {
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() <= 1e-9);
            }
        }
        let again = sample_cpts(&dag, &[2, 3, 2, 4, 2], 1.0, 42).unwrap();
        assert_eq!(bn, again);
        let other = sample_cpts(&dag, &[2, 3, 2, 4, 2], 1.0, 43).unwrap();
        assert_ne!(bn, other);
    }

    #[test]
    fn high_concentration_rows_near_uniform() {
        let dag = chain3();
        let bn = sample_cpts(&dag, &[2, 2, 2], 1e6, 7).unwrap();
        for v in 0..3 {
            for row in bn.cpt(v) {
                for &p in row {
                    assert!((p - 0.5).abs() < 0.01, "entry {p} far from 0.5");
                }
            }
        }
    }

    #[test]
    fn bad_parameters_rejected() {
        let dag = chain3();
        assert!(sample_cpts(&dag, &[2, 1, 2], 1.0, 0).is_err());
        assert!(sample_cpts(&dag, &[2, 2, 2], 0.0, 0).is_err());
        assert!(sample_cpts(&dag, &[2, 2], 1.0, 0).is_err());
    }

    #[test]
    fn parent_rank_last_parent_fastest() {
        // Node 2 with parents 0 (card 2) and 1 (card 3): rank = a0*3 + a1.
        let dag = Dag::from_edges(3, &[(0, 2), (1, 2)]).unwrap();
        let bn = sample_cpts(&dag, &[2, 3, 2], 1.0, 1).unwrap();
        assert_eq!(bn.cpt(2).len(), 6);
        assert_eq!(bn.parent_rank(2, &[0, 0, 0]), 0);
        assert_eq!(bn.parent_rank(2, &[0, 2, 0]), 2);
        assert_eq!(bn.parent_rank(2, &[1, 0, 0]), 3);
        assert_eq!(bn.parent_rank(2, &[1, 2, 0]), 5);
    }

    #[test]
    fn forward_sample_shape_and_determinism() {
        let dag = chain3();
        let bn = sample_cpts(&dag, &[2, 2, 2], 1.0, 5).unwrap();
        let data = forward_sample(&bn, 100, 9).unwrap();
        assert_eq!(data.m(), 100);
        assert_eq!(data.n(), 3);
        assert_eq!(data, forward_sample(&bn, 100, 9).unwrap());
        assert!(forward_sample(&bn, 0, 9).is_err());
    }

    #[test]
    fn root_marginal_matches_binomial_bound() {
        // Root with a literal (0.5, 0.5) distribution; m = 10000 draws stay
        // within three binomial standard deviations of one half.
        let dag = Dag::from_edges(2, &[(0, 1)]).unwrap();
        let cpts = vec![vec![vec![0.5, 0.5]], vec![vec![0.9, 0.1], vec![0.1, 0.9]]];
        let names = vec!["X0".to_string(), "X1".to_string()];
        let bn = DiscreteBayesNet::new(dag, names, vec![2, 2], cpts).unwrap();
        let data = forward_sample(&bn, 10000, 13).unwrap();
        let ones = data.rows().iter().filter(|r| r[0] == 1).count() as f64;
        let freq = ones / 10000.0;
        let bound = 3.0 * (0.25f64 / 10000.0).sqrt();
        assert!((freq - 0.5).abs() <= bound, "freq {freq} outside {bound}");
    }

    #[test]
    fn deterministic_cpt_copies_parent() {
        let dag = Dag::from_edges(2, &[(0, 1)]).unwrap();
        let cpts = vec![vec![vec![0.3, 0.7]], vec![vec![1.0, 0.0], vec![0.0, 1.0]]];
        let names = vec!["X0".to_string(), "X1".to_string()];
        let bn = DiscreteBayesNet::new(dag, names, vec![2, 2], cpts).unwrap();
        let data = forward_sample(&bn, 500, 21).unwrap();
        assert!(data.rows().iter().all(|r| r[0] == r[1]));
    }

    #[test]
    fn empirical_conditionals_converge_to_cpt() {
        let dag = chain3();
        let bn = sample_cpts(&dag, &[2, 2, 2], 1.0, 17).unwrap();
        let data = forward_sample(&bn, 20000, 3).unwrap();
        // Check variable 1 given parent 0.
        for parent_value in 0..2 {
            let rows: Vec<_> = data
                .rows()
                .iter()
                .filter(|r| r[0] == parent_value)
                .collect();
            let count = rows.len();
            if count < 500 {
                continue;
            }
            let freq1 = rows.iter().filter(|r| r[1] == 1).count() as f64 / count as f64;
            let expected = bn.cpt(1)[parent_value][1];
            let bound = 5.0 / (count as f64).sqrt();
            assert!(
                (freq1 - expected).abs() <= bound,
                "freq {freq1} vs cpt {expected} (count {count})"
            );
        }
    }

    #[test]
    fn marginal_depends_only_on_ancestor_cpts() {
        // X0 -> X1 with an extra isolated X2: re-simulating the subnet of
        // X1's ancestors reproduces X1's empirical distribution.
        let dag = Dag::from_edges(3, &[(0, 1)]).unwrap();
        let bn = sample_cpts(&dag, &[2, 2, 2], 1.0, 29).unwrap();
        let sub_dag = Dag::from_edges(2, &[(0, 1)]).unwrap();
        let sub = DiscreteBayesNet::new(
            sub_dag,
            bn.names()[..2].to_vec(),
            bn.cards()[..2].to_vec(),
            vec![bn.cpt(0).to_vec(), bn.cpt(1).to_vec()],
        )
        .unwrap();
        let full = forward_sample(&bn, 30000, 31).unwrap();
        let part = forward_sample(&sub, 30000, 37).unwrap();
        let freq = |d: &Dataset, col: usize| {
            d.rows().iter().filter(|r| r[col] == 1).count() as f64 / d.m() as f64
        };
        assert!((freq(&full, 1) - freq(&part, 1)).abs() < 0.02);
    }

    #[test]
    fn net_json_round_trip_is_canonical() {
        let dag = sample_er_dag(4, 0.6, 2).unwrap();
        let bn = sample_cpts(&dag, &[2, 2, 3, 2], 1.0, 11).unwrap();
        let text = net_to_json(&bn).unwrap();
        let back = net_from_json(&text).unwrap();
        assert_eq!(net_to_json(&back).unwrap(), text);
    }

    #[test]
    fn net_json_rejects_bad_rows_and_unknown_fields() {
        let dag = Dag::from_edges(2, &[(0, 1)]).unwrap();
        let bn = sample_cpts(&dag, &[2, 2], 1.0, 3).unwrap();
        let text = net_to_json(&bn).unwrap();
        let broken = text.replace("\"n\":2", "\"n\":2,\"extra\":1");
        assert!(net_from_json(&broken).is_err());
        // Denormalize one row.
        let mut record: NetRecord = serde_json::from_str(&text).unwrap();
        record.cpts.get_mut("X0").unwrap()[0] = vec![0.5, 0.4];
        let bad = serde_json::to_string(&record).unwrap();
        match net_from_json(&bad) {
            Err(Error::InvalidNetwork(msg)) => assert!(msg.contains("row 0")),
            other => panic!("expected InvalidNetwork, got {other:?}"),
        }
    }

    #[test]
    fn dataset_csv_round_trip() {
        let dag = chain3();
        let bn = sample_cpts(&dag, &[2, 3, 2], 1.0, 19).unwrap();
        let data = forward_sample(&bn, 50, 23).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("X0,X1,X2\n"));
        let back = Dataset::read_csv(&buf[..]).unwrap();
        assert_eq!(back, data);
    }
}
