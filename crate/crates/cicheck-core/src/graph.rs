//! Causal graphs: DAGs with d-separation, partially directed graphs,
//! separating-set tables, constraint-based edge orientation, structural
//! Hamming distance, and random DAG sampling.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CiStatement, VarSet, MAX_VARS};

/// A directed acyclic graph over nodes `0..n`. Acyclicity is verified on
/// construction; a valid topological order is kept for samplers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    n: usize,
    parents: Vec<VarSet>,
    children: Vec<VarSet>,
    topo: Vec<usize>,
}

impl Dag {
    /// Builds a DAG from directed edges `(parent, child)`, rejecting cycles,
    /// self-loops, and out-of-range nodes. Duplicate edges collapse.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 || n > MAX_VARS {
            return Err(Error::SizeMismatch(format!(
                "node count {n} outside 1..={MAX_VARS}"
            )));
        }
        let mut parents = vec![VarSet::empty(); n];
        let mut children = vec![VarSet::empty(); n];
        for &(p, c) in edges {
            if p >= n || c >= n {
                return Err(Error::SizeMismatch(format!(
                    "edge ({p},{c}) outside 0..{n}"
                )));
            }
            if p == c {
                return Err(Error::CyclicGraph(format!("self-loop at node {p}")));
            }
            parents[c] = parents[c].insert(p);
            children[p] = children[p].insert(c);
        }
        let topo = topo_order(n, &parents)?;
        Ok(Dag {
            n,
            parents,
            children,
            topo,
        })
    }

    /// Number of nodes.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Parent set of a node.
    pub fn parents(&self, v: usize) -> VarSet {
        self.parents[v]
    }

    /// Child set of a node.
    pub fn children(&self, v: usize) -> VarSet {
        self.children[v]
    }

    /// A topological order (smallest-index-first among ready nodes, so it is
    /// deterministic for a given edge set).
    pub fn topo_order(&self) -> &[usize] {
        &self.topo
    }

    /// Directed edges sorted by `(parent, child)`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for p in 0..self.n {
            for c in self.children[p].iter() {
                out.push((p, c));
            }
        }
        out
    }

    /// Number of directed edges.
    pub fn edge_count(&self) -> usize {
        self.children.iter().map(|c| c.len()).sum()
    }

    /// Proper ancestors of every node in `s` (excluding `s` itself unless a
    /// member is an ancestor of another member).
    pub fn ancestors(&self, s: VarSet) -> VarSet {
        let mut acc = VarSet::empty();
        let mut frontier = s;
        while !frontier.is_empty() {
            let mut next = VarSet::empty();
            for v in frontier.iter() {
                next = next.union(self.parents[v]);
            }
            next = next.minus(acc);
            acc = acc.union(next);
            frontier = next;
        }
        acc
    }

    /// Proper descendants of every node in `s`.
    pub fn descendants(&self, s: VarSet) -> VarSet {
        let mut acc = VarSet::empty();
        let mut frontier = s;
        while !frontier.is_empty() {
            let mut next = VarSet::empty();
            for v in frontier.iter() {
                next = next.union(self.children[v]);
            }
            next = next.minus(acc);
            acc = acc.union(next);
            frontier = next;
        }
        acc
    }

    /// The undirected skeleton.
    pub fn skeleton(&self) -> Pdag {
        let mut pdag = Pdag::empty(self.n);
        for (p, c) in self.edges() {
            pdag.add_undirected(p, c);
        }
        pdag
    }
}

fn topo_order(n: usize, parents: &[VarSet]) -> Result<Vec<usize>> {
    let mut remaining = VarSet::full(n);
    let mut placed = VarSet::empty();
    let mut order = Vec::with_capacity(n);
    while !remaining.is_empty() {
        let mut advanced = false;
        for v in remaining.iter() {
            if parents[v].is_subset(placed) {
                order.push(v);
                placed = placed.insert(v);
                remaining = remaining.remove(v);
                advanced = true;
                break;
            }
        }
        if !advanced {
            return Err(Error::CyclicGraph(format!(
                "no topological order for nodes {remaining}"
            )));
        }
    }
    Ok(order)
}

fn check_query(n: usize, x: VarSet, y: VarSet, z: VarSet) -> Result<()> {
    let full = VarSet::full(n);
    if !x.union(y).union(z).is_subset(full) {
        return Err(Error::InvalidQuery(
            "query mentions nodes outside the graph".into(),
        ));
    }
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidQuery("x and y must be non-empty".into()));
    }
    if !x.is_disjoint(y) || !x.is_disjoint(z) || !y.is_disjoint(z) {
        return Err(Error::InvalidQuery(format!(
            "x={x}, y={y}, z={z} must be pairwise disjoint"
        )));
    }
    Ok(())
}

/// Reference d-separation by exhaustive enumeration of simple undirected
/// paths: a path is active given `z` iff every interior collider has itself
/// or a descendant in `z` and every interior non-collider is outside `z`.
/// Quadratic-to-exponential; kept only for differential testing against
/// [`d_separated`].
pub fn d_separated_bruteforce(g: &Dag, x: VarSet, y: VarSet, z: VarSet) -> Result<bool> {
    check_query(g.n(), x, y, z)?;
    // Collider activation depends on z reaching the node or its descendants.
    let desc_or_self: Vec<VarSet> = (0..g.n())
        .map(|v| g.descendants(VarSet::singleton(v)).insert(v))
        .collect();
    let neighbor = |v: usize| g.parents(v).union(g.children(v));

    fn walk(
        g: &Dag,
        path: &mut Vec<usize>,
        visited: VarSet,
        targets: VarSet,
        z: VarSet,
        desc_or_self: &[VarSet],
        neighbor: &dyn Fn(usize) -> VarSet,
    ) -> bool {
        let last = *path.last().unwrap();
        if targets.contains(last) && path.len() > 1 {
            // Evaluate interior activation for the completed path.
            let active = (1..path.len() - 1).all(|i| {
                let (a, b, c) = (path[i - 1], path[i], path[i + 1]);
                let collider = g.parents(b).contains(a) && g.parents(b).contains(c);
                if collider {
                    !desc_or_self[b].intersect(z).is_empty()
                } else {
                    !z.contains(b)
                }
            });
            if active {
                return true;
            }
            // A path may continue through a target node, but any extension has
            // this inactive prefix's interior nodes, so only stop here.
            return false;
        }
        for next in neighbor(last).minus(visited).iter() {
            path.push(next);
            if walk(
                g,
                path,
                visited.insert(next),
                targets,
                z,
                desc_or_self,
                neighbor,
            ) {
                return true;
            }
            path.pop();
        }
        false
    }

    for a in x.iter() {
        let mut path = vec![a];
        if walk(
            g,
            &mut path,
            VarSet::singleton(a),
            y,
            z,
            &desc_or_self,
            &neighbor,
        ) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Decides whether `x` and `y` are d-separated by `z` using linear-time
/// reachability over (node, travel-direction) states: a trail may pass
/// through a non-collider only outside `z` and through a collider only when
/// `z` contains the collider or one of its descendants.
pub fn d_separated(g: &Dag, x: VarSet, y: VarSet, z: VarSet) -> Result<bool> {
    check_query(g.n(), x, y, z)?;
    // Nodes whose collider state can be activated: z and its ancestors.
    let z_closure = z.union(g.ancestors(z));
    // visited[0]: arrived from a child (upward); visited[1]: from a parent.
    let mut visited = [VarSet::empty(), VarSet::empty()];
    let mut queue: Vec<(usize, u8)> = x.iter().map(|v| (v, 0u8)).collect();
    while let Some((v, dir)) = queue.pop() {
        if visited[dir as usize].contains(v) {
            continue;
        }
        visited[dir as usize] = visited[dir as usize].insert(v);
        if y.contains(v) {
            return Ok(false);
        }
        if dir == 0 {
            if !z.contains(v) {
                for p in g.parents(v).iter() {
                    queue.push((p, 0));
                }
                for c in g.children(v).iter() {
                    queue.push((c, 1));
                }
            }
        } else {
            if !z.contains(v) {
                for c in g.children(v).iter() {
                    queue.push((c, 1));
                }
            }
            if z_closure.contains(v) {
                for p in g.parents(v).iter() {
                    queue.push((p, 0));
                }
            }
        }
    }
    Ok(true)
}

/// Emits, for every unordered singleton pair `{x,y}` and every conditioning
/// set `z ⊆ V∖{x,y}` with `|z| <= max_cond`, the CI statement whose flag is
/// the d-separation truth. Pairs are ordered lexicographically and `z` sets
/// by increasing bit mask, so output order is deterministic.
pub fn enumerate_dsep_statements(g: &Dag, max_cond: usize) -> Result<Vec<CiStatement>> {
    let n = g.n();
    let mut out = Vec::new();
    for x in 0..n {
        for y in (x + 1)..n {
            let rest = VarSet::full(n).remove(x).remove(y);
            let mask = rest.bits();
            let mut sub: u64 = 0;
            loop {
                let z = VarSet::from_bits(sub);
                if z.len() <= max_cond {
                    let independent =
                        d_separated(g, VarSet::singleton(x), VarSet::singleton(y), z)?;
                    out.push(CiStatement::pair(x, y, z, independent)?);
                }
                sub = sub.wrapping_sub(mask) & mask;
                if sub == 0 {
                    break;
                }
            }
        }
    }
    Ok(out)
}

/// Samples a DAG by drawing each node pair independently with probability
/// `edge_prob` and orienting low-to-high under a random permutation of
/// labels. Deterministic per seed.
pub fn sample_er_dag(n: usize, edge_prob: f64, seed: u64) -> Result<Dag> {
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(Error::InvalidQuery(format!(
            "edge probability {edge_prob} outside [0,1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen::<f64>() < edge_prob {
                edges.push((perm[i], perm[j]));
            }
        }
    }
    Dag::from_edges(n, &edges)
}

/// A partially directed graph: directed edges plus undirected edges, with no
/// pair carrying both kinds and no two-node directed cycles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pdag {
    n: usize,
    dir_children: Vec<VarSet>,
    dir_parents: Vec<VarSet>,
    und: Vec<VarSet>,
}

impl Pdag {
    /// A graph with no edges.
    pub fn empty(n: usize) -> Self {
        Pdag {
            n,
            dir_children: vec![VarSet::empty(); n],
            dir_parents: vec![VarSet::empty(); n],
            und: vec![VarSet::empty(); n],
        }
    }

    /// The complete undirected graph, the starting point of skeleton search.
    pub fn complete_undirected(n: usize) -> Self {
        let mut pdag = Pdag::empty(n);
        for a in 0..n {
            for b in (a + 1)..n {
                pdag.add_undirected(a, b);
            }
        }
        pdag
    }

    /// Number of nodes.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Adds an undirected edge, replacing any directed edge on the pair.
    pub fn add_undirected(&mut self, a: usize, b: usize) {
        assert!(a != b, "self-loop");
        self.clear_pair(a, b);
        self.und[a] = self.und[a].insert(b);
        self.und[b] = self.und[b].insert(a);
    }

    /// Adds a directed edge `a -> b`, replacing any edge on the pair.
    pub fn add_directed(&mut self, a: usize, b: usize) {
        assert!(a != b, "self-loop");
        self.clear_pair(a, b);
        self.dir_children[a] = self.dir_children[a].insert(b);
        self.dir_parents[b] = self.dir_parents[b].insert(a);
    }

    fn clear_pair(&mut self, a: usize, b: usize) {
        self.und[a] = self.und[a].remove(b);
        self.und[b] = self.und[b].remove(a);
        self.dir_children[a] = self.dir_children[a].remove(b);
        self.dir_children[b] = self.dir_children[b].remove(a);
        self.dir_parents[a] = self.dir_parents[a].remove(b);
        self.dir_parents[b] = self.dir_parents[b].remove(a);
    }

    /// Removes any edge between the pair. Returns true if one existed.
    pub fn remove_edge(&mut self, a: usize, b: usize) -> bool {
        let existed = self.is_adjacent(a, b);
        self.clear_pair(a, b);
        existed
    }

    /// True iff the directed edge `a -> b` is present.
    pub fn has_directed(&self, a: usize, b: usize) -> bool {
        self.dir_children[a].contains(b)
    }

    /// True iff the undirected edge `a - b` is present.
    pub fn has_undirected(&self, a: usize, b: usize) -> bool {
        self.und[a].contains(b)
    }

    /// True iff any edge joins the pair.
    pub fn is_adjacent(&self, a: usize, b: usize) -> bool {
        self.has_undirected(a, b) || self.has_directed(a, b) || self.has_directed(b, a)
    }

    /// All nodes joined to `v` by any edge.
    pub fn adjacents(&self, v: usize) -> VarSet {
        self.und[v]
            .union(self.dir_children[v])
            .union(self.dir_parents[v])
    }

    /// Nodes joined to `v` by an undirected edge.
    pub fn und_neighbors(&self, v: usize) -> VarSet {
        self.und[v]
    }

    /// Directed parents of `v`.
    pub fn directed_parents(&self, v: usize) -> VarSet {
        self.dir_parents[v]
    }

    /// Directed children of `v`.
    pub fn directed_children(&self, v: usize) -> VarSet {
        self.dir_children[v]
    }

    /// Directed edges sorted by `(from, to)`.
    pub fn directed_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.n {
            for b in self.dir_children[a].iter() {
                out.push((a, b));
            }
        }
        out
    }

    /// Undirected edges as sorted pairs `(a, b)` with `a < b`.
    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.n {
            for b in self.und[a].iter() {
                if a < b {
                    out.push((a, b));
                }
            }
        }
        out
    }
}

/// Separating sets recorded during skeleton search, keyed by unordered node
/// pair. A recorded set never contains either endpoint.
#[derive(Debug, Clone, Default)]
pub struct SepsetTable {
    map: HashMap<(usize, usize), VarSet>,
}

impl SepsetTable {
    /// An empty table.
    pub fn new() -> Self {
        SepsetTable::default()
    }

    /// Records the separating set for a pair (both orders).
    pub fn record(&mut self, x: usize, y: usize, s: VarSet) {
        assert!(
            !s.contains(x) && !s.contains(y),
            "separating set contains an endpoint"
        );
        self.map.insert(Self::key(x, y), s);
    }

    /// Looks up the separating set for a pair.
    pub fn get(&self, x: usize, y: usize) -> Option<VarSet> {
        self.map.get(&Self::key(x, y)).copied()
    }

    /// Number of recorded pairs.
    pub fn len(&self) -> usize {
        self.map.len()
    }

    /// True iff nothing is recorded.
    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// All recorded entries sorted by pair.
    pub fn entries(&self) -> Vec<(usize, usize, VarSet)> {
        let mut out: Vec<_> = self.map.iter().map(|(&(a, b), &s)| (a, b, s)).collect();
        out.sort();
        out
    }

    fn key(x: usize, y: usize) -> (usize, usize) {
        (x.min(y), x.max(y))
    }
}

/// Orientation rule set applied after collider detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OrientConfig {
    /// Apply the fourth orientation rule in addition to the standard three.
    pub meek_r4: bool,
}

/// Result of edge orientation: the oriented graph plus the number of
/// conflicting collider orientations encountered (non-zero only with
/// contradictory separating sets, e.g. under injected test errors).
#[derive(Debug, Clone)]
pub struct OrientOutcome {
    pub pdag: Pdag,
    pub conflicts: usize,
}

/// Orients an undirected skeleton: every unshielded triple `x - z - y` with
/// `z` outside the recorded separating set of `(x,y)` becomes the collider
/// `x -> z <- y`; the remaining undirected edges are then closed under the
/// Meek rules R1-R3 (optionally R4). Conflicting collider claims are counted
/// and resolved last-writer-wins. Adjacencies are never added or removed.
pub fn orient_cpdag(skeleton: &Pdag, sepsets: &SepsetTable, config: OrientConfig) -> OrientOutcome {
    let n = skeleton.n();
    let mut g = skeleton.clone();
    let mut conflicts = 0usize;

    // Collider phase: scan unshielded triples in lexicographic order.
    for z in 0..n {
        let nbrs: Vec<usize> = g.adjacents(z).iter().collect();
        for (i, &x) in nbrs.iter().enumerate() {
            for &y in &nbrs[i + 1..] {
                if g.is_adjacent(x, y) {
                    continue;
                }
                let sep = match sepsets.get(x, y) {
                    Some(s) => s,
                    None => continue,
                };
                if !sep.contains(z) {
                    for v in [x, y] {
                        if g.has_directed(z, v) {
                            conflicts += 1;
                        }
                        if !g.has_directed(v, z) {
                            g.add_directed(v, z);
                        }
                    }
                }
            }
        }
    }

    // Meek phase: apply rules to a fixed point.
    loop {
        let mut changed = false;
        for (a, b) in g.undirected_edges() {
            for (from, to) in [(a, b), (b, a)] {
                if apply_meek(&g, from, to, config) {
                    g.add_directed(from, to);
                    changed = true;
                    break;
                }
            }
        }
        if !changed {
            break;
        }
    }

    OrientOutcome { pdag: g, conflicts }
}

/// True iff some Meek rule forces `from -> to` for the undirected edge.
fn apply_meek(g: &Pdag, from: usize, to: usize, config: OrientConfig) -> bool {
    // R1: c -> from, from - to, c and to nonadjacent => from -> to.
    for c in g.directed_parents(from).iter() {
        if !g.is_adjacent(c, to) {
            return true;
        }
    }
    // R2: from -> c -> to with from - to => from -> to.
    for c in g.directed_children(from).iter() {
        if g.has_directed(c, to) {
            return true;
        }
    }
    // R3: from - c, from - d, c -> to, d -> to, c and d nonadjacent.
    let nbrs: Vec<usize> = g.und_neighbors(from).iter().collect();
    for (i, &c) in nbrs.iter().enumerate() {
        for &d in &nbrs[i + 1..] {
            if g.has_directed(c, to) && g.has_directed(d, to) && !g.is_adjacent(c, d) {
                return true;
            }
        }
    }
    // R4: d -> c -> to, from adjacent to d, to and d nonadjacent.
    if config.meek_r4 {
        for c in g.directed_parents(to).iter() {
            for d in g.directed_parents(c).iter() {
                if d != from && g.is_adjacent(from, d) && !g.is_adjacent(to, d) {
                    return true;
                }
            }
        }
    }
    false
}

/// Structural Hamming distance: the number of unordered node pairs whose
/// edge status (absent, `a -> b`, `b -> a`, undirected) differs.
pub fn shd(a: &Pdag, b: &Pdag) -> Result<usize> {
    if a.n() != b.n() {
        return Err(Error::SizeMismatch(format!("{} vs {} nodes", a.n(), b.n())));
    }
    let status = |g: &Pdag, i: usize, j: usize| -> u8 {
        if g.has_undirected(i, j) {
            3
        } else if g.has_directed(i, j) {
            1
        } else if g.has_directed(j, i) {
            2
        } else {
            0
        }
    };
    let mut count = 0;
    for i in 0..a.n() {
        for j in (i + 1)..a.n() {
            if status(a, i, j) != status(b, i, j) {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Wire format of a DAG.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DagRecord {
    pub n: usize,
    pub names: Vec<String>,
    pub edges: Vec<(usize, usize)>,
}

impl DagRecord {
    /// Renders a DAG with its variable names.
    pub fn from_dag(dag: &Dag, names: &[String]) -> Result<Self> {
        if names.len() != dag.n() {
            return Err(Error::SizeMismatch(format!(
                "{} names for {} nodes",
                names.len(),
                dag.n()
            )));
        }
        Ok(DagRecord {
            n: dag.n(),
            names: names.to_vec(),
            edges: dag.edges(),
        })
    }

    /// Reconstructs the DAG, validating the node count.
    pub fn to_dag(&self) -> Result<Dag> {
        if self.names.len() != self.n {
            return Err(Error::SizeMismatch(format!(
                "{} names for {} nodes",
                self.names.len(),
                self.n
            )));
        }
        Dag::from_edges(self.n, &self.edges)
    }
}

/// Wire format of a PDAG: directed edges plus an undirected list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdagRecord {
    pub n: usize,
    pub names: Vec<String>,
    pub edges: Vec<(usize, usize)>,
    pub undirected: Vec<(usize, usize)>,
}

impl PdagRecord {
    /// Renders a PDAG with its variable names.
    pub fn from_pdag(pdag: &Pdag, names: &[String]) -> Result<Self> {
        if names.len() != pdag.n() {
            return Err(Error::SizeMismatch(format!(
                "{} names for {} nodes",
                names.len(),
                pdag.n()
            )));
        }
        Ok(PdagRecord {
            n: pdag.n(),
            names: names.to_vec(),
            edges: pdag.directed_edges(),
            undirected: pdag.undirected_edges(),
        })
    }

    /// Reconstructs the PDAG.
    pub fn to_pdag(&self) -> Result<Pdag> {
        if self.names.len() != self.n {
            return Err(Error::SizeMismatch(format!(
                "{} names for {} nodes",
                self.names.len(),
                self.n
            )));
        }
        let mut pdag = Pdag::empty(self.n);
        for &(a, b) in &self.edges {
            if a >= self.n || b >= self.n {
                return Err(Error::SizeMismatch(format!(
                    "edge ({a},{b}) outside 0..{}",
                    self.n
                )));
            }
            pdag.add_directed(a, b);
        }
        for &(a, b) in &self.undirected {
            if a >= self.n || b >= self.n {
                return Err(Error::SizeMismatch(format!(
                    "edge ({a},{b}) outside 0..{}",
                    self.n
                )));
            }
            pdag.add_undirected(a, b);
        }
        Ok(pdag)
    }
}
