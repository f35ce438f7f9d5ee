//! Staged consistency decision pipeline.
//!
//! Deciding whether a CI-statement set is consistent with the integrity
//! axioms runs up to four stages, cheapest first: marginality analysis (O1),
//! graphoid saturation (O2), the full SMT instance, and overlap-restricted
//! per-axiom subproblems (O3). The full instance is solved first because its
//! answer is definitive; the subproblems act as a refutation rescue when the
//! full solve returns UNKNOWN, since their facts are subsets of the full
//! fact set and any subproblem UNSAT refutes the whole set.

use std::collections::{HashMap, HashSet, VecDeque};
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CiStatement, Domain, StageResult, VarSet, Verdict};
use crate::smt::{solve_external, AxiomSet, AxiomStyle, SmtInstance, SolverStatus};

/// Default ceiling on the graphoid closure size.
pub const DEFAULT_O2_CAP: usize = 100_000;

/// Default per-call solver budget.
pub const DEFAULT_TIMEOUT_MS: u64 = 60_000;

/// Ceiling on each subproblem solve when rescuing a full-instance UNKNOWN:
/// refutations surface fast, so a stuck subproblem is not worth another full
/// budget.
pub const SUBPROBLEM_TIMEOUT_CAP_MS: u64 = 2_000;

/// A consistency problem: deduplicated canonical statements over a domain.
#[derive(Debug, Clone)]
pub struct CirInstance {
    domain: Domain,
    statements: Vec<CiStatement>,
}

impl CirInstance {
    /// Builds an instance, dropping exact duplicates while preserving first
    /// occurrence order. Statements must fit the domain.
    pub fn new(domain: Domain, statements: Vec<CiStatement>) -> Result<Self> {
        let full = VarSet::full(domain.n());
        let mut seen = HashSet::new();
        let mut kept = Vec::with_capacity(statements.len());
        for stmt in statements {
            if !stmt.support().is_subset(full) {
                return Err(Error::DomainMismatch(format!(
                    "statement {} exceeds domain of {} variables",
                    stmt.display(&domain),
                    domain.n()
                )));
            }
            if seen.insert((stmt.key(), stmt.independent())) {
                kept.push(stmt);
            }
        }
        Ok(CirInstance {
            domain,
            statements: kept,
        })
    }

    /// The variable domain.
    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Statements in first-occurrence order.
    pub fn statements(&self) -> &[CiStatement] {
        &self.statements
    }

    /// Domain width in variables.
    pub fn width(&self) -> usize {
        self.domain.n()
    }
}

/// Tunables for a decision run.
#[derive(Debug, Clone)]
pub struct DecideConfig {
    /// Solver executable (resolved path or PATH-relative name).
    pub solver: PathBuf,
    /// Per-solver-call wall budget in milliseconds.
    pub timeout_ms: u64,
    /// Axioms asserted in solver instances and used for O3 subproblems.
    pub axioms: AxiomSet,
    /// Axiom rendering style.
    pub style: AxiomStyle,
    /// Stage toggles for ablation; disabling never changes the verdict.
    pub use_o1: bool,
    pub use_o2: bool,
    pub use_o3: bool,
    pub use_smt: bool,
    /// Graphoid closure ceiling.
    pub o2_cap: usize,
}

impl Default for DecideConfig {
    fn default() -> Self {
        DecideConfig {
            solver: crate::smt::resolve_solver(None),
            timeout_ms: DEFAULT_TIMEOUT_MS,
            axioms: AxiomSet::all(),
            style: AxiomStyle::Standard,
            use_o1: true,
            use_o2: true,
            use_o3: true,
            use_smt: true,
            o2_cap: DEFAULT_O2_CAP,
        }
    }
}

/// Per-stage wall times in milliseconds.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub o1: f64,
    pub o2: f64,
    pub solve: f64,
    pub total: f64,
}

impl StageTimings {
    /// Zeroes every timing, for byte-stable reports.
    pub fn zeroed(&mut self) {
        *self = StageTimings::default();
    }
}

/// How a decision was reached.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionTrace {
    /// Stage that concluded: `o1`, `o2`, `o3`, `smt`, or `default` when every
    /// enabled stage was inconclusive.
    pub stage: String,
    pub o1: Option<StageResult>,
    pub o2: Option<StageResult>,
    pub o3: Option<StageResult>,
    /// Full-instance solver status, present whenever the full solve ran.
    pub solver_status: Option<SolverStatus>,
    /// Number of O3 subproblems solved.
    pub subproblems: usize,
    /// Graphoid closure size (seeds plus derived statements).
    pub o2_closure: usize,
    pub timings_ms: StageTimings,
}

impl DecisionTrace {
    fn new() -> Self {
        DecisionTrace {
            stage: String::new(),
            o1: None,
            o2: None,
            o3: None,
            solver_status: None,
            subproblems: 0,
            o2_closure: 0,
            timings_ms: StageTimings::default(),
        }
    }
}

/// Marginality analysis: a non-degenerate set of marginal single-pair
/// statements is always consistent (any pairwise dependence pattern is
/// realizable), while a marginal statement co-occurring with its own
/// negation refutes the set outright.
///
/// The consistent arm requires singleton sides: a set-valued marginal
/// statement couples with decomposition (A independent of {B, C} entails the
/// pair statements), so its presence leaves the stage inconclusive.
pub fn o1_marginality(inst: &CirInstance) -> StageResult {
    let mut flags: HashMap<(u64, u64, u64), bool> = HashMap::new();
    let mut simple_marginal = true;
    for stmt in inst.statements() {
        if !stmt.is_marginal() {
            simple_marginal = false;
            continue;
        }
        if stmt.x().len() != 1 || stmt.y().len() != 1 {
            simple_marginal = false;
        }
        match flags.insert(stmt.key(), stmt.independent()) {
            Some(prev) if prev != stmt.independent() => return StageResult::Inconsistent,
            _ => {}
        }
    }
    if simple_marginal {
        StageResult::Consistent
    } else {
        StageResult::Inconclusive
    }
}

/// Canonical closure triple: first component bits never exceed the second's.
fn canon(a: u64, b: u64, z: u64) -> (u64, u64, u64) {
    if a <= b {
        (a, b, z)
    } else {
        (b, a, z)
    }
}

struct Closure {
    cap: usize,
    dep_keys: HashSet<(u64, u64, u64)>,
    closed: HashSet<(u64, u64, u64)>,
    worklist: VecDeque<(u64, u64, u64)>,
    /// Orientation-expanded partner index: first component -> (second, cond).
    by_first: HashMap<u64, Vec<(u64, u64)>>,
    conflict: bool,
    capped: bool,
}

impl Closure {
    fn push(&mut self, a: u64, b: u64, z: u64) {
        if self.conflict || self.capped {
            return;
        }
        let key = canon(a, b, z);
        if self.dep_keys.contains(&key) {
            self.conflict = true;
            return;
        }
        if !self.closed.insert(key) {
            return;
        }
        if self.closed.len() > self.cap {
            self.capped = true;
            return;
        }
        self.worklist.push_back(key);
        self.by_first.entry(key.0).or_default().push((key.1, key.2));
        if key.0 != key.1 {
            self.by_first.entry(key.1).or_default().push((key.0, key.2));
        }
    }
}

/// Graphoid saturation: saturates the independence statements under the
/// definite axioms and reports a refutation when the closure reaches the
/// independence counterpart of an asserted dependence. Returns the stage
/// result and the closure size.
pub fn o2_graphoid(inst: &CirInstance, cap: usize) -> (StageResult, usize) {
    let mut closure = Closure {
        cap: cap.max(inst.statements().len()),
        dep_keys: HashSet::new(),
        closed: HashSet::new(),
        worklist: VecDeque::new(),
        by_first: HashMap::new(),
        conflict: false,
        capped: false,
    };
    for stmt in inst.statements() {
        if !stmt.independent() {
            closure.dep_keys.insert(stmt.key());
        }
    }
    for stmt in inst.statements() {
        if stmt.independent() {
            let (x, y, z) = stmt.key();
            closure.push(x, y, z);
        }
    }

    while let Some((x, y, z)) = closure.worklist.pop_front() {
        if closure.conflict || closure.capped {
            break;
        }
        for (a, b) in [(x, y), (y, x)] {
            // Element-wise decomposition and weak union shrink the second
            // component one variable at a time.
            if b.count_ones() > 1 {
                let mut rest = b;
                while rest != 0 {
                    let e = rest & rest.wrapping_neg();
                    rest &= rest - 1;
                    closure.push(a, b & !e, z);
                    closure.push(a, b & !e, z | e);
                }
            }
            // Pairwise rules need a shared first component.
            let partners = match closure.by_first.get(&a) {
                Some(v) => v.clone(),
                None => continue,
            };
            for (d, w) in partners {
                // Contraction: a⊥b|z and a⊥d|(b∪z) give a⊥(b∪d)|z.
                if w == (b | z) {
                    closure.push(a, b | d, z);
                }
                if z == (d | w) {
                    closure.push(a, d | b, w);
                }
                // Composition: a⊥b|z and a⊥d|z give a⊥(b∪d)|z.
                if w == z {
                    closure.push(a, b | d, z);
                }
                // Intersection: a⊥b|(c∪d) and a⊥d|(c∪b) give a⊥(b∪d)|c.
                if d & z == d && w == ((z & !d) | b) {
                    closure.push(a, b | d, z & !d);
                }
                if closure.conflict || closure.capped {
                    break;
                }
            }
            if closure.conflict || closure.capped {
                break;
            }
        }
    }

    let result = if closure.conflict {
        StageResult::Inconsistent
    } else {
        StageResult::Inconclusive
    };
    (result, closure.closed.len())
}

/// Builds the O3 subproblems for an incoming statement: facts sharing
/// variables with it, one instance per enabled axiom.
pub fn o3_subproblems(
    inst: &CirInstance,
    gamma: &CiStatement,
    axioms: AxiomSet,
    style: AxiomStyle,
    timeout_ms: u64,
) -> Result<Vec<SmtInstance>> {
    let mut facts: Vec<CiStatement> = inst
        .statements()
        .iter()
        .filter(|s| !s.overlap(gamma).is_empty())
        .cloned()
        .collect();
    if !facts.iter().any(|s| s == gamma) {
        facts.push(*gamma);
    }
    axioms
        .iter()
        .map(|axiom| {
            SmtInstance::new(
                inst.width(),
                facts.clone(),
                AxiomSet::only(axiom),
                style,
                timeout_ms,
            )
        })
        .collect()
}

/// Decides consistency. `incoming` designates the statement that seeds the
/// O3 overlap restriction; when absent, the most recently added statement is
/// used. Solver UNKNOWN (including timeout) maps to `Consistent`.
pub fn decide(
    inst: &CirInstance,
    incoming: Option<&CiStatement>,
    config: &DecideConfig,
) -> Result<(Verdict, DecisionTrace)> {
    let start = Instant::now();
    let mut trace = DecisionTrace::new();

    if config.use_o1 {
        let t = Instant::now();
        let r = o1_marginality(inst);
        trace.timings_ms.o1 = t.elapsed().as_secs_f64() * 1e3;
        trace.o1 = Some(r);
        match r {
            StageResult::Consistent => {
                trace.stage = "o1".into();
                trace.timings_ms.total = start.elapsed().as_secs_f64() * 1e3;
                return Ok((Verdict::Consistent, trace));
            }
            StageResult::Inconsistent => {
                trace.stage = "o1".into();
                trace.timings_ms.total = start.elapsed().as_secs_f64() * 1e3;
                return Ok((Verdict::Inconsistent, trace));
            }
            StageResult::Inconclusive => {}
        }
    }

    if config.use_o2 {
        let t = Instant::now();
        let (r, size) = o2_graphoid(inst, config.o2_cap);
        trace.timings_ms.o2 = t.elapsed().as_secs_f64() * 1e3;
        trace.o2 = Some(r);
        trace.o2_closure = size;
        if r == StageResult::Inconsistent {
            trace.stage = "o2".into();
            trace.timings_ms.total = start.elapsed().as_secs_f64() * 1e3;
            return Ok((Verdict::Inconsistent, trace));
        }
    }

    let gamma = incoming.or_else(|| inst.statements().last());
    let t = Instant::now();
    let mut full_status = None;
    if config.use_smt {
        let full = SmtInstance::new(
            inst.width(),
            inst.statements().to_vec(),
            config.axioms,
            config.style,
            config.timeout_ms,
        )?;
        let outcome = solve_external(
            &config.solver,
            &full.solver_script(),
            config.timeout_ms,
            None,
        )?;
        full_status = Some(outcome.status);
    }

    // Subproblems run only while no definitive full answer exists: a full
    // SAT makes every subset satisfiable, a full UNSAT already concluded.
    let mut sub_refuted = false;
    let mut subs_run = 0;
    if config.use_o3 && !matches!(full_status, Some(SolverStatus::Sat | SolverStatus::Unsat)) {
        if let Some(gamma) = gamma {
            let budget = if config.use_smt {
                config.timeout_ms.min(SUBPROBLEM_TIMEOUT_CAP_MS)
            } else {
                config.timeout_ms
            };
            for sub in o3_subproblems(inst, gamma, config.axioms, config.style, budget)? {
                subs_run += 1;
                let outcome = solve_external(&config.solver, &sub.solver_script(), budget, None)?;
                if outcome.status == SolverStatus::Unsat {
                    sub_refuted = true;
                    break;
                }
            }
        }
    }
    trace.subproblems = subs_run;
    trace.solver_status = full_status;
    trace.timings_ms.solve = t.elapsed().as_secs_f64() * 1e3;
    trace.timings_ms.total = start.elapsed().as_secs_f64() * 1e3;

    if sub_refuted {
        trace.o3 = Some(StageResult::Inconsistent);
        trace.stage = "o3".into();
        return Ok((Verdict::Inconsistent, trace));
    }
    if subs_run > 0 {
        trace.o3 = Some(StageResult::Inconclusive);
    }
    match full_status {
        Some(SolverStatus::Unsat) => {
            trace.stage = "smt".into();
            Ok((Verdict::Inconsistent, trace))
        }
        Some(SolverStatus::Sat) | Some(SolverStatus::Unknown) => {
            trace.stage = "smt".into();
            Ok((Verdict::Consistent, trace))
        }
        None => {
            trace.stage = "default".into();
            Ok((Verdict::Consistent, trace))
        }
    }
}
