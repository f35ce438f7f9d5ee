//! Bit-vector SMT encoding of CI consistency instances and the external
//! solver driver.
//!
//! Variable sets become width-`n` bit vectors; an uninterpreted function
//! `CI : BV(n)^3 -> BV(2)` assigns each triple a 2-bit code (01 independent,
//! 00 dependent, 11 invalid). Totality constraints force exactly those codes,
//! eight universally quantified integrity axioms constrain `CI`, and each
//! knowledge-base statement is asserted as a ground equality. The set is
//! consistent iff the script is satisfiable.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CiStatement, VarSet};

/// One integrity axiom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axiom {
    Symmetry,
    Decomposition,
    WeakUnion,
    Contraction,
    Intersection,
    Composition,
    WeakTransitivity,
    Chordality,
}

impl Axiom {
    /// All axioms in emission order.
    pub const ALL: [Axiom; 8] = [
        Axiom::Symmetry,
        Axiom::Decomposition,
        Axiom::WeakUnion,
        Axiom::Contraction,
        Axiom::Intersection,
        Axiom::Composition,
        Axiom::WeakTransitivity,
        Axiom::Chordality,
    ];

    /// Stable kebab-case name.
    pub fn name(self) -> &'static str {
        match self {
            Axiom::Symmetry => "symmetry",
            Axiom::Decomposition => "decomposition",
            Axiom::WeakUnion => "weak-union",
            Axiom::Contraction => "contraction",
            Axiom::Intersection => "intersection",
            Axiom::Composition => "composition",
            Axiom::WeakTransitivity => "weak-transitivity",
            Axiom::Chordality => "chordality",
        }
    }

    fn bit(self) -> u8 {
        match self {
            Axiom::Symmetry => 1 << 0,
            Axiom::Decomposition => 1 << 1,
            Axiom::WeakUnion => 1 << 2,
            Axiom::Contraction => 1 << 3,
            Axiom::Intersection => 1 << 4,
            Axiom::Composition => 1 << 5,
            Axiom::WeakTransitivity => 1 << 6,
            Axiom::Chordality => 1 << 7,
        }
    }
}

/// A set of enabled axioms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxiomSet(u8);

impl AxiomSet {
    /// All eight axioms.
    pub const fn all() -> Self {
        AxiomSet(0xff)
    }

    /// No axioms.
    pub const fn none() -> Self {
        AxiomSet(0)
    }

    /// A single axiom.
    pub fn only(axiom: Axiom) -> Self {
        AxiomSet(axiom.bit())
    }

    /// This set with one more axiom enabled.
    pub fn with(self, axiom: Axiom) -> Self {
        AxiomSet(self.0 | axiom.bit())
    }

    /// True iff the axiom is enabled.
    pub fn contains(self, axiom: Axiom) -> bool {
        self.0 & axiom.bit() != 0
    }

    /// Enabled axioms in emission order.
    pub fn iter(self) -> impl Iterator<Item = Axiom> {
        Axiom::ALL.into_iter().filter(move |a| self.contains(*a))
    }

    /// Number of enabled axioms.
    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// True iff empty.
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

impl Default for AxiomSet {
    fn default() -> Self {
        AxiomSet::all()
    }
}

/// How the two disjunctive-conclusion axioms are rendered.
///
/// `Standard` states Weak Transitivity and Chordality with disjunctive
/// conclusions, the sound form. `AppendixVerbatim` reproduces a published
/// transcription that splits each conclusion into two separate implications
/// (strictly stronger, refutes some satisfiable instances) and keeps its
/// stray fourth set variable in the Weak Transitivity premise; it exists for
/// fidelity experiments only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxiomStyle {
    #[default]
    Standard,
    AppendixVerbatim,
}

/// A fully encoded consistency instance, renderable to SMT-LIB2 text.
#[derive(Debug, Clone)]
pub struct SmtInstance {
    width: usize,
    facts: Vec<CiStatement>,
    axioms: AxiomSet,
    style: AxiomStyle,
    timeout_ms: u64,
}

impl SmtInstance {
    /// Assembles an instance, checking every fact fits the domain width.
    pub fn new(
        width: usize,
        facts: Vec<CiStatement>,
        axioms: AxiomSet,
        style: AxiomStyle,
        timeout_ms: u64,
    ) -> Result<Self> {
        if width == 0 || width > crate::model::MAX_VARS {
            return Err(Error::InvalidDomain(format!(
                "width {width} outside 1..=63"
            )));
        }
        let full = VarSet::full(width);
        for fact in &facts {
            if !fact.support().is_subset(full) {
                return Err(Error::DomainMismatch(format!(
                    "fact mentions variables outside width {width}"
                )));
            }
        }
        Ok(SmtInstance {
            width,
            facts,
            axioms,
            style,
            timeout_ms,
        })
    }

    /// Domain width in variables.
    pub fn width(&self) -> usize {
        self.width
    }

    /// The asserted facts in input order.
    pub fn facts(&self) -> &[CiStatement] {
        &self.facts
    }

    /// Enabled axioms.
    pub fn axioms(&self) -> AxiomSet {
        self.axioms
    }

    /// Solver wall-clock budget for this instance.
    pub fn timeout_ms(&self) -> u64 {
        self.timeout_ms
    }

    /// Renders the deterministic SMT-LIB2 script.
    pub fn emit_smtlib(&self) -> String {
        let n = self.width;
        let mut out = String::new();
        out.push_str("(set-logic UFBV)\n");
        out.push_str("; 2-bit CI codes: 01 independent, 00 dependent, 11 invalid triple\n");
        let _ = writeln!(
            out,
            "(declare-fun CI ((_ BitVec {n}) (_ BitVec {n}) (_ BitVec {n})) (_ BitVec 2))"
        );
        let zero = bv_literal(0, n);
        let _ = writeln!(
            out,
            "(define-fun valid ((x (_ BitVec {n})) (y (_ BitVec {n})) (z (_ BitVec {n}))) Bool\n  \
             (and (distinct x {zero}) (distinct y {zero}) (= (bvand x y) {zero}) \
             (= (bvand x z) {zero}) (= (bvand y z) {zero})))"
        );
        let _ = writeln!(
            out,
            "(define-fun card1 ((s (_ BitVec {n}))) Bool\n  {})",
            card1_body(n)
        );
        // Totality: valid triples carry a verdict code, invalid ones the
        // invalid marker.
        let q3 = format!("((x (_ BitVec {n})) (y (_ BitVec {n})) (z (_ BitVec {n})))");
        let _ = writeln!(
            out,
            "(assert (forall {q3}\n  (=> (valid x y z) (or (= (CI x y z) #b00) (= (CI x y z) #b01)))))"
        );
        let _ = writeln!(
            out,
            "(assert (forall {q3}\n  (=> (not (valid x y z)) (= (CI x y z) #b11))))"
        );
        for axiom in self.axioms.iter() {
            for line in axiom_assertions(axiom, n, self.style) {
                let _ = writeln!(out, "; axiom: {}", axiom.name());
                out.push_str(&line);
                out.push('\n');
            }
        }
        for fact in &self.facts {
            let _ = writeln!(out, "{}", encode_fact(fact, n));
        }
        out.push_str("(check-sat)\n");
        out
    }

    /// Renders the script handed to a solver: small widths get the eager
    /// finite-domain instantiation, which mainstream solvers decide orders of
    /// magnitude faster than the quantified form, larger widths the
    /// quantified encoding (where refutations are still found quickly by
    /// instantiation, and satisfiable instances fall under the timeout
    /// policy).
    pub fn solver_script(&self) -> String {
        if self.width <= GROUND_MAX_WIDTH {
            self.emit_smtlib_ground()
        } else {
            self.emit_smtlib()
        }
    }

    /// Renders an equisatisfiable quantifier-free script by expanding every
    /// axiom into its ground instances over assignments that satisfy the
    /// validity guards (all other instances are vacuous).
    ///
    /// Totality constraints are dropped: any model of the ground assertions
    /// extends to a total one by sending unconstrained valid triples to the
    /// dependent code and invalid triples to the invalid marker, which can
    /// never falsify a premise (premises test the independent code only) nor
    /// an already-satisfied conclusion.
    ///
    /// Intended for widths up to [`GROUND_MAX_WIDTH`]; instance counts grow
    /// as `6^width`.
    pub(crate) fn emit_smtlib_ground(&self) -> String {
        let n = self.width;
        let mut out = String::new();
        out.push_str("(set-logic QF_UFBV)\n");
        out.push_str(
            "; eager finite-domain instantiation; 2-bit CI codes: 01 independent, 00 dependent\n",
        );
        let _ = writeln!(
            out,
            "(declare-fun CI ((_ BitVec {n}) (_ BitVec {n}) (_ BitVec {n})) (_ BitVec 2))"
        );
        let mut grounder = Grounder::new(n);
        for axiom in self.axioms.iter() {
            let before = grounder.lines.len();
            grounder.expand(axiom, self.style, self.axioms);
            if grounder.lines.len() > before {
                let _ = writeln!(out, "; axiom: {}", axiom.name());
                for line in &grounder.lines[before..] {
                    out.push_str(line);
                    out.push('\n');
                }
            }
        }
        for fact in &self.facts {
            let _ = writeln!(out, "{}", encode_fact(fact, n));
        }
        out.push_str("(check-sat)\n");
        out
    }
}

/// Widths at or below this solve through the ground instantiation.
pub const GROUND_MAX_WIDTH: usize = 6;

/// Visits every assignment of `n` domain elements to `roles` buckets (the
/// last bucket meaning "unused") as disjoint bit masks.
fn for_each_assignment(n: usize, roles: usize, mut f: impl FnMut(&[u64])) {
    let mut digits = vec![0usize; n];
    let mut masks = vec![0u64; roles];
    loop {
        masks.iter_mut().for_each(|m| *m = 0);
        for (i, &d) in digits.iter().enumerate() {
            masks[d] |= 1u64 << i;
        }
        f(&masks);
        let mut i = 0;
        loop {
            if i == n {
                return;
            }
            digits[i] += 1;
            if digits[i] < roles {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

/// Expands axioms into ground implications over concrete variable sets.
struct Grounder {
    n: usize,
    seen: HashSet<String>,
    lines: Vec<String>,
}

impl Grounder {
    fn new(n: usize) -> Self {
        Grounder {
            n,
            seen: HashSet::new(),
            lines: Vec::new(),
        }
    }

    fn indep_at(&self, (x, y, z): (u64, u64, u64)) -> String {
        format!(
            "(= (CI {} {} {}) #b01)",
            bv_literal(x, self.n),
            bv_literal(y, self.n),
            bv_literal(z, self.n)
        )
    }

    fn push(&mut self, line: String) {
        if self.seen.insert(line.clone()) {
            self.lines.push(line);
        }
    }

    /// One ground implication; premises conjoin, conclusions disjoin.
    /// Tautologies (a conclusion disjunct among the premises) are skipped.
    fn clause(&mut self, mut premises: Vec<(u64, u64, u64)>, conclusion: &[(u64, u64, u64)]) {
        if conclusion.iter().any(|c| premises.contains(c)) {
            return;
        }
        premises.sort_unstable();
        premises.dedup();
        let ante: Vec<String> = premises.iter().map(|t| self.indep_at(*t)).collect();
        let ante = if ante.len() == 1 {
            ante.into_iter().next().unwrap()
        } else {
            format!("(and {})", ante.join(" "))
        };
        let cons: Vec<String> = conclusion.iter().map(|t| self.indep_at(*t)).collect();
        let cons = if cons.len() == 1 {
            cons.into_iter().next().unwrap()
        } else {
            format!("(or {})", cons.join(" "))
        };
        self.push(format!("(assert (=> {ante} {cons}))"));
    }

    fn expand(&mut self, axiom: Axiom, style: AxiomStyle, enabled: AxiomSet) {
        match axiom {
            Axiom::Symmetry => for_each_assignment(self.n, 4, |m| {
                let (x, y, z) = (m[0], m[1], m[2]);
                if x == 0 || y == 0 || x > y {
                    return;
                }
                let line = format!(
                    "(assert (= (CI {} {} {}) (CI {} {} {})))",
                    bv_literal(x, self.n),
                    bv_literal(y, self.n),
                    bv_literal(z, self.n),
                    bv_literal(y, self.n),
                    bv_literal(x, self.n),
                    bv_literal(z, self.n)
                );
                self.push(line);
            }),
            Axiom::Decomposition => for_each_assignment(self.n, 5, |m| {
                // Premise side y∪w collapses to one set with a chosen
                // nonempty proper subset as the conclusion, which covers
                // overlapping y and w exactly.
                let (x, z, part, rest) = (m[0], m[1], m[2], m[3]);
                if x == 0 || part == 0 || rest == 0 {
                    return;
                }
                self.clause(vec![(x, part | rest, z)], &[(x, part, z)]);
            }),
            Axiom::WeakUnion => for_each_assignment(self.n, 5, |m| {
                let (x, y, w, z) = (m[0], m[1], m[2], m[3]);
                if x == 0 || y == 0 || w == 0 {
                    return;
                }
                self.clause(vec![(x, y | w, z)], &[(x, y, z | w)]);
            }),
            Axiom::Contraction => for_each_assignment(self.n, 5, |m| {
                let (x, y, w, z) = (m[0], m[1], m[2], m[3]);
                if x == 0 || y == 0 || w == 0 {
                    return;
                }
                self.clause(vec![(x, y, z), (x, w, z | y)], &[(x, y | w, z)]);
            }),
            Axiom::Intersection => for_each_assignment(self.n, 5, |m| {
                let (x, y, w, z) = (m[0], m[1], m[2], m[3]);
                if x == 0 || y == 0 || w == 0 {
                    return;
                }
                self.clause(vec![(x, y, z | w), (x, w, z | y)], &[(x, y | w, z)]);
            }),
            Axiom::Composition => {
                if enabled.contains(Axiom::Decomposition) {
                    // Overlapping second components are entailed by the
                    // disjoint instances plus decomposition, so the cheaper
                    // disjoint enumeration suffices.
                    for_each_assignment(self.n, 5, |m| {
                        let (x, y, w, z) = (m[0], m[1], m[2], m[3]);
                        if x == 0 || y == 0 || w == 0 {
                            return;
                        }
                        self.clause(vec![(x, y, z), (x, w, z)], &[(x, y | w, z)]);
                    });
                } else {
                    for_each_assignment(self.n, 6, |m| {
                        let (x, yok, both, wok, z) = (m[0], m[1], m[2], m[3], m[4]);
                        let (y, w) = (yok | both, wok | both);
                        if x == 0 || y == 0 || w == 0 {
                            return;
                        }
                        self.clause(vec![(x, y, z), (x, w, z)], &[(x, y | w, z)]);
                    });
                }
            }
            Axiom::WeakTransitivity => match style {
                AxiomStyle::Standard => for_each_assignment(self.n, 4, |m| {
                    let (x, y, z, free) = (m[0], m[1], m[2], m[3]);
                    if x == 0 || y == 0 {
                        return;
                    }
                    let mut rest = free;
                    while rest != 0 {
                        let u = rest & rest.wrapping_neg();
                        rest &= rest - 1;
                        self.clause(vec![(x, y, z), (x, y, z | u)], &[(x, u, z), (u, y, z)]);
                    }
                }),
                AxiomStyle::AppendixVerbatim => for_each_assignment(self.n, 6, |m| {
                    let (x, yok, both, wok, z) = (m[0], m[1], m[2], m[3], m[4]);
                    let (y, w) = (yok | both, wok | both);
                    if x == 0 || y == 0 || w == 0 {
                        return;
                    }
                    for e in 0..self.n {
                        let u = 1u64 << e;
                        if u & (x | w) != 0 {
                            continue;
                        }
                        if u & (y | z) == 0 {
                            self.clause(vec![(x, y, z), (x, w, z | u)], &[(u, y, z)]);
                        }
                        if u & z == 0 {
                            self.clause(vec![(x, y, z), (x, w, z | u)], &[(x, u, z)]);
                        }
                    }
                }),
            },
            Axiom::Chordality => {
                let n = self.n;
                for a in 0..n {
                    for b in 0..n {
                        for c in 0..n {
                            for d in 0..n {
                                if a == b || a == c || a == d || b == c || b == d || c == d {
                                    continue;
                                }
                                let (x, y, z, w) = (1u64 << a, 1u64 << b, 1u64 << c, 1u64 << d);
                                let premises = vec![(x, y, z | w), (z, w, x | y)];
                                match style {
                                    AxiomStyle::Standard => {
                                        self.clause(premises, &[(x, y, z), (x, y, w)])
                                    }
                                    AxiomStyle::AppendixVerbatim => {
                                        self.clause(premises.clone(), &[(x, y, z)]);
                                        self.clause(premises, &[(x, y, w)]);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Renders a variable set as a width-`n` SMT-LIB bit-vector literal; bit `i`
/// is set iff variable `i` is a member.
pub fn set2vec(s: VarSet, width: usize) -> String {
    bv_literal(s.bits(), width)
}

fn bv_literal(bits: u64, width: usize) -> String {
    let mut out = String::with_capacity(width + 2);
    out.push_str("#b");
    for i in (0..width).rev() {
        out.push(if bits & (1 << i) != 0 { '1' } else { '0' });
    }
    out
}

/// Renders one fact assertion: code 01 for independence, 00 for dependence.
pub fn encode_fact(stmt: &CiStatement, width: usize) -> String {
    let code = if stmt.independent() { "#b01" } else { "#b00" };
    format!(
        "(assert (= (CI {} {} {}) {code}))",
        set2vec(stmt.x(), width),
        set2vec(stmt.y(), width),
        set2vec(stmt.z(), width)
    )
}

fn card1_body(n: usize) -> String {
    if n == 1 {
        return "(= s #b1)".to_string();
    }
    let terms: Vec<String> = (0..n)
        .map(|i| format!("((_ zero_extend {}) ((_ extract {i} {i}) s))", n - 1))
        .collect();
    format!("(= (bvadd {}) (_ bv1 {n}))", terms.join(" "))
}

/// A CI application term over quantified variables and unions of them.
fn ci(args: [&str; 3]) -> (String, String) {
    let term = format!("(CI {} {} {})", args[0], args[1], args[2]);
    let guard = format!("(valid {} {} {})", args[0], args[1], args[2]);
    (term, guard)
}

fn indep(term: &str) -> String {
    format!("(= {term} #b01)")
}

/// Builds one guarded quantified assertion: premises are CI-independence
/// equalities, the conclusion a disjunction of them; every CI occurrence
/// contributes a validity guard to the antecedent, and `extra` carries
/// cardinality constraints.
fn guarded(
    quantified: &[&str],
    n: usize,
    extra: &[String],
    premises: &[[&str; 3]],
    conclusion: &[[&str; 3]],
) -> String {
    let binders: Vec<String> = quantified
        .iter()
        .map(|v| format!("({v} (_ BitVec {n}))"))
        .collect();
    let mut antecedent: Vec<String> = extra.to_vec();
    let mut conclusion_terms = Vec::new();
    for args in premises {
        let (term, guard) = ci(*args);
        antecedent.push(guard);
        antecedent.push(indep(&term));
    }
    for args in conclusion {
        let (term, guard) = ci(*args);
        antecedent.push(guard);
        conclusion_terms.push(indep(&term));
    }
    let consequent = if conclusion_terms.len() == 1 {
        conclusion_terms.pop().unwrap()
    } else {
        format!("(or {})", conclusion_terms.join(" "))
    };
    format!(
        "(assert (forall ({})\n  (=> (and {})\n      {})))",
        binders.join(" "),
        antecedent.join(" "),
        consequent
    )
}

/// Assertions for one axiom at the given width and style.
fn axiom_assertions(axiom: Axiom, n: usize, style: AxiomStyle) -> Vec<String> {
    let yw = "(bvor y w)";
    let zw = "(bvor z w)";
    let zy = "(bvor z y)";
    let zu = "(bvor z u)";
    let card = |v: &str| format!("(card1 {v})");
    match axiom {
        Axiom::Symmetry => {
            // Invalid triples keep the invalid code on both sides, so the
            // equality holds unconditionally.
            vec![format!(
                "(assert (forall ((x (_ BitVec {n})) (y (_ BitVec {n})) (z (_ BitVec {n})))\n  \
                 (= (CI x y z) (CI y x z))))"
            )]
        }
        Axiom::Decomposition => vec![
            guarded(
                &["x", "y", "z", "w"],
                n,
                &[],
                &[["x", yw, "z"]],
                &[["x", "y", "z"]],
            ),
            guarded(
                &["x", "y", "z", "w"],
                n,
                &[],
                &[["x", yw, "z"]],
                &[["x", "w", "z"]],
            ),
        ],
        Axiom::WeakUnion => vec![guarded(
            &["x", "y", "z", "w"],
            n,
            &[],
            &[["x", yw, "z"]],
            &[["x", "y", zw]],
        )],
        Axiom::Contraction => vec![guarded(
            &["x", "y", "z", "w"],
            n,
            &[],
            &[["x", "y", "z"], ["x", "w", zy]],
            &[["x", yw, "z"]],
        )],
        Axiom::Intersection => vec![guarded(
            &["x", "y", "z", "w"],
            n,
            &[],
            &[["x", "y", zw], ["x", "w", zy]],
            &[["x", yw, "z"]],
        )],
        Axiom::Composition => vec![guarded(
            &["x", "y", "z", "w"],
            n,
            &[],
            &[["x", "y", "z"], ["x", "w", "z"]],
            &[["x", yw, "z"]],
        )],
        Axiom::WeakTransitivity => match style {
            AxiomStyle::Standard => vec![guarded(
                &["x", "y", "z", "u"],
                n,
                &[card("u")],
                &[["x", "y", "z"], ["x", "y", zu]],
                &[["x", "u", "z"], ["u", "y", "z"]],
            )],
            AxiomStyle::AppendixVerbatim => vec![
                guarded(
                    &["x", "y", "z", "w", "u"],
                    n,
                    &[card("u")],
                    &[["x", "y", "z"], ["x", "w", zu]],
                    &[["u", "y", "z"]],
                ),
                guarded(
                    &["x", "y", "z", "w", "u"],
                    n,
                    &[card("u")],
                    &[["x", "y", "z"], ["x", "w", zu]],
                    &[["x", "u", "z"]],
                ),
            ],
        },
        Axiom::Chordality => {
            let cards = vec![card("x"), card("y"), card("z"), card("w")];
            match style {
                AxiomStyle::Standard => vec![guarded(
                    &["x", "y", "z", "w"],
                    n,
                    &cards,
                    &[["x", "y", zw], ["z", "w", "(bvor x y)"]],
                    &[["x", "y", "z"], ["x", "y", "w"]],
                )],
                AxiomStyle::AppendixVerbatim => vec![
                    guarded(
                        &["x", "y", "z", "w"],
                        n,
                        &cards,
                        &[["x", "y", zw], ["z", "w", "(bvor x y)"]],
                        &[["x", "y", "z"]],
                    ),
                    guarded(
                        &["x", "y", "z", "w"],
                        n,
                        &cards,
                        &[["x", "y", zw], ["z", "w", "(bvor x y)"]],
                        &[["x", "y", "w"]],
                    ),
                ],
            }
        }
    }
}

/// Solver result status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverStatus {
    Sat,
    Unsat,
    Unknown,
}

/// Outcome of one solver invocation.
#[derive(Debug, Clone)]
pub struct SolverOutcome {
    pub status: SolverStatus,
    pub wall_ms: f64,
    pub raw: String,
}

/// Resolves the solver executable: an explicit path wins, then the
/// `CICHECK_SOLVER` environment variable, then `z3` from `PATH`.
pub fn resolve_solver(explicit: Option<&Path>) -> PathBuf {
    if let Some(path) = explicit {
        return path.to_path_buf();
    }
    if let Some(env) = std::env::var_os("CICHECK_SOLVER") {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    PathBuf::from("z3")
}

/// Runs the solver on a script, enforcing the timeout by killing the
/// subprocess (expiry and cancellation both map to `Unknown`). The solver
/// must accept a script file path argument and print `sat`, `unsat`, or
/// `unknown` as its first result token.
pub fn solve_external(
    solver: &Path,
    script: &str,
    timeout_ms: u64,
    cancel: Option<&AtomicBool>,
) -> Result<SolverOutcome> {
    let start = Instant::now();
    let mut file = tempfile::Builder::new()
        .prefix("ci-instance-")
        .suffix(".smt2")
        .tempfile()?;
    std::io::Write::write_all(&mut file, script.as_bytes())?;
    let path = file.path().to_path_buf();

    let mut child = Command::new(solver)
        .arg(&path)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::SolverConfig(format!(
                    "solver executable {} not found; pass --solver or set CICHECK_SOLVER",
                    solver.display()
                ))
            } else {
                Error::SolverConfig(format!("cannot launch {}: {e}", solver.display()))
            }
        })?;

    let deadline = start + Duration::from_millis(timeout_ms);
    let timed_out = loop {
        if child.try_wait()?.is_some() {
            break false;
        }
        let cancelled = cancel.map(|c| c.load(Ordering::Relaxed)).unwrap_or(false);
        if cancelled || Instant::now() >= deadline {
            let _ = child.kill();
            break true;
        }
        std::thread::sleep(Duration::from_millis(2));
    };

    let output = child.wait_with_output()?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let stdout = String::from_utf8_lossy(&output.stdout).to_string();
    if timed_out {
        return Ok(SolverOutcome {
            status: SolverStatus::Unknown,
            wall_ms,
            raw: stdout,
        });
    }
    for token in stdout.split_whitespace() {
        match token {
            "sat" => {
                return Ok(SolverOutcome {
                    status: SolverStatus::Sat,
                    wall_ms,
                    raw: stdout,
                })
            }
            "unsat" => {
                return Ok(SolverOutcome {
                    status: SolverStatus::Unsat,
                    wall_ms,
                    raw: stdout,
                })
            }
            "unknown" => {
                return Ok(SolverOutcome {
                    status: SolverStatus::Unknown,
                    wall_ms,
                    raw: stdout,
                })
            }
            _ => continue,
        }
    }
    let stderr = String::from_utf8_lossy(&output.stderr);
    Err(Error::SolverProtocol {
        message: format!("no sat/unsat/unknown token from {}", solver.display()),
        raw: format!("stdout: {stdout}; stderr: {stderr}"),
    })
}
