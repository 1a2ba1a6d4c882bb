//! Co-safe temporal formulas over subgoal atoms, their progression semantics,
//! and compilation to deterministic finite automata.
//!
//! Formulas are kept in negation normal form (negation on atoms only) and in
//! a canonical shape: nested conjunctions/disjunctions flattened, operands
//! sorted and deduplicated, Boolean constants folded. State identity during
//! automaton construction additionally merges formulas that a truth-table
//! check over atoms-and-temporal-subterms proves equivalent.

mod fsa;
mod parse;

pub use fsa::{compile_to_fsa, CompileOptions, Fsa, Guard};
pub use parse::parse_ltl;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::relational::{Atom, SymbolicState};

/// Atoms-per-formula bound: each automaton state enumerates all assignments
/// over the vocabulary, so 2^12 is the desk-scale ceiling.
pub const MAX_VOCABULARY: usize = 12;
/// Automaton state-count cap.
pub const DEFAULT_STATE_CAP: usize = 10_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LtlError {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("formula is not co-safe: {0}")]
    NotCoSafe(String),
    #[error("formula uses {count} atoms, more than the supported {max}")]
    VocabularyTooLarge { count: usize, max: usize },
    #[error("automaton construction exceeded the cap of {cap} states")]
    StateExplosion { cap: usize },
}

/// Co-safe formula syntax tree in negation normal form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    True,
    False,
    Atom(Atom),
    NotAtom(Atom),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Next(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
    Eventually(Box<Formula>),
    Always(Box<Formula>),
}

impl Formula {
    pub fn atom(a: Atom) -> Formula {
        Formula::Atom(a)
    }

    pub fn not_atom(a: Atom) -> Formula {
        Formula::NotAtom(a)
    }

    /// n-ary conjunction in canonical shape.
    pub fn and(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut flat = Vec::new();
        for p in parts {
            match p {
                Formula::And(inner) => flat.extend(inner),
                Formula::True => {}
                Formula::False => return Formula::False,
                other => flat.push(other),
            }
        }
        flat.sort();
        flat.dedup();
        if complementary_pair(&flat) {
            return Formula::False;
        }
        // p & q == p when p entails q: the weaker conjunct is redundant.
        let mut flat = absorb(flat, |candidate, other| entails(other, candidate));
        match flat.len() {
            0 => Formula::True,
            1 => flat.pop().unwrap(),
            _ => Formula::And(flat),
        }
    }

    /// n-ary disjunction in canonical shape.
    pub fn or(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut flat = Vec::new();
        for p in parts {
            match p {
                Formula::Or(inner) => flat.extend(inner),
                Formula::False => {}
                Formula::True => return Formula::True,
                other => flat.push(other),
            }
        }
        flat.sort();
        flat.dedup();
        if complementary_pair(&flat) {
            return Formula::True;
        }
        // p | q == q when p entails q: the stronger disjunct is redundant.
        let mut flat = absorb(flat, |candidate, other| entails(candidate, other));
        match flat.len() {
            0 => Formula::False,
            1 => flat.pop().unwrap(),
            _ => Formula::Or(flat),
        }
    }

    pub fn next(inner: Formula) -> Formula {
        Formula::Next(Box::new(inner))
    }

    pub fn until(lhs: Formula, rhs: Formula) -> Formula {
        if lhs == Formula::True {
            return Formula::eventually(rhs);
        }
        Formula::Until(Box::new(lhs), Box::new(rhs))
    }

    pub fn eventually(inner: Formula) -> Formula {
        match inner {
            Formula::True => Formula::True,
            Formula::False => Formula::False,
            Formula::Eventually(_) => inner,
            other => Formula::Eventually(Box::new(other)),
        }
    }

    pub fn always(inner: Formula) -> Formula {
        match inner {
            Formula::True => Formula::True,
            other => Formula::Always(Box::new(other)),
        }
    }

    /// All atoms occurring in the formula, sorted.
    pub fn vocabulary(&self) -> Vec<Atom> {
        let mut set = BTreeSet::new();
        self.collect_atoms(&mut set);
        set.into_iter().collect()
    }

    fn collect_atoms(&self, out: &mut BTreeSet<Atom>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) | Formula::NotAtom(a) => {
                out.insert(a.clone());
            }
            Formula::And(parts) | Formula::Or(parts) => {
                for p in parts {
                    p.collect_atoms(out);
                }
            }
            Formula::Next(i) | Formula::Eventually(i) | Formula::Always(i) => i.collect_atoms(out),
            Formula::Until(l, r) => {
                l.collect_atoms(out);
                r.collect_atoms(out);
            }
        }
    }

    fn contains_temporal(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) | Formula::NotAtom(_) => false,
            Formula::And(parts) | Formula::Or(parts) => parts.iter().any(|p| p.contains_temporal()),
            Formula::Next(_) | Formula::Until(_, _) | Formula::Eventually(_) | Formula::Always(_) => {
                true
            }
        }
    }

    /// Checks the co-safe restrictions: negation appears only on atoms by
    /// construction; `Always` is only allowed over a temporal-free argument.
    pub fn check_co_safe(&self) -> Result<(), LtlError> {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) | Formula::NotAtom(_) => Ok(()),
            Formula::And(parts) | Formula::Or(parts) => {
                parts.iter().try_for_each(|p| p.check_co_safe())
            }
            Formula::Next(i) | Formula::Eventually(i) => i.check_co_safe(),
            Formula::Until(l, r) => {
                l.check_co_safe()?;
                r.check_co_safe()
            }
            Formula::Always(i) => {
                if i.contains_temporal() {
                    Err(LtlError::NotCoSafe(format!(
                        "always over a temporal argument has no finite good prefix: G {i}"
                    )))
                } else {
                    i.check_co_safe()
                }
            }
        }
    }

    /// Maximal temporal subterms of the propositional skeleton.
    fn skeleton_terms(&self, out: &mut BTreeSet<Formula>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) | Formula::NotAtom(a) => {
                out.insert(Formula::Atom(a.clone()));
            }
            Formula::And(parts) | Formula::Or(parts) => {
                for p in parts {
                    p.skeleton_terms(out);
                }
            }
            temporal => {
                out.insert(temporal.clone());
            }
        }
    }

    fn eval_skeleton(&self, truth: &BTreeMap<Formula, bool>) -> bool {
        match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(a) => truth[&Formula::Atom(a.clone())],
            Formula::NotAtom(a) => !truth[&Formula::Atom(a.clone())],
            Formula::And(parts) => parts.iter().all(|p| p.eval_skeleton(truth)),
            Formula::Or(parts) => parts.iter().any(|p| p.eval_skeleton(truth)),
            temporal => truth[temporal],
        }
    }

    /// Semantic equivalence decided propositionally, treating maximal
    /// temporal subformulas as opaque. Sound but incomplete; `None` when the
    /// combined term space is too large to enumerate.
    pub fn equivalent(&self, other: &Formula) -> Option<bool> {
        if self == other {
            return Some(true);
        }
        let mut terms = BTreeSet::new();
        self.skeleton_terms(&mut terms);
        other.skeleton_terms(&mut terms);
        let terms: Vec<Formula> = terms.into_iter().collect();
        if terms.len() > 16 {
            return None;
        }
        for mask in 0u32..(1 << terms.len()) {
            let truth: BTreeMap<Formula, bool> =
                terms.iter().enumerate().map(|(i, t)| (t.clone(), mask >> i & 1 == 1)).collect();
            if self.eval_skeleton(&truth) != other.eval_skeleton(&truth) {
                return Some(false);
            }
        }
        Some(true)
    }

    /// Constant-folds a formula whose skeleton is a tautology or
    /// unsatisfiable; otherwise returns it unchanged.
    pub fn canonical(self) -> Formula {
        if matches!(self, Formula::True | Formula::False) {
            return self;
        }
        match self.equivalent(&Formula::True) {
            Some(true) => return Formula::True,
            _ => {}
        }
        match self.equivalent(&Formula::False) {
            Some(true) => return Formula::False,
            _ => {}
        }
        self
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => f.write_str("true"),
            Formula::False => f.write_str("false"),
            Formula::Atom(a) => {
                if a.args.is_empty() {
                    f.write_str(&a.pred)
                } else {
                    write!(f, "{a}")
                }
            }
            Formula::NotAtom(a) => {
                if a.args.is_empty() {
                    write!(f, "!{}", a.pred)
                } else {
                    write!(f, "!{a}")
                }
            }
            Formula::And(parts) => {
                f.write_str("(")?;
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" & ")?;
                    }
                    write!(f, "{p}")?;
                }
                f.write_str(")")
            }
            Formula::Or(parts) => {
                f.write_str("(")?;
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" | ")?;
                    }
                    write!(f, "{p}")?;
                }
                f.write_str(")")
            }
            Formula::Next(i) => write!(f, "X {}", paren_unary(i)),
            Formula::Until(l, r) => write!(f, "({l} U {r})"),
            Formula::Eventually(i) => write!(f, "F {}", paren_unary(i)),
            Formula::Always(i) => write!(f, "G {}", paren_unary(i)),
        }
    }
}

fn paren_unary(inner: &Formula) -> String {
    match inner {
        Formula::True
        | Formula::False
        | Formula::Atom(_)
        | Formula::NotAtom(_)
        | Formula::And(_)
        | Formula::Or(_)
        | Formula::Until(_, _) => format!("{inner}"),
        nested => format!("({nested})"),
    }
}

/// Drops `parts[i]` whenever some surviving `parts[j]` makes it redundant
/// per `drop_candidate(candidate, other)`; on mutual redundancy the later
/// element in canonical order is dropped.
fn absorb(parts: Vec<Formula>, drop_candidate: impl Fn(&Formula, &Formula) -> bool) -> Vec<Formula> {
    if parts.len() < 2 {
        return parts;
    }
    let mut dropped = vec![false; parts.len()];
    for i in 0..parts.len() {
        if dropped[i] {
            continue;
        }
        for j in 0..parts.len() {
            if i == j || dropped[j] {
                continue;
            }
            if drop_candidate(&parts[i], &parts[j]) {
                let mutual = drop_candidate(&parts[j], &parts[i]);
                if !mutual || i > j {
                    dropped[i] = true;
                    break;
                }
            }
        }
    }
    parts.into_iter().zip(dropped).filter(|(_, d)| !d).map(|(p, _)| p).collect()
}

/// Sound, incomplete entailment check used for absorption: propositional
/// implication over the skeleton (temporal subterms opaque), plus the
/// eventuality rules F x ⊨ F y when x ⊨ y or x ⊨ F y, and x ⊨ F y when
/// x ⊨ y.
fn entails(p: &Formula, q: &Formula) -> bool {
    if p == q {
        return true;
    }
    if skeleton_implies(p, q) {
        return true;
    }
    match (p, q) {
        (Formula::Eventually(x), Formula::Eventually(y)) => {
            entails(x, y) || entails(x, q)
        }
        (_, Formula::Eventually(y)) => entails(p, y),
        _ => false,
    }
}

fn skeleton_implies(p: &Formula, q: &Formula) -> bool {
    let mut terms = BTreeSet::new();
    p.skeleton_terms(&mut terms);
    q.skeleton_terms(&mut terms);
    let terms: Vec<Formula> = terms.into_iter().collect();
    if terms.len() > 14 {
        return false;
    }
    for mask in 0u32..(1 << terms.len()) {
        let truth: BTreeMap<Formula, bool> =
            terms.iter().enumerate().map(|(i, t)| (t.clone(), mask >> i & 1 == 1)).collect();
        if p.eval_skeleton(&truth) && !q.eval_skeleton(&truth) {
            return false;
        }
    }
    true
}

fn complementary_pair(parts: &[Formula]) -> bool {
    let positives: BTreeSet<&Atom> = parts
        .iter()
        .filter_map(|p| if let Formula::Atom(a) = p { Some(a) } else { None })
        .collect();
    parts.iter().any(|p| matches!(p, Formula::NotAtom(a) if positives.contains(a)))
}

/// Truth assignment over a formula's atom vocabulary. Atoms absent from the
/// map are false.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TruthAssignment {
    map: BTreeMap<Atom, bool>,
}

impl TruthAssignment {
    pub fn new(entries: impl IntoIterator<Item = (Atom, bool)>) -> Self {
        TruthAssignment { map: entries.into_iter().collect() }
    }

    /// Truth values of the vocabulary atoms in a symbolic state.
    pub fn from_state(state: &SymbolicState, vocabulary: &[Atom]) -> Self {
        TruthAssignment {
            map: vocabulary.iter().map(|a| (a.clone(), state.contains(a))).collect(),
        }
    }

    pub fn get(&self, atom: &Atom) -> bool {
        self.map.get(atom).copied().unwrap_or(false)
    }

    pub fn set(&mut self, atom: Atom, value: bool) {
        self.map.insert(atom, value);
    }
}

/// One step of formula progression followed by canonical simplification: the
/// residual obligation after observing `sigma`.
pub fn progress(phi: &Formula, sigma: &TruthAssignment) -> Formula {
    progress_raw(phi, sigma).canonical()
}

fn progress_raw(phi: &Formula, sigma: &TruthAssignment) -> Formula {
    match phi {
        Formula::True => Formula::True,
        Formula::False => Formula::False,
        Formula::Atom(a) => {
            if sigma.get(a) {
                Formula::True
            } else {
                Formula::False
            }
        }
        Formula::NotAtom(a) => {
            if sigma.get(a) {
                Formula::False
            } else {
                Formula::True
            }
        }
        Formula::And(parts) => Formula::and(parts.iter().map(|p| progress_raw(p, sigma))),
        Formula::Or(parts) => Formula::or(parts.iter().map(|p| progress_raw(p, sigma))),
        Formula::Next(inner) => (**inner).clone(),
        Formula::Until(lhs, rhs) => Formula::or([
            progress_raw(rhs, sigma),
            Formula::and([progress_raw(lhs, sigma), phi.clone()]),
        ]),
        Formula::Eventually(inner) => {
            Formula::or([progress_raw(inner, sigma), phi.clone()])
        }
        Formula::Always(inner) => {
            Formula::and([progress_raw(inner, sigma), phi.clone()])
        }
    }
}

/// Trace acceptance by iterated progression: true iff some prefix progresses
/// the formula to `true`. This is the oracle the automaton is checked
/// against.
pub fn progression_accepts(phi: &Formula, trace: &[TruthAssignment]) -> bool {
    let mut cur = phi.clone().canonical();
    if cur == Formula::True {
        return true;
    }
    for sigma in trace {
        cur = progress(&cur, sigma);
        if cur == Formula::True {
            return true;
        }
        if cur == Formula::False {
            return false;
        }
    }
    false
}
