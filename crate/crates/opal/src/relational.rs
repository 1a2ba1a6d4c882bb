//! Objects, predicates, atoms, symbolic states, substitutions and
//! lifted/grounded operators — the vocabulary every other module speaks.
//!
//! Atoms use value semantics throughout: two atoms are equal iff they name the
//! same predicate with the same arguments. Negation is positional (membership
//! in the negative half of an [`EffectPair`]), never stored inside an atom.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RelationalError {
    #[error("unbound variable {0} in substitution")]
    UnboundVariable(Variable),
    #[error("atom parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}

/// A named environment object. The optional sort is a category tag ("room",
/// "block", "color"); names are unique within a domain, so identity, ordering
/// and hashing go by name alone.
#[derive(Debug, Clone)]
pub struct ObjectId {
    pub name: String,
    pub sort: Option<String>,
}

impl ObjectId {
    pub fn new(name: impl Into<String>) -> Self {
        ObjectId { name: name.into(), sort: None }
    }

    pub fn with_sort(name: impl Into<String>, sort: impl Into<String>) -> Self {
        ObjectId { name: name.into(), sort: Some(sort.into()) }
    }

    /// Sorts are compatible when equal or when either side is undeclared.
    pub fn sort_compatible(&self, other: &ObjectId) -> bool {
        match (&self.sort, &other.sort) {
            (Some(a), Some(b)) => a == b,
            _ => true,
        }
    }
}

impl PartialEq for ObjectId {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}
impl Eq for ObjectId {}
impl PartialOrd for ObjectId {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for ObjectId {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.name.cmp(&other.name)
    }
}
impl std::hash::Hash for ObjectId {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.name.hash(state);
    }
}
impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Canonical rule variables: operator arguments X1..Xk, auxiliaries Z1..Zm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variable {
    Arg(usize),
    Aux(usize),
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variable::Arg(i) => write!(f, "X{}", i + 1),
            Variable::Aux(i) => write!(f, "Z{}", i + 1),
        }
    }
}

impl Variable {
    pub fn parse(text: &str) -> Option<Variable> {
        let (kind, idx) = text.split_at(1);
        let idx: usize = idx.parse().ok()?;
        if idx == 0 {
            return None;
        }
        match kind {
            "X" => Some(Variable::Arg(idx - 1)),
            "Z" => Some(Variable::Aux(idx - 1)),
            _ => None,
        }
    }
}

/// Predicate signature: (name, arity) unique within a domain; arity 0 allowed.
/// `is_subgoal` marks membership in the subgoal vocabulary used by task
/// formulas. `arg_sorts`, when present, constrains argument categories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateSig {
    pub name: String,
    pub arity: usize,
    pub is_subgoal: bool,
    pub arg_sorts: Option<Vec<String>>,
}

impl PredicateSig {
    pub fn new(name: impl Into<String>, arity: usize) -> Self {
        PredicateSig { name: name.into(), arity, is_subgoal: false, arg_sorts: None }
    }

    pub fn subgoal(mut self) -> Self {
        self.is_subgoal = true;
        self
    }

    pub fn sorts(mut self, sorts: &[&str]) -> Self {
        self.arg_sorts = Some(sorts.iter().map(|s| s.to_string()).collect());
        self
    }
}

/// A grounded predicate.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub pred: String,
    pub args: Vec<ObjectId>,
}

impl Atom {
    pub fn new(pred: impl Into<String>, args: Vec<ObjectId>) -> Self {
        Atom { pred: pred.into(), args }
    }

    pub fn nullary(pred: impl Into<String>) -> Self {
        Atom { pred: pred.into(), args: Vec::new() }
    }

    /// Parses `Pred(a,b)` / `Pred()` / bare `Pred`; whitespace-insensitive.
    pub fn parse(text: &str) -> Result<Atom, RelationalError> {
        let s = text.trim();
        let err = |pos: usize, msg: &str| RelationalError::Parse { pos, msg: msg.into() };
        if s.is_empty() {
            return Err(err(0, "empty atom"));
        }
        match s.find('(') {
            None => {
                validate_ident(s)?;
                Ok(Atom::nullary(s))
            }
            Some(open) => {
                if !s.ends_with(')') {
                    return Err(err(s.len(), "missing closing parenthesis"));
                }
                let name = s[..open].trim();
                validate_ident(name)?;
                let inner = &s[open + 1..s.len() - 1];
                let args = if inner.trim().is_empty() {
                    Vec::new()
                } else {
                    inner
                        .split(',')
                        .map(|a| {
                            let a = a.trim();
                            validate_ident(a)?;
                            Ok(ObjectId::new(a))
                        })
                        .collect::<Result<Vec<_>, RelationalError>>()?
                };
                Ok(Atom::new(name, args))
            }
        }
    }
}

fn validate_ident(s: &str) -> Result<(), RelationalError> {
    if s.is_empty() {
        return Err(RelationalError::Parse { pos: 0, msg: "empty identifier".into() });
    }
    if let Some(bad) = s.chars().find(|c| !(c.is_alphanumeric() || *c == '_' || *c == '-')) {
        return Err(RelationalError::Parse {
            pos: 0,
            msg: format!("invalid character {bad:?} in identifier {s:?}"),
        });
    }
    Ok(())
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.pred)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

/// A predicate over rule variables.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LiftedAtom {
    pub pred: String,
    pub args: Vec<Variable>,
}

impl LiftedAtom {
    pub fn new(pred: impl Into<String>, args: Vec<Variable>) -> Self {
        LiftedAtom { pred: pred.into(), args }
    }
}

impl fmt::Display for LiftedAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.pred)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

/// A finite set of atoms abstracting one environment state.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SymbolicState {
    atoms: BTreeSet<Atom>,
}

impl SymbolicState {
    pub fn new(atoms: impl IntoIterator<Item = Atom>) -> Self {
        SymbolicState { atoms: atoms.into_iter().collect() }
    }

    pub fn contains(&self, atom: &Atom) -> bool {
        self.atoms.contains(atom)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Atom> {
        self.atoms.iter()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn insert(&mut self, atom: Atom) {
        self.atoms.insert(atom);
    }

    pub fn remove(&mut self, atom: &Atom) {
        self.atoms.remove(atom);
    }

    /// `(self ∪ adds) \ dels`.
    pub fn apply(&self, adds: &BTreeSet<Atom>, dels: &BTreeSet<Atom>) -> SymbolicState {
        let mut atoms = self.atoms.clone();
        for d in dels {
            atoms.remove(d);
        }
        for a in adds {
            atoms.insert(a.clone());
        }
        SymbolicState { atoms }
    }

    /// Added and removed atoms relative to `self`.
    pub fn delta(&self, next: &SymbolicState) -> EffectPair {
        EffectPair {
            pos: next.atoms.difference(&self.atoms).cloned().collect(),
            neg: self.atoms.difference(&next.atoms).cloned().collect(),
        }
    }

    /// Keeps only atoms whose predicate passes the filter.
    pub fn restrict<F: Fn(&str) -> bool>(&self, keep: F) -> SymbolicState {
        SymbolicState { atoms: self.atoms.iter().filter(|a| keep(&a.pred)).cloned().collect() }
    }

    /// Parses a comma-separated atom list; the empty string is the empty state.
    pub fn parse(text: &str) -> Result<SymbolicState, RelationalError> {
        let mut atoms = BTreeSet::new();
        for part in split_atom_list(text) {
            atoms.insert(Atom::parse(part)?);
        }
        Ok(SymbolicState { atoms })
    }
}

impl FromIterator<Atom> for SymbolicState {
    fn from_iter<T: IntoIterator<Item = Atom>>(iter: T) -> Self {
        SymbolicState::new(iter)
    }
}

impl fmt::Display for SymbolicState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.atoms.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

/// Splits `P(a,b), Q(c)` on commas outside parentheses.
pub(crate) fn split_atom_list(text: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, c) in text.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                if !text[start..i].trim().is_empty() {
                    parts.push(&text[start..i]);
                }
                start = i + 1;
            }
            _ => {}
        }
    }
    if !text[start..].trim().is_empty() {
        parts.push(&text[start..]);
    }
    parts
}

/// Variable-to-object binding.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Substitution {
    pub binding: BTreeMap<Variable, ObjectId>,
}

impl Substitution {
    pub fn new(binding: impl IntoIterator<Item = (Variable, ObjectId)>) -> Self {
        Substitution { binding: binding.into_iter().collect() }
    }

    pub fn get(&self, v: Variable) -> Option<&ObjectId> {
        self.binding.get(&v)
    }

    pub fn bind(&mut self, v: Variable, o: ObjectId) {
        self.binding.insert(v, o);
    }

    /// True when no two variables map to the same object.
    pub fn is_injective(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.binding.values().all(|o| seen.insert(&o.name))
    }
}

/// Object-to-object bijection produced by effect unification.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ObjectMapping {
    pub map: BTreeMap<ObjectId, ObjectId>,
}

impl ObjectMapping {
    pub fn get(&self, o: &ObjectId) -> Option<&ObjectId> {
        self.map.get(o)
    }

    pub fn inverse(&self) -> ObjectMapping {
        ObjectMapping { map: self.map.iter().map(|(k, v)| (v.clone(), k.clone())).collect() }
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().all(|(k, v)| k == v)
    }
}

/// An operator schema applied to concrete objects.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroundedOperator {
    pub schema: String,
    pub args: Vec<ObjectId>,
}

impl GroundedOperator {
    pub fn new(schema: impl Into<String>, args: Vec<ObjectId>) -> Self {
        GroundedOperator { schema: schema.into(), args }
    }

    pub fn parse(text: &str) -> Result<GroundedOperator, RelationalError> {
        let atom = Atom::parse(text)?;
        Ok(GroundedOperator { schema: atom.pred, args: atom.args })
    }
}

impl fmt::Display for GroundedOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.schema)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

/// Grounded positive/negative effect sets of one transition.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EffectPair {
    pub pos: BTreeSet<Atom>,
    pub neg: BTreeSet<Atom>,
}

impl EffectPair {
    pub fn new(
        pos: impl IntoIterator<Item = Atom>,
        neg: impl IntoIterator<Item = Atom>,
    ) -> Self {
        EffectPair { pos: pos.into_iter().collect(), neg: neg.into_iter().collect() }
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty() && self.neg.is_empty()
    }

    pub fn objects(&self) -> BTreeSet<ObjectId> {
        self.pos.iter().chain(self.neg.iter()).flat_map(|a| a.args.iter().cloned()).collect()
    }
}

/// Lifted positive/negative effect sets plus the number of auxiliary
/// variables they mention.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LiftedEffects {
    pub pos: BTreeSet<LiftedAtom>,
    pub neg: BTreeSet<LiftedAtom>,
    pub aux_count: usize,
}

impl LiftedEffects {
    pub fn is_empty(&self) -> bool {
        self.pos.is_empty() && self.neg.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pos.len() + self.neg.len()
    }
}

impl fmt::Display for LiftedEffects {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for a in &self.pos {
            if !first {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
            first = false;
        }
        for a in &self.neg {
            if !first {
                f.write_str(", ")?;
            }
            write!(f, "!{a}")?;
            first = false;
        }
        Ok(())
    }
}

/// Maps every lifted atom argument-wise through the substitution.
pub fn apply_substitution(
    atoms: &BTreeSet<LiftedAtom>,
    sub: &Substitution,
) -> Result<BTreeSet<Atom>, RelationalError> {
    let mut out = BTreeSet::new();
    for la in atoms {
        let mut args = Vec::with_capacity(la.args.len());
        for v in &la.args {
            let obj =
                sub.get(*v).ok_or(RelationalError::UnboundVariable(*v))?;
            args.push(obj.clone());
        }
        out.insert(Atom::new(la.pred.clone(), args));
    }
    Ok(out)
}

/// Searches for a bijective object mapping under which `a` maps exactly onto
/// `b` (positives to positives, negatives to negatives). Returns `None` when
/// no such bijection exists; that is a valid outcome, not an error.
///
/// Candidates are tried identity-first, then in name order, so unifying a set
/// with itself yields the identity.
pub fn unify_effect_sets(a: &EffectPair, b: &EffectPair) -> Option<ObjectMapping> {
    if a.pos.len() != b.pos.len() || a.neg.len() != b.neg.len() {
        return None;
    }
    // Signature pruning: per side, the multiset of predicate names must agree.
    if pred_counts(&a.pos) != pred_counts(&b.pos) || pred_counts(&a.neg) != pred_counts(&b.neg) {
        return None;
    }
    let atoms_a: Vec<(&Atom, bool)> =
        a.pos.iter().map(|x| (x, true)).chain(a.neg.iter().map(|x| (x, false))).collect();
    let mut fwd: BTreeMap<ObjectId, ObjectId> = BTreeMap::new();
    let mut used: BTreeSet<ObjectId> = BTreeSet::new();
    let mut matched_b: BTreeSet<(bool, Atom)> = BTreeSet::new();
    if match_atoms(&atoms_a, 0, b, &mut fwd, &mut used, &mut matched_b) {
        Some(ObjectMapping { map: fwd })
    } else {
        None
    }
}

fn pred_counts(atoms: &BTreeSet<Atom>) -> BTreeMap<&str, usize> {
    let mut m = BTreeMap::new();
    for a in atoms {
        *m.entry(a.pred.as_str()).or_insert(0) += 1;
    }
    m
}

fn match_atoms(
    atoms_a: &[(&Atom, bool)],
    idx: usize,
    b: &EffectPair,
    fwd: &mut BTreeMap<ObjectId, ObjectId>,
    used: &mut BTreeSet<ObjectId>,
    matched_b: &mut BTreeSet<(bool, Atom)>,
) -> bool {
    if idx == atoms_a.len() {
        return true;
    }
    let (atom, positive) = atoms_a[idx];
    let side = if positive { &b.pos } else { &b.neg };
    // Identity-preferred candidate order: an exact-name match first.
    let mut candidates: Vec<&Atom> =
        side.iter().filter(|c| c.pred == atom.pred && !matched_b.contains(&(positive, (*c).clone()))).collect();
    candidates.sort_by_key(|c| (c.args != atom.args, c.args.clone()));
    for cand in candidates {
        let mut added_pairs = Vec::new();
        let mut ok = true;
        for (x, y) in atom.args.iter().zip(cand.args.iter()) {
            if !x.sort_compatible(y) {
                ok = false;
                break;
            }
            match fwd.get(x) {
                Some(mapped) => {
                    if mapped != y {
                        ok = false;
                        break;
                    }
                }
                None => {
                    if used.contains(y) {
                        ok = false;
                        break;
                    }
                    fwd.insert(x.clone(), y.clone());
                    used.insert(y.clone());
                    added_pairs.push((x.clone(), y.clone()));
                }
            }
        }
        if ok {
            matched_b.insert((positive, cand.clone()));
            if match_atoms(atoms_a, idx + 1, b, fwd, used, matched_b) {
                return true;
            }
            matched_b.remove(&(positive, cand.clone()));
        }
        for (x, y) in added_pairs {
            fwd.remove(&x);
            used.remove(&y);
        }
    }
    false
}

/// Canonically lifted effects plus the anchoring substitution (variables back
/// to the representative transition's objects).
#[derive(Debug, Clone)]
pub struct Lifting {
    pub effects: LiftedEffects,
    /// Maps X1..Xk / Z1..Zm back to the objects of the lifted transition.
    pub binding: Substitution,
}

/// Replaces the operator's arguments by X1..Xk (in order) and the remaining
/// objects by fresh Z1..Zm, assigned in first-occurrence order over a
/// canonical atom ordering so that unifiable inputs lift identically.
pub fn lift_effects(effects: &EffectPair, anchor_args: &[ObjectId]) -> Lifting {
    let mut assignment: BTreeMap<ObjectId, Variable> = BTreeMap::new();
    let mut binding = Substitution::default();
    for (i, obj) in anchor_args.iter().enumerate() {
        assignment.entry(obj.clone()).or_insert(Variable::Arg(i));
        binding.bind(Variable::Arg(i), obj.clone());
    }
    let mut aux_count = 0usize;

    // Atoms are consumed smallest-pattern-first, where a pattern renders
    // already-assigned objects as variables and unassigned ones as a hole;
    // this keeps the Z-numbering independent of concrete object names.
    let pending: Vec<(bool, &Atom)> =
        effects.pos.iter().map(|a| (true, a)).chain(effects.neg.iter().map(|a| (false, a))).collect();
    while pending.iter().any(|(_, a)| a.args.iter().any(|o| !assignment.contains_key(o))) {
        let (pos_in_vec, _) = pending
            .iter()
            .enumerate()
            .filter(|(_, (_, a))| a.args.iter().any(|o| !assignment.contains_key(o)))
            .map(|(i, (p, a))| (i, pattern_key(*p, a, &assignment)))
            .min_by(|a, b| a.1.cmp(&b.1))
            .map(|(i, k)| (i, k))
            .expect("pending atom with unassigned object");
        let (_, atom) = pending[pos_in_vec];
        for obj in &atom.args {
            if !assignment.contains_key(obj) {
                let v = Variable::Aux(aux_count);
                aux_count += 1;
                assignment.insert(obj.clone(), v);
                binding.bind(v, obj.clone());
            }
        }
    }

    let lift_set = |atoms: &BTreeSet<Atom>| -> BTreeSet<LiftedAtom> {
        atoms
            .iter()
            .map(|a| LiftedAtom::new(a.pred.clone(), a.args.iter().map(|o| assignment[o]).collect()))
            .collect()
    };
    Lifting {
        effects: LiftedEffects { pos: lift_set(&effects.pos), neg: lift_set(&effects.neg), aux_count },
        binding,
    }
}

fn pattern_key(positive: bool, atom: &Atom, assignment: &BTreeMap<ObjectId, Variable>) -> String {
    let mut key = String::new();
    key.push(if positive { '+' } else { '-' });
    key.push_str(&atom.pred);
    for o in &atom.args {
        key.push('|');
        match assignment.get(o) {
            Some(v) => key.push_str(&v.to_string()),
            None => key.push('?'),
        }
    }
    key
}
