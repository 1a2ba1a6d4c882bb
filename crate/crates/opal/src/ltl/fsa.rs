//! Deterministic finite automata built by breadth-first closure of formula
//! progression over all truth assignments of the formula's vocabulary.
//!
//! Transitions are stored densely per state as a successor table indexed by
//! assignment mask; guards (Boolean formulas over vocabulary atoms) are
//! recovered on demand by cube merging for display and serialization.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::relational::{Atom, SymbolicState};

use super::{progress, Formula, LtlError, TruthAssignment, DEFAULT_STATE_CAP, MAX_VOCABULARY};

#[derive(Debug, Clone, Copy)]
pub struct CompileOptions {
    pub state_cap: usize,
    pub max_vocabulary: usize,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions { state_cap: DEFAULT_STATE_CAP, max_vocabulary: MAX_VOCABULARY }
    }
}

/// Deterministic, total automaton accepting exactly the finite traces whose
/// iterated progression of the source formula reaches `true`.
#[derive(Debug, Clone)]
pub struct Fsa {
    /// Atoms of the source formula, sorted; bit i of an assignment mask is
    /// the truth value of `vocabulary[i]`. Atoms outside the vocabulary are
    /// ignored by the transition function.
    pub vocabulary: Vec<Atom>,
    /// Canonical progressed formula of each state.
    pub states: Vec<Formula>,
    pub initial: usize,
    pub accepting: BTreeSet<usize>,
    /// `transitions[state][mask]` is the successor state.
    transitions: Vec<Vec<u32>>,
}

impl Fsa {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn is_accepting(&self, state: usize) -> bool {
        self.accepting.contains(&state)
    }

    pub fn assignment_mask(&self, sigma: &TruthAssignment) -> u16 {
        let mut mask = 0u16;
        for (i, atom) in self.vocabulary.iter().enumerate() {
            if sigma.get(atom) {
                mask |= 1 << i;
            }
        }
        mask
    }

    /// Mask of the vocabulary atoms true in a symbolic state.
    pub fn state_mask(&self, state: &SymbolicState) -> u16 {
        let mut mask = 0u16;
        for (i, atom) in self.vocabulary.iter().enumerate() {
            if state.contains(atom) {
                mask |= 1 << i;
            }
        }
        mask
    }

    pub fn step(&self, state: usize, sigma: &TruthAssignment) -> usize {
        self.step_mask(state, self.assignment_mask(sigma))
    }

    pub fn step_mask(&self, state: usize, mask: u16) -> usize {
        self.transitions[state][mask as usize] as usize
    }

    /// True iff the run visits an accepting state at or before the final
    /// step. The first assignment is consumed at the first transition.
    pub fn accepts(&self, trace: &[TruthAssignment]) -> bool {
        let mut state = self.initial;
        if self.is_accepting(state) {
            return true;
        }
        for sigma in trace {
            state = self.step(state, sigma);
            if self.is_accepting(state) {
                return true;
            }
        }
        false
    }

    /// Guarded edges out of `state`: one guard per distinct successor, in
    /// successor order.
    pub fn guarded_edges(&self, state: usize) -> Vec<(usize, Guard)> {
        let mut by_succ: HashMap<usize, Vec<u16>> = HashMap::new();
        for (mask, succ) in self.transitions[state].iter().enumerate() {
            by_succ.entry(*succ as usize).or_default().push(mask as u16);
        }
        let mut out: Vec<(usize, Guard)> = by_succ
            .into_iter()
            .map(|(succ, masks)| (succ, Guard::from_minterms(self.vocabulary.len(), masks)))
            .collect();
        out.sort_by_key(|(succ, _)| *succ);
        out
    }

    /// Expands a guard back to the explicit assignments satisfying it.
    pub fn expand_guard(&self, guard: &Guard) -> Vec<TruthAssignment> {
        let n = self.vocabulary.len();
        (0u16..(1 << n))
            .filter(|mask| guard.covers(*mask))
            .map(|mask| {
                TruthAssignment::new(
                    self.vocabulary
                        .iter()
                        .enumerate()
                        .map(|(i, a)| (a.clone(), mask >> i & 1 == 1)),
                )
            })
            .collect()
    }

    /// Structured text form: vocabulary, states with their formulas, guarded
    /// transitions. Round-trips through human eyes, not through a loader.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("vocabulary: {}\n", join(&self.vocabulary)));
        for (i, formula) in self.states.iter().enumerate() {
            let mut tags = Vec::new();
            if i == self.initial {
                tags.push("initial");
            }
            if self.is_accepting(i) {
                tags.push("accepting");
            }
            let tag = if tags.is_empty() { String::new() } else { format!("  ({})", tags.join(", ")) };
            out.push_str(&format!("state {i}: {formula}{tag}\n"));
        }
        for i in 0..self.len() {
            for (succ, guard) in self.guarded_edges(i) {
                out.push_str(&format!("  {i} -> {succ}  [{}]\n", guard.render(&self.vocabulary)));
            }
        }
        out
    }

    /// GraphViz dot form.
    pub fn render_dot(&self) -> String {
        let mut out = String::from("digraph fsa {\n  rankdir=LR;\n");
        for (i, formula) in self.states.iter().enumerate() {
            let shape = if self.is_accepting(i) { "doublecircle" } else { "circle" };
            out.push_str(&format!(
                "  s{i} [shape={shape}, label=\"{}\"];\n",
                format!("{formula}").replace('"', "'")
            ));
        }
        out.push_str(&format!("  init [shape=point]; init -> s{};\n", self.initial));
        for i in 0..self.len() {
            for (succ, guard) in self.guarded_edges(i) {
                out.push_str(&format!(
                    "  s{i} -> s{succ} [label=\"{}\"];\n",
                    guard.render(&self.vocabulary).replace('"', "'")
                ));
            }
        }
        out.push_str("}\n");
        out
    }
}

fn join(atoms: &[Atom]) -> String {
    atoms.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", ")
}

/// A disjunction of cubes over vocabulary bits. Each cube maps bit index to a
/// required value; unmentioned bits are don't-care.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Guard {
    pub cubes: Vec<Vec<(usize, bool)>>,
}

impl Guard {
    /// Greedy cube merging: repeatedly joins cube pairs differing in exactly
    /// one literal. Compact enough for display; not guaranteed minimal.
    fn from_minterms(width: usize, mut masks: Vec<u16>) -> Guard {
        masks.sort_unstable();
        // cube = (care-mask, value-mask)
        let mut cubes: BTreeSet<(u16, u16)> = masks
            .into_iter()
            .map(|m| ((((1u32 << width) - 1) as u16), m))
            .collect();
        loop {
            let list: Vec<(u16, u16)> = cubes.iter().copied().collect();
            let mut merged = false;
            'outer: for i in 0..list.len() {
                for j in i + 1..list.len() {
                    let (ca, va) = list[i];
                    let (cb, vb) = list[j];
                    if ca == cb {
                        let diff = (va ^ vb) & ca;
                        if diff.count_ones() == 1 {
                            cubes.remove(&list[i]);
                            cubes.remove(&list[j]);
                            cubes.insert((ca & !diff, va & !diff));
                            merged = true;
                            break 'outer;
                        }
                    }
                }
            }
            if !merged {
                break;
            }
        }
        // Drop cubes covered by another cube.
        let list: Vec<(u16, u16)> = cubes.iter().copied().collect();
        let kept: Vec<(u16, u16)> = list
            .iter()
            .copied()
            .filter(|(c, v)| {
                !list.iter().any(|(c2, v2)| {
                    (c2, v2) != (c, v) && c2 & c == *c2 && (v & c2) == (v2 & c2) && c2.count_ones() < c.count_ones()
                })
            })
            .collect();
        Guard {
            cubes: kept
                .into_iter()
                .map(|(care, value)| {
                    (0..width)
                        .filter(|i| care >> i & 1 == 1)
                        .map(|i| (i, value >> i & 1 == 1))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn covers(&self, mask: u16) -> bool {
        self.cubes
            .iter()
            .any(|cube| cube.iter().all(|(bit, val)| (mask >> bit & 1 == 1) == *val))
    }

    pub fn render(&self, vocabulary: &[Atom]) -> String {
        if self.cubes.is_empty() {
            return "false".into();
        }
        let cube_strs: Vec<String> = self
            .cubes
            .iter()
            .map(|cube| {
                if cube.is_empty() {
                    "true".to_string()
                } else {
                    cube.iter()
                        .map(|(bit, val)| {
                            let atom = &vocabulary[*bit];
                            if *val {
                                atom.to_string()
                            } else {
                                format!("!{atom}")
                            }
                        })
                        .collect::<Vec<_>>()
                        .join(" & ")
                }
            })
            .collect();
        cube_strs.join(" | ")
    }
}

impl fmt::Display for Fsa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Breadth-first progression closure. States are equivalence classes of
/// canonical progressed formulas; accepting states carry `true` and are
/// absorbing, as is the `false` sink when reachable.
pub fn compile_to_fsa(phi: &Formula) -> Result<Fsa, LtlError> {
    compile_with(phi, CompileOptions::default())
}

pub fn compile_with(phi: &Formula, opts: CompileOptions) -> Result<Fsa, LtlError> {
    phi.check_co_safe()?;
    let vocabulary = phi.vocabulary();
    if vocabulary.len() > opts.max_vocabulary {
        return Err(LtlError::VocabularyTooLarge {
            count: vocabulary.len(),
            max: opts.max_vocabulary,
        });
    }
    let n_assignments: usize = 1 << vocabulary.len();

    let mut states: Vec<Formula> = Vec::new();
    let mut index: HashMap<Formula, usize> = HashMap::new();
    let mut transitions: Vec<Vec<u32>> = Vec::new();

    let initial_formula = phi.clone().canonical();
    let mut intern = |formula: Formula,
                      states: &mut Vec<Formula>,
                      transitions: &mut Vec<Vec<u32>>|
     -> Result<usize, LtlError> {
        if let Some(&id) = index.get(&formula) {
            return Ok(id);
        }
        // Syntactically new: merge with a semantically equivalent state when
        // the truth-table check proves it.
        for (id, existing) in states.iter().enumerate() {
            if existing.equivalent(&formula) == Some(true) {
                index.insert(formula, id);
                return Ok(id);
            }
        }
        if states.len() >= opts.state_cap {
            return Err(LtlError::StateExplosion { cap: opts.state_cap });
        }
        let id = states.len();
        states.push(formula.clone());
        transitions.push(Vec::new());
        index.insert(formula, id);
        Ok(id)
    };

    let initial = intern(initial_formula, &mut states, &mut transitions)?;
    let mut frontier = vec![initial];
    let mut done: BTreeSet<usize> = BTreeSet::new();
    while let Some(id) = frontier.pop() {
        if !done.insert(id) {
            continue;
        }
        let formula = states[id].clone();
        let mut row = Vec::with_capacity(n_assignments);
        for mask in 0..n_assignments {
            let sigma = TruthAssignment::new(
                vocabulary
                    .iter()
                    .enumerate()
                    .map(|(i, a)| (a.clone(), mask >> i & 1 == 1)),
            );
            let next = progress(&formula, &sigma);
            let next_id = intern(next, &mut states, &mut transitions)?;
            row.push(next_id as u32);
            if !done.contains(&next_id) {
                frontier.push(next_id);
            }
        }
        transitions[id] = row;
    }

    let accepting: BTreeSet<usize> = states
        .iter()
        .enumerate()
        .filter(|(_, f)| **f == Formula::True)
        .map(|(i, _)| i)
        .collect();

    Ok(Fsa { vocabulary, states, initial, accepting, transitions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltl::parse_ltl;

    fn assignments(fsa: &Fsa) -> Vec<TruthAssignment> {
        (0..(1u16 << fsa.vocabulary.len()))
            .map(|mask| {
                TruthAssignment::new(
                    fsa.vocabulary
                        .iter()
                        .enumerate()
                        .map(|(i, a)| (a.clone(), mask >> i & 1 == 1)),
                )
            })
            .collect()
    }

    #[test]
    fn eventually_has_two_states() {
        let phi = parse_ltl("F a").unwrap();
        let fsa = compile_to_fsa(&phi).unwrap();
        assert_eq!(fsa.len(), 2);
        assert_eq!(fsa.accepting.len(), 1);
        let a = Atom::nullary("a");
        let yes = TruthAssignment::new([(a.clone(), true)]);
        let no = TruthAssignment::new([(a, false)]);
        assert!(fsa.is_accepting(fsa.step(fsa.initial, &yes)));
        assert_eq!(fsa.step(fsa.initial, &no), fsa.initial);
    }

    #[test]
    fn nested_eventually_has_three_states() {
        // F(a & F b): init, F b, accepting; a & b in one step jumps
        // init -> accepting.
        let phi = parse_ltl("F(a & F b)").unwrap();
        let fsa = compile_to_fsa(&phi).unwrap();
        assert_eq!(fsa.len(), 3);
        let a = Atom::nullary("a");
        let b = Atom::nullary("b");
        let both = TruthAssignment::new([(a, true), (b, true)]);
        assert!(fsa.is_accepting(fsa.step(fsa.initial, &both)));
    }

    #[test]
    fn or_task_matches_progression_closure() {
        let phi = parse_ltl("F(a & F b) | F(c & F d)").unwrap();
        let fsa = compile_to_fsa(&phi).unwrap();
        // Brute-force closure over canonical progressed formulas.
        let mut seen = vec![phi.clone().canonical()];
        let mut stack = seen.clone();
        let sigmas = assignments(&fsa);
        while let Some(f) = stack.pop() {
            for sigma in &sigmas {
                let next = progress(&f, sigma);
                if !seen.iter().any(|s| s.equivalent(&next) == Some(true)) {
                    seen.push(next.clone());
                    stack.push(next);
                }
            }
        }
        assert_eq!(fsa.len(), seen.len());
    }

    #[test]
    fn determinism_and_totality() {
        let phi = parse_ltl("F(a & F b)").unwrap();
        let fsa = compile_to_fsa(&phi).unwrap();
        for s in 0..fsa.len() {
            for mask in 0..(1u16 << fsa.vocabulary.len()) {
                let succ = fsa.step_mask(s, mask);
                assert!(succ < fsa.len());
            }
        }
    }

    #[test]
    fn accepting_states_absorb() {
        let phi = parse_ltl("F(a & F b) | F c").unwrap();
        let fsa = compile_to_fsa(&phi).unwrap();
        for &acc in &fsa.accepting {
            for mask in 0..(1u16 << fsa.vocabulary.len()) {
                assert!(fsa.is_accepting(fsa.step_mask(acc, mask)));
            }
        }
    }

    #[test]
    fn accepts_simple_traces() {
        let phi = parse_ltl("F a").unwrap();
        let fsa = compile_to_fsa(&phi).unwrap();
        let a = Atom::nullary("a");
        let t = TruthAssignment::new([(a.clone(), true)]);
        let f = TruthAssignment::new([(a, false)]);
        assert!(fsa.accepts(&[f.clone(), t.clone()]));
        assert!(!fsa.accepts(&[f.clone(), f.clone()]));
        assert!(!fsa.accepts(&[]));
    }

    #[test]
    fn same_instant_satisfaction() {
        let phi = parse_ltl("F(a & F b)").unwrap();
        let fsa = compile_to_fsa(&phi).unwrap();
        let a = Atom::nullary("a");
        let b = Atom::nullary("b");
        assert!(fsa.accepts(&[TruthAssignment::new([(a.clone(), true), (b.clone(), true)])]));
        assert!(!fsa.accepts(&[TruthAssignment::new([(a, false), (b, true)])]));
    }

    #[test]
    fn vocabulary_cap_enforced() {
        let names: Vec<String> = (0..13).map(|i| format!("p{i}")).collect();
        let text = names.iter().map(|n| format!("F {n}")).collect::<Vec<_>>().join(" & ");
        let phi = parse_ltl(&text).unwrap();
        assert!(matches!(
            compile_to_fsa(&phi),
            Err(LtlError::VocabularyTooLarge { count: 13, .. })
        ));
    }

    #[test]
    fn false_sink_never_accepts() {
        // X a with a false first step falls into the false sink forever.
        let phi = parse_ltl("X a").unwrap();
        let fsa = compile_to_fsa(&phi).unwrap();
        let a = Atom::nullary("a");
        let f = TruthAssignment::new([(a.clone(), false)]);
        let t = TruthAssignment::new([(a, true)]);
        assert!(fsa.accepts(&[f.clone(), t.clone()]));
        assert!(!fsa.accepts(&[t.clone(), f.clone(), t.clone(), t.clone()]));
    }

    #[test]
    fn guards_cover_all_assignments() {
        let phi = parse_ltl("F(a & F b)").unwrap();
        let fsa = compile_to_fsa(&phi).unwrap();
        for s in 0..fsa.len() {
            let edges = fsa.guarded_edges(s);
            for mask in 0..(1u16 << fsa.vocabulary.len()) {
                let covering: Vec<_> =
                    edges.iter().filter(|(_, g)| g.covers(mask)).collect();
                assert_eq!(covering.len(), 1, "mask {mask} covered by exactly one guard");
                assert_eq!(fsa.step_mask(s, mask), covering[0].0);
            }
        }
    }
}
