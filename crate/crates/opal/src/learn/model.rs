//! Operator rules and the learned transition model: most-specific-rule
//! prediction with existential witness binding, plus a PDDL-flavored text
//! dump that round-trips through its loader.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::relational::{
    Atom, GroundedOperator, LiftedAtom, LiftedEffects, ObjectId, Substitution, SymbolicState,
    Variable,
};

use super::LearnError;

/// One learned operator rule: a conjunctive lifted precondition and a
/// distribution over lifted effect sets (a single entry with probability 1
/// in deterministic domains).
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorRule {
    pub schema: String,
    pub arity: usize,
    pub controller: String,
    pub precondition: BTreeSet<LiftedAtom>,
    pub effects: Vec<(LiftedEffects, f64)>,
}

impl OperatorRule {
    /// Positive and negative lifted effect sets never overlap.
    pub fn effects_disjoint(&self) -> bool {
        self.effects.iter().all(|(e, _)| e.pos.is_disjoint(&e.neg))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransitionModel {
    pub rules: Vec<OperatorRule>,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub outcomes: Vec<(SymbolicState, f64)>,
    /// True when two maximal distinct rules matched with disagreeing
    /// predictions; resolution picks the first in canonical order.
    pub ambiguous: bool,
}

impl TransitionModel {
    pub fn schemas(&self) -> BTreeSet<&str> {
        self.rules.iter().map(|r| r.schema.as_str()).collect()
    }

    pub fn rules_of<'a>(&'a self, schema: &'a str) -> impl Iterator<Item = &'a OperatorRule> + 'a {
        self.rules.iter().filter(move |r| r.schema == schema)
    }

    /// Canonical ordering: schema ascending, precondition size descending
    /// (most specific first), then display text.
    pub fn canonicalize(&mut self) {
        self.rules.sort_by(|a, b| {
            a.schema
                .cmp(&b.schema)
                .then(b.precondition.len().cmp(&a.precondition.len()))
                .then_with(|| precondition_text(&a.precondition).cmp(&precondition_text(&b.precondition)))
        });
    }

    /// Distribution over successor states. With no matching rule the
    /// operator fails: a point mass on the unchanged state.
    pub fn predict(&self, state: &SymbolicState, op: &GroundedOperator) -> Vec<(SymbolicState, f64)> {
        self.predict_full(state, op).outcomes
    }

    pub fn predict_full(&self, state: &SymbolicState, op: &GroundedOperator) -> Prediction {
        let mut matches: Vec<(&OperatorRule, Substitution)> = Vec::new();
        for rule in self.rules_of(&op.schema) {
            if rule.arity != op.args.len() {
                continue;
            }
            if let Some(sub) = match_precondition(&rule.precondition, &op.args, state) {
                matches.push((rule, sub));
            }
        }
        if matches.is_empty() {
            return Prediction { outcomes: vec![(state.clone(), 1.0)], ambiguous: false };
        }
        // Most-specific rule wins; canonical order breaks ties.
        let best_len = matches.iter().map(|(r, _)| r.precondition.len()).max().unwrap();
        matches.retain(|(r, _)| r.precondition.len() == best_len);
        matches.sort_by(|(a, _), (b, _)| {
            precondition_text(&a.precondition).cmp(&precondition_text(&b.precondition))
        });
        let (rule, sub) = &matches[0];
        let outcomes = apply_rule(rule, sub, state);
        let ambiguous = matches.len() > 1
            && matches[1..].iter().any(|(r, s)| apply_rule(r, s, state) != outcomes);
        Prediction { outcomes, ambiguous }
    }
}

/// Finds the lexicographically-first injective witness binding the
/// precondition's auxiliary variables so that every atom holds in `state`
/// (argument variables are fixed positionally).
pub fn match_precondition(
    precondition: &BTreeSet<LiftedAtom>,
    op_args: &[ObjectId],
    state: &SymbolicState,
) -> Option<Substitution> {
    let mut sub = Substitution::default();
    for (i, obj) in op_args.iter().enumerate() {
        sub.bind(Variable::Arg(i), obj.clone());
    }
    let mut aux: Vec<Variable> = Vec::new();
    for atom in precondition {
        for v in &atom.args {
            if matches!(v, Variable::Aux(_)) && !aux.contains(v) {
                aux.push(*v);
            }
        }
    }
    let mut candidates: Vec<ObjectId> = state
        .iter()
        .flat_map(|a| a.args.iter().cloned())
        .filter(|o| !op_args.contains(o))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    candidates.sort();
    search_witness(precondition, &aux, 0, &candidates, &mut sub, state)
}

fn search_witness(
    precondition: &BTreeSet<LiftedAtom>,
    aux: &[Variable],
    idx: usize,
    candidates: &[ObjectId],
    sub: &mut Substitution,
    state: &SymbolicState,
) -> Option<Substitution> {
    if idx == aux.len() {
        let ok = precondition.iter().all(|la| match ground_atom(la, sub) {
            Some(atom) => state.contains(&atom),
            None => false,
        });
        return ok.then(|| sub.clone());
    }
    for cand in candidates {
        if sub.binding.values().any(|o| o == cand) {
            continue;
        }
        sub.bind(aux[idx], cand.clone());
        // Prune: every fully-grounded atom must already hold.
        let consistent = precondition.iter().all(|la| match ground_atom(la, sub) {
            Some(atom) => state.contains(&atom),
            None => true,
        });
        if consistent {
            if let Some(found) = search_witness(precondition, aux, idx + 1, candidates, sub, state) {
                return Some(found);
            }
        }
        sub.binding.remove(&aux[idx]);
    }
    None
}

fn ground_atom(la: &LiftedAtom, sub: &Substitution) -> Option<Atom> {
    let mut args = Vec::with_capacity(la.args.len());
    for v in &la.args {
        args.push(sub.get(*v)?.clone());
    }
    Some(Atom::new(la.pred.clone(), args))
}

/// Applies each effect alternative under the witness binding, extending it
/// for effect-only auxiliary variables by matching delete atoms against the
/// state. An alternative that cannot be grounded keeps the state unchanged.
fn apply_rule(
    rule: &OperatorRule,
    sub: &Substitution,
    state: &SymbolicState,
) -> Vec<(SymbolicState, f64)> {
    let mut acc: BTreeMap<SymbolicState, f64> = BTreeMap::new();
    for (effects, p) in &rule.effects {
        let next = match ground_effects(effects, sub, state) {
            Some((adds, dels)) => state.apply(&adds, &dels),
            None => state.clone(),
        };
        *acc.entry(next).or_insert(0.0) += p;
    }
    acc.into_iter().collect()
}

fn ground_effects(
    effects: &LiftedEffects,
    sub: &Substitution,
    state: &SymbolicState,
) -> Option<(BTreeSet<Atom>, BTreeSet<Atom>)> {
    let mut sub = sub.clone();
    let mut unbound: Vec<Variable> = Vec::new();
    for atom in effects.pos.iter().chain(effects.neg.iter()) {
        for v in &atom.args {
            if sub.get(*v).is_none() && !unbound.contains(v) {
                unbound.push(*v);
            }
        }
    }
    if !unbound.is_empty() {
        // Bind the rest through the delete atoms, which must be present.
        let negs: Vec<&LiftedAtom> = effects.neg.iter().collect();
        if !bind_via_deletes(&negs, 0, state, &mut sub) {
            return None;
        }
        let all_bound = effects
            .pos
            .iter()
            .chain(effects.neg.iter())
            .all(|a| a.args.iter().all(|v| sub.get(*v).is_some()));
        if !all_bound {
            return None;
        }
    }
    let ground_set = |atoms: &BTreeSet<LiftedAtom>| -> Option<BTreeSet<Atom>> {
        atoms.iter().map(|la| ground_atom(la, &sub)).collect()
    };
    Some((ground_set(&effects.pos)?, ground_set(&effects.neg)?))
}

fn bind_via_deletes(
    negs: &[&LiftedAtom],
    idx: usize,
    state: &SymbolicState,
    sub: &mut Substitution,
) -> bool {
    if idx == negs.len() {
        return true;
    }
    let la = negs[idx];
    if let Some(atom) = ground_atom(la, sub) {
        return state.contains(&atom) && bind_via_deletes(negs, idx + 1, state, sub);
    }
    let candidates: Vec<&Atom> = state
        .iter()
        .filter(|a| a.pred == la.pred && a.args.len() == la.args.len())
        .collect();
    for cand in candidates {
        let mut added = Vec::new();
        let mut ok = true;
        for (v, obj) in la.args.iter().zip(cand.args.iter()) {
            match sub.get(*v) {
                Some(bound) if bound == obj => {}
                Some(_) => {
                    ok = false;
                    break;
                }
                None => {
                    if sub.binding.values().any(|o| o == obj) {
                        ok = false;
                        break;
                    }
                    sub.bind(*v, obj.clone());
                    added.push(*v);
                }
            }
        }
        if ok && bind_via_deletes(negs, idx + 1, state, sub) {
            return true;
        }
        for v in added {
            sub.binding.remove(&v);
        }
    }
    false
}

fn precondition_text(pre: &BTreeSet<LiftedAtom>) -> String {
    pre.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", ")
}

fn sexpr_atom(atom: &LiftedAtom) -> String {
    if atom.args.is_empty() {
        format!("({})", atom.pred)
    } else {
        format!(
            "({} {})",
            atom.pred,
            atom.args.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
        )
    }
}

fn sexpr_effect_set(effects: &LiftedEffects) -> String {
    let mut parts: Vec<String> = effects.pos.iter().map(sexpr_atom).collect();
    parts.extend(effects.neg.iter().map(|a| format!("(not {})", sexpr_atom(a))));
    format!("(and {})", parts.join(" "))
}

/// Deterministic, sorted, round-trippable text form.
pub fn dump_model(model: &TransitionModel) -> String {
    let mut model = model.clone();
    model.canonicalize();
    let mut out = String::from("; learned transition model\n");
    for rule in &model.rules {
        let params = (0..rule.arity).map(|i| format!("X{}", i + 1)).collect::<Vec<_>>().join(" ");
        let pre = {
            let parts: Vec<String> = rule.precondition.iter().map(sexpr_atom).collect();
            format!("(and {})", parts.join(" "))
        };
        let eff = if rule.effects.len() == 1 {
            sexpr_effect_set(&rule.effects[0].0)
        } else {
            let mut parts = Vec::new();
            for (e, p) in &rule.effects {
                parts.push(format!("{:.6} {}", p, sexpr_effect_set(e)));
            }
            format!("(probabilistic {})", parts.join(" "))
        };
        let _ = write!(
            out,
            "(:action {}\n  :controller {}\n  :parameters ({})\n  :precondition {}\n  :effect {})\n\n",
            rule.schema, rule.controller, params, pre, eff
        );
    }
    out
}

/// Parses the [`dump_model`] format back into a model.
pub fn load_model(text: &str) -> Result<TransitionModel, LearnError> {
    let tokens = tokenize(text);
    let mut cursor = 0usize;
    let mut rules = Vec::new();
    while cursor < tokens.len() {
        let (node, next) = parse_sexpr(&tokens, cursor)?;
        cursor = next;
        rules.push(rule_from_sexpr(&node)?);
    }
    let mut model = TransitionModel { rules };
    model.canonicalize();
    Ok(model)
}

#[derive(Debug, Clone, PartialEq)]
enum Sexpr {
    Sym(String),
    List(Vec<Sexpr>),
}

fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let mut in_comment = false;
    for c in text.chars() {
        if in_comment {
            if c == '\n' {
                in_comment = false;
            }
            continue;
        }
        match c {
            ';' => in_comment = true,
            '(' | ')' => {
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
                tokens.push(c.to_string());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

fn parse_sexpr(tokens: &[String], mut cursor: usize) -> Result<(Sexpr, usize), LearnError> {
    let err = |msg: &str| LearnError::ModelParse(msg.to_string());
    match tokens.get(cursor).map(|s| s.as_str()) {
        Some("(") => {
            cursor += 1;
            let mut items = Vec::new();
            loop {
                match tokens.get(cursor).map(|s| s.as_str()) {
                    Some(")") => return Ok((Sexpr::List(items), cursor + 1)),
                    Some(_) => {
                        let (node, next) = parse_sexpr(tokens, cursor)?;
                        items.push(node);
                        cursor = next;
                    }
                    None => return Err(err("unexpected end of input in list")),
                }
            }
        }
        Some(")") => Err(err("unexpected closing parenthesis")),
        Some(sym) => Ok((Sexpr::Sym(sym.to_string()), cursor + 1)),
        None => Err(err("unexpected end of input")),
    }
}

fn lifted_atom_from(node: &Sexpr) -> Result<LiftedAtom, LearnError> {
    let err = |msg: String| LearnError::ModelParse(msg);
    let Sexpr::List(items) = node else {
        return Err(err(format!("expected an atom list, found {node:?}")));
    };
    let Some(Sexpr::Sym(pred)) = items.first() else {
        return Err(err("atom without predicate".into()));
    };
    let mut args = Vec::new();
    for item in &items[1..] {
        let Sexpr::Sym(name) = item else {
            return Err(err("nested list in atom arguments".into()));
        };
        let var = Variable::parse(name)
            .ok_or_else(|| err(format!("expected a variable X#/Z#, found {name}")))?;
        args.push(var);
    }
    Ok(LiftedAtom::new(pred.clone(), args))
}

fn effect_set_from(node: &Sexpr) -> Result<LiftedEffects, LearnError> {
    let err = |msg: &str| LearnError::ModelParse(msg.to_string());
    let Sexpr::List(items) = node else { return Err(err("expected (and ...)")) };
    match items.first() {
        Some(Sexpr::Sym(s)) if s == "and" => {}
        _ => return Err(err("effect set must start with `and`")),
    }
    let mut effects = LiftedEffects::default();
    for item in &items[1..] {
        if let Sexpr::List(inner) = item {
            if inner.first() == Some(&Sexpr::Sym("not".into())) {
                if inner.len() != 2 {
                    return Err(err("malformed (not ...)"));
                }
                effects.neg.insert(lifted_atom_from(&inner[1])?);
                continue;
            }
        }
        effects.pos.insert(lifted_atom_from(item)?);
    }
    effects.aux_count = count_aux(&effects);
    Ok(effects)
}

fn count_aux(effects: &LiftedEffects) -> usize {
    effects
        .pos
        .iter()
        .chain(effects.neg.iter())
        .flat_map(|a| a.args.iter())
        .filter_map(|v| match v {
            Variable::Aux(i) => Some(*i + 1),
            _ => None,
        })
        .max()
        .unwrap_or(0)
}

fn rule_from_sexpr(node: &Sexpr) -> Result<OperatorRule, LearnError> {
    let err = |msg: &str| LearnError::ModelParse(msg.to_string());
    let Sexpr::List(items) = node else { return Err(err("expected (:action ...)")) };
    if items.first() != Some(&Sexpr::Sym(":action".into())) {
        return Err(err("top-level form must be (:action ...)"));
    }
    let Some(Sexpr::Sym(schema)) = items.get(1) else { return Err(err("missing action name")) };
    let mut controller = String::new();
    let mut arity = 0usize;
    let mut precondition = BTreeSet::new();
    let mut effects: Vec<(LiftedEffects, f64)> = Vec::new();
    let mut i = 2;
    while i < items.len() {
        match &items[i] {
            Sexpr::Sym(key) if key == ":controller" => {
                let Some(Sexpr::Sym(name)) = items.get(i + 1) else {
                    return Err(err("missing controller name"));
                };
                controller = name.clone();
                i += 2;
            }
            Sexpr::Sym(key) if key == ":parameters" => {
                let Some(Sexpr::List(params)) = items.get(i + 1) else {
                    return Err(err("missing parameter list"));
                };
                arity = params.len();
                i += 2;
            }
            Sexpr::Sym(key) if key == ":precondition" => {
                let Some(Sexpr::List(pre)) = items.get(i + 1) else {
                    return Err(err("missing precondition"));
                };
                if pre.first() != Some(&Sexpr::Sym("and".into())) {
                    return Err(err("precondition must be (and ...)"));
                }
                for item in &pre[1..] {
                    precondition.insert(lifted_atom_from(item)?);
                }
                i += 2;
            }
            Sexpr::Sym(key) if key == ":effect" => {
                let Some(list) = items.get(i + 1) else { return Err(err("missing effect")) };
                let Sexpr::List(inner) = list else { return Err(err("malformed effect")) };
                if inner.first() == Some(&Sexpr::Sym("probabilistic".into())) {
                    let mut j = 1;
                    while j < inner.len() {
                        let Sexpr::Sym(p) = &inner[j] else {
                            return Err(err("expected probability"));
                        };
                        let p: f64 = p
                            .parse()
                            .map_err(|_| err("probability is not a number"))?;
                        let set = effect_set_from(
                            inner.get(j + 1).ok_or_else(|| err("dangling probability"))?,
                        )?;
                        effects.push((set, p));
                        j += 2;
                    }
                } else {
                    effects.push((effect_set_from(list)?, 1.0));
                }
                i += 2;
            }
            other => return Err(LearnError::ModelParse(format!("unexpected item {other:?}"))),
        }
    }
    Ok(OperatorRule { schema: schema.clone(), arity, controller, precondition, effects })
}
