//! Boolean feature spaces for precondition learning: all lifted atoms over
//! the operator's argument variables X1..Xk plus up to A auxiliary variables
//! (default 1), with distinct variables per atom and sort-consistent
//! positions.
//!
//! Grounding the auxiliary variables ties features together: a training
//! sample is a matrix with one row per injective auxiliary binding, and the
//! network pools over rows, so a conjunction like Lock(X1,X2,Z1) & hasKey(Z1)
//! demands a single shared witness. The per-feature existential view
//! (`featurize`) is the row-wise maximum.

use std::collections::BTreeSet;

use crate::envs::EnvironmentSpec;
use crate::relational::{Atom, LiftedAtom, ObjectId, SymbolicState, Variable};

use super::LearnError;

pub const DEFAULT_AUX_VARS: usize = 1;
pub const DEFAULT_FEATURE_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSpace {
    pub schema: String,
    pub arg_sorts: Vec<Option<String>>,
    pub aux_count: usize,
    pub descriptors: Vec<LiftedAtom>,
}

impl FeatureSpace {
    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }
}

/// Enumerates the feature space for one operator schema. Atoms with repeated
/// variables are excluded; positions with declared sorts only accept
/// argument variables of that sort (auxiliary variables are unsorted and
/// accept any position).
pub fn build_feature_space(
    spec: &EnvironmentSpec,
    schema: &str,
    aux_count: usize,
    cap: usize,
) -> Result<FeatureSpace, LearnError> {
    let op_schema = spec
        .schemas
        .iter()
        .find(|s| s.name == schema)
        .ok_or_else(|| LearnError::UnknownSchema(schema.to_string()))?;
    let arg_sorts: Vec<Option<String>> =
        op_schema.arg_sorts.iter().map(|s| Some(s.clone())).collect();
    let vars: Vec<(Variable, Option<String>)> = (0..arg_sorts.len())
        .map(|i| (Variable::Arg(i), arg_sorts[i].clone()))
        .chain((0..aux_count).map(|j| (Variable::Aux(j), None)))
        .collect();

    let mut descriptors = Vec::new();
    for pred in &spec.predicates {
        let mut args: Vec<(Variable, Option<String>)> = Vec::new();
        enumerate_args(pred.arity, &pred.arg_sorts, &vars, &mut args, &mut |chosen| {
            descriptors
                .push(LiftedAtom::new(pred.name.clone(), chosen.iter().map(|(v, _)| *v).collect()));
        });
        if descriptors.len() > cap {
            return Err(LearnError::FeatureSpaceOverflow { count: descriptors.len(), cap });
        }
    }
    descriptors.sort();
    Ok(FeatureSpace { schema: schema.to_string(), arg_sorts, aux_count, descriptors })
}

fn enumerate_args(
    arity: usize,
    pred_sorts: &Option<Vec<String>>,
    vars: &[(Variable, Option<String>)],
    chosen: &mut Vec<(Variable, Option<String>)>,
    emit: &mut impl FnMut(&[(Variable, Option<String>)]),
) {
    if chosen.len() == arity {
        emit(chosen);
        return;
    }
    let position = chosen.len();
    for (v, sort) in vars {
        if chosen.iter().any(|(u, _)| u == v) {
            continue;
        }
        if let (Some(ps), Some(vs)) = (pred_sorts.as_ref().map(|s| &s[position]), sort.as_ref()) {
            if ps != vs {
                continue;
            }
        }
        chosen.push((*v, sort.clone()));
        enumerate_args(arity, pred_sorts, vars, chosen, emit);
        chosen.pop();
    }
}

/// All injective auxiliary bindings over the domain objects plus any object
/// mentioned by the state, minus the operator arguments, in sorted object
/// order. With no auxiliary variables this is the single empty binding.
pub fn aux_bindings(
    space: &FeatureSpace,
    op_args: &[ObjectId],
    objects: &[ObjectId],
    state: &SymbolicState,
) -> Vec<Vec<ObjectId>> {
    if space.aux_count == 0 {
        return vec![Vec::new()];
    }
    let mut pool: Vec<ObjectId> = objects
        .iter()
        .cloned()
        .chain(state.iter().flat_map(|a| a.args.iter().cloned()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|o| !op_args.contains(o))
        .collect();
    pool.sort();
    let mut out = Vec::new();
    let mut current = Vec::new();
    fn rec(pool: &[ObjectId], k: usize, current: &mut Vec<ObjectId>, out: &mut Vec<Vec<ObjectId>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for o in pool {
            if current.contains(o) {
                continue;
            }
            current.push(o.clone());
            rec(pool, k, current, out);
            current.pop();
        }
    }
    rec(&pool, space.aux_count, &mut current, &mut out);
    if out.is_empty() {
        // No objects left for the auxiliary variables: one all-false row for
        // aux-dependent features.
        out.push(Vec::new());
    }
    out
}

fn ground_descriptor(
    descriptor: &LiftedAtom,
    op_args: &[ObjectId],
    aux: &[ObjectId],
) -> Option<Atom> {
    let mut args = Vec::with_capacity(descriptor.args.len());
    for v in &descriptor.args {
        match v {
            Variable::Arg(i) => args.push(op_args.get(*i)?.clone()),
            Variable::Aux(j) => args.push(aux.get(*j)?.clone()),
        }
    }
    Some(Atom::new(descriptor.pred.clone(), args))
}

/// One boolean row per auxiliary binding; `rows[g][j]` is the truth of
/// descriptor j under binding g. Duplicate rows are collapsed (they carry no
/// extra information for existential pooling).
pub fn featurize_groundings(
    state: &SymbolicState,
    op_args: &[ObjectId],
    space: &FeatureSpace,
    objects: &[ObjectId],
) -> Vec<Vec<bool>> {
    let mut rows: Vec<Vec<bool>> = Vec::new();
    let mut seen: BTreeSet<Vec<bool>> = BTreeSet::new();
    for binding in aux_bindings(space, op_args, objects, state) {
        let row: Vec<bool> = space
            .descriptors
            .iter()
            .map(|d| {
                ground_descriptor(d, op_args, &binding)
                    .map(|atom| state.contains(&atom))
                    .unwrap_or(false)
            })
            .collect();
        if seen.insert(row.clone()) {
            rows.push(row);
        }
    }
    rows
}

/// Per-feature existential view: feature j is true iff some auxiliary
/// grounding makes its atom hold in the state — the row-wise maximum of
/// [`featurize_groundings`].
pub fn featurize(
    state: &SymbolicState,
    op_args: &[ObjectId],
    space: &FeatureSpace,
    objects: &[ObjectId],
) -> Vec<bool> {
    let rows = featurize_groundings(state, op_args, space, objects);
    let mut out = vec![false; space.len()];
    for row in rows {
        for (j, v) in row.iter().enumerate() {
            out[j] = out[j] || *v;
        }
    }
    out
}

/// Joint satisfaction of a conjunction of features: some single auxiliary
/// binding must make every selected feature true.
pub fn conjunction_holds(rows: &[Vec<bool>], selected: &[usize]) -> bool {
    rows.iter().any(|row| selected.iter().all(|j| row[*j]))
}
