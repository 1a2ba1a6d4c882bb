//! Lifted-effect clustering. Transitions of one schema land in the same
//! cluster when their grounded effects unify (equivalently: their canonical
//! liftings coincide). A subsumption pass then reassigns transitions whose
//! delta is a subset instance of a larger cluster's effects — e.g. a move
//! into an already-visited room, whose delta lacks the (already true)
//! Visited atom — verified member-wise: every deleted atom must be present
//! and applying the lifted effects must reproduce the observed next state
//! exactly. Cluster 0 holds the remaining none-effect transitions.

use std::collections::BTreeMap;

use crate::relational::{
    lift_effects, Atom, LiftedAtom, LiftedEffects, ObjectId, Substitution,
    SymbolicState, Variable,
};

use super::dataset::{compute_effects, TransitionDataset};

#[derive(Debug, Clone)]
pub struct EffectCluster {
    pub schema: String,
    /// Empty for the none-effect cluster.
    pub effects: LiftedEffects,
    /// Indices into the source dataset.
    pub members: Vec<usize>,
    /// m = 0 is reserved for the none effect.
    pub index: usize,
}

impl EffectCluster {
    pub fn is_none_effect(&self) -> bool {
        self.index == 0
    }
}

/// Clusters the transitions of one schema (`indices` into `dataset`).
/// Returns clusters with the none-effect cluster first (index 0), then
/// non-empty clusters numbered 1.. in canonical order of their effects.
pub fn cluster_effects(
    dataset: &TransitionDataset,
    schema: &str,
    indices: &[usize],
) -> Vec<EffectCluster> {
    // Pass 1: exact grouping by canonical lifted effects.
    let mut groups: BTreeMap<String, (LiftedEffects, Vec<usize>)> = BTreeMap::new();
    let mut none_members: Vec<usize> = Vec::new();
    for &i in indices {
        let t = &dataset.transitions[i];
        let delta = compute_effects(t);
        if delta.is_empty() {
            none_members.push(i);
            continue;
        }
        let lifting = lift_effects(&delta, &t.op.args);
        let key = lifting.effects.to_string();
        groups.entry(key).or_insert_with(|| (lifting.effects.clone(), Vec::new())).1.push(i);
    }

    // Pass 2: move each transition into the largest cluster whose effects
    // explain it exactly. Subset-delta groups dissolve into their superset;
    // consistent none-effect transitions (all adds already present, no
    // deletes) join the cluster too.
    let reps: Vec<LiftedEffects> = groups.values().map(|(e, _)| e.clone()).collect();
    let mut final_members: Vec<Vec<usize>> = vec![Vec::new(); reps.len()];
    let mut final_none: Vec<usize> = Vec::new();
    let all_members = groups
        .values()
        .flat_map(|(_, m)| m.iter().copied())
        .chain(none_members.iter().copied());
    for i in all_members {
        let t = &dataset.transitions[i];
        let best = reps
            .iter()
            .enumerate()
            .filter(|(_, eff)| explains(eff, &t.op.args, &t.state, &t.next))
            .max_by_key(|(k, eff)| (eff.len(), std::cmp::Reverse(*k)));
        match best {
            Some((k, _)) => final_members[k].push(i),
            None => final_none.push(i),
        }
    }

    let mut clusters = vec![EffectCluster {
        schema: schema.to_string(),
        effects: LiftedEffects::default(),
        members: final_none,
        index: 0,
    }];
    let mut m = 1;
    for (k, eff) in reps.into_iter().enumerate() {
        if final_members[k].is_empty() {
            continue;
        }
        clusters.push(EffectCluster {
            schema: schema.to_string(),
            effects: eff,
            members: std::mem::take(&mut final_members[k]),
            index: m,
        });
        m += 1;
    }
    clusters
}

/// True when some injective grounding of `effects` (arguments fixed
/// positionally) has all deleted atoms present in `state` and
/// `(state ∪ adds) \ dels == next`.
pub fn explains(
    effects: &LiftedEffects,
    op_args: &[ObjectId],
    state: &SymbolicState,
    next: &SymbolicState,
) -> bool {
    find_grounding(effects, op_args, state, next).is_some()
}

/// The witness substitution for [`explains`], when one exists. Auxiliary
/// variables are bound injectively to objects distinct from the operator
/// arguments, tried in sorted object order.
pub fn find_grounding(
    effects: &LiftedEffects,
    op_args: &[ObjectId],
    state: &SymbolicState,
    next: &SymbolicState,
) -> Option<Substitution> {
    let mut sub = Substitution::default();
    for (i, obj) in op_args.iter().enumerate() {
        sub.bind(Variable::Arg(i), obj.clone());
    }
    let mut aux: Vec<Variable> = Vec::new();
    for atom in effects.pos.iter().chain(effects.neg.iter()) {
        for v in &atom.args {
            if matches!(v, Variable::Aux(_)) && !aux.contains(v) {
                aux.push(*v);
            }
        }
    }
    // Candidate objects for auxiliary variables: anything mentioned in the
    // current state, minus the operator arguments.
    let mut candidates: Vec<ObjectId> = state
        .iter()
        .flat_map(|a| a.args.iter().cloned())
        .filter(|o| !op_args.contains(o))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    candidates.sort();
    search_grounding(effects, &aux, 0, &candidates, &mut sub, state, next)
}

fn search_grounding(
    effects: &LiftedEffects,
    aux: &[Variable],
    idx: usize,
    candidates: &[ObjectId],
    sub: &mut Substitution,
    state: &SymbolicState,
    next: &SymbolicState,
) -> Option<Substitution> {
    if idx == aux.len() {
        return verify(effects, sub, state, next).then(|| sub.clone());
    }
    for cand in candidates {
        if sub.binding.values().any(|o| o == cand) {
            continue;
        }
        sub.bind(aux[idx], cand.clone());
        if let Some(found) = search_grounding(effects, aux, idx + 1, candidates, sub, state, next) {
            return Some(found);
        }
        sub.binding.remove(&aux[idx]);
    }
    None
}

fn ground_all(atoms: &std::collections::BTreeSet<LiftedAtom>, sub: &Substitution) -> Option<Vec<Atom>> {
    let mut out = Vec::with_capacity(atoms.len());
    for la in atoms {
        let mut args = Vec::with_capacity(la.args.len());
        for v in &la.args {
            args.push(sub.get(*v)?.clone());
        }
        out.push(Atom::new(la.pred.clone(), args));
    }
    Some(out)
}

fn verify(
    effects: &LiftedEffects,
    sub: &Substitution,
    state: &SymbolicState,
    next: &SymbolicState,
) -> bool {
    let Some(dels) = ground_all(&effects.neg, sub) else { return false };
    if !dels.iter().all(|d| state.contains(d)) {
        return false;
    }
    let Some(adds) = ground_all(&effects.pos, sub) else { return false };
    let predicted = state.apply(&adds.into_iter().collect(), &dels.into_iter().collect());
    predicted == *next
}

/// True when `sub`'s positive and negative lifted atoms are both contained
/// in `sup`'s, under some injective renaming of `sub`'s auxiliary variables
/// into `sup`'s (argument variables fixed). Used to exclude more-specific
/// sibling clusters from a cluster's negative examples.
pub fn effects_superset(sup: &LiftedEffects, sub: &LiftedEffects) -> bool {
    if sub.pos.len() > sup.pos.len() || sub.neg.len() > sup.neg.len() {
        return false;
    }
    let sub_aux: Vec<Variable> = (0..sub.aux_count).map(Variable::Aux).collect();
    let sup_aux: Vec<Variable> = (0..sup.aux_count).map(Variable::Aux).collect();
    map_aux(&sub_aux, 0, &sup_aux, &mut BTreeMap::new(), sub, sup)
}

fn map_aux(
    sub_aux: &[Variable],
    idx: usize,
    sup_aux: &[Variable],
    mapping: &mut BTreeMap<Variable, Variable>,
    sub: &LiftedEffects,
    sup: &LiftedEffects,
) -> bool {
    if idx == sub_aux.len() {
        let rename = |atoms: &std::collections::BTreeSet<LiftedAtom>| {
            atoms
                .iter()
                .map(|a| {
                    LiftedAtom::new(
                        a.pred.clone(),
                        a.args
                            .iter()
                            .map(|v| *mapping.get(v).unwrap_or(v))
                            .collect(),
                    )
                })
                .collect::<std::collections::BTreeSet<_>>()
        };
        return rename(&sub.pos).is_subset(&sup.pos) && rename(&sub.neg).is_subset(&sup.neg);
    }
    for target in sup_aux {
        if mapping.values().any(|v| v == target) {
            continue;
        }
        mapping.insert(sub_aux[idx], *target);
        if map_aux(sub_aux, idx + 1, sup_aux, mapping, sub, sup) {
            return true;
        }
        mapping.remove(&sub_aux[idx]);
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_env, Environment};
    use crate::learn::dataset::{collect_dataset, partition_by_operator};
    use crate::relational::{unify_effect_sets, GroundedOperator};

    fn collect(env_name: &str, episodes: usize, seed: u64) -> TransitionDataset {
        let mut env = make_env(env_name).unwrap();
        collect_dataset(&mut env, episodes, 100, seed).unwrap()
    }

    #[test]
    fn blocks_place_has_two_nonempty_clusters() {
        let d = collect("blocks-4", 60, 1);
        let parts = partition_by_operator(&d);
        let clusters = cluster_effects(&d, "Place", &parts["Place"]);
        let nonempty: Vec<&EffectCluster> =
            clusters.iter().filter(|c| !c.is_none_effect()).collect();
        assert_eq!(nonempty.len(), 2, "{:?}", nonempty.iter().map(|c| c.effects.to_string()).collect::<Vec<_>>());
        // One variant removes On(X1,Z1), the other removes OnTable(X1).
        let texts: Vec<String> = nonempty.iter().map(|c| c.effects.to_string()).collect();
        assert!(texts.iter().any(|t| t.contains("!On(X1,Z1)")));
        assert!(texts.iter().any(|t| t.contains("!OnTable(X1)")));
    }

    #[test]
    fn failed_only_dataset_gives_single_none_cluster() {
        let mut env = make_env("blocks-4").unwrap();
        // Pick(b2) always fails at the initial state (covered by b1).
        let op = GroundedOperator::parse("Pick(b2)").unwrap();
        let mut transitions = Vec::new();
        for _ in 0..5 {
            env.reset();
            let s = env.state();
            env.execute(&op).unwrap();
            transitions.push(super::super::dataset::Transition {
                state: s.clone(),
                op: op.clone(),
                next: env.state(),
            });
        }
        let d = TransitionDataset { domain: "t".into(), seed: 0, transitions };
        let clusters = cluster_effects(&d, "Pick", &[0, 1, 2, 3, 4]);
        assert_eq!(clusters.len(), 1);
        assert!(clusters[0].is_none_effect());
        assert_eq!(clusters[0].members.len(), 5);
    }

    #[test]
    fn room_has_exactly_three_nonempty_clusters() {
        let d = collect("room-4x4", 50, 7);
        let parts = partition_by_operator(&d);
        let clusters = cluster_effects(&d, "FromTo", &parts["FromTo"]);
        let nonempty: Vec<String> = clusters
            .iter()
            .filter(|c| !c.is_none_effect())
            .map(|c| c.effects.to_string())
            .collect();
        assert_eq!(nonempty.len(), 3, "{nonempty:?}");
        assert!(nonempty.iter().any(|t| t.contains("hasKey")));
        assert!(nonempty.iter().any(|t| t.contains("Connect")));
    }

    #[test]
    fn reacher_revisits_join_their_cluster() {
        let d = collect("reacher-5", 30, 3);
        let parts = partition_by_operator(&d);
        let clusters = cluster_effects(&d, "GoToRed", &parts["GoToRed"]);
        // GoToRed never fails; revisit transitions are explained by the
        // +RedVisited cluster, so the none cluster is empty.
        let none = &clusters[0];
        assert!(none.members.is_empty(), "none-effect cluster should be empty for GoToRed");
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[1].members.len(), parts["GoToRed"].len());
    }

    #[test]
    fn cluster_members_unify_pairwise_or_are_subset_instances() {
        let d = collect("room-4x4", 20, 11);
        let parts = partition_by_operator(&d);
        for clusters in parts.iter().map(|(s, idx)| cluster_effects(&d, s, idx)) {
            for c in clusters.iter().filter(|c| !c.is_none_effect()) {
                for &i in &c.members {
                    let t = &d.transitions[i];
                    // Every member is explained by the cluster effects.
                    assert!(explains(&c.effects, &t.op.args, &t.state, &t.next));
                }
                // Members with full-size deltas unify pairwise.
                let full: Vec<usize> = c
                    .members
                    .iter()
                    .copied()
                    .filter(|&i| {
                        let t = &d.transitions[i];
                        let e = compute_effects(t);
                        e.pos.len() + e.neg.len() == c.effects.len()
                    })
                    .collect();
                for w in full.windows(2) {
                    let e1 = compute_effects(&d.transitions[w[0]]);
                    let e2 = compute_effects(&d.transitions[w[1]]);
                    assert!(unify_effect_sets(&e1, &e2).is_some());
                }
            }
        }
    }

    #[test]
    fn superset_check_respects_aux_renaming() {
        let full = lift_effects(
            &EffectPair::new(
                [
                    Atom::parse("At(r2)").unwrap(),
                    Atom::parse("Visited(r2)").unwrap(),
                    Atom::parse("hasKey(red)").unwrap(),
                ],
                [Atom::parse("At(r1)").unwrap(), Atom::parse("RoomHasKey(r1,red)").unwrap()],
            ),
            &[ObjectId::new("r1"), ObjectId::new("r2")],
        )
        .effects;
        let plain = lift_effects(
            &EffectPair::new(
                [Atom::parse("At(r2)").unwrap(), Atom::parse("Visited(r2)").unwrap()],
                [Atom::parse("At(r1)").unwrap()],
            ),
            &[ObjectId::new("r1"), ObjectId::new("r2")],
        )
        .effects;
        assert!(effects_superset(&full, &plain));
        assert!(!effects_superset(&plain, &full));
    }

    use crate::relational::EffectPair;
}
