//! Transition datasets: collection by uniformly random grounded operators,
//! partitioning by operator schema, grounded effect computation, and a
//! line-oriented text format (`state | operator | next state`) that reloads
//! bit-exactly.

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::envs::{EnvError, Environment};
use crate::relational::{EffectPair, GroundedOperator, ObjectId, SymbolicState};

use super::LearnError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub state: SymbolicState,
    pub op: GroundedOperator,
    pub next: SymbolicState,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TransitionDataset {
    pub domain: String,
    pub seed: u64,
    pub transitions: Vec<Transition>,
}

/// Runs `episodes` trajectories of uniformly random grounded operators, each
/// up to `max_len` attempts. A failed operator leaves the environment in its
/// previous state; the failed transition (state == next) is still recorded.
pub fn collect_dataset(
    env: &mut dyn Environment,
    episodes: usize,
    max_len: usize,
    seed: u64,
) -> Result<TransitionDataset, EnvError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ops = env.grounded_operators();
    let mut transitions = Vec::new();
    for _ in 0..episodes {
        env.reset();
        for _ in 0..max_len {
            let op = ops[rng.gen_range(0..ops.len())].clone();
            let state = env.state();
            env.execute(&op)?;
            let next = env.state();
            transitions.push(Transition { state, op, next });
        }
    }
    Ok(TransitionDataset { domain: env.spec().name.clone(), seed, transitions })
}

/// Disjoint, exhaustive, order-preserving partition by operator schema;
/// values are indices into `dataset.transitions`.
pub fn partition_by_operator(dataset: &TransitionDataset) -> BTreeMap<String, Vec<usize>> {
    let mut map: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, t) in dataset.transitions.iter().enumerate() {
        map.entry(t.op.schema.clone()).or_default().push(i);
    }
    map
}

/// Grounded effects of one transition: (next - state, state - next).
pub fn compute_effects(t: &Transition) -> EffectPair {
    t.state.delta(&t.next)
}

impl TransitionDataset {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = format!("# domain: {}\n# seed: {}\n", self.domain, self.seed);
        for t in &self.transitions {
            out.push_str(&format!("{} | {} | {}\n", t.state, t.op, t.next));
        }
        out
    }

    pub fn parse(text: &str) -> Result<TransitionDataset, LearnError> {
        let mut domain = String::new();
        let mut seed = 0u64;
        let mut transitions = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix("domain:") {
                    domain = v.trim().to_string();
                } else if let Some(v) = rest.strip_prefix("seed:") {
                    seed = v.trim().parse().unwrap_or(0);
                }
                continue;
            }
            let parts: Vec<&str> = line.split('|').collect();
            if parts.len() != 3 {
                return Err(LearnError::DatasetParse {
                    line: lineno + 1,
                    msg: "expected `state | operator | next state`".into(),
                });
            }
            let state = SymbolicState::parse(parts[0]).map_err(|e| LearnError::DatasetParse {
                line: lineno + 1,
                msg: e.to_string(),
            })?;
            let op = GroundedOperator::parse(parts[1]).map_err(|e| LearnError::DatasetParse {
                line: lineno + 1,
                msg: e.to_string(),
            })?;
            let next = SymbolicState::parse(parts[2]).map_err(|e| LearnError::DatasetParse {
                line: lineno + 1,
                msg: e.to_string(),
            })?;
            transitions.push(Transition { state, op, next });
        }
        Ok(TransitionDataset { domain, seed, transitions })
    }

    /// Reattaches declared sorts to the objects of every atom and operator,
    /// by name, from a domain object table.
    pub fn with_sorts(mut self, objects: &[ObjectId]) -> TransitionDataset {
        let table: BTreeMap<&str, &ObjectId> =
            objects.iter().map(|o| (o.name.as_str(), o)).collect();
        let fix = |state: &SymbolicState| -> SymbolicState {
            state
                .iter()
                .map(|a| {
                    let args = a
                        .args
                        .iter()
                        .map(|o| table.get(o.name.as_str()).map(|t| (*t).clone()).unwrap_or_else(|| o.clone()))
                        .collect();
                    crate::relational::Atom::new(a.pred.clone(), args)
                })
                .collect()
        };
        for t in &mut self.transitions {
            t.state = fix(&t.state);
            t.next = fix(&t.next);
            t.op.args = t
                .op
                .args
                .iter()
                .map(|o| table.get(o.name.as_str()).map(|x| (*x).clone()).unwrap_or_else(|| o.clone()))
                .collect();
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_env, BlocksEnv};

    #[test]
    fn zero_episodes_yields_empty_dataset() {
        let mut env = BlocksEnv::new(3);
        let d = collect_dataset(&mut env, 0, 100, 5).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn blocks_dataset_contains_failures() {
        let mut env = make_env("blocks-4").unwrap();
        let d = collect_dataset(&mut env, 20, 50, 1).unwrap();
        assert_eq!(d.len(), 20 * 50);
        let failed = d.transitions.iter().filter(|t| t.state == t.next).count();
        assert!(failed > 0, "random walks must include failed operators");
        let failed_picks = d
            .transitions
            .iter()
            .any(|t| t.op.schema == "Pick" && t.state == t.next);
        assert!(failed_picks);
    }

    #[test]
    fn partition_is_disjoint_and_exhaustive() {
        let mut env = make_env("blocks-4").unwrap();
        let d = collect_dataset(&mut env, 5, 40, 2).unwrap();
        let parts = partition_by_operator(&d);
        assert_eq!(
            parts.keys().cloned().collect::<Vec<_>>(),
            vec!["Pick".to_string(), "Place".into(), "PutOnTable".into()]
        );
        let total: usize = parts.values().map(|v| v.len()).sum();
        assert_eq!(total, d.len());
    }

    #[test]
    fn effects_of_pick_from_table() {
        let t = Transition {
            state: SymbolicState::parse("GripperEmpty(), TopEmpty(b1), OnTable(b1)").unwrap(),
            op: GroundedOperator::parse("Pick(b1)").unwrap(),
            next: SymbolicState::parse("Holding(b1), TopEmpty(b1), OnTable(b1)").unwrap(),
        };
        let e = compute_effects(&t);
        assert_eq!(e.pos, SymbolicState::parse("Holding(b1)").unwrap().iter().cloned().collect());
        assert_eq!(e.neg, SymbolicState::parse("GripperEmpty()").unwrap().iter().cloned().collect());
    }

    #[test]
    fn failed_transition_has_empty_effects() {
        let s = SymbolicState::parse("GripperEmpty()").unwrap();
        let t = Transition {
            state: s.clone(),
            op: GroundedOperator::parse("Pick(b1)").unwrap(),
            next: s,
        };
        assert!(compute_effects(&t).is_empty());
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let mut env = make_env("blocks-3").unwrap();
        let d = collect_dataset(&mut env, 3, 30, 9).unwrap();
        let text = d.render();
        let back = TransitionDataset::parse(&text).unwrap();
        assert_eq!(back.render(), text);
        assert_eq!(back.transitions.len(), d.transitions.len());
    }

    #[test]
    fn room_dataset_covers_all_rule_variants() {
        let mut env = make_env("room-4x4").unwrap();
        let d = collect_dataset(&mut env, 50, 100, 7).unwrap();
        let mut moves = 0;
        let mut pickups = 0;
        let mut unlocks = 0;
        for t in &d.transitions {
            let e = compute_effects(t);
            if e.is_empty() {
                continue;
            }
            if e.pos.iter().any(|a| a.pred == "hasKey") {
                pickups += 1;
            } else if e.pos.iter().any(|a| a.pred == "Connect") {
                unlocks += 1;
            } else {
                moves += 1;
            }
        }
        assert!(moves > 0 && pickups > 0 && unlocks > 0, "moves={moves} pickups={pickups} unlocks={unlocks}");
    }
}
