//! Learning the symbolic transition model: collect transitions, partition by
//! operator, cluster lifted effects, learn each cluster's precondition with
//! a differentiable logic network, discretize, and assemble operator rules.

pub mod cluster;
pub mod dataset;
pub mod features;
pub mod logic;
pub mod model;

pub use cluster::{cluster_effects, effects_superset, EffectCluster};
pub use dataset::{collect_dataset, compute_effects, partition_by_operator, Transition, TransitionDataset};
pub use features::{build_feature_space, conjunction_holds, featurize, featurize_groundings, FeatureSpace};
pub use logic::{net_accuracy, train_net, LogicNet, NetConfig, Sample};
pub use model::{dump_model, load_model, match_precondition, OperatorRule, TransitionModel};

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::envs::{EnvError, Environment, EnvironmentSpec};
use crate::relational::LiftedAtom;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("feature space holds {count} descriptors, more than the cap {cap}")]
    FeatureSpaceOverflow { count: usize, cap: usize },
    #[error("schema {0} is not declared by the environment")]
    UnknownSchema(String),
    #[error("dataset parse error at line {line}: {msg}")]
    DatasetParse { line: usize, msg: String },
    #[error("model parse error: {0}")]
    ModelParse(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone)]
pub struct LearnOptions {
    pub aux_vars: usize,
    pub feature_cap: usize,
    pub n_rules: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Hyperparameter configurations tried before giving up on 100%
    /// training accuracy.
    pub max_attempts: usize,
}

impl Default for LearnOptions {
    fn default() -> Self {
        LearnOptions {
            aux_vars: features::DEFAULT_AUX_VARS,
            feature_cap: features::DEFAULT_FEATURE_CAP,
            n_rules: 64,
            epochs: 100,
            batch_size: 32,
            seed: 0,
            max_attempts: 8,
        }
    }
}

/// Per-cluster training outcome. `separable` is false when no sweep
/// configuration reached 100% training accuracy with a faithful discretized
/// rule — reported, not fatal.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub schema: String,
    pub cluster_index: usize,
    pub effects_text: String,
    pub rule_text: String,
    pub net_accuracy: f64,
    pub rule_accuracy: f64,
    pub separable: bool,
    pub attempts: usize,
    pub positives: usize,
    pub negatives: usize,
}

impl TrainReport {
    pub fn line(&self) -> String {
        format!(
            "{} cluster {} [{}]: rule {{{}}} net_acc {:.3} rule_acc {:.3} {} ({} pos / {} neg, {} attempt(s))",
            self.schema,
            self.cluster_index,
            self.effects_text,
            self.rule_text,
            self.net_accuracy,
            self.rule_accuracy,
            if self.separable { "separable" } else { "NOT SEPARABLE" },
            self.positives,
            self.negatives,
            self.attempts,
        )
    }
}

#[derive(Debug, Clone)]
pub struct LearnedModel {
    pub model: TransitionModel,
    pub reports: Vec<TrainReport>,
}

impl LearnedModel {
    pub fn all_separable(&self) -> bool {
        self.reports.iter().all(|r| r.separable)
    }
}

/// Discretized conjunction extracted from a trained network.
#[derive(Debug, Clone)]
pub struct ExtractedRule {
    pub features: Vec<usize>,
    pub accuracy: f64,
    /// Whether the boolean rule reproduces the network's classification on
    /// every training sample.
    pub fidelity: bool,
}

fn rule_label_accuracy(features: &[usize], samples: &[Sample]) -> f64 {
    if samples.is_empty() {
        return 1.0;
    }
    let hits = samples
        .iter()
        .filter(|s| conjunction_holds(&s.rows, features) == s.label)
        .count();
    hits as f64 / samples.len() as f64
}

/// Picks the disjunct whose discretized conjunction classifies the training
/// set best (largest disjunction weight among ties, then smallest
/// conjunction), greedily prunes redundant features, and checks that the
/// boolean rule reproduces the network's own classification.
pub fn extract_rule(net: &LogicNet, samples: &[Sample]) -> ExtractedRule {
    let mut best: Option<(f64, f64, Vec<usize>)> = None; // (accuracy, w_disj, conj)
    for i in 0..net.n_rules {
        let conj = net.discretized_rule(i);
        let acc = rule_label_accuracy(&conj, samples);
        let w = net.w_disj(i);
        let better = match &best {
            None => true,
            Some((bacc, bw, bconj)) => {
                acc > *bacc
                    || (acc == *bacc && w > *bw)
                    || (acc == *bacc && w == *bw && conj.len() < bconj.len())
                    || (acc == *bacc && w == *bw && conj.len() == bconj.len() && conj < *bconj)
            }
        };
        if better {
            best = Some((acc, w, conj));
        }
    }
    let (_, _, mut conj) = best.expect("network has at least one rule node");

    // Greedy pruning: drop features whose removal does not hurt accuracy.
    let mut acc = rule_label_accuracy(&conj, samples);
    loop {
        let mut pruned = false;
        for k in 0..conj.len() {
            let mut smaller = conj.clone();
            smaller.remove(k);
            let a = rule_label_accuracy(&smaller, samples);
            if a >= acc {
                conj = smaller;
                acc = a;
                pruned = true;
                break;
            }
        }
        if !pruned {
            break;
        }
    }

    let fidelity = samples
        .iter()
        .all(|s| conjunction_holds(&s.rows, &conj) == net.classify(&s.rows));
    ExtractedRule { features: conj, accuracy: acc, fidelity }
}

/// Trains the precondition classifier for one cluster: positives against
/// negatives, sweeping hyperparameter configurations until the network hits
/// 100% training accuracy and its discretized rule is faithful.
pub fn train_precondition(
    space: &FeatureSpace,
    samples: &[Sample],
    opts: &LearnOptions,
) -> (LogicNet, ExtractedRule, usize) {
    let mut configs: Vec<NetConfig> = Vec::new();
    configs.push(NetConfig {
        n_rules: opts.n_rules,
        epochs: opts.epochs,
        batch_size: opts.batch_size,
        ..NetConfig::default()
    });
    let mut grid: Vec<(f64, f64)> = Vec::new();
    for lr in logic::LEARNING_RATE_GRID {
        for l2 in logic::L2_GRID {
            grid.push((lr, l2));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    grid.shuffle(&mut rng);
    for (lr, l2) in grid {
        configs.push(NetConfig {
            n_rules: opts.n_rules,
            epochs: opts.epochs,
            batch_size: opts.batch_size,
            learning_rate: lr,
            l2,
            ..NetConfig::default()
        });
    }
    for n_rules in logic::N_RULES_GRID.iter().skip(1) {
        configs.push(NetConfig {
            n_rules: *n_rules,
            epochs: opts.epochs,
            batch_size: opts.batch_size,
            ..NetConfig::default()
        });
    }

    let mut fallback: Option<(LogicNet, ExtractedRule)> = None;
    for (attempt, mut cfg) in configs.into_iter().take(opts.max_attempts.max(1)).enumerate() {
        cfg.seed = opts.seed.wrapping_add(attempt as u64);
        let net = train_net(space, samples, cfg);
        let acc = net_accuracy(&net, samples);
        let extracted = extract_rule(&net, samples);
        if acc == 1.0 && extracted.accuracy == 1.0 && extracted.fidelity {
            return (net, extracted, attempt + 1);
        }
        match &fallback {
            Some((_, best)) if best.accuracy >= extracted.accuracy => {}
            _ => fallback = Some((net, extracted)),
        }
    }
    let (net, extracted) = fallback.expect("at least one attempt");
    (net, extracted, opts.max_attempts.max(1))
}

/// Merges same-schema clusters whose extracted preconditions are identical
/// into one rule whose effect distribution is the empirical frequency of
/// each lifted effect set among member transitions.
pub fn build_model(
    spec: &EnvironmentSpec,
    learned: Vec<(EffectCluster, std::collections::BTreeSet<LiftedAtom>)>,
) -> TransitionModel {
    let mut grouped: BTreeMap<(String, String), (std::collections::BTreeSet<LiftedAtom>, Vec<(EffectCluster, usize)>)> =
        BTreeMap::new();
    for (cluster, precondition) in learned {
        let key = (
            cluster.schema.clone(),
            precondition.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(","),
        );
        let members = cluster.members.len();
        grouped
            .entry(key)
            .or_insert_with(|| (precondition.clone(), Vec::new()))
            .1
            .push((cluster, members));
    }
    let mut rules = Vec::new();
    for ((schema, _), (precondition, clusters)) in grouped {
        let total: usize = clusters.iter().map(|(_, n)| n).sum();
        if total == 0 {
            continue;
        }
        let op_schema = spec.schemas.iter().find(|s| s.name == schema);
        let effects: Vec<_> = clusters
            .into_iter()
            .map(|(c, n)| (c.effects, n as f64 / total as f64))
            .collect();
        rules.push(OperatorRule {
            schema: schema.clone(),
            arity: op_schema.map(|s| s.arg_sorts.len()).unwrap_or(0),
            controller: op_schema.map(|s| s.controller.clone()).unwrap_or_default(),
            precondition,
            effects,
        });
    }
    let mut model = TransitionModel { rules };
    model.canonicalize();
    debug_assert!(model.rules.iter().all(|r| r.effects_disjoint()));
    model
}

/// The full pipeline over a pre-collected dataset.
pub fn learn_model_from_dataset(
    spec: &EnvironmentSpec,
    dataset: &TransitionDataset,
    opts: &LearnOptions,
) -> Result<LearnedModel, LearnError> {
    let parts = partition_by_operator(dataset);
    let mut learned: Vec<(EffectCluster, std::collections::BTreeSet<LiftedAtom>)> = Vec::new();
    let mut reports = Vec::new();
    for (schema, indices) in &parts {
        let space = build_feature_space(spec, schema, opts.aux_vars, opts.feature_cap)?;
        let clusters = cluster_effects(dataset, schema, indices);
        // Featurize each transition of this schema once.
        let mut rows_of: BTreeMap<usize, Vec<Vec<bool>>> = BTreeMap::new();
        for c in &clusters {
            for &i in &c.members {
                rows_of.entry(i).or_insert_with(|| {
                    let t = &dataset.transitions[i];
                    featurize_groundings(&t.state, &t.op.args, &space, &spec.objects)
                });
            }
        }
        let none_members: Vec<usize> = clusters
            .iter()
            .find(|c| c.is_none_effect())
            .map(|c| c.members.clone())
            .unwrap_or_default();

        for c in clusters.iter().filter(|c| !c.is_none_effect()) {
            // Negatives: the none-effect cluster plus sibling clusters whose
            // effects are not a superset of this one (a superset sibling is
            // a more specific behavior; its states still satisfy this
            // cluster's precondition under most-specific-rule prediction).
            let mut negative_indices: Vec<usize> = none_members.clone();
            for sib in clusters.iter().filter(|s| !s.is_none_effect() && s.index != c.index) {
                if !effects_superset(&sib.effects, &c.effects) {
                    negative_indices.extend(sib.members.iter().copied());
                }
            }

            let mut samples: Vec<Sample> = Vec::new();
            let mut seen: BTreeMap<Vec<Vec<bool>>, bool> = BTreeMap::new();
            let mut conflict = false;
            for (&i, label) in c
                .members
                .iter()
                .map(|i| (i, true))
                .chain(negative_indices.iter().map(|i| (i, false)))
                .collect::<Vec<_>>()
                .iter()
            {
                let rows = rows_of[&i].clone();
                match seen.get(&rows) {
                    Some(prev) if *prev != *label => conflict = true,
                    Some(_) => {}
                    None => {
                        seen.insert(rows.clone(), *label);
                        samples.push(Sample { rows, label: *label });
                    }
                }
            }

            let (report, precondition) = if negative_indices.is_empty() {
                // No negatives: the precondition is vacuous.
                (
                    TrainReport {
                        schema: schema.clone(),
                        cluster_index: c.index,
                        effects_text: c.effects.to_string(),
                        rule_text: String::new(),
                        net_accuracy: 1.0,
                        rule_accuracy: 1.0,
                        separable: true,
                        attempts: 0,
                        positives: c.members.len(),
                        negatives: 0,
                    },
                    std::collections::BTreeSet::new(),
                )
            } else {
                let (net, extracted, attempts) = train_precondition(&space, &samples, opts);
                let precondition: std::collections::BTreeSet<LiftedAtom> = extracted
                    .features
                    .iter()
                    .map(|&j| space.descriptors[j].clone())
                    .collect();
                let separable = !conflict
                    && extracted.accuracy == 1.0
                    && extracted.fidelity
                    && net_accuracy(&net, &samples) == 1.0;
                (
                    TrainReport {
                        schema: schema.clone(),
                        cluster_index: c.index,
                        effects_text: c.effects.to_string(),
                        rule_text: precondition
                            .iter()
                            .map(|a| a.to_string())
                            .collect::<Vec<_>>()
                            .join(", "),
                        net_accuracy: net_accuracy(&net, &samples),
                        rule_accuracy: extracted.accuracy,
                        separable,
                        attempts,
                        positives: c.members.len(),
                        negatives: negative_indices.len(),
                    },
                    precondition,
                )
            };
            reports.push(report);
            learned.push((c.clone(), precondition));
        }
    }
    Ok(LearnedModel { model: build_model(spec, learned), reports })
}

/// Collects a dataset from the environment and learns the model.
pub fn learn_model(
    env: &mut dyn Environment,
    episodes: usize,
    max_len: usize,
    seed: u64,
    opts: &LearnOptions,
) -> Result<(LearnedModel, TransitionDataset), LearnError> {
    let dataset = collect_dataset(env, episodes, max_len, seed)?;
    let spec = env.spec().clone();
    let learned = learn_model_from_dataset(&spec, &dataset, opts)?;
    Ok((learned, dataset))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_env;

    #[test]
    fn vacuous_rule_for_all_positive_cluster() {
        // GoToRed never fails, so its cluster has no negatives and the
        // precondition is empty.
        let mut env = make_env("reacher-5").unwrap();
        let (learned, _) = learn_model(&mut env, 20, 40, 3, &LearnOptions::default()).unwrap();
        assert!(learned.all_separable());
        let red: Vec<_> = learned.model.rules_of("GoToRed").collect();
        assert_eq!(red.len(), 1);
        assert!(red[0].precondition.is_empty());
        assert_eq!(red[0].effects.len(), 1);
    }

    #[test]
    fn reacher_preconditions_recovered() {
        let mut env = make_env("reacher-5").unwrap();
        let (learned, _) = learn_model(&mut env, 60, 60, 5, &LearnOptions::default()).unwrap();
        assert!(learned.all_separable(), "{:#?}", learned.reports.iter().map(|r| r.line()).collect::<Vec<_>>());
        let green: Vec<_> = learned.model.rules_of("GoToGreen").collect();
        assert_eq!(green.len(), 1);
        let pre: Vec<String> = green[0].precondition.iter().map(|a| a.to_string()).collect();
        assert_eq!(pre, vec!["RedVisited()"]);
        let yellow: Vec<_> = learned.model.rules_of("GoToYellow").collect();
        let pre: Vec<String> = yellow[0].precondition.iter().map(|a| a.to_string()).collect();
        assert_eq!(pre, vec!["BlueVisited()"]);
    }

    #[test]
    fn deterministic_domain_gives_point_masses() {
        let mut env = make_env("reacher-5").unwrap();
        let (learned, _) = learn_model(&mut env, 30, 40, 11, &LearnOptions::default()).unwrap();
        for rule in &learned.model.rules {
            assert_eq!(rule.effects.len(), 1);
            assert!((rule.effects[0].1 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dataset_reconstruction_on_reacher() {
        let mut env = make_env("reacher-5").unwrap();
        let (learned, dataset) = learn_model(&mut env, 40, 50, 17, &LearnOptions::default()).unwrap();
        for t in &dataset.transitions {
            let out = learned.model.predict(&t.state, &t.op);
            assert_eq!(out.len(), 1, "deterministic domain");
            assert_eq!(out[0].0, t.next, "prediction must reproduce the dataset");
        }
    }
}
