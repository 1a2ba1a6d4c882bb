// Temporary tuning probe; removed once training settles.
use opal::learn::{net_accuracy, train_net, FeatureSpace, NetConfig, Sample};
use opal::relational::LiftedAtom;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn synthetic_space(n: usize) -> FeatureSpace {
    FeatureSpace {
        schema: "Synthetic".into(),
        arg_sorts: vec![],
        aux_count: 0,
        descriptors: (0..n).map(|i| LiftedAtom::new(format!("f{i}"), vec![])).collect(),
    }
}

#[test]
#[ignore]
fn probe_configs() {
    let space = synthetic_space(8);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let samples: Vec<Sample> = (0..200)
        .map(|_| {
            let bits: Vec<bool> = (0..8).map(|_| rng.gen_bool(0.5)).collect();
            let label = bits[1] && bits[3];
            Sample { rows: vec![bits], label }
        })
        .collect();
    for n_rules in [16, 64] {
        for lr in [5e-3, 3e-3, 1e-3] {
            for l2 in [1e-4, 1e-6, 0.0] {
                let cfg = NetConfig { n_rules, learning_rate: lr, l2, ..NetConfig::default() };
                let net = train_net(&space, &samples, cfg);
                let acc = net_accuracy(&net, &samples);
                // Inspect the best discretized rules.
                let mut best: Vec<(f64, Vec<usize>)> =
                    (0..n_rules).map(|i| (net.w_disj(i), net.discretized_rule(i))).collect();
                best.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
                println!(
                    "n_rules={n_rules} lr={lr:.0e} l2={l2:.0e} acc={acc:.3} top_rule={:?} w={:.2}",
                    best[0].1, best[0].0
                );
            }
        }
    }
}
