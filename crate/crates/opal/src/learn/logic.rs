//! Differentiable conjunction/disjunction layers for precondition learning.
//!
//! Fuzzy connectives: F_c(x,w) = 1 - w(1-x), F_d(x,w) = x*w, with the
//! activation P(v) = -1/(-1 + ln v), which maps (0,1] monotonically onto
//! (0,1] with P(1)=1. A conjunction node is P(prod_j (F_c(x_j,w_ij)+eps));
//! the disjunction over node outputs is 1 - P(prod_i (1-F_d(c_i,u_i)+eps)).
//! Node outputs are max-pooled over the auxiliary-variable groundings of a
//! sample (existential aggregation), then a sigmoid output layer classifies.
//! All weights live in [0,1] through a sigmoid reparameterization so
//! gradients stay finite at the boundary; gradients are closed-form.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::features::FeatureSpace;

pub const EPSILON: f64 = 1e-10;

/// F_c(x, w) = 1 - w(1-x). With w=0 the input is ignored (contributes 1);
/// with w=1 it contributes x.
pub fn conj_gate(x: f64, w: f64) -> f64 {
    1.0 - w * (1.0 - x)
}

pub fn conj_gate_dx(_x: f64, w: f64) -> f64 {
    w
}

pub fn conj_gate_dw(x: f64, _w: f64) -> f64 {
    -(1.0 - x)
}

/// F_d(x, w) = x*w. With w=0 the input is ignored (contributes 0); with w=1
/// it contributes x.
pub fn disj_gate(x: f64, w: f64) -> f64 {
    x * w
}

pub fn disj_gate_dx(_x: f64, w: f64) -> f64 {
    w
}

pub fn disj_gate_dw(x: f64, _w: f64) -> f64 {
    x
}

/// Logic activation P(v) = -1/(-1 + ln v), strictly increasing on (0,1],
/// P(1) = 1, P(0+) = 0.
pub fn activation(v: f64) -> f64 {
    -1.0 / (-1.0 + v.max(f64::MIN_POSITIVE).ln())
}

/// dP/dv = 1 / (v (1 - ln v)^2).
pub fn activation_grad(v: f64) -> f64 {
    let v = v.max(f64::MIN_POSITIVE);
    1.0 / (v * (1.0 - v.ln()).powi(2))
}

/// Conj(x, w) = P(prod_j (F_c(x_j, w_j) + eps)).
pub fn conj_node(x: &[f64], w: &[f64], eps: f64) -> f64 {
    let v: f64 = x.iter().zip(w).map(|(xj, wj)| conj_gate(*xj, *wj) + eps).product();
    activation(v)
}

/// Partial derivatives of [`conj_node`] with respect to every weight.
pub fn conj_node_grad_w(x: &[f64], w: &[f64], eps: f64) -> Vec<f64> {
    let factors: Vec<f64> = x.iter().zip(w).map(|(xj, wj)| conj_gate(*xj, *wj) + eps).collect();
    let v: f64 = factors.iter().product();
    let dv = activation_grad(v);
    x.iter()
        .zip(w)
        .zip(&factors)
        .map(|((xj, wj), f)| dv * (v / f) * conj_gate_dw(*xj, *wj))
        .collect()
}

/// Partial derivatives of [`conj_node`] with respect to every input.
pub fn conj_node_grad_x(x: &[f64], w: &[f64], eps: f64) -> Vec<f64> {
    let factors: Vec<f64> = x.iter().zip(w).map(|(xj, wj)| conj_gate(*xj, *wj) + eps).collect();
    let v: f64 = factors.iter().product();
    let dv = activation_grad(v);
    x.iter()
        .zip(w)
        .zip(&factors)
        .map(|((xj, wj), f)| dv * (v / f) * conj_gate_dx(*xj, *wj))
        .collect()
}

/// Disj(x, w) = 1 - P(prod_j (1 - F_d(x_j, w_j) + eps)).
pub fn disj_node(x: &[f64], w: &[f64], eps: f64) -> f64 {
    let q: f64 = x.iter().zip(w).map(|(xj, wj)| 1.0 - disj_gate(*xj, *wj) + eps).product();
    1.0 - activation(q)
}

pub fn disj_node_grad_w(x: &[f64], w: &[f64], eps: f64) -> Vec<f64> {
    let factors: Vec<f64> = x.iter().zip(w).map(|(xj, wj)| 1.0 - disj_gate(*xj, *wj) + eps).collect();
    let q: f64 = factors.iter().product();
    let dq = activation_grad(q);
    x.iter()
        .zip(w)
        .zip(&factors)
        .map(|((xj, wj), f)| dq * (q / f) * disj_gate_dw(*xj, *wj))
        .collect()
}

pub fn disj_node_grad_x(x: &[f64], w: &[f64], eps: f64) -> Vec<f64> {
    let factors: Vec<f64> = x.iter().zip(w).map(|(xj, wj)| 1.0 - disj_gate(*xj, *wj) + eps).collect();
    let q: f64 = factors.iter().product();
    let dq = activation_grad(q);
    x.iter()
        .zip(w)
        .zip(&factors)
        .map(|((xj, wj), f)| dq * (q / f) * disj_gate_dx(*xj, *wj))
        .collect()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// One training sample: boolean feature rows (one per auxiliary grounding)
/// and the applicability label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub rows: Vec<Vec<bool>>,
    pub label: bool,
}

/// Conjunction layer over features, disjunction layer over conjunction
/// nodes, sigmoid output; existential max-pooling over grounding rows in
/// between.
#[derive(Debug, Clone)]
pub struct LogicNet {
    pub space: FeatureSpace,
    pub n_rules: usize,
    pub epsilon: f64,
    /// Raw parameters; the logic weights are sigmoid(theta).
    theta_conj: Vec<f64>, // [n_rules * n_features]
    theta_disj: Vec<f64>, // [n_rules]
    out_w: f64,
    out_b: f64,
}

impl LogicNet {
    pub fn new(space: FeatureSpace, n_rules: usize, seed: u64) -> LogicNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_features = space.len();
        // Sparse-high initialization: every node starts as a small random
        // conjunction (a few weights near 1, the rest near 0), so each
        // candidate literal has nodes championing it from the start. A
        // uniformly-low start can pin existentially-aggregated features at
        // zero: for positive samples the pooled row then avoids the witness
        // row and pushes the needed weight further down.
        let mut theta_conj = vec![0.0; n_rules * n_features];
        for i in 0..n_rules {
            let k = 1 + rng.gen_range(0..3.min(n_features.max(1)));
            let mut chosen: Vec<usize> = (0..n_features).collect();
            chosen.shuffle(&mut rng);
            chosen.truncate(k);
            for j in 0..n_features {
                theta_conj[i * n_features + j] = if chosen.contains(&j) {
                    2.0 + 0.3 * rng.gen::<f64>()
                } else {
                    -2.5 + 0.4 * rng.gen::<f64>()
                };
            }
        }
        let theta_disj = (0..n_rules).map(|_| 0.5 * rng.gen::<f64>()).collect();
        LogicNet { space, n_rules, epsilon: EPSILON, theta_conj, theta_disj, out_w: 4.0, out_b: -2.0 }
    }

    pub fn n_features(&self) -> usize {
        self.space.len()
    }

    pub fn w_conj(&self, rule: usize, feature: usize) -> f64 {
        sigmoid(self.theta_conj[rule * self.n_features() + feature])
    }

    pub fn w_disj(&self, rule: usize) -> f64 {
        sigmoid(self.theta_disj[rule])
    }

    /// Features of `rule` whose conjunction weight crosses 0.5.
    pub fn discretized_rule(&self, rule: usize) -> Vec<usize> {
        (0..self.n_features()).filter(|j| self.w_conj(rule, *j) >= 0.5).collect()
    }

    /// Network output in [0,1] for one sample.
    pub fn forward(&self, rows: &[Vec<bool>]) -> f64 {
        self.forward_cached(rows).output
    }

    /// Classification at the 0.5 threshold.
    pub fn classify(&self, rows: &[Vec<bool>]) -> bool {
        self.forward(rows) >= 0.5
    }

    fn forward_cached(&self, rows: &[Vec<bool>]) -> ForwardCache {
        let nf = self.n_features();
        let float_rows: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect())
            .collect();
        let mut pooled = Vec::with_capacity(self.n_rules);
        let mut argmax_rows = Vec::with_capacity(self.n_rules);
        for i in 0..self.n_rules {
            let w: Vec<f64> = (0..nf).map(|j| self.w_conj(i, j)).collect();
            let mut best = f64::NEG_INFINITY;
            let mut best_g = 0usize;
            for (g, row) in float_rows.iter().enumerate() {
                let c = conj_node(row, &w, self.epsilon);
                if c > best {
                    best = c;
                    best_g = g;
                }
            }
            pooled.push(best);
            argmax_rows.push(best_g);
        }
        let u: Vec<f64> = (0..self.n_rules).map(|i| self.w_disj(i)).collect();
        let d = disj_node(&pooled, &u, self.epsilon);
        let output = sigmoid(self.out_w * d + self.out_b);
        ForwardCache { float_rows, pooled, argmax_rows, d, output }
    }
}

struct ForwardCache {
    float_rows: Vec<Vec<f64>>,
    pooled: Vec<f64>,
    argmax_rows: Vec<usize>,
    d: f64,
    output: f64,
}

/// Adam over a flat parameter view.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Adam {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0, lr }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t as i32);
        let bc2 = 1.0 - Self::BETA2.powi(self.t as i32);
        for (i, g) in grads.iter().enumerate() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + Self::EPS);
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NetConfig {
    pub n_rules: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            n_rules: 64,
            epochs: 100,
            batch_size: 32,
            learning_rate: 5e-3,
            l2: 1e-6,
            seed: 0,
        }
    }
}

pub const LEARNING_RATE_GRID: [f64; 6] = [5e-3, 3e-3, 1e-3, 5e-4, 3e-4, 1e-4];
pub const L2_GRID: [f64; 7] = [1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 0.0];
pub const N_RULES_GRID: [usize; 4] = [64, 128, 256, 512];

/// Trains one network with cross-entropy loss plus L2 on the logic weights,
/// Adam, class-balanced minibatches.
pub fn train_net(space: &FeatureSpace, samples: &[Sample], cfg: NetConfig) -> LogicNet {
    let mut net = LogicNet::new(space.clone(), cfg.n_rules, cfg.seed);
    let nf = net.n_features();
    let n_params = cfg.n_rules * nf + cfg.n_rules + 2;
    let mut adam = Adam::new(n_params, cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));

    let positives: Vec<usize> =
        samples.iter().enumerate().filter(|(_, s)| s.label).map(|(i, _)| i).collect();
    let negatives: Vec<usize> =
        samples.iter().enumerate().filter(|(_, s)| !s.label).map(|(i, _)| i).collect();
    if positives.is_empty() || negatives.is_empty() {
        return net;
    }
    // Small (deduplicated) sample sets still get a useful number of Adam
    // steps per epoch.
    let batches_per_epoch = ((samples.len() + cfg.batch_size - 1) / cfg.batch_size).max(8);

    for _ in 0..cfg.epochs {
        for _ in 0..batches_per_epoch {
            let mut grads = vec![0.0; n_params];
            let half = cfg.batch_size / 2;
            let mut batch: Vec<usize> = Vec::with_capacity(cfg.batch_size);
            for _ in 0..half {
                batch.push(positives[rng.gen_range(0..positives.len())]);
            }
            for _ in 0..cfg.batch_size - half {
                batch.push(negatives[rng.gen_range(0..negatives.len())]);
            }
            for &si in &batch {
                accumulate_grads(&net, &samples[si], &mut grads, cfg.batch_size);
            }
            // L2 regularization on the squashed logic weights.
            for i in 0..cfg.n_rules {
                for j in 0..nf {
                    let w = net.w_conj(i, j);
                    grads[i * nf + j] += 2.0 * cfg.l2 * w * w * (1.0 - w);
                }
                let u = net.w_disj(i);
                grads[cfg.n_rules * nf + i] += 2.0 * cfg.l2 * u * u * (1.0 - u);
            }
            let mut params: Vec<f64> = Vec::with_capacity(n_params);
            params.extend_from_slice(&net.theta_conj);
            params.extend_from_slice(&net.theta_disj);
            params.push(net.out_w);
            params.push(net.out_b);
            adam.step(&mut params, &grads);
            net.theta_conj.copy_from_slice(&params[..cfg.n_rules * nf]);
            net.theta_disj.copy_from_slice(&params[cfg.n_rules * nf..cfg.n_rules * nf + cfg.n_rules]);
            net.out_w = params[n_params - 2];
            net.out_b = params[n_params - 1];
        }
    }
    net
}

/// Backpropagation in closed form: through the sigmoid output, the
/// disjunction node, the max-pooled conjunction nodes (gradient routed to
/// the argmax grounding row), and the sigmoid weight reparameterization.
fn accumulate_grads(net: &LogicNet, sample: &Sample, grads: &mut [f64], batch: usize) {
    let cache = net.forward_cached(&sample.rows);
    let nf = net.n_features();
    let y = if sample.label { 1.0 } else { 0.0 };
    let scale = 1.0 / batch as f64;
    // d CE / d z for sigmoid output: (p - y).
    let dz = (cache.output - y) * scale;
    let d_d = dz * net.out_w;
    grads[net.n_rules * nf + net.n_rules] += dz * cache.d; // out_w
    grads[net.n_rules * nf + net.n_rules + 1] += dz; // out_b

    let u: Vec<f64> = (0..net.n_rules).map(|i| net.w_disj(i)).collect();
    let d_du = disj_node_grad_w(&cache.pooled, &u, net.epsilon);
    let d_dc = disj_node_grad_x(&cache.pooled, &u, net.epsilon);
    for i in 0..net.n_rules {
        let ui = u[i];
        grads[net.n_rules * nf + i] += d_d * d_du[i] * ui * (1.0 - ui);
        let dc = d_d * d_dc[i];
        if dc == 0.0 {
            continue;
        }
        let row = &cache.float_rows[cache.argmax_rows[i]];
        let w: Vec<f64> = (0..nf).map(|j| net.w_conj(i, j)).collect();
        let dw = conj_node_grad_w(row, &w, net.epsilon);
        for j in 0..nf {
            grads[i * nf + j] += dc * dw[j] * w[j] * (1.0 - w[j]);
        }
    }
}

/// Fraction of samples the network classifies per their labels.
pub fn net_accuracy(net: &LogicNet, samples: &[Sample]) -> f64 {
    if samples.is_empty() {
        return 1.0;
    }
    let hits = samples.iter().filter(|s| net.classify(&s.rows) == s.label).count();
    hits as f64 / samples.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
    }

    #[test]
    fn boundary_identities() {
        for x in [0.0, 0.25, 0.5, 1.0] {
            assert_eq!(conj_gate(x, 0.0), 1.0);
            assert_eq!(conj_gate(x, 1.0), x);
            assert_eq!(disj_gate(x, 0.0), 0.0);
            assert_eq!(disj_gate(x, 1.0), x);
        }
        assert_eq!(activation(1.0), 1.0);
    }

    #[test]
    fn activation_is_strictly_increasing() {
        let mut prev = activation(1e-6);
        for i in 1..=1000 {
            let v = 1e-6 + (1.0 - 1e-6) * i as f64 / 1000.0;
            let cur = activation(v);
            assert!(cur > prev, "P must increase at v={v}");
            prev = cur;
        }
    }

    #[test]
    fn closed_form_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let h = 1e-6;
        for _ in 0..100 {
            let n = rng.gen_range(2..6);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.95)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.95)).collect();
            let j = rng.gen_range(0..n);

            let gw = conj_node_grad_w(&x, &w, EPSILON)[j];
            let fw = central_diff(
                |wj| {
                    let mut w2 = w.clone();
                    w2[j] = wj;
                    conj_node(&x, &w2, EPSILON)
                },
                w[j],
                h,
            );
            assert!(rel_err(gw, fw) < 1e-5, "conj dw: {gw} vs {fw}");

            let gx = conj_node_grad_x(&x, &w, EPSILON)[j];
            let fx = central_diff(
                |xj| {
                    let mut x2 = x.clone();
                    x2[j] = xj;
                    conj_node(&x2, &w, EPSILON)
                },
                x[j],
                h,
            );
            assert!(rel_err(gx, fx) < 1e-5, "conj dx: {gx} vs {fx}");

            let gdw = disj_node_grad_w(&x, &w, EPSILON)[j];
            let fdw = central_diff(
                |wj| {
                    let mut w2 = w.clone();
                    w2[j] = wj;
                    disj_node(&x, &w2, EPSILON)
                },
                w[j],
                h,
            );
            assert!(rel_err(gdw, fdw) < 1e-5, "disj dw: {gdw} vs {fdw}");

            let ga = activation_grad(x[0]);
            let fa = central_diff(activation, x[0], h);
            assert!(rel_err(ga, fa) < 1e-5, "activation: {ga} vs {fa}");
        }
    }

    fn synthetic_space(n: usize) -> FeatureSpace {
        use crate::relational::LiftedAtom;
        FeatureSpace {
            schema: "Synthetic".into(),
            arg_sorts: vec![],
            aux_count: 0,
            descriptors: (0..n).map(|i| LiftedAtom::new(format!("f{i}"), vec![])).collect(),
        }
    }

    #[test]
    fn learns_conjunction_of_two_features() {
        // label = f1 & f3 over 8 random boolean features.
        let space = synthetic_space(8);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples: Vec<Sample> = (0..200)
            .map(|_| {
                let bits: Vec<bool> = (0..8).map(|_| rng.gen_bool(0.5)).collect();
                let label = bits[1] && bits[3];
                Sample { rows: vec![bits], label }
            })
            .collect();
        let net = train_net(&space, &samples, NetConfig::default());
        let acc = net_accuracy(&net, &samples);
        assert_eq!(acc, 1.0, "training accuracy {acc}");
    }
}
