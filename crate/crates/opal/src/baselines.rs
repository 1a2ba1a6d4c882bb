//! Comparison methods sharing the environments and reward convention of the
//! planner: product-space Q-learning over (automaton state, symbolic state,
//! operator), and per-automaton-state Q-tables updated counterfactually on
//! shared experience (the reward-machine style learner).

use std::collections::HashMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::envs::Environment;
use crate::ltl::Fsa;
use crate::relational::{GroundedOperator, SymbolicState};

#[derive(Debug, Clone, Copy)]
pub struct BaselineConfig {
    /// Training episodes m.
    pub episodes: usize,
    /// Operator attempts per episode l.
    pub horizon: usize,
    pub alpha: f64,
    pub gamma: f64,
    /// Linear decay from epsilon_start to epsilon_end over the first
    /// `decay_fraction` of episodes.
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub decay_fraction: f64,
    /// Greedy evaluation cadence and rollout count.
    pub eval_every: usize,
    pub eval_rollouts: usize,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            episodes: 500,
            horizon: 50,
            alpha: 0.1,
            gamma: 0.95,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            decay_fraction: 0.6,
            eval_every: 10,
            eval_rollouts: 20,
            seed: 0,
        }
    }
}

impl BaselineConfig {
    fn epsilon(&self, episode: usize) -> f64 {
        let cutoff = (self.episodes as f64 * self.decay_fraction).max(1.0);
        let t = (episode as f64 / cutoff).min(1.0);
        self.epsilon_start + t * (self.epsilon_end - self.epsilon_start)
    }
}

/// One point of a learning curve: cumulative primitive environment
/// interactions spent on training, episodes completed, and greedy success
/// rate at that checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub env_steps: u64,
    pub episodes: usize,
    pub success_rate: f64,
}

/// Tabular action values over (automaton state, symbolic state, operator).
#[derive(Debug, Clone, Default)]
pub struct ProductQTable {
    q: HashMap<(usize, SymbolicState, GroundedOperator), f64>,
}

impl ProductQTable {
    pub fn get(&self, z: usize, s: &SymbolicState, op: &GroundedOperator) -> f64 {
        self.q.get(&(z, s.clone(), op.clone())).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, z: usize, s: SymbolicState, op: GroundedOperator, v: f64) {
        self.q.insert((z, s, op), v);
    }

    pub fn max_over(&self, z: usize, s: &SymbolicState, ops: &[GroundedOperator]) -> f64 {
        ops.iter().map(|op| self.get(z, s, op)).fold(0.0f64, f64::max)
    }

    pub fn greedy<'a>(
        &self,
        z: usize,
        s: &SymbolicState,
        ops: &'a [GroundedOperator],
        rng: &mut impl Rng,
    ) -> &'a GroundedOperator {
        let best = self.max_over(z, s, ops);
        let candidates: Vec<&GroundedOperator> =
            ops.iter().filter(|op| self.get(z, s, op) == best).collect();
        candidates[rng.gen_range(0..candidates.len())]
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}

/// Baseline state key: subgoal-predicate atoms outside the task vocabulary
/// are history flags no dynamics read, declared by the environment; dropping
/// them keeps desk-scale tables tractable.
pub fn baseline_state(env: &dyn Environment, fsa: &Fsa, s: &SymbolicState) -> SymbolicState {
    let history = env.history_predicates();
    if history.is_empty() {
        return s.clone();
    }
    s.iter()
        .filter(|a| !history.contains(&a.pred) || fsa.vocabulary.contains(a))
        .cloned()
        .collect()
}

#[derive(Debug, Clone)]
pub struct Baseline1Result {
    pub table: ProductQTable,
    pub curve: Vec<CurvePoint>,
    /// Operator sequence of the final greedy evaluation rollout, when it
    /// reached acceptance.
    pub final_plan: Option<Vec<GroundedOperator>>,
    pub final_success: f64,
    pub env_steps: u64,
}

/// Product-space Q-learning: epsilon-greedy operator selection on
/// (z, s̃), execution through the environment, TD updates on observed
/// transitions with the shared reward convention (discounted 1 on entering
/// an accepting automaton state, terminal there).
pub fn baseline1_train<E: Environment + Clone>(
    env: &mut E,
    fsa: &Fsa,
    cfg: &BaselineConfig,
) -> Baseline1Result {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ops = env.grounded_operators();
    let mut table = ProductQTable::default();
    let mut curve = Vec::new();
    let steps_at_start = env.env_steps();

    for episode in 0..cfg.episodes {
        env.reset();
        let mut z = fsa.initial;
        let mut s = baseline_state(env, fsa, &env.state());
        let eps = cfg.epsilon(episode);
        if fsa.is_accepting(z) {
            continue;
        }
        for _ in 0..cfg.horizon {
            let op = if rng.gen_bool(eps) {
                &ops[rng.gen_range(0..ops.len())]
            } else {
                table.greedy(z, &s, &ops, &mut rng)
            };
            env.execute(op).expect("well-formed operator");
            let s2 = baseline_state(env, fsa, &env.state());
            let z2 = fsa.step_mask(z, fsa.state_mask(&s2));
            let entered = fsa.is_accepting(z2);
            let bootstrap = if entered { 0.0 } else { table.max_over(z2, &s2, &ops) };
            let reward = if entered { 1.0 } else { 0.0 };
            let target = cfg.gamma * (reward + bootstrap);
            let old = table.get(z, &s, op);
            table.set(z, s.clone(), op.clone(), old + cfg.alpha * (target - old));
            z = z2;
            s = s2;
            if entered {
                break;
            }
        }
        if (episode + 1) % cfg.eval_every == 0 || episode + 1 == cfg.episodes {
            let (rate, _) = evaluate_b1(env, fsa, &table, &ops, cfg, &mut rng);
            curve.push(CurvePoint {
                env_steps: env.env_steps() - steps_at_start,
                episodes: episode + 1,
                success_rate: rate,
            });
        }
    }
    let (final_success, final_plan) =
        evaluate_b1(env, fsa, &table, &ops, cfg, &mut rng);
    Baseline1Result {
        table,
        curve,
        final_plan,
        final_success,
        env_steps: env.env_steps() - steps_at_start,
    }
}

/// Greedy rollouts on a clone of the environment (no training steps
/// charged). Returns the success rate and one successful operator sequence.
fn evaluate_b1<E: Environment + Clone>(
    env: &E,
    fsa: &Fsa,
    table: &ProductQTable,
    ops: &[GroundedOperator],
    cfg: &BaselineConfig,
    rng: &mut impl Rng,
) -> (f64, Option<Vec<GroundedOperator>>) {
    let mut wins = 0usize;
    let mut plan = None;
    for _ in 0..cfg.eval_rollouts {
        let mut sim = env.clone();
        sim.reset();
        let mut z = fsa.initial;
        let mut s = baseline_state(&sim, fsa, &sim.state());
        let mut steps = Vec::new();
        let mut ok = fsa.is_accepting(z);
        for _ in 0..cfg.horizon {
            if ok {
                break;
            }
            let op = table.greedy(z, &s, ops, rng);
            steps.push(op.clone());
            sim.execute(op).expect("well-formed operator");
            s = baseline_state(&sim, fsa, &sim.state());
            z = fsa.step_mask(z, fsa.state_mask(&s));
            ok = fsa.is_accepting(z);
        }
        if ok {
            wins += 1;
            plan.get_or_insert(steps);
        }
    }
    (wins as f64 / cfg.eval_rollouts as f64, plan)
}

/// Trains from an existing table until the first successful greedy
/// evaluation, returning the additional environment steps spent. Always at
/// least one episode.
pub fn baseline1_steps_to_success<E: Environment + Clone>(
    env: &mut E,
    fsa: &Fsa,
    table: &mut ProductQTable,
    cfg: &BaselineConfig,
) -> (u64, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37);
    let ops = env.grounded_operators();
    let start = env.env_steps();
    for episode in 0..cfg.episodes {
        env.reset();
        let mut z = fsa.initial;
        let mut s = baseline_state(env, fsa, &env.state());
        let eps = cfg.epsilon(episode);
        for _ in 0..cfg.horizon {
            if fsa.is_accepting(z) {
                break;
            }
            let op = if rng.gen_bool(eps) {
                &ops[rng.gen_range(0..ops.len())]
            } else {
                table.greedy(z, &s, &ops, &mut rng)
            };
            env.execute(op).expect("well-formed operator");
            let s2 = baseline_state(env, fsa, &env.state());
            let z2 = fsa.step_mask(z, fsa.state_mask(&s2));
            let entered = fsa.is_accepting(z2);
            let bootstrap = if entered { 0.0 } else { table.max_over(z2, &s2, &ops) };
            let target = cfg.gamma * (if entered { 1.0 } else { 0.0 } + bootstrap);
            let old = table.get(z, &s, op);
            table.set(z, s.clone(), op.clone(), old + cfg.alpha * (target - old));
            z = z2;
            s = s2;
        }
        let (rate, _) = evaluate_b1(env, fsa, table, &ops, &BaselineConfig { eval_rollouts: 1, ..*cfg }, &mut rng);
        if rate > 0.0 {
            return (env.env_steps() - start, true);
        }
    }
    (env.env_steps() - start, false)
}

/// Per-automaton-state Q-tables with counterfactual updates on shared
/// experience.
#[derive(Debug, Clone)]
pub struct QrmTables {
    pub tables: Vec<HashMap<(SymbolicState, GroundedOperator), f64>>,
}

impl QrmTables {
    pub fn new(n_states: usize) -> QrmTables {
        QrmTables { tables: (0..n_states).map(|_| HashMap::new()).collect() }
    }

    pub fn get(&self, z: usize, s: &SymbolicState, op: &GroundedOperator) -> f64 {
        self.tables[z].get(&(s.clone(), op.clone())).copied().unwrap_or(0.0)
    }

    pub fn max_over(&self, z: usize, s: &SymbolicState, ops: &[GroundedOperator]) -> f64 {
        ops.iter().map(|op| self.get(z, s, op)).fold(0.0f64, f64::max)
    }

    pub fn greedy<'a>(
        &self,
        z: usize,
        s: &SymbolicState,
        ops: &'a [GroundedOperator],
        rng: &mut impl Rng,
    ) -> &'a GroundedOperator {
        let best = self.max_over(z, s, ops);
        let candidates: Vec<&GroundedOperator> =
            ops.iter().filter(|op| self.get(z, s, op) == best).collect();
        candidates[rng.gen_range(0..candidates.len())]
    }
}

/// The counterfactual update: the displayed backup applied for every
/// automaton state simultaneously on one shared transition. The per-state
/// reward emits 1 exactly on transitions into an accepting state.
pub fn qrm_update(
    tables: &mut QrmTables,
    fsa: &Fsa,
    s: &SymbolicState,
    op: &GroundedOperator,
    s2: &SymbolicState,
    ops: &[GroundedOperator],
    alpha: f64,
    gamma: f64,
) {
    let mask = fsa.state_mask(s2);
    for z in 0..fsa.len() {
        if fsa.is_accepting(z) {
            continue;
        }
        let z2 = fsa.step_mask(z, mask);
        let entered = fsa.is_accepting(z2);
        let bootstrap = if entered { 0.0 } else { tables.max_over(z2, s2, ops) };
        let target = gamma * (if entered { 1.0 } else { 0.0 } + bootstrap);
        let old = tables.get(z, s, op);
        tables.tables[z].insert((s.clone(), op.clone()), old + alpha * (target - old));
    }
}

#[derive(Debug, Clone)]
pub struct QrmResult {
    pub tables: QrmTables,
    pub curve: Vec<CurvePoint>,
    pub final_plan: Option<Vec<GroundedOperator>>,
    pub final_success: f64,
    pub env_steps: u64,
}

/// Trains all per-automaton-state tables in parallel from shared
/// trajectories; behavior follows the current automaton state's table.
pub fn qrm_train<E: Environment + Clone>(
    env: &mut E,
    fsa: &Fsa,
    cfg: &BaselineConfig,
) -> QrmResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ops = env.grounded_operators();
    let mut tables = QrmTables::new(fsa.len());
    let mut curve = Vec::new();
    let steps_at_start = env.env_steps();

    for episode in 0..cfg.episodes {
        env.reset();
        let mut z = fsa.initial;
        let mut s = baseline_state(env, fsa, &env.state());
        let eps = cfg.epsilon(episode);
        if fsa.is_accepting(z) {
            continue;
        }
        for _ in 0..cfg.horizon {
            let op = if rng.gen_bool(eps) {
                ops[rng.gen_range(0..ops.len())].clone()
            } else {
                tables.greedy(z, &s, &ops, &mut rng).clone()
            };
            env.execute(&op).expect("well-formed operator");
            let s2 = baseline_state(env, fsa, &env.state());
            qrm_update(&mut tables, fsa, &s, &op, &s2, &ops, cfg.alpha, cfg.gamma);
            let z2 = fsa.step_mask(z, fsa.state_mask(&s2));
            z = z2;
            s = s2;
            if fsa.is_accepting(z) {
                break;
            }
        }
        if (episode + 1) % cfg.eval_every == 0 || episode + 1 == cfg.episodes {
            let (rate, _) = evaluate_qrm(env, fsa, &tables, &ops, cfg, &mut rng);
            curve.push(CurvePoint {
                env_steps: env.env_steps() - steps_at_start,
                episodes: episode + 1,
                success_rate: rate,
            });
        }
    }
    let (final_success, final_plan) = evaluate_qrm(env, fsa, &tables, &ops, cfg, &mut rng);
    QrmResult {
        tables,
        curve,
        final_plan,
        final_success,
        env_steps: env.env_steps() - steps_at_start,
    }
}

fn evaluate_qrm<E: Environment + Clone>(
    env: &E,
    fsa: &Fsa,
    tables: &QrmTables,
    ops: &[GroundedOperator],
    cfg: &BaselineConfig,
    rng: &mut impl Rng,
) -> (f64, Option<Vec<GroundedOperator>>) {
    let mut wins = 0usize;
    let mut plan = None;
    for _ in 0..cfg.eval_rollouts {
        let mut sim = env.clone();
        sim.reset();
        let mut z = fsa.initial;
        let mut s = baseline_state(&sim, fsa, &sim.state());
        let mut steps = Vec::new();
        let mut ok = fsa.is_accepting(z);
        for _ in 0..cfg.horizon {
            if ok {
                break;
            }
            let op = tables.greedy(z, &s, ops, rng);
            steps.push(op.clone());
            sim.execute(op).expect("well-formed operator");
            s = baseline_state(&sim, fsa, &sim.state());
            z = fsa.step_mask(z, fsa.state_mask(&s));
            ok = fsa.is_accepting(z);
        }
        if ok {
            wins += 1;
            plan.get_or_insert(steps);
        }
    }
    (wins as f64 / cfg.eval_rollouts as f64, plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_env, AnyEnv};
    use crate::learn::{learn_model, LearnOptions};
    use crate::ltl::{compile_to_fsa, parse_ltl};
    use crate::planner::{
        build_product, value_iteration, BuildOptions, CostModel, DEFAULT_SWEEP_CAP,
    };

    fn reacher_fsa(text: &str) -> crate::ltl::Fsa {
        compile_to_fsa(&parse_ltl(text).unwrap()).unwrap()
    }

    #[test]
    fn baseline1_converges_to_vi_fixed_point() {
        // Small deterministic product: reacher with a one-subgoal task.
        let mut env = make_env("reacher-5").unwrap();
        let fsa = reacher_fsa("F GreenVisited");
        let cfg = BaselineConfig {
            episodes: 4_000,
            horizon: 12,
            alpha: 0.2,
            epsilon_start: 1.0,
            epsilon_end: 0.3,
            eval_every: 1_000,
            seed: 3,
            ..BaselineConfig::default()
        };
        let result = baseline1_train(&mut env, &fsa, &cfg);
        assert!(result.final_success >= 0.95, "success {}", result.final_success);

        // Exact values from VI over the true model.
        let mut menv = make_env("reacher-5").unwrap();
        let (learned, _) = learn_model(&mut menv, 60, 60, 5, &LearnOptions::default()).unwrap();
        menv.reset();
        let ops = menv.grounded_operators();
        let graph = build_product(
            &learned.model,
            &fsa,
            &menv.state(),
            &ops,
            &CostModel::Unit,
            BuildOptions::default(),
        )
        .unwrap();
        let tables = value_iteration(&graph, cfg.gamma, DEFAULT_SWEEP_CAP);
        // Compare Q at the initial product state for every operator.
        let init = &graph.nodes[graph.initial];
        for (e, edge) in graph.edges[graph.initial].iter().enumerate() {
            let ql = result.table.get(fsa.initial, &init.state.sym, &edge.op);
            let vi = tables.q[graph.initial][e];
            assert!(
                (ql - vi).abs() < 1e-3,
                "{}: q-learning {ql} vs value iteration {vi}",
                edge.op
            );
        }
        let _ = AnyEnv::Reacher(crate::envs::ReacherEnv::new());
    }

    #[test]
    fn zero_episodes_means_no_training() {
        let mut env = make_env("reacher-5").unwrap();
        let fsa = reacher_fsa("F GreenVisited");
        let cfg = BaselineConfig { episodes: 0, ..BaselineConfig::default() };
        let result = baseline1_train(&mut env, &fsa, &cfg);
        assert!(result.curve.is_empty());
        assert!(result.table.is_empty());
        assert_eq!(result.env_steps, 0);
    }

    #[test]
    fn qrm_terminal_backup_is_discounted_unit() {
        // A transition entering the accepting state gets target gamma * 1.
        let mut env = make_env("reacher-5").unwrap();
        let fsa = reacher_fsa("F RedVisited");
        let ops = env.grounded_operators();
        let mut tables = QrmTables::new(fsa.len());
        let s = baseline_state(&env, &fsa, &env.state());
        let op = GroundedOperator::parse("GoToRed()").unwrap();
        env.execute(&op).unwrap();
        let s2 = baseline_state(&env, &fsa, &env.state());
        qrm_update(&mut tables, &fsa, &s, &op, &s2, &ops, 1.0, 0.95);
        assert!((tables.get(fsa.initial, &s, &op) - 0.95).abs() < 1e-12);
    }

    #[test]
    fn qrm_no_movement_backup_bootstraps() {
        let mut env = make_env("reacher-5").unwrap();
        let fsa = reacher_fsa("F GreenVisited");
        let ops = env.grounded_operators();
        let mut tables = QrmTables::new(fsa.len());
        let s = baseline_state(&env, &fsa, &env.state());
        let op = GroundedOperator::parse("GoToWhite()").unwrap();
        env.execute(&op).unwrap();
        let s2 = baseline_state(&env, &fsa, &env.state());
        // Preload a successor value to see it flow through the bootstrap.
        let any = GroundedOperator::parse("GoToGreen()").unwrap();
        tables.tables[fsa.initial].insert((s2.clone(), any.clone()), 0.5);
        qrm_update(&mut tables, &fsa, &s, &op, &s2, &ops, 1.0, 0.9);
        assert!((tables.get(fsa.initial, &s, &op) - 0.9 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn qrm_learns_reacher_sequence() {
        let mut env = make_env("reacher-5").unwrap();
        let fsa = reacher_fsa("F RedVisited & F BlueVisited");
        let cfg = BaselineConfig {
            episodes: 1_200,
            horizon: 10,
            alpha: 0.2,
            eval_every: 400,
            seed: 5,
            ..BaselineConfig::default()
        };
        let result = qrm_train(&mut env, &fsa, &cfg);
        assert!(result.final_success >= 0.95, "success {}", result.final_success);
        let plan = result.final_plan.unwrap();
        let names: Vec<String> = plan.iter().map(|o| o.to_string()).collect();
        assert!(names.contains(&"GoToRed()".to_string()));
        assert!(names.contains(&"GoToBlue()".to_string()));
    }

    #[test]
    fn single_state_accepting_fsa_is_trivial() {
        let mut env = make_env("reacher-5").unwrap();
        let fsa = compile_to_fsa(&crate::ltl::Formula::True).unwrap();
        let cfg = BaselineConfig { episodes: 10, eval_every: 5, ..BaselineConfig::default() };
        let result = qrm_train(&mut env, &fsa, &cfg);
        assert_eq!(result.final_success, 1.0);
        assert_eq!(result.final_plan, Some(Vec::new()));
    }

    #[test]
    fn steps_to_success_counts_interactions() {
        let mut env = make_env("reacher-5").unwrap();
        let fsa = reacher_fsa("F WhiteVisited");
        let mut table = ProductQTable::default();
        let cfg = BaselineConfig { episodes: 200, horizon: 8, seed: 2, ..BaselineConfig::default() };
        let (steps, ok) = baseline1_steps_to_success(&mut env, &fsa, &mut table, &cfg);
        assert!(ok);
        assert!(steps > 0, "training always interacts");
    }
}
