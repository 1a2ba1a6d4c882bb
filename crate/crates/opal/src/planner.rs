//! Planning over the product of a learned transition model and a task
//! automaton: forward-reachable product graph construction, value iteration
//! (reward and cost forms), greedy plan extraction, and breadth-first
//! oracles used to cross-check optimality.
//!
//! Node identity uses a relevance projection of the symbolic state: atoms
//! whose predicate occurs in some rule precondition, plus the formula's
//! vocabulary atoms. Dropped atoms are write-only sinks that neither the
//! rules nor the automaton read, so the projection preserves dynamics and
//! labeling exactly while keeping reachable sets small.

use std::collections::{BTreeSet, HashMap, VecDeque};

use thiserror::Error;

use crate::control::{controller_cost, GoalConditionedQ};
use crate::envs::map::RoomMap;
use crate::learn::TransitionModel;
use crate::ltl::Fsa;
use crate::relational::{GroundedOperator, SymbolicState};

pub const DEFAULT_NODE_CAP: usize = 200_000;
pub const DEFAULT_GAMMA: f64 = 0.95;
pub const DEFAULT_SWEEP_CAP: usize = 2_000;
pub const CONVERGENCE_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("product graph exceeded the cap of {cap} nodes")]
    GraphExplosion { cap: usize },
    #[error("no accepting product state is reachable from the start")]
    NoPlan,
    #[error("greedy rollout revisited a product state")]
    LivelockDetected,
}

/// A product state: symbolic state plus automaton state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProductState {
    pub sym: SymbolicState,
    pub automaton: usize,
}

#[derive(Debug, Clone)]
pub struct ProductEdge {
    pub op: GroundedOperator,
    /// Successor node per effect alternative, with its probability.
    pub outcomes: Vec<(usize, f64)>,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct ProductNode {
    pub state: ProductState,
    pub accepting: bool,
}

/// Forward-reachable product graph G = (V, E, cost).
#[derive(Debug, Clone)]
pub struct ProductGraph {
    pub nodes: Vec<ProductNode>,
    pub edges: Vec<Vec<ProductEdge>>,
    pub initial: usize,
    index: HashMap<ProductState, usize>,
}

impl ProductGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_of(&self, state: &ProductState) -> Option<usize> {
        self.index.get(state).copied()
    }

    pub fn accepting_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().enumerate().filter(|(_, n)| n.accepting).map(|(i, _)| i)
    }

    /// GraphViz dot rendering.
    pub fn render_dot(&self) -> String {
        let mut out = String::from("digraph product {\n");
        for (i, node) in self.nodes.iter().enumerate() {
            let shape = if node.accepting { "doublecircle" } else { "ellipse" };
            out.push_str(&format!(
                "  n{i} [shape={shape}, label=\"z{} | {}\"];\n",
                node.state.automaton,
                node.state.sym.to_string().replace('"', "'")
            ));
        }
        for (i, edges) in self.edges.iter().enumerate() {
            for e in edges {
                for (j, p) in &e.outcomes {
                    let label = if *p < 1.0 {
                        format!("{} ({:.2})", e.op, p)
                    } else {
                        e.op.to_string()
                    };
                    out.push_str(&format!("  n{i} -> n{j} [label=\"{label}\"];\n"));
                }
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Per-edge cost source.
pub enum CostModel<'a> {
    /// Every edge costs 1.
    Unit,
    /// Cost read from the room controller's critics: estimated grid steps
    /// from the source room's center to the door toward the target room,
    /// plus the entry step. `floor` keeps untrained tables from degrading
    /// below unit cost.
    RoomCritic { q: &'a GoalConditionedQ, map: &'a RoomMap, floor: f64 },
}

/// Cost of executing `op` from `state`.
pub fn edge_cost(op: &GroundedOperator, state: &SymbolicState, cost: &CostModel) -> f64 {
    let _ = state;
    match cost {
        CostModel::Unit => 1.0,
        CostModel::RoomCritic { q, map, floor } => {
            let room = |name: &str| -> Option<usize> {
                let idx: usize = name.strip_prefix('r')?.parse().ok()?;
                (idx >= 1 && idx <= map.n_rooms).then(|| idx - 1)
            };
            let (Some(from), Some(to)) =
                (room(&op.args[0].name), room(&op.args[1].name))
            else {
                return 1.0;
            };
            match map.door_between(from, to) {
                Some(door) => (controller_cost(q, map.room_center(from), door) + 1.0).max(*floor),
                None => 1.0,
            }
        }
    }
}

#[derive(Clone, Copy)]
pub struct BuildOptions {
    pub node_cap: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { node_cap: DEFAULT_NODE_CAP }
    }
}

/// Predicates read by any rule precondition.
fn precondition_predicates(model: &TransitionModel) -> BTreeSet<String> {
    model
        .rules
        .iter()
        .flat_map(|r| r.precondition.iter().map(|a| a.pred.clone()))
        .collect()
}

/// Relevance projection for product-node identity.
pub fn project_state(
    state: &SymbolicState,
    kept_preds: &BTreeSet<String>,
    vocabulary: &[crate::relational::Atom],
) -> SymbolicState {
    state
        .iter()
        .filter(|a| kept_preds.contains(&a.pred) || vocabulary.contains(a))
        .cloned()
        .collect()
}

/// Forward reachability from (s0, z0): expands every grounded operator,
/// applies the model, steps the automaton on each successor's label. Edges
/// whose symbolic state does not change are excluded (failed operators never
/// enter the graph).
pub fn build_product(
    model: &TransitionModel,
    fsa: &Fsa,
    s0: &SymbolicState,
    ops: &[GroundedOperator],
    cost: &CostModel,
    opts: BuildOptions,
) -> Result<ProductGraph, PlanError> {
    let kept = precondition_predicates(model);
    let start = ProductState {
        sym: project_state(s0, &kept, &fsa.vocabulary),
        automaton: fsa.initial,
    };
    let mut nodes = vec![ProductNode { accepting: fsa.is_accepting(start.automaton), state: start.clone() }];
    let mut index = HashMap::from([(start, 0usize)]);
    let mut edges: Vec<Vec<ProductEdge>> = vec![Vec::new()];
    let mut queue = VecDeque::from([0usize]);
    // Successor distributions depend only on the symbolic component.
    let mut predict_cache: HashMap<(SymbolicState, GroundedOperator), Vec<(SymbolicState, f64)>> =
        HashMap::new();

    while let Some(id) = queue.pop_front() {
        let node = nodes[id].state.clone();
        if nodes[id].accepting {
            continue; // terminal
        }
        let mut out_edges = Vec::new();
        for op in ops {
            let outcomes = predict_cache
                .entry((node.sym.clone(), op.clone()))
                .or_insert_with(|| {
                    model
                        .predict(&node.sym, op)
                        .into_iter()
                        .map(|(s, p)| (project_state(&s, &kept, &fsa.vocabulary), p))
                        .collect()
                })
                .clone();
            // Self-loop exclusion: s' == s never enters the graph.
            let moved: Vec<(SymbolicState, f64)> =
                outcomes.into_iter().filter(|(s, _)| *s != node.sym).collect();
            if moved.is_empty() {
                continue;
            }
            let total: f64 = moved.iter().map(|(_, p)| p).sum();
            let mut edge_outcomes = Vec::with_capacity(moved.len());
            for (next_sym, p) in moved {
                let mask = fsa.state_mask(&next_sym);
                let next_z = fsa.step_mask(node.automaton, mask);
                let next = ProductState { sym: next_sym, automaton: next_z };
                let next_id = match index.get(&next) {
                    Some(&i) => i,
                    None => {
                        if nodes.len() >= opts.node_cap {
                            return Err(PlanError::GraphExplosion { cap: opts.node_cap });
                        }
                        let i = nodes.len();
                        nodes.push(ProductNode {
                            accepting: fsa.is_accepting(next.automaton),
                            state: next.clone(),
                        });
                        edges.push(Vec::new());
                        index.insert(next, i);
                        queue.push_back(i);
                        i
                    }
                };
                edge_outcomes.push((next_id, p / total));
            }
            out_edges.push(ProductEdge {
                op: op.clone(),
                outcomes: edge_outcomes,
                cost: edge_cost(op, &node.sym, cost),
            });
        }
        out_edges.sort_by(|a, b| a.op.cmp(&b.op));
        edges[id] = out_edges;
    }
    Ok(ProductGraph { nodes, edges, initial: 0, index })
}

/// Value tables over the product graph. `values[n]` is V(z, s̃) for node n;
/// `q[n][e]` the action value of edge e out of n. Accepting states are
/// terminal: excluded from backups with V fixed at 0 (reward form) — the
/// reward of 1 is granted on the transition entering them.
#[derive(Debug, Clone)]
pub struct ValueTables {
    pub values: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub gamma: f64,
    pub sweeps: usize,
    pub converged: bool,
    /// True when every entry was non-decreasing across all sweeps.
    pub monotone: bool,
}

impl ValueTables {
    pub fn value(&self, graph: &ProductGraph, state: &ProductState) -> Option<f64> {
        graph.node_of(state).map(|n| self.values[n])
    }
}

/// Reward-form value iteration: Q(n,e) = gamma * sum_o p_o (1[acc(o)] + V(o)).
pub fn value_iteration(graph: &ProductGraph, gamma: f64, max_sweeps: usize) -> ValueTables {
    assert!((0.0..1.0).contains(&gamma), "discount must be in [0,1)");
    assert!(max_sweeps >= 1);
    let n = graph.len();
    let mut values = vec![0.0f64; n];
    let mut q: Vec<Vec<f64>> = graph.edges.iter().map(|es| vec![0.0; es.len()]).collect();
    let mut monotone = true;
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut max_change = 0.0f64;
        let prev = values.clone();
        for i in 0..n {
            if graph.nodes[i].accepting {
                continue;
            }
            let mut best = 0.0f64;
            for (e, edge) in graph.edges[i].iter().enumerate() {
                let mut total = 0.0;
                for (next, p) in &edge.outcomes {
                    let reward = if graph.nodes[*next].accepting { 1.0 } else { 0.0 };
                    total += p * (reward + prev[*next]);
                }
                let qe = gamma * total;
                q[i][e] = qe;
                best = best.max(qe);
            }
            if best < values[i] - 1e-15 {
                monotone = false;
            }
            max_change = max_change.max((best - values[i]).abs());
            values[i] = best;
        }
        if max_change < CONVERGENCE_EPS {
            converged = true;
            break;
        }
    }
    ValueTables { values, q, gamma, sweeps, converged, monotone }
}

/// Cost-form value iteration: C(n) = min_e [cost_e + gamma * sum_o p_o C(o)]
/// with accepting states at 0. Entries without any accepting path grow
/// toward the discounted bound; pair with the reward form to detect
/// unreachability.
pub fn cost_value_iteration(graph: &ProductGraph, gamma: f64, max_sweeps: usize) -> ValueTables {
    let n = graph.len();
    let mut values = vec![0.0f64; n];
    let mut q: Vec<Vec<f64>> = graph.edges.iter().map(|es| vec![0.0; es.len()]).collect();
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut max_change = 0.0f64;
        let prev = values.clone();
        for i in 0..n {
            if graph.nodes[i].accepting || graph.edges[i].is_empty() {
                continue;
            }
            let mut best = f64::INFINITY;
            for (e, edge) in graph.edges[i].iter().enumerate() {
                let mut total = edge.cost;
                for (next, p) in &edge.outcomes {
                    total += gamma * p * prev[*next];
                }
                q[i][e] = total;
                best = best.min(total);
            }
            max_change = max_change.max((best - values[i]).abs());
            values[i] = best;
        }
        if max_change < CONVERGENCE_EPS {
            converged = true;
            break;
        }
    }
    ValueTables { values, q, gamma, sweeps, converged, monotone: true }
}

/// A high-level plan: grounded operators plus the predicted product-state
/// trace (starting state included).
#[derive(Debug, Clone)]
pub struct Plan {
    pub steps: Vec<GroundedOperator>,
    pub trace: Vec<ProductState>,
}

impl Plan {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn render(&self) -> String {
        self.steps.iter().map(|op| format!("{op}\n")).collect()
    }
}

/// Greedy argmax rollout through the most probable successor until an
/// accepting automaton state. Ties break lexicographically by operator (the
/// edge list is sorted), then by outcome probability and node id.
pub fn extract_plan(
    graph: &ProductGraph,
    tables: &ValueTables,
    from: usize,
) -> Result<Plan, PlanError> {
    let mut steps = Vec::new();
    let mut trace = vec![graph.nodes[from].state.clone()];
    let mut visited = BTreeSet::from([from]);
    let mut cur = from;
    while !graph.nodes[cur].accepting {
        if tables.values[cur] <= 0.0 {
            return Err(PlanError::NoPlan);
        }
        let (best_e, _) = graph.edges[cur]
            .iter()
            .enumerate()
            .map(|(e, _)| (e, tables.q[cur][e]))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)))
            .ok_or(PlanError::NoPlan)?;
        let edge = &graph.edges[cur][best_e];
        let (next, _) = edge
            .outcomes
            .iter()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)))
            .expect("edge has outcomes");
        steps.push(edge.op.clone());
        trace.push(graph.nodes[*next].state.clone());
        if steps.len() > graph.len() {
            return Err(PlanError::LivelockDetected);
        }
        if !visited.insert(*next) {
            return Err(PlanError::LivelockDetected);
        }
        cur = *next;
    }
    Ok(Plan { steps, trace })
}

/// Greedy argmin rollout for cost tables; accepting-reachability must be
/// established separately (pass the reward tables' values).
pub fn extract_plan_by_cost(
    graph: &ProductGraph,
    cost_tables: &ValueTables,
    reward_values: &[f64],
    from: usize,
) -> Result<Plan, PlanError> {
    let mut steps = Vec::new();
    let mut trace = vec![graph.nodes[from].state.clone()];
    let mut visited = BTreeSet::from([from]);
    let mut cur = from;
    while !graph.nodes[cur].accepting {
        if reward_values[cur] <= 0.0 {
            return Err(PlanError::NoPlan);
        }
        let (best_e, _) = graph.edges[cur]
            .iter()
            .enumerate()
            .filter(|(_, edge)| edge.outcomes.iter().all(|(o, _)| reward_values[*o] > 0.0 || graph.nodes[*o].accepting))
            .map(|(e, _)| (e, cost_tables.q[cur][e]))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)))
            .ok_or(PlanError::NoPlan)?;
        let edge = &graph.edges[cur][best_e];
        let (next, _) = edge
            .outcomes
            .iter()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)))
            .expect("edge has outcomes");
        steps.push(edge.op.clone());
        trace.push(graph.nodes[*next].state.clone());
        if steps.len() > graph.len() || !visited.insert(*next) {
            return Err(PlanError::LivelockDetected);
        }
        cur = *next;
    }
    Ok(Plan { steps, trace })
}

/// Plans from an observed product state after a failed step or a divergence,
/// consuming zero environment interactions: rebuilds reachability from the
/// observed state and re-extracts.
pub fn replan(
    model: &TransitionModel,
    fsa: &Fsa,
    observed: &SymbolicState,
    automaton_state: usize,
    ops: &[GroundedOperator],
    cost: &CostModel,
    gamma: f64,
) -> Result<Plan, PlanError> {
    let mut shifted = fsa.clone();
    shifted.initial = automaton_state;
    let graph = build_product(model, &shifted, observed, ops, cost, BuildOptions::default())?;
    let tables = value_iteration(&graph, gamma, DEFAULT_SWEEP_CAP);
    extract_plan(&graph, &tables, graph.initial)
}

/// Breadth-first shortest accepting-path length (unit costs) from the
/// initial node; the oracle for plan-optimality checks.
pub fn bfs_shortest_accepting(graph: &ProductGraph) -> Option<usize> {
    if graph.nodes[graph.initial].accepting {
        return Some(0);
    }
    let mut dist = vec![usize::MAX; graph.len()];
    dist[graph.initial] = 0;
    let mut queue = VecDeque::from([graph.initial]);
    while let Some(i) = queue.pop_front() {
        for edge in &graph.edges[i] {
            for (next, _) in &edge.outcomes {
                if dist[*next] == usize::MAX {
                    dist[*next] = dist[i] + 1;
                    if graph.nodes[*next].accepting {
                        return Some(dist[*next]);
                    }
                    queue.push_back(*next);
                }
            }
        }
    }
    None
}

/// Per-subtask-greedy oracle: repeatedly takes the breadth-first shortest
/// path that changes the automaton state, from the current product state,
/// until acceptance — the stitched cost of solving each automaton-edge
/// subtask optimally in isolation. Deterministic domains only.
pub fn stitched_subtask_cost(graph: &ProductGraph) -> Option<usize> {
    let mut cur = graph.initial;
    let mut total = 0usize;
    let mut guard = 0;
    while !graph.nodes[cur].accepting {
        guard += 1;
        if guard > graph.len() + 1 {
            return None;
        }
        let z = graph.nodes[cur].state.automaton;
        // BFS within the z-slice; edges leaving the slice close a subtask.
        let mut dist: HashMap<usize, usize> = HashMap::from([(cur, 0)]);
        let mut queue = VecDeque::from([cur]);
        let mut found: Option<(usize, usize)> = None; // (node, dist)
        'bfs: while let Some(i) = queue.pop_front() {
            for edge in &graph.edges[i] {
                let (next, _) =
                    edge.outcomes.iter().max_by(|a, b| a.1.partial_cmp(&b.1).unwrap()).unwrap();
                let d = dist[&i] + 1;
                let nz = graph.nodes[*next].state.automaton;
                if nz != z {
                    found = Some((*next, d));
                    break 'bfs;
                }
                if !dist.contains_key(next) {
                    dist.insert(*next, d);
                    queue.push_back(*next);
                }
            }
        }
        let (next, d) = found?;
        total += d;
        cur = next;
    }
    Some(total)
}

/// Simulates a plan through the model and automaton; true iff it ends in an
/// accepting product state. Follows most probable successors.
pub fn plan_is_valid(
    model: &TransitionModel,
    fsa: &Fsa,
    s0: &SymbolicState,
    plan: &Plan,
) -> bool {
    let mut sym = s0.clone();
    let mut z = fsa.initial;
    if fsa.is_accepting(z) {
        return true;
    }
    for op in &plan.steps {
        let outcomes = model.predict(&sym, op);
        let (next, _) = outcomes
            .iter()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .expect("prediction is a distribution");
        sym = next.clone();
        z = fsa.step_mask(z, fsa.state_mask(&sym));
        if fsa.is_accepting(z) {
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_env, Environment};
    use crate::learn::{learn_model, LearnOptions};
    use crate::ltl::{compile_to_fsa, parse_ltl};

    fn blocks_model() -> (TransitionModel, Vec<GroundedOperator>, SymbolicState) {
        let mut env = make_env("blocks-3").unwrap();
        let (learned, _) = learn_model(&mut env, 60, 60, 2, &LearnOptions::default()).unwrap();
        assert!(learned.all_separable());
        env.reset();
        let ops = env.grounded_operators();
        (learned.model, ops, env.state())
    }

    #[test]
    fn blocks_two_step_plan() {
        let (model, ops, s0) = blocks_model();
        let fsa = compile_to_fsa(&parse_ltl("F On(b1,b2)").unwrap()).unwrap();
        let graph =
            build_product(&model, &fsa, &s0, &ops, &CostModel::Unit, BuildOptions::default())
                .unwrap();
        // Accepting nodes all carry the goal atom.
        for i in graph.accepting_nodes() {
            assert!(graph.nodes[i]
                .state
                .sym
                .contains(&crate::relational::Atom::parse("On(b1,b2)").unwrap()));
        }
        let tables = value_iteration(&graph, DEFAULT_GAMMA, DEFAULT_SWEEP_CAP);
        assert!(tables.converged);
        assert!(tables.monotone);
        let plan = extract_plan(&graph, &tables, graph.initial).unwrap();
        assert_eq!(
            plan.steps.iter().map(|o| o.to_string()).collect::<Vec<_>>(),
            vec!["Pick(b1)", "Place(b1,b2)"]
        );
        assert_eq!(Some(plan.len()), bfs_shortest_accepting(&graph));
        assert!(plan_is_valid(&model, &fsa, &s0, &plan));
    }

    #[test]
    fn empty_object_set_single_node() {
        let model = TransitionModel::default();
        let fsa = compile_to_fsa(&parse_ltl("F a").unwrap()).unwrap();
        let s0 = SymbolicState::default();
        let graph =
            build_product(&model, &fsa, &s0, &[], &CostModel::Unit, BuildOptions::default())
                .unwrap();
        assert_eq!(graph.len(), 1);
        assert!(graph.edges[0].is_empty());
        let tables = value_iteration(&graph, DEFAULT_GAMMA, 10);
        assert!(matches!(
            extract_plan(&graph, &tables, graph.initial),
            Err(PlanError::NoPlan)
        ));
    }

    #[test]
    fn start_already_accepting_gives_empty_plan() {
        let (model, ops, s0) = blocks_model();
        // true is accepted immediately.
        let fsa = compile_to_fsa(&Formula::True).unwrap();
        let graph =
            build_product(&model, &fsa, &s0, &ops, &CostModel::Unit, BuildOptions::default())
                .unwrap();
        let tables = value_iteration(&graph, DEFAULT_GAMMA, 10);
        let plan = extract_plan(&graph, &tables, graph.initial).unwrap();
        assert!(plan.is_empty());
    }

    use crate::ltl::Formula;

    #[test]
    fn chain_values_are_powers_of_gamma() {
        // Pick(b1) then Place(b1,b2): V(init) for the 2-step chain is
        // gamma^2; the one-step-from-accepting state has gamma^1.
        let (model, ops, s0) = blocks_model();
        let fsa = compile_to_fsa(&parse_ltl("F On(b1,b2)").unwrap()).unwrap();
        let graph =
            build_product(&model, &fsa, &s0, &ops, &CostModel::Unit, BuildOptions::default())
                .unwrap();
        let tables = value_iteration(&graph, 0.95, DEFAULT_SWEEP_CAP);
        assert!((tables.values[graph.initial] - 0.95f64.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn unreachable_goal_has_zero_value() {
        let (model, ops, s0) = blocks_model();
        // b1 on b1 is impossible; the vocabulary atom never becomes true.
        let fsa = compile_to_fsa(&parse_ltl("F On(b1,b1)").unwrap()).unwrap();
        let graph =
            build_product(&model, &fsa, &s0, &ops, &CostModel::Unit, BuildOptions::default())
                .unwrap();
        let tables = value_iteration(&graph, DEFAULT_GAMMA, DEFAULT_SWEEP_CAP);
        assert_eq!(tables.values[graph.initial], 0.0);
        assert!(matches!(
            extract_plan(&graph, &tables, graph.initial),
            Err(PlanError::NoPlan)
        ));
    }

    #[test]
    fn reacher_orders_red_before_green() {
        let mut env = make_env("reacher-5").unwrap();
        let (learned, _) = learn_model(&mut env, 60, 60, 5, &LearnOptions::default()).unwrap();
        env.reset();
        let ops = env.grounded_operators();
        let fsa = compile_to_fsa(&parse_ltl("F GreenVisited").unwrap()).unwrap();
        let graph = build_product(
            &learned.model,
            &fsa,
            &env.state(),
            &ops,
            &CostModel::Unit,
            BuildOptions::default(),
        )
        .unwrap();
        let tables = value_iteration(&graph, DEFAULT_GAMMA, DEFAULT_SWEEP_CAP);
        let plan = extract_plan(&graph, &tables, graph.initial).unwrap();
        assert_eq!(
            plan.steps.iter().map(|o| o.to_string()).collect::<Vec<_>>(),
            vec!["GoToRed()", "GoToGreen()"]
        );
        // Every accepting path passes a red-visited state.
        for i in graph.accepting_nodes() {
            assert!(graph.nodes[i]
                .state
                .sym
                .contains(&crate::relational::Atom::nullary("RedVisited")));
        }
    }

    #[test]
    fn replan_after_failure_matches() {
        let (model, ops, s0) = blocks_model();
        let fsa = compile_to_fsa(&parse_ltl("F On(b1,b2)").unwrap()).unwrap();
        let plan = replan(&model, &fsa, &s0, fsa.initial, &ops, &CostModel::Unit, DEFAULT_GAMMA)
            .unwrap();
        assert_eq!(plan.len(), 2);
        assert!(plan_is_valid(&model, &fsa, &s0, &plan));
    }

    #[test]
    fn cost_and_reward_agree_under_unit_costs() {
        let (model, ops, s0) = blocks_model();
        for formula in ["F On(b1,b2)", "F (On(b1,b2) & F On(b2,b3))", "F On(b3,b1)"] {
            let fsa = compile_to_fsa(&parse_ltl(formula).unwrap()).unwrap();
            let graph =
                build_product(&model, &fsa, &s0, &ops, &CostModel::Unit, BuildOptions::default())
                    .unwrap();
            let reward = value_iteration(&graph, DEFAULT_GAMMA, DEFAULT_SWEEP_CAP);
            let cost = cost_value_iteration(&graph, DEFAULT_GAMMA, DEFAULT_SWEEP_CAP);
            let p1 = extract_plan(&graph, &reward, graph.initial).unwrap();
            let p2 = extract_plan_by_cost(&graph, &cost, &reward.values, graph.initial).unwrap();
            assert_eq!(p1.len(), p2.len(), "{formula}");
        }
    }
}
