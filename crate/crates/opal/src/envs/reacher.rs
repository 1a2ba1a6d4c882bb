//! Target-visiting domain: colored targets on a small grid, visited flags per
//! color, and precedence constraints — the green target requires red to have
//! been visited first, yellow requires blue. Visiting an already-visited
//! target succeeds but changes no atoms.

use crate::relational::{Atom, GroundedOperator, ObjectId, PredicateSig, SymbolicState};

use super::{EnvError, Environment, EnvironmentSpec, ExecOutcome, OperatorSchema};

const COLORS: [&str; 5] = ["green", "red", "blue", "yellow", "white"];
const TARGETS: [(i64, i64); 5] = [(0, 4), (2, 0), (4, 4), (0, 0), (4, 2)];
/// (dependent color index, prerequisite color index): green after red,
/// yellow after blue.
const PRECEDENCE: [(usize, usize); 2] = [(0, 1), (3, 2)];
const START: (i64, i64) = (2, 2);

fn cap(color: &str) -> String {
    let mut c = color.chars();
    match c.next() {
        Some(first) => first.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

#[derive(Debug, Clone)]
pub struct ReacherEnv {
    spec: EnvironmentSpec,
    visited: [bool; 5],
    arm: (i64, i64),
    steps: u64,
    attempts: u64,
}

impl ReacherEnv {
    pub fn new() -> ReacherEnv {
        let objects: Vec<ObjectId> =
            COLORS.iter().map(|c| ObjectId::with_sort(format!("ball_{c}"), "ball")).collect();
        let predicates: Vec<PredicateSig> = COLORS
            .iter()
            .map(|c| PredicateSig::new(format!("{}Visited", cap(c)), 0).subgoal())
            .collect();
        let schemas: Vec<OperatorSchema> = COLORS
            .iter()
            .map(|c| OperatorSchema {
                name: format!("GoTo{}", cap(c)),
                arg_sorts: vec![],
                controller: "reach".into(),
            })
            .collect();
        let spec = EnvironmentSpec { name: "reacher-5".into(), objects, predicates, schemas };
        ReacherEnv { spec, visited: [false; 5], arm: START, steps: 0, attempts: 0 }
    }

    fn color_index(&self, op: &GroundedOperator) -> Option<usize> {
        let name = op.schema.strip_prefix("GoTo")?;
        COLORS.iter().position(|c| cap(c) == name)
    }

    fn prerequisites_met(&self, color: usize) -> bool {
        PRECEDENCE
            .iter()
            .filter(|(dep, _)| *dep == color)
            .all(|(_, pre)| self.visited[*pre])
    }
}

impl Default for ReacherEnv {
    fn default() -> Self {
        ReacherEnv::new()
    }
}

impl Environment for ReacherEnv {
    fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    fn reset(&mut self) {
        self.visited = [false; 5];
        self.arm = START;
    }

    fn state(&self) -> SymbolicState {
        SymbolicState::new(
            COLORS
                .iter()
                .enumerate()
                .filter(|(i, _)| self.visited[*i])
                .map(|(_, c)| Atom::nullary(format!("{}Visited", cap(c)))),
        )
    }

    fn grounded_operators(&self) -> Vec<GroundedOperator> {
        let mut ops: Vec<GroundedOperator> =
            COLORS.iter().map(|c| GroundedOperator::new(format!("GoTo{}", cap(c)), vec![])).collect();
        ops.sort();
        ops
    }

    fn execute(&mut self, op: &GroundedOperator) -> Result<ExecOutcome, EnvError> {
        let color = self
            .color_index(op)
            .filter(|_| op.args.is_empty())
            .ok_or_else(|| EnvError::UnknownOperator(op.clone()))?;
        self.attempts += 1;
        if !self.prerequisites_met(color) {
            return Ok(ExecOutcome { success: false, steps: 0 });
        }
        let target = TARGETS[color];
        let dist = (self.arm.0 - target.0).abs() + (self.arm.1 - target.1).abs();
        let steps = (dist as u64).max(1);
        self.arm = target;
        self.visited[color] = true;
        self.steps += steps;
        Ok(ExecOutcome { success: true, steps })
    }

    fn env_steps(&self) -> u64 {
        self.steps
    }

    fn env_attempts(&self) -> u64 {
        self.attempts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(text: &str) -> GroundedOperator {
        GroundedOperator::parse(text).unwrap()
    }

    #[test]
    fn nothing_visited_means_no_atoms() {
        let env = ReacherEnv::new();
        assert!(env.state().is_empty());
    }

    #[test]
    fn green_requires_red_first() {
        let mut env = ReacherEnv::new();
        let out = env.execute(&op("GoToGreen()")).unwrap();
        assert!(!out.success);
        assert_eq!(out.steps, 0);
        assert!(env.execute(&op("GoToRed()")).unwrap().success);
        assert!(env.execute(&op("GoToGreen()")).unwrap().success);
        assert!(env.state().contains(&Atom::nullary("GreenVisited")));
    }

    #[test]
    fn yellow_requires_blue_first() {
        let mut env = ReacherEnv::new();
        assert!(!env.execute(&op("GoToYellow()")).unwrap().success);
        env.execute(&op("GoToBlue()")).unwrap();
        assert!(env.execute(&op("GoToYellow()")).unwrap().success);
    }

    #[test]
    fn revisits_succeed_without_state_change() {
        let mut env = ReacherEnv::new();
        env.execute(&op("GoToWhite()")).unwrap();
        let before = env.state();
        let out = env.execute(&op("GoToWhite()")).unwrap();
        assert!(out.success);
        assert_eq!(env.state(), before);
    }

    #[test]
    fn unconstrained_targets_always_reachable() {
        let mut env = ReacherEnv::new();
        for name in ["GoToRed()", "GoToBlue()", "GoToWhite()"] {
            assert!(env.execute(&op(name)).unwrap().success);
        }
    }
}
