//! Symbolic block stacking. A gripped block keeps its tower position until
//! placed elsewhere, so Pick only toggles Holding/GripperEmpty. Ground-truth
//! operator semantics:
//!
//! - Pick(X):        GripperEmpty(), TopEmpty(X)         -> Holding(X), !GripperEmpty()
//! - Place(X,Y):     Holding(X), TopEmpty(Y), On(X,Z)    -> GripperEmpty(), On(X,Y),
//!                   TopEmpty(Z), !Holding(X), !TopEmpty(Y), !On(X,Z)
//! - Place(X,Y):     Holding(X), TopEmpty(Y), OnTable(X) -> GripperEmpty(), On(X,Y),
//!                   !Holding(X), !TopEmpty(Y), !OnTable(X)
//! - PutOnTable(X):  Holding(X), On(X,Y)                 -> GripperEmpty(), OnTable(X),
//!                   TopEmpty(Y), !Holding(X), !On(X,Y)

use crate::relational::{Atom, GroundedOperator, ObjectId, PredicateSig, SymbolicState};

use super::{EnvError, Environment, EnvironmentSpec, ExecOutcome, OperatorSchema};

#[derive(Debug, Clone)]
pub struct BlocksEnv {
    spec: EnvironmentSpec,
    n: usize,
    /// Stacks of block indices, bottom first.
    towers: Vec<Vec<usize>>,
    holding: Option<usize>,
    steps: u64,
    attempts: u64,
}

fn block_obj(i: usize) -> ObjectId {
    ObjectId::with_sort(format!("b{}", i + 1), "block")
}

impl BlocksEnv {
    pub fn new(n: usize) -> BlocksEnv {
        assert!(n >= 2, "need at least two blocks");
        let objects: Vec<ObjectId> = (0..n).map(block_obj).collect();
        let predicates = vec![
            PredicateSig::new("On", 2).sorts(&["block", "block"]).subgoal(),
            PredicateSig::new("TopEmpty", 1).sorts(&["block"]),
            PredicateSig::new("OnTable", 1).sorts(&["block"]),
            PredicateSig::new("Holding", 1).sorts(&["block"]),
            PredicateSig::new("GripperEmpty", 0),
        ];
        let schemas = vec![
            OperatorSchema { name: "Pick".into(), arg_sorts: vec!["block".into()], controller: "pick".into() },
            OperatorSchema {
                name: "Place".into(),
                arg_sorts: vec!["block".into(), "block".into()],
                controller: "place".into(),
            },
            OperatorSchema {
                name: "PutOnTable".into(),
                arg_sorts: vec!["block".into()],
                controller: "place".into(),
            },
        ];
        let spec =
            EnvironmentSpec { name: format!("blocks-{n}"), objects, predicates, schemas };
        let mut env = BlocksEnv { spec, n, towers: Vec::new(), holding: None, steps: 0, attempts: 0 };
        env.reset();
        env
    }

    fn block_index(&self, obj: &ObjectId) -> Option<usize> {
        let idx: usize = obj.name.strip_prefix('b')?.parse().ok()?;
        if idx >= 1 && idx <= self.n {
            Some(idx - 1)
        } else {
            None
        }
    }

    fn tower_of(&self, block: usize) -> (usize, usize) {
        for (t, tower) in self.towers.iter().enumerate() {
            if let Some(pos) = tower.iter().position(|b| *b == block) {
                return (t, pos);
            }
        }
        unreachable!("block {block} missing from towers")
    }

    fn is_top(&self, block: usize) -> bool {
        let (t, pos) = self.tower_of(block);
        pos + 1 == self.towers[t].len()
    }

    fn normalize(&mut self) {
        self.towers.retain(|t| !t.is_empty());
        self.towers.sort();
    }
}

impl Environment for BlocksEnv {
    fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    fn reset(&mut self) {
        // Three blocks start flat on the table; larger instances start with
        // one two-block tower (b1 on b2) plus singletons.
        if self.n <= 3 {
            self.towers = (0..self.n).map(|b| vec![b]).collect();
        } else {
            self.towers = vec![vec![1, 0]];
            for b in 2..self.n {
                self.towers.push(vec![b]);
            }
        }
        self.normalize();
        self.holding = None;
    }

    fn state(&self) -> SymbolicState {
        let mut atoms = Vec::new();
        match self.holding {
            None => atoms.push(Atom::nullary("GripperEmpty")),
            Some(b) => atoms.push(Atom::new("Holding", vec![block_obj(b)])),
        }
        for tower in &self.towers {
            atoms.push(Atom::new("OnTable", vec![block_obj(tower[0])]));
            for w in tower.windows(2) {
                atoms.push(Atom::new("On", vec![block_obj(w[1]), block_obj(w[0])]));
            }
            atoms.push(Atom::new("TopEmpty", vec![block_obj(*tower.last().unwrap())]));
        }
        SymbolicState::new(atoms)
    }

    fn grounded_operators(&self) -> Vec<GroundedOperator> {
        let mut ops = Vec::new();
        for x in 0..self.n {
            ops.push(GroundedOperator::new("Pick", vec![block_obj(x)]));
            ops.push(GroundedOperator::new("PutOnTable", vec![block_obj(x)]));
            for y in 0..self.n {
                if x != y {
                    ops.push(GroundedOperator::new("Place", vec![block_obj(x), block_obj(y)]));
                }
            }
        }
        ops.sort();
        ops
    }

    fn execute(&mut self, op: &GroundedOperator) -> Result<ExecOutcome, EnvError> {
        let unknown = || EnvError::UnknownOperator(op.clone());
        self.attempts += 1;
        let fail = Ok(ExecOutcome { success: false, steps: 0 });
        let done = |env: &mut BlocksEnv| {
            env.steps += 1;
            Ok(ExecOutcome { success: true, steps: 1 })
        };
        match (op.schema.as_str(), op.args.len()) {
            ("Pick", 1) => {
                let x = self.block_index(&op.args[0]).ok_or_else(unknown)?;
                if self.holding.is_none() && self.is_top(x) {
                    self.holding = Some(x);
                    done(self)
                } else {
                    fail
                }
            }
            ("Place", 2) => {
                let x = self.block_index(&op.args[0]).ok_or_else(unknown)?;
                let y = self.block_index(&op.args[1]).ok_or_else(unknown)?;
                if self.holding == Some(x) && self.is_top(y) && x != y {
                    let (tx, _) = self.tower_of(x);
                    self.towers[tx].pop();
                    let (ty, _) = self.tower_of(y);
                    self.towers[ty].push(x);
                    self.holding = None;
                    self.normalize();
                    done(self)
                } else {
                    fail
                }
            }
            ("PutOnTable", 1) => {
                let x = self.block_index(&op.args[0]).ok_or_else(unknown)?;
                if self.holding != Some(x) {
                    return fail;
                }
                let (tx, pos) = self.tower_of(x);
                // Requires X to currently sit on another block.
                if pos >= 1 {
                    self.towers[tx].pop();
                    self.towers.push(vec![x]);
                    self.holding = None;
                    self.normalize();
                    done(self)
                } else {
                    fail
                }
            }
            _ => Err(unknown()),
        }
    }

    fn env_steps(&self) -> u64 {
        self.steps
    }

    fn env_attempts(&self) -> u64 {
        self.attempts
    }
}
