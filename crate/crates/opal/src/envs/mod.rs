//! Deterministic desk-scale evaluation domains: a key/lock room grid with a
//! low-level navigation layer, a target-visiting domain with precedence
//! constraints, and a block-stacking world. Each exposes its object set,
//! predicate vocabulary, a labeling function, and grounded-operator
//! execution.

pub mod blocks;
pub mod map;
pub mod reacher;
pub mod room;

pub use blocks::BlocksEnv;
pub use map::{Cell, Coord, RoomMap};
pub use reacher::ReacherEnv;
pub use room::{ControllerMode, RoomEnv};

use thiserror::Error;

use crate::relational::{Atom, GroundedOperator, ObjectId, PredicateSig, SymbolicState};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("unknown operator {0}")]
    UnknownOperator(GroundedOperator),
    #[error("map parse error at line {line}, column {col}: {msg}")]
    MapParse { line: usize, col: usize, msg: String },
    #[error("controller exceeded its step budget of {budget} executing {op}")]
    ControllerBudget { op: GroundedOperator, budget: u64 },
    #[error("unknown environment {0:?}")]
    UnknownEnvironment(String),
}

/// Result of one grounded-operator execution. `steps` counts primitive
/// environment interactions; failed operators leave the state unchanged and
/// cost none.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecOutcome {
    pub success: bool,
    pub steps: u64,
}

/// Operator schema declaration: argument sorts plus the low-level controller
/// the operator is bound to.
#[derive(Debug, Clone)]
pub struct OperatorSchema {
    pub name: String,
    pub arg_sorts: Vec<String>,
    pub controller: String,
}

/// Static description of a domain instance.
#[derive(Debug, Clone)]
pub struct EnvironmentSpec {
    pub name: String,
    pub objects: Vec<ObjectId>,
    pub predicates: Vec<PredicateSig>,
    pub schemas: Vec<OperatorSchema>,
}

impl EnvironmentSpec {
    pub fn predicate(&self, name: &str) -> Option<&PredicateSig> {
        self.predicates.iter().find(|p| p.name == name)
    }

    /// Objects of one sort, sorted by name.
    pub fn objects_of_sort(&self, sort: &str) -> Vec<ObjectId> {
        self.objects.iter().filter(|o| o.sort.as_deref() == Some(sort)).cloned().collect()
    }
}

pub trait Environment {
    fn spec(&self) -> &EnvironmentSpec;

    /// Restores the initial state. The primitive-interaction counter is not
    /// reset; it audits the whole lifetime of the instance.
    fn reset(&mut self);

    /// Complete set of atoms true in the current state.
    fn state(&self) -> SymbolicState;

    /// The fixed candidate action set: grounded operators with distinct,
    /// sort-valid arguments (room movement is restricted to adjacent room
    /// pairs). Sorted.
    fn grounded_operators(&self) -> Vec<GroundedOperator>;

    fn execute(&mut self, op: &GroundedOperator) -> Result<ExecOutcome, EnvError>;

    /// Total primitive interactions so far.
    fn env_steps(&self) -> u64;

    /// Grounded-operator executions attempted (successful or not).
    fn env_attempts(&self) -> u64;

    /// Grounded subgoal atoms available to task formulas.
    fn subgoal_atoms(&self) -> Vec<Atom> {
        let subgoal_preds: Vec<&PredicateSig> =
            self.spec().predicates.iter().filter(|p| p.is_subgoal).collect();
        let mut out = Vec::new();
        for pred in subgoal_preds {
            out.extend(ground_predicate(pred, &self.spec().objects));
        }
        out.sort();
        out
    }

    /// Predicates whose atoms the baseline learners may drop from their
    /// state keys when outside the task vocabulary: history flags that no
    /// dynamics read. Empty by default.
    fn history_predicates(&self) -> Vec<String> {
        Vec::new()
    }
}

/// All groundings of a predicate over the object set, with distinct
/// arguments, honoring declared argument sorts.
pub fn ground_predicate(pred: &PredicateSig, objects: &[ObjectId]) -> Vec<Atom> {
    let mut out = Vec::new();
    let mut args = Vec::new();
    ground_rec(pred, objects, &mut args, &mut out);
    out
}

fn ground_rec(pred: &PredicateSig, objects: &[ObjectId], args: &mut Vec<ObjectId>, out: &mut Vec<Atom>) {
    if args.len() == pred.arity {
        out.push(Atom::new(pred.name.clone(), args.clone()));
        return;
    }
    let position = args.len();
    for obj in objects {
        if args.contains(obj) {
            continue;
        }
        if let Some(sorts) = &pred.arg_sorts {
            if let Some(obj_sort) = &obj.sort {
                if &sorts[position] != obj_sort {
                    continue;
                }
            }
        }
        args.push(obj.clone());
        ground_rec(pred, objects, args, out);
        args.pop();
    }
}

/// A built-in environment instance.
#[derive(Clone)]
pub enum AnyEnv {
    Room(RoomEnv),
    Blocks(BlocksEnv),
    Reacher(ReacherEnv),
}

impl Environment for AnyEnv {
    fn spec(&self) -> &EnvironmentSpec {
        match self {
            AnyEnv::Room(e) => e.spec(),
            AnyEnv::Blocks(e) => e.spec(),
            AnyEnv::Reacher(e) => e.spec(),
        }
    }

    fn reset(&mut self) {
        match self {
            AnyEnv::Room(e) => e.reset(),
            AnyEnv::Blocks(e) => e.reset(),
            AnyEnv::Reacher(e) => e.reset(),
        }
    }

    fn state(&self) -> SymbolicState {
        match self {
            AnyEnv::Room(e) => e.state(),
            AnyEnv::Blocks(e) => e.state(),
            AnyEnv::Reacher(e) => e.state(),
        }
    }

    fn grounded_operators(&self) -> Vec<GroundedOperator> {
        match self {
            AnyEnv::Room(e) => e.grounded_operators(),
            AnyEnv::Blocks(e) => e.grounded_operators(),
            AnyEnv::Reacher(e) => e.grounded_operators(),
        }
    }

    fn execute(&mut self, op: &GroundedOperator) -> Result<ExecOutcome, EnvError> {
        match self {
            AnyEnv::Room(e) => e.execute(op),
            AnyEnv::Blocks(e) => e.execute(op),
            AnyEnv::Reacher(e) => e.execute(op),
        }
    }

    fn env_steps(&self) -> u64 {
        match self {
            AnyEnv::Room(e) => e.env_steps(),
            AnyEnv::Blocks(e) => e.env_steps(),
            AnyEnv::Reacher(e) => e.env_steps(),
        }
    }

    fn env_attempts(&self) -> u64 {
        match self {
            AnyEnv::Room(e) => e.env_attempts(),
            AnyEnv::Blocks(e) => e.env_attempts(),
            AnyEnv::Reacher(e) => e.env_attempts(),
        }
    }

    fn history_predicates(&self) -> Vec<String> {
        match self {
            AnyEnv::Room(e) => e.history_predicates(),
            AnyEnv::Blocks(e) => e.history_predicates(),
            AnyEnv::Reacher(e) => e.history_predicates(),
        }
    }
}

pub const ROOM_4X4_MAP: &str = include_str!("../../maps/room-4x4.map");
pub const ROOM_2X2_MAP: &str = include_str!("../../maps/room-2x2.map");
pub const ROOM_KEYLOCK_MAP: &str = include_str!("../../maps/room-keylock.map");

/// Built-in environments by name. Room instances start in `Perfect`
/// controller mode; callers wanting learned low-level control install a
/// trained controller table afterwards.
pub fn make_env(name: &str) -> Result<AnyEnv, EnvError> {
    match name {
        "room-4x4" => Ok(AnyEnv::Room(RoomEnv::from_map_text("room-4x4", ROOM_4X4_MAP)?)),
        "room-2x2" => Ok(AnyEnv::Room(RoomEnv::from_map_text("room-2x2", ROOM_2X2_MAP)?)),
        "room-keylock" => {
            Ok(AnyEnv::Room(RoomEnv::from_map_text("room-keylock", ROOM_KEYLOCK_MAP)?))
        }
        "blocks-3" => Ok(AnyEnv::Blocks(BlocksEnv::new(3))),
        "blocks-4" => Ok(AnyEnv::Blocks(BlocksEnv::new(4))),
        "reacher-5" => Ok(AnyEnv::Reacher(ReacherEnv::new())),
        other => match other.strip_prefix("room:") {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| EnvError::MapParse {
                    line: 0,
                    col: 0,
                    msg: format!("cannot read {path}: {e}"),
                })?;
                Ok(AnyEnv::Room(RoomEnv::from_map_text(other, &text)?))
            }
            None => Err(EnvError::UnknownEnvironment(other.to_string())),
        },
    }
}
