//! opal — learn symbolic operator models from environment transitions,
//! compile temporal-logic task instructions into finite automata, and plan
//! over the product of learned model and automaton.
//!
//! The guide under `book/` walks through every concept with runnable
//! examples; its snippets are compiled and executed as doc-tests (see
//! [`guide`]).

pub mod baselines;
pub mod control;
pub mod envs;
pub mod harness;
pub mod learn;
pub mod planner;
pub mod ltl;
pub mod relational;
pub mod tasks;

pub use relational::{
    Atom, EffectPair, GroundedOperator, LiftedAtom, LiftedEffects, ObjectId, ObjectMapping,
    PredicateSig, RelationalError, Substitution, SymbolicState, Variable,
};
pub use relational::{apply_substitution, lift_effects, unify_effect_sets};
