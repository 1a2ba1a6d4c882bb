//! Key/lock room domain. Symbolic dynamics are exactly three movement rules,
//! applied most-specific-first:
//!
//! 1. At(X), Connect(X,Y)                   -> At(Y), Visited(Y), !At(X)
//! 2. At(X), Connect(X,Y), RoomHasKey(X,C)  -> rule 1 plus hasKey(C), !RoomHasKey(X,C)
//!    (a key is picked up on departure from its room)
//! 3. At(X), Lock(X,Y,C), hasKey(C)         -> rule 1 plus Connect(X,Y), !Lock(X,Y,C)
//!
//! Lock atoms are directional (one per lock glyph, oriented from the
//! first-discovered room); unlocking adds Connect(X,Y) only, so an opened
//! door is traversable one way until the reverse direction is unlocked too.
//! Low-level execution runs a goal-conditioned controller to the door cell.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::control::{greedy_rollout, GoalConditionedQ};
use crate::relational::{Atom, GroundedOperator, ObjectId, PredicateSig, SymbolicState};

use super::map::{Coord, RoomMap};
use super::{EnvError, Environment, EnvironmentSpec, ExecOutcome, OperatorSchema};

/// How grounded movement is realized at the grid level.
#[derive(Debug, Clone)]
pub enum ControllerMode {
    /// Breadth-first shortest paths; deterministic, never exceeds budgets.
    Perfect,
    /// Greedy rollout of a trained goal-conditioned table.
    Learned(GoalConditionedQ),
}

#[derive(Debug, Clone)]
pub struct RoomEnv {
    spec: EnvironmentSpec,
    pub map: RoomMap,
    pub controller: ControllerMode,
    pub step_budget: u64,
    rng: ChaCha8Rng,

    cur_room: usize,
    visited: BTreeSet<usize>,
    has_keys: BTreeSet<String>,
    room_keys: BTreeMap<usize, Vec<String>>,
    /// Directed lock atoms (from, to, color).
    locks: BTreeSet<(usize, usize, String)>,
    /// Directed connectivity atoms.
    connects: BTreeSet<(usize, usize)>,
    pub agent_cell: Coord,
    steps: u64,
    attempts: u64,
}

/// Which rule fired for a successful move.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MoveRule {
    Plain,
    KeyPickup(String),
    Unlock(String),
}

impl RoomEnv {
    pub fn from_map_text(name: &str, text: &str) -> Result<RoomEnv, EnvError> {
        let map = RoomMap::parse(text)?;
        let mut colors: BTreeSet<String> = map.keys.iter().map(|(_, c)| c.clone()).collect();
        colors.extend(map.locks.iter().map(|(_, _, c, _)| c.clone()));

        let mut objects: Vec<ObjectId> =
            (0..map.n_rooms).map(|r| ObjectId::with_sort(map.room_name(r), "room")).collect();
        objects.extend(colors.iter().map(|c| ObjectId::with_sort(c.clone(), "color")));

        let predicates = vec![
            PredicateSig::new("At", 1).sorts(&["room"]),
            PredicateSig::new("Visited", 1).sorts(&["room"]).subgoal(),
            PredicateSig::new("Connect", 2).sorts(&["room", "room"]),
            PredicateSig::new("Lock", 3).sorts(&["room", "room", "color"]),
            PredicateSig::new("hasKey", 1).sorts(&["color"]),
            PredicateSig::new("RoomHasKey", 2).sorts(&["room", "color"]),
        ];
        let schemas = vec![OperatorSchema {
            name: "FromTo".into(),
            arg_sorts: vec!["room".into(), "room".into()],
            controller: "navigate".into(),
        }];
        let spec = EnvironmentSpec { name: name.into(), objects, predicates, schemas };

        let mut env = RoomEnv {
            spec,
            map,
            controller: ControllerMode::Perfect,
            step_budget: 200,
            rng: ChaCha8Rng::seed_from_u64(0),
            cur_room: 0,
            visited: BTreeSet::new(),
            has_keys: BTreeSet::new(),
            room_keys: BTreeMap::new(),
            locks: BTreeSet::new(),
            connects: BTreeSet::new(),
            agent_cell: (0, 0),
            steps: 0,
            attempts: 0,
        };
        env.reset();
        Ok(env)
    }

    pub fn with_controller(mut self, controller: ControllerMode) -> RoomEnv {
        self.controller = controller;
        self
    }

    fn room_obj(&self, room: usize) -> ObjectId {
        ObjectId::with_sort(self.map.room_name(room), "room")
    }

    fn room_index(&self, obj: &ObjectId) -> Option<usize> {
        let name = &obj.name;
        let idx: usize = name.strip_prefix('r')?.parse().ok()?;
        if idx >= 1 && idx <= self.map.n_rooms {
            Some(idx - 1)
        } else {
            None
        }
    }

    /// The rule a grounded FromTo(x, y) would fire in the current state, per
    /// the most-specific-first priority; `None` when every precondition
    /// fails.
    pub fn matching_rule(&self, from: usize, to: usize) -> Option<MoveRule> {
        if self.cur_room != from {
            return None;
        }
        if let Some((_, _, color)) =
            self.locks.iter().find(|(a, b, c)| *a == from && *b == to && self.has_keys.contains(c)).cloned()
        {
            return Some(MoveRule::Unlock(color));
        }
        if self.connects.contains(&(from, to)) {
            if let Some(colors) = self.room_keys.get(&from) {
                if let Some(color) = colors.first() {
                    return Some(MoveRule::KeyPickup(color.clone()));
                }
            }
            return Some(MoveRule::Plain);
        }
        None
    }

    fn apply_rule(&mut self, from: usize, to: usize, rule: &MoveRule) {
        match rule {
            MoveRule::Plain => {}
            MoveRule::KeyPickup(color) => {
                self.has_keys.insert(color.clone());
                let keys = self.room_keys.get_mut(&from).expect("key room");
                keys.retain(|c| c != color);
                if keys.is_empty() {
                    self.room_keys.remove(&from);
                }
            }
            MoveRule::Unlock(color) => {
                self.locks.remove(&(from, to, color.clone()));
                self.connects.insert((from, to));
            }
        }
        self.cur_room = to;
        self.visited.insert(to);
    }

    /// Grid steps for one move, honoring the controller mode. The count is
    /// the path to the door cell plus one step into the next room.
    fn run_controller(&mut self, from: usize, to: usize) -> Result<u64, EnvError> {
        let door = self
            .map
            .door_between(from, to)
            .expect("connected rooms share a door");
        let steps = match &self.controller {
            ControllerMode::Perfect => self.map.bfs_distance(from, self.agent_cell, door),
            ControllerMode::Learned(q) => {
                greedy_rollout(q, &self.map, from, self.agent_cell, door, self.step_budget, &mut self.rng)
            }
        };
        let steps = steps.ok_or_else(|| EnvError::ControllerBudget {
            op: GroundedOperator::new(
                "FromTo",
                vec![self.room_obj(from), self.room_obj(to)],
            ),
            budget: self.step_budget,
        })?;
        self.agent_cell = self.map.entry_cell(to, door).expect("door borders target room");
        Ok(steps + 1)
    }
}

impl Environment for RoomEnv {
    fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    fn reset(&mut self) {
        self.cur_room = self.map.room_at(self.map.agent_start).expect("agent on floor");
        // Visited holds previously entered rooms; the start room joins it
        // only when re-entered.
        self.visited = BTreeSet::new();
        self.has_keys.clear();
        self.room_keys.clear();
        for (room, color) in &self.map.keys {
            self.room_keys.entry(*room).or_default().push(color.clone());
        }
        for keys in self.room_keys.values_mut() {
            keys.sort();
        }
        self.locks = self.map.locks.iter().map(|(a, b, c, _)| (*a, *b, c.clone())).collect();
        self.connects = self
            .map
            .doors
            .iter()
            .flat_map(|(a, b, _)| [(*a, *b), (*b, *a)])
            .collect();
        self.agent_cell = self.map.agent_start;
        self.rng = ChaCha8Rng::seed_from_u64(0);
    }

    fn state(&self) -> SymbolicState {
        let color_obj = |c: &str| ObjectId::with_sort(c, "color");
        let mut atoms = vec![Atom::new("At", vec![self.room_obj(self.cur_room)])];
        atoms.extend(self.visited.iter().map(|r| Atom::new("Visited", vec![self.room_obj(*r)])));
        atoms.extend(
            self.connects
                .iter()
                .map(|(a, b)| Atom::new("Connect", vec![self.room_obj(*a), self.room_obj(*b)])),
        );
        atoms.extend(self.locks.iter().map(|(a, b, c)| {
            Atom::new("Lock", vec![self.room_obj(*a), self.room_obj(*b), color_obj(c)])
        }));
        atoms.extend(self.has_keys.iter().map(|c| Atom::new("hasKey", vec![color_obj(c)])));
        atoms.extend(self.room_keys.iter().flat_map(|(room, colors)| {
            colors
                .iter()
                .map(|c| Atom::new("RoomHasKey", vec![self.room_obj(*room), color_obj(c)]))
                .collect::<Vec<_>>()
        }));
        SymbolicState::new(atoms)
    }

    fn grounded_operators(&self) -> Vec<GroundedOperator> {
        let mut ops: Vec<GroundedOperator> = self
            .map
            .adjacent
            .iter()
            .map(|(a, b)| GroundedOperator::new("FromTo", vec![self.room_obj(*a), self.room_obj(*b)]))
            .collect();
        ops.sort();
        ops
    }

    fn execute(&mut self, op: &GroundedOperator) -> Result<ExecOutcome, EnvError> {
        if op.schema != "FromTo" || op.args.len() != 2 {
            return Err(EnvError::UnknownOperator(op.clone()));
        }
        let from = self
            .room_index(&op.args[0])
            .ok_or_else(|| EnvError::UnknownOperator(op.clone()))?;
        let to = self
            .room_index(&op.args[1])
            .ok_or_else(|| EnvError::UnknownOperator(op.clone()))?;
        self.attempts += 1;
        match self.matching_rule(from, to) {
            None => Ok(ExecOutcome { success: false, steps: 0 }),
            Some(rule) => {
                let steps = self.run_controller(from, to)?;
                self.apply_rule(from, to, &rule);
                self.steps += steps;
                Ok(ExecOutcome { success: true, steps })
            }
        }
    }

    fn env_steps(&self) -> u64 {
        self.steps
    }

    fn env_attempts(&self) -> u64 {
        self.attempts
    }

    fn history_predicates(&self) -> Vec<String> {
        vec!["Visited".into()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{ROOM_2X2_MAP, ROOM_4X4_MAP, ROOM_KEYLOCK_MAP};

    fn op(from: &str, to: &str) -> GroundedOperator {
        GroundedOperator::new("FromTo", vec![ObjectId::new(from), ObjectId::new(to)])
    }

    #[test]
    fn labeling_matches_initial_map() {
        let env = RoomEnv::from_map_text("t", ROOM_2X2_MAP).unwrap();
        let s = env.state();
        assert!(s.contains(&Atom::parse("At(r1)").unwrap()));
        assert!(!s.contains(&Atom::parse("Visited(r1)").unwrap()), "start room not yet re-entered");
        assert!(s.contains(&Atom::parse("RoomHasKey(r2,red)").unwrap()));
        assert!(s.contains(&Atom::parse("Lock(r3,r4,red)").unwrap()));
        assert!(s.contains(&Atom::parse("Connect(r1,r2)").unwrap()));
        assert!(s.contains(&Atom::parse("Connect(r2,r1)").unwrap()));
        assert_eq!(s.iter().filter(|a| a.pred == "Lock").count(), 1);
        assert_eq!(s.iter().filter(|a| a.pred == "RoomHasKey").count(), 1);
    }

    #[test]
    fn key_is_picked_up_on_departure() {
        let mut env = RoomEnv::from_map_text("t", ROOM_2X2_MAP).unwrap();
        env.execute(&op("r1", "r2")).unwrap();
        assert!(!env.state().contains(&Atom::parse("hasKey(red)").unwrap()));
        let out = env.execute(&op("r2", "r1")).unwrap();
        assert!(out.success);
        let s = env.state();
        assert!(s.contains(&Atom::parse("hasKey(red)").unwrap()));
        assert!(!s.contains(&Atom::parse("RoomHasKey(r2,red)").unwrap()));
    }

    #[test]
    fn unlock_needs_matching_key_and_is_directional() {
        let mut env = RoomEnv::from_map_text("t", ROOM_2X2_MAP).unwrap();
        // r3 -> r4 locked red; no key yet.
        env.execute(&op("r1", "r3")).unwrap();
        let out = env.execute(&op("r3", "r4")).unwrap();
        assert!(!out.success);
        // Fetch the key: r3 -> r1 -> r2 -> r1 -> r3, picking red up when
        // leaving r2.
        for (a, b) in [("r3", "r1"), ("r1", "r2"), ("r2", "r1"), ("r1", "r3")] {
            assert!(env.execute(&op(a, b)).unwrap().success);
        }
        assert!(env.state().contains(&Atom::parse("hasKey(red)").unwrap()));
        let out = env.execute(&op("r3", "r4")).unwrap();
        assert!(out.success);
        let s = env.state();
        assert!(s.contains(&Atom::parse("Connect(r3,r4)").unwrap()));
        assert!(!s.contains(&Atom::parse("Connect(r4,r3)").unwrap()));
        assert!(s.iter().all(|a| a.pred != "Lock"));
        // The reverse direction is not connected and no lock remains to
        // unlock it, so moving back fails.
        assert!(!env.execute(&op("r4", "r3")).unwrap().success);
    }

    #[test]
    fn at_is_unique_and_visited_monotone() {
        let mut env = RoomEnv::from_map_text("t", ROOM_4X4_MAP).unwrap();
        let ops = env.grounded_operators();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut visited_count = 0;
        for _ in 0..200 {
            use rand::Rng;
            let op = &ops[rng.gen_range(0..ops.len())];
            env.execute(op).unwrap();
            let s = env.state();
            assert_eq!(s.iter().filter(|a| a.pred == "At").count(), 1);
            let now = s.iter().filter(|a| a.pred == "Visited").count();
            assert!(now >= visited_count);
            visited_count = now;
        }
    }

    #[test]
    fn failed_moves_cost_nothing_and_change_nothing() {
        let mut env = RoomEnv::from_map_text("t", ROOM_2X2_MAP).unwrap();
        let before = env.state();
        // Not at r2.
        let out = env.execute(&op("r2", "r1")).unwrap();
        assert!(!out.success);
        assert_eq!(out.steps, 0);
        assert_eq!(env.state(), before);
        assert_eq!(env.env_steps(), 0);
    }

    #[test]
    fn keylock_map_structure() {
        let env = RoomEnv::from_map_text("t", ROOM_KEYLOCK_MAP).unwrap();
        assert_eq!(env.map.n_rooms, 8);
        let s = env.state();
        assert!(s.contains(&Atom::parse("At(r5)").unwrap()));
        assert!(s.contains(&Atom::parse("Lock(r1,r4,red)").unwrap()));
        assert!(s.contains(&Atom::parse("RoomHasKey(r8,red)").unwrap()));
        // r4 is gated purely by the lock.
        assert!(!s.contains(&Atom::parse("Connect(r4,r5)").unwrap()));
        assert!(!s.contains(&Atom::parse("Connect(r4,r7)").unwrap()));
        assert!(!s.contains(&Atom::parse("Connect(r5,r4)").unwrap()));
        assert!(!s.contains(&Atom::parse("Connect(r7,r4)").unwrap()));
    }

    #[test]
    fn perfect_controller_counts_grid_steps() {
        let mut env = RoomEnv::from_map_text("t", ROOM_2X2_MAP).unwrap();
        let out = env.execute(&op("r1", "r2")).unwrap();
        assert!(out.success);
        // Start (2,2) to door (2,4) is 2 grid steps, plus 1 into r2.
        assert_eq!(out.steps, 3);
        assert_eq!(env.env_steps(), 3);
    }
}
