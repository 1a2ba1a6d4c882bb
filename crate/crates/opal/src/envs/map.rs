//! ASCII room maps.
//!
//! Every cell is a fixed-width two-character token: a glyph plus an optional
//! color letter. `# ` wall, `. ` floor, `A ` agent start, `- ` open door in a
//! horizontal wall, `| ` open door in a vertical wall, `k<c>` a key of color
//! c on a floor cell, `L<c>` a locked door of color c on a shared wall.
//! Rooms are the 4-connected floor regions, named r1, r2, ... in row-major
//! discovery order. A lock yields a single directed Lock atom oriented from
//! the first-discovered room.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::EnvError;

pub const CELL_WIDTH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Wall,
    Floor,
    Door,
    LockedDoor,
}

pub type Coord = (usize, usize); // (row, col)

/// Parsed room-map geometry.
#[derive(Debug, Clone)]
pub struct RoomMap {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<Cell>,
    /// Room index of each floor cell; doors and walls carry none.
    pub room_of: Vec<Option<usize>>,
    pub n_rooms: usize,
    pub agent_start: Coord,
    /// (room, color-name) for each key.
    pub keys: Vec<(usize, String)>,
    /// Directed locks (from, to, color-name), oriented from the
    /// first-discovered room, with the door cell they occupy.
    pub locks: Vec<(usize, usize, String, Coord)>,
    /// Open doors as (room-a, room-b, door cell); both directions traversable.
    pub doors: Vec<(usize, usize, Coord)>,
    /// All geometrically adjacent ordered room pairs (sharing a wall
    /// segment), regardless of whether a door exists.
    pub adjacent: BTreeSet<(usize, usize)>,
}

fn color_name(letter: char) -> String {
    match letter {
        'r' => "red".into(),
        'b' => "blue".into(),
        'g' => "green".into(),
        'y' => "yellow".into(),
        'c' => "cyan".into(),
        'm' => "magenta".into(),
        other => format!("color_{other}"),
    }
}

impl RoomMap {
    pub fn parse(text: &str) -> Result<RoomMap, EnvError> {
        let lines: Vec<&str> =
            text.lines().filter(|l| !l.trim().is_empty()).collect();
        if lines.is_empty() {
            return Err(EnvError::MapParse { line: 1, col: 1, msg: "empty map".into() });
        }
        let cols = lines[0].chars().count() / CELL_WIDTH;
        let rows = lines.len();
        let mut cells = vec![Cell::Wall; rows * cols];
        let mut agent = None;
        let mut key_cells: Vec<(Coord, String)> = Vec::new();
        let mut lock_cells: Vec<(Coord, String)> = Vec::new();
        let mut door_cells: Vec<Coord> = Vec::new();

        for (r, line) in lines.iter().enumerate() {
            let chars: Vec<char> = line.chars().collect();
            if chars.len() != cols * CELL_WIDTH {
                return Err(EnvError::MapParse {
                    line: r + 1,
                    col: chars.len(),
                    msg: format!("expected {} characters ({} cells of width {})", cols * CELL_WIDTH, cols, CELL_WIDTH),
                });
            }
            for c in 0..cols {
                let glyph = chars[c * CELL_WIDTH];
                let color = chars[c * CELL_WIDTH + 1];
                let idx = r * cols + c;
                match glyph {
                    '#' => cells[idx] = Cell::Wall,
                    '.' => cells[idx] = Cell::Floor,
                    'A' => {
                        cells[idx] = Cell::Floor;
                        if agent.replace((r, c)).is_some() {
                            return Err(EnvError::MapParse {
                                line: r + 1,
                                col: c * CELL_WIDTH + 1,
                                msg: "more than one agent start".into(),
                            });
                        }
                    }
                    'k' => {
                        cells[idx] = Cell::Floor;
                        key_cells.push(((r, c), color_name(color)));
                    }
                    'L' => {
                        cells[idx] = Cell::LockedDoor;
                        lock_cells.push(((r, c), color_name(color)));
                    }
                    '-' | '|' => {
                        cells[idx] = Cell::Door;
                        door_cells.push((r, c));
                    }
                    other => {
                        return Err(EnvError::MapParse {
                            line: r + 1,
                            col: c * CELL_WIDTH + 1,
                            msg: format!("unknown cell glyph {other:?}"),
                        })
                    }
                }
            }
        }
        let agent_start = agent.ok_or(EnvError::MapParse {
            line: 1,
            col: 1,
            msg: "no agent start cell 'A'".into(),
        })?;

        // Flood-fill floor cells into rooms, row-major discovery order.
        let mut room_of = vec![None; rows * cols];
        let mut n_rooms = 0usize;
        for start in 0..rows * cols {
            if cells[start] != Cell::Floor || room_of[start].is_some() {
                continue;
            }
            let room = n_rooms;
            n_rooms += 1;
            let mut queue = VecDeque::from([start]);
            room_of[start] = Some(room);
            while let Some(idx) = queue.pop_front() {
                let (r, c) = (idx / cols, idx % cols);
                for (nr, nc) in neighbors(r, c, rows, cols) {
                    let nidx = nr * cols + nc;
                    if cells[nidx] == Cell::Floor && room_of[nidx].is_none() {
                        room_of[nidx] = Some(room);
                        queue.push_back(nidx);
                    }
                }
            }
        }

        let sides = |coord: Coord| -> Result<(usize, usize), EnvError> {
            let (r, c) = coord;
            let vertical = if r > 0 && r + 1 < rows {
                match (room_of[(r - 1) * cols + c], room_of[(r + 1) * cols + c]) {
                    (Some(a), Some(b)) if a != b => Some((a, b)),
                    _ => None,
                }
            } else {
                None
            };
            let horizontal = if c > 0 && c + 1 < cols {
                match (room_of[r * cols + c - 1], room_of[r * cols + c + 1]) {
                    (Some(a), Some(b)) if a != b => Some((a, b)),
                    _ => None,
                }
            } else {
                None
            };
            match (vertical, horizontal) {
                (Some(p), None) | (None, Some(p)) => Ok(p),
                _ => Err(EnvError::MapParse {
                    line: r + 1,
                    col: c * CELL_WIDTH + 1,
                    msg: "door or lock must sit between exactly two distinct rooms".into(),
                }),
            }
        };

        let mut doors = Vec::new();
        for coord in door_cells {
            let (a, b) = sides(coord)?;
            doors.push((a.min(b), a.max(b), coord));
        }
        let mut locks = Vec::new();
        for (coord, color) in lock_cells {
            let (a, b) = sides(coord)?;
            locks.push((a.min(b), a.max(b), color, coord));
        }
        let keys: Vec<(usize, String)> = key_cells
            .into_iter()
            .map(|((r, c), color)| (room_of[r * cols + c].unwrap(), color))
            .collect();

        // Geometric adjacency: rooms separated by a 1-thick wall segment or
        // joined by a door.
        let mut adjacent = BTreeSet::new();
        for r in 0..rows {
            for c in 0..cols {
                if cells[r * cols + c] == Cell::Floor {
                    continue;
                }
                let mut pairs = Vec::new();
                if r > 0 && r + 1 < rows {
                    if let (Some(a), Some(b)) = (room_of[(r - 1) * cols + c], room_of[(r + 1) * cols + c]) {
                        if a != b {
                            pairs.push((a, b));
                        }
                    }
                }
                if c > 0 && c + 1 < cols {
                    if let (Some(a), Some(b)) = (room_of[r * cols + c - 1], room_of[r * cols + c + 1]) {
                        if a != b {
                            pairs.push((a, b));
                        }
                    }
                }
                for (a, b) in pairs {
                    adjacent.insert((a, b));
                    adjacent.insert((b, a));
                }
            }
        }

        Ok(RoomMap {
            rows,
            cols,
            cells,
            room_of,
            n_rooms,
            agent_start,
            keys,
            locks,
            doors,
            adjacent,
        })
    }

    pub fn cell(&self, coord: Coord) -> Cell {
        self.cells[coord.0 * self.cols + coord.1]
    }

    pub fn room_at(&self, coord: Coord) -> Option<usize> {
        self.room_of[coord.0 * self.cols + coord.1]
    }

    /// Room names are 1-indexed by discovery order.
    pub fn room_name(&self, room: usize) -> String {
        format!("r{}", room + 1)
    }

    /// The door cell joining two rooms, open or locked.
    pub fn door_between(&self, a: usize, b: usize) -> Option<Coord> {
        let key = (a.min(b), a.max(b));
        self.doors
            .iter()
            .find(|(x, y, _)| (*x, *y) == key)
            .map(|(_, _, coord)| *coord)
            .or_else(|| {
                self.locks
                    .iter()
                    .find(|(x, y, _, _)| (*x, *y) == key)
                    .map(|(_, _, _, coord)| *coord)
            })
    }

    /// Cells of one room, sorted.
    pub fn room_cells(&self, room: usize) -> Vec<Coord> {
        (0..self.rows * self.cols)
            .filter(|idx| self.room_of[*idx] == Some(room))
            .map(|idx| (idx / self.cols, idx % self.cols))
            .collect()
    }

    /// Central cell of a room (median of its sorted cell list).
    pub fn room_center(&self, room: usize) -> Coord {
        let cells = self.room_cells(room);
        cells[cells.len() / 2]
    }

    /// First floor cell of `room` adjacent to the door cell.
    pub fn entry_cell(&self, room: usize, door: Coord) -> Option<Coord> {
        neighbors(door.0, door.1, self.rows, self.cols)
            .into_iter()
            .find(|&c| self.room_at(c) == Some(room))
    }

    /// Breadth-first grid distance when movement is restricted to `room`'s
    /// cells plus the goal cell itself (a boundary door). `None` when
    /// unreachable.
    pub fn bfs_distance(&self, room: usize, from: Coord, goal: Coord) -> Option<u64> {
        if from == goal {
            return Some(0);
        }
        let mut dist: BTreeMap<Coord, u64> = BTreeMap::from([(from, 0)]);
        let mut queue = VecDeque::from([from]);
        while let Some(cur) = queue.pop_front() {
            for next in neighbors(cur.0, cur.1, self.rows, self.cols) {
                let inside = self.room_at(next) == Some(room) || next == goal;
                if inside && !dist.contains_key(&next) {
                    let d = dist[&cur] + 1;
                    if next == goal {
                        return Some(d);
                    }
                    dist.insert(next, d);
                    queue.push_back(next);
                }
            }
        }
        None
    }
}

pub fn neighbors(r: usize, c: usize, rows: usize, cols: usize) -> Vec<Coord> {
    let mut out = Vec::with_capacity(4);
    if r > 0 {
        out.push((r - 1, c));
    }
    if r + 1 < rows {
        out.push((r + 1, c));
    }
    if c > 0 {
        out.push((r, c - 1));
    }
    if c + 1 < cols {
        out.push((r, c + 1));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    // 2x2 rooms of 3x3 cells: r1 r2 / r3 r4; open doors r1-r2 and r1-r3,
    // red lock r3-r4, red key in r2.
    pub const TINY: &str = "\
# # # # # # # # # \n\
# . . . | . . . # \n\
# A . . # . kr. # \n\
# . . . # . . . # \n\
# - # # # # # # # \n\
# . . . # . . . # \n\
# . . . Lr. . . # \n\
# . . . # . . . # \n\
# # # # # # # # # \n";

    #[test]
    fn parses_tiny_map() {
        let map = RoomMap::parse(TINY).unwrap();
        assert_eq!(map.n_rooms, 4);
        assert_eq!(map.agent_start, (2, 1));
        assert_eq!(map.keys, vec![(1, "red".to_string())]);
        assert_eq!(map.locks.len(), 1);
        let (a, b, color, _) = &map.locks[0];
        assert_eq!((*a, *b, color.as_str()), (2, 3, "red"));
        assert_eq!(map.doors.len(), 2);
        // All six lattice adjacencies exist geometrically (ordered pairs).
        assert_eq!(map.adjacent.len(), 8);
    }

    #[test]
    fn door_and_entry_lookup() {
        let map = RoomMap::parse(TINY).unwrap();
        let door = map.door_between(0, 1).unwrap();
        assert_eq!(map.cell(door), Cell::Door);
        let entry = map.entry_cell(1, door).unwrap();
        assert_eq!(map.room_at(entry), Some(1));
    }

    #[test]
    fn bfs_distance_within_room() {
        let map = RoomMap::parse(TINY).unwrap();
        let door = map.door_between(0, 1).unwrap();
        // From the agent start (2,1) to the right-wall door (1,4): 4 steps.
        assert_eq!(map.bfs_distance(0, (2, 1), door), Some(4));
    }

    #[test]
    fn rejects_misaligned_rows() {
        let bad = "# # # \n# . # # \n# # # \n";
        assert!(matches!(RoomMap::parse(bad), Err(EnvError::MapParse { .. })));
    }

    #[test]
    fn rejects_lock_not_between_rooms() {
        let bad = "\
# # # # # \n\
# A . . # \n\
# . Lr. # \n\
# . . . # \n\
# # # # # \n";
        assert!(matches!(RoomMap::parse(bad), Err(EnvError::MapParse { .. })));
    }

    #[test]
    fn rejects_unknown_glyph() {
        let bad = "# # # \n# %%# \n# # # \n";
        assert!(matches!(RoomMap::parse(bad), Err(EnvError::MapParse { .. })));
    }
}
