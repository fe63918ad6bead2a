//! Room graphs: small walkable grids joined by doors.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::WorldError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoomId(pub u32);

impl fmt::Display for RoomId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoomKind {
    Kitchen,
    Livingroom,
    Bedroom,
    Office,
    Bathroom,
}

impl RoomKind {
    pub fn name(self) -> &'static str {
        match self {
            RoomKind::Kitchen => "kitchen",
            RoomKind::Livingroom => "livingroom",
            RoomKind::Bedroom => "bedroom",
            RoomKind::Office => "office",
            RoomKind::Bathroom => "bathroom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: u16,
    pub y: u16,
}

impl Cell {
    pub const fn new(x: u16, y: u16) -> Self {
        Cell { x, y }
    }

    pub fn manhattan(self, other: Cell) -> u32 {
        (self.x.abs_diff(other.x) + self.y.abs_diff(other.y)) as u32
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Position {
    pub room: RoomId,
    pub cell: Cell,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Room {
    pub id: RoomId,
    pub kind: RoomKind,
    pub width: u16,
    pub height: u16,
    /// Cells that cannot be walked on.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub blocked: Vec<Cell>,
}

impl Room {
    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn is_walkable(&self, cell: Cell) -> bool {
        cell.x < self.width && cell.y < self.height && !self.blocked.contains(&cell)
    }

    /// Center cell, or the first walkable cell in row-major order when the
    /// center is blocked.
    pub fn anchor(&self) -> Cell {
        let center = Cell::new(self.width / 2, self.height / 2);
        if self.is_walkable(center) {
            return center;
        }
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| Cell::new(x, y)))
            .find(|c| self.is_walkable(*c))
            .unwrap_or(center)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Door {
    pub a: RoomId,
    pub a_cell: Cell,
    pub b: RoomId,
    pub b_cell: Cell,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoomGraph {
    pub id: String,
    pub rooms: Vec<Room>,
    pub doors: Vec<Door>,
}

/// A validated room graph with a flat cell index for path queries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RoomGraph", into = "RoomGraph")]
pub struct Layout {
    graph: RoomGraph,
    offsets: Vec<usize>,
    adjacency: Vec<Vec<usize>>,
}

impl From<Layout> for RoomGraph {
    fn from(layout: Layout) -> Self {
        layout.graph
    }
}

impl TryFrom<RoomGraph> for Layout {
    type Error = WorldError;

    fn try_from(graph: RoomGraph) -> Result<Self, Self::Error> {
        Layout::new(graph)
    }
}

impl Layout {
    pub fn new(graph: RoomGraph) -> Result<Self, WorldError> {
        let mut seen = BTreeSet::new();
        for room in &graph.rooms {
            if !seen.insert(room.id) {
                return Err(WorldError::InvalidTask(format!("duplicate room id {}", room.id)));
            }
            if room.width == 0 || room.height == 0 {
                return Err(WorldError::InvalidTask(format!("room {} has an empty grid", room.id)));
            }
        }
        if graph.rooms.is_empty() {
            return Err(WorldError::InvalidTask("layout has no rooms".into()));
        }
        let mut offsets = Vec::with_capacity(graph.rooms.len() + 1);
        let mut total = 0usize;
        for room in &graph.rooms {
            offsets.push(total);
            total += room.width as usize * room.height as usize;
        }
        offsets.push(total);

        let mut layout = Layout { graph, offsets, adjacency: vec![Vec::new(); total] };
        for door in &layout.graph.doors {
            for (room, cell) in [(door.a, door.a_cell), (door.b, door.b_cell)] {
                let ok = layout.room(room).map(|r| r.is_walkable(cell)).unwrap_or(false);
                if !ok {
                    return Err(WorldError::InvalidTask(format!(
                        "door references missing room or unwalkable cell {room}:{cell}"
                    )));
                }
            }
        }
        for (ri, room) in layout.graph.rooms.iter().enumerate() {
            for y in 0..room.height {
                for x in 0..room.width {
                    let cell = Cell::new(x, y);
                    if !room.is_walkable(cell) {
                        continue;
                    }
                    let here = layout.offsets[ri] + y as usize * room.width as usize + x as usize;
                    // Fixed neighbor order keeps searches deterministic.
                    let candidates = [
                        (x as i32, y as i32 - 1),
                        (x as i32 - 1, y as i32),
                        (x as i32 + 1, y as i32),
                        (x as i32, y as i32 + 1),
                    ];
                    for (nx, ny) in candidates {
                        if nx < 0 || ny < 0 {
                            continue;
                        }
                        let n = Cell::new(nx as u16, ny as u16);
                        if room.is_walkable(n) {
                            let idx = layout.offsets[ri] + n.y as usize * room.width as usize + n.x as usize;
                            layout.adjacency[here].push(idx);
                        }
                    }
                }
            }
        }
        let doors = layout.graph.doors.clone();
        for door in &doors {
            let a = layout.index_of(Position { room: door.a, cell: door.a_cell }).expect("checked");
            let b = layout.index_of(Position { room: door.b, cell: door.b_cell }).expect("checked");
            layout.adjacency[a].push(b);
            layout.adjacency[b].push(a);
        }

        let walkable: Vec<usize> = (0..total).filter(|&i| layout.is_walkable_index(i)).collect();
        let Some(&start) = walkable.first() else {
            return Err(WorldError::InvalidTask("layout has no walkable cells".into()));
        };
        let dist = layout.distances_from_index(start);
        if walkable.iter().any(|&i| dist[i] == u32::MAX) {
            return Err(WorldError::InvalidTask(format!("layout {} is disconnected", layout.graph.id)));
        }
        Ok(layout)
    }

    pub fn id(&self) -> &str {
        &self.graph.id
    }

    pub fn graph(&self) -> &RoomGraph {
        &self.graph
    }

    pub fn rooms(&self) -> &[Room] {
        &self.graph.rooms
    }

    pub fn room(&self, id: RoomId) -> Option<&Room> {
        self.graph.rooms.iter().find(|r| r.id == id)
    }

    fn room_index(&self, id: RoomId) -> Option<usize> {
        self.graph.rooms.iter().position(|r| r.id == id)
    }

    pub fn cell_count(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn index_of(&self, pos: Position) -> Option<usize> {
        let ri = self.room_index(pos.room)?;
        let room = &self.graph.rooms[ri];
        if !room.is_walkable(pos.cell) {
            return None;
        }
        Some(self.offsets[ri] + pos.cell.y as usize * room.width as usize + pos.cell.x as usize)
    }

    pub fn position_of(&self, index: usize) -> Position {
        let ri = self.offsets.partition_point(|&o| o <= index) - 1;
        let room = &self.graph.rooms[ri];
        let local = index - self.offsets[ri];
        Position {
            room: room.id,
            cell: Cell::new((local % room.width as usize) as u16, (local / room.width as usize) as u16),
        }
    }

    fn is_walkable_index(&self, index: usize) -> bool {
        let pos = self.position_of(index);
        self.room(pos.room).map(|r| r.is_walkable(pos.cell)).unwrap_or(false)
    }

    pub fn is_walkable(&self, pos: Position) -> bool {
        self.index_of(pos).is_some()
    }

    /// Every walkable position, in room order then row-major.
    pub fn walkable_positions(&self) -> Vec<Position> {
        (0..self.cell_count())
            .filter(|&i| self.is_walkable_index(i))
            .map(|i| self.position_of(i))
            .collect()
    }

    pub fn neighbors(&self, pos: Position) -> Vec<Position> {
        match self.index_of(pos) {
            Some(i) => self.adjacency[i].iter().map(|&j| self.position_of(j)).collect(),
            None => Vec::new(),
        }
    }

    fn distances_from_index(&self, start: usize) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.cell_count()];
        let mut queue = VecDeque::new();
        dist[start] = 0;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for &j in &self.adjacency[i] {
                if dist[j] == u32::MAX {
                    dist[j] = dist[i] + 1;
                    queue.push_back(j);
                }
            }
        }
        dist
    }

    /// BFS path lengths from `from` to every cell (`u32::MAX` when unreachable).
    pub fn distances_from(&self, from: Position) -> Vec<u32> {
        match self.index_of(from) {
            Some(i) => self.distances_from_index(i),
            None => vec![u32::MAX; self.cell_count()],
        }
    }

    /// Nearest position satisfying `goal`, with its BFS distance. Ties go to
    /// the lowest cell index.
    pub fn nearest(&self, from: Position, goal: impl Fn(Position) -> bool) -> Option<(u32, Position)> {
        let dist = self.distances_from(from);
        dist.iter()
            .enumerate()
            .filter(|(_, d)| **d != u32::MAX)
            .map(|(i, d)| (*d, i))
            .filter(|(_, i)| goal(self.position_of(*i)))
            .min()
            .map(|(d, i)| (d, self.position_of(i)))
    }
}

/// Built-in layouts referenced by id from task files.
pub fn builtin_layout(id: &str) -> Option<RoomGraph> {
    let room = |id: u32, kind: RoomKind, w: u16, h: u16| Room { id: RoomId(id), kind, width: w, height: h, blocked: vec![] };
    let door = |a: u32, ax: u16, ay: u16, b: u32, bx: u16, by: u16| Door {
        a: RoomId(a),
        a_cell: Cell::new(ax, ay),
        b: RoomId(b),
        b_cell: Cell::new(bx, by),
    };
    match id {
        // kitchen | livingroom
        // bedroom | office      bathroom hangs off the bedroom
        "house" => Some(RoomGraph {
            id: "house".into(),
            rooms: vec![
                room(1000, RoomKind::Kitchen, 6, 6),
                room(2000, RoomKind::Livingroom, 6, 6),
                room(3000, RoomKind::Bedroom, 6, 6),
                room(4000, RoomKind::Office, 6, 6),
                room(5000, RoomKind::Bathroom, 4, 4),
            ],
            doors: vec![
                door(1000, 5, 2, 2000, 0, 2),
                door(1000, 2, 5, 3000, 2, 0),
                door(2000, 3, 5, 4000, 3, 0),
                door(3000, 0, 5, 5000, 0, 0),
            ],
        }),
        // Four-room transport floorplan; the bedroom is only reachable
        // through the living room.
        "apartment" => Some(RoomGraph {
            id: "apartment".into(),
            rooms: vec![
                room(1000, RoomKind::Kitchen, 6, 6),
                room(2000, RoomKind::Livingroom, 6, 6),
                room(3000, RoomKind::Bedroom, 6, 6),
                room(4000, RoomKind::Office, 6, 6),
            ],
            doors: vec![
                door(1000, 5, 3, 2000, 0, 3),
                door(2000, 5, 3, 3000, 0, 3),
                door(2000, 3, 5, 4000, 3, 0),
            ],
        }),
        _ => None,
    }
}
