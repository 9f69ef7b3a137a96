//! World data model: cell types, per-cell state vectors and the three grids.
//!
//! A cell's state vector is laid out as
//! `[earth_nutrient, air_nutrient, age, structural_integrity, internal...]`.
//! Values are held as `f64` in memory; snapshots store them as little-endian `f32`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::{EnvConfig, Nutrients};
use crate::error::{Error, Result};

pub const EARTH_NUTRIENT: usize = 0;
pub const AIR_NUTRIENT: usize = 1;
pub const AGE: usize = 2;
pub const STRUCTURE: usize = 3;
pub const INTERNAL_START: usize = 4;

pub type AgentId = u32;

/// Reserved id carried by every non-agent cell.
pub const NULL_AGENT: AgentId = 0;

/// The 8 neighbour offsets `(d_row, d_col)` in row-major order, centre excluded.
pub const NEIGHBORS: [(i32, i32); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// The 4 edge-sharing offsets.
pub const NEIGHBORS4: [(i32, i32); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum CellType {
    Void = 0,
    Air = 1,
    Earth = 2,
    Immovable = 3,
    Sun = 4,
    OutOfBounds = 5,
    AgentUnspecialized = 6,
    AgentRoot = 7,
    AgentLeaf = 8,
    AgentFlower = 9,
}

impl CellType {
    pub const ALL: [CellType; 10] = [
        CellType::Void,
        CellType::Air,
        CellType::Earth,
        CellType::Immovable,
        CellType::Sun,
        CellType::OutOfBounds,
        CellType::AgentUnspecialized,
        CellType::AgentRoot,
        CellType::AgentLeaf,
        CellType::AgentFlower,
    ];

    /// Agent specializations in interface order.
    pub const AGENTS: [CellType; 4] = [
        CellType::AgentUnspecialized,
        CellType::AgentRoot,
        CellType::AgentLeaf,
        CellType::AgentFlower,
    ];

    pub fn from_u8(v: u8) -> Option<CellType> {
        CellType::ALL.get(v as usize).copied()
    }

    pub fn is_agent(self) -> bool {
        matches!(
            self,
            CellType::AgentUnspecialized
                | CellType::AgentRoot
                | CellType::AgentLeaf
                | CellType::AgentFlower
        )
    }

    pub fn is_intangible(self) -> bool {
        matches!(self, CellType::Void | CellType::Air | CellType::Sun)
    }

    pub fn is_gravity_affected(self) -> bool {
        self == CellType::Earth || self.is_agent()
    }

    pub fn is_structural_propagator(self) -> bool {
        self == CellType::Earth || self.is_agent()
    }

    /// Materials a spawn or a seed may overwrite.
    pub fn is_replaceable(self) -> bool {
        matches!(self, CellType::Void | CellType::Air | CellType::Earth)
    }

    /// Index into [`CellType::AGENTS`], for agent types.
    pub fn specialization_index(self) -> Option<usize> {
        CellType::AGENTS.iter().position(|&t| t == self)
    }

    pub fn blueprint_char(self) -> Option<char> {
        match self {
            CellType::Void => Some('V'),
            CellType::Air => Some('A'),
            CellType::Earth => Some('E'),
            CellType::Immovable => Some('I'),
            CellType::Sun => Some('S'),
            _ => None,
        }
    }

    pub fn from_blueprint_char(c: char) -> Option<CellType> {
        match c {
            'V' => Some(CellType::Void),
            'A' => Some(CellType::Air),
            'E' => Some(CellType::Earth),
            'I' => Some(CellType::Immovable),
            'S' => Some(CellType::Sun),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub row: usize,
    pub col: usize,
}

impl Pos {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// One cell's full content, used where whole cells are moved or written.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub kind: CellType,
    pub state: Vec<f64>,
    pub agent_id: AgentId,
}

impl Cell {
    pub fn empty(kind: CellType, state_size: usize) -> Self {
        Self {
            kind,
            state: vec![0.0; state_size],
            agent_id: NULL_AGENT,
        }
    }

    pub fn nutrients(&self) -> Nutrients {
        Nutrients::new(self.state[EARTH_NUTRIENT], self.state[AIR_NUTRIENT])
    }

    pub fn set_nutrients(&mut self, n: Nutrients) {
        self.state[EARTH_NUTRIENT] = n.earth;
        self.state[AIR_NUTRIENT] = n.air;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    height: usize,
    width: usize,
    state_size: usize,
    types: Vec<CellType>,
    states: Vec<f64>,
    agent_ids: Vec<AgentId>,
}

impl Environment {
    /// An all-Void world with zeroed state.
    pub fn filled(height: usize, width: usize, state_size: usize, kind: CellType) -> Self {
        Self {
            height,
            width,
            state_size,
            types: vec![kind; height * width],
            states: vec![0.0; height * width * state_size],
            agent_ids: vec![NULL_AGENT; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn state_size(&self) -> usize {
        self.state_size
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    #[inline]
    pub fn index(&self, pos: Pos) -> usize {
        pos.row * self.width + pos.col
    }

    #[inline]
    pub fn pos(&self, index: usize) -> Pos {
        Pos::new(index / self.width, index % self.width)
    }

    /// The position at `pos + (dr, dc)`, if inside the grid.
    #[inline]
    pub fn offset(&self, pos: Pos, dr: i32, dc: i32) -> Option<Pos> {
        let r = pos.row as i64 + dr as i64;
        let c = pos.col as i64 + dc as i64;
        if r < 0 || c < 0 || r >= self.height as i64 || c >= self.width as i64 {
            None
        } else {
            Some(Pos::new(r as usize, c as usize))
        }
    }

    #[inline]
    pub fn cell_type(&self, pos: Pos) -> CellType {
        self.types[self.index(pos)]
    }

    #[inline]
    pub fn type_at(&self, index: usize) -> CellType {
        self.types[index]
    }

    /// Type at an offset, reading `OutOfBounds` past the edges.
    #[inline]
    pub fn type_or_oob(&self, pos: Pos, dr: i32, dc: i32) -> CellType {
        self.offset(pos, dr, dc)
            .map_or(CellType::OutOfBounds, |p| self.cell_type(p))
    }

    pub fn set_type(&mut self, pos: Pos, kind: CellType) {
        let i = self.index(pos);
        self.types[i] = kind;
    }

    #[inline]
    pub fn state(&self, pos: Pos) -> &[f64] {
        self.state_at(self.index(pos))
    }

    #[inline]
    pub fn state_at(&self, index: usize) -> &[f64] {
        &self.states[index * self.state_size..(index + 1) * self.state_size]
    }

    #[inline]
    pub fn state_mut(&mut self, pos: Pos) -> &mut [f64] {
        let i = self.index(pos);
        self.state_at_mut(i)
    }

    #[inline]
    pub fn state_at_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.states[index * self.state_size..(index + 1) * self.state_size]
    }

    #[inline]
    pub fn agent_id(&self, pos: Pos) -> AgentId {
        self.agent_ids[self.index(pos)]
    }

    #[inline]
    pub fn agent_id_at(&self, index: usize) -> AgentId {
        self.agent_ids[index]
    }

    pub fn set_agent_id(&mut self, pos: Pos, id: AgentId) {
        let i = self.index(pos);
        self.agent_ids[i] = id;
    }

    pub fn nutrients(&self, pos: Pos) -> Nutrients {
        let s = self.state(pos);
        Nutrients::new(s[EARTH_NUTRIENT], s[AIR_NUTRIENT])
    }

    pub fn cell(&self, pos: Pos) -> Cell {
        Cell {
            kind: self.cell_type(pos),
            state: self.state(pos).to_vec(),
            agent_id: self.agent_id(pos),
        }
    }

    pub fn set_cell(&mut self, pos: Pos, cell: &Cell) {
        debug_assert_eq!(cell.state.len(), self.state_size);
        let i = self.index(pos);
        self.types[i] = cell.kind;
        self.agent_ids[i] = cell.agent_id;
        self.state_at_mut(i).copy_from_slice(&cell.state);
    }

    /// Swap the full contents of two cells.
    pub fn swap_cells(&mut self, a: Pos, b: Pos) {
        let (ia, ib) = (self.index(a), self.index(b));
        if ia == ib {
            return;
        }
        self.types.swap(ia, ib);
        self.agent_ids.swap(ia, ib);
        let n = self.state_size;
        for k in 0..n {
            self.states.swap(ia * n + k, ib * n + k);
        }
    }

    pub fn types(&self) -> &[CellType] {
        &self.types
    }

    pub fn agent_ids(&self) -> &[AgentId] {
        &self.agent_ids
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn count_agents(&self) -> usize {
        self.types.iter().filter(|t| t.is_agent()).count()
    }

    pub fn is_extinct(&self) -> bool {
        self.count_agents() == 0
    }

    pub fn count_type(&self, kind: CellType) -> usize {
        self.types.iter().filter(|&&t| t == kind).count()
    }

    /// Distinct non-null agent ids present in the grid.
    pub fn live_agent_ids(&self) -> BTreeSet<AgentId> {
        self.agent_ids
            .iter()
            .copied()
            .filter(|&id| id != NULL_AGENT)
            .collect()
    }

    /// Summed nutrients over every cell, per channel.
    pub fn nutrient_totals(&self) -> [f64; 2] {
        let mut totals = [0.0f64; 2];
        for s in self.states.chunks_exact(self.state_size) {
            totals[0] += s[EARTH_NUTRIENT];
            totals[1] += s[AIR_NUTRIENT];
        }
        totals
    }

    pub fn agent_positions(&self) -> Vec<Pos> {
        self.types
            .iter()
            .enumerate()
            .filter(|(_, t)| t.is_agent())
            .map(|(i, _)| self.pos(i))
            .collect()
    }

    /// Build a world from ASCII art: blueprint letters plus `U`, `R`, `L`, `F` for
    /// agent cells, which all get agent id 1. Every state starts at zero.
    pub fn from_ascii(rows: &[&str], state_size: usize) -> Result<Environment> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        if height == 0 || width == 0 || rows.iter().any(|r| r.chars().count() != width) {
            return Err(Error::Blueprint("ragged or empty ascii world".into()));
        }
        let mut env = Environment::filled(height, width, state_size, CellType::Void);
        for (r, row) in rows.iter().enumerate() {
            for (c, ch) in row.chars().enumerate() {
                let kind = match ch {
                    'U' => CellType::AgentUnspecialized,
                    'R' => CellType::AgentRoot,
                    'L' => CellType::AgentLeaf,
                    'F' => CellType::AgentFlower,
                    other => CellType::from_blueprint_char(other)
                        .ok_or_else(|| Error::Blueprint(format!("unknown cell `{other}`")))?,
                };
                let pos = Pos::new(r, c);
                env.set_type(pos, kind);
                if kind.is_agent() {
                    env.set_agent_id(pos, 1);
                }
            }
        }
        Ok(env)
    }

    /// Serialize into the versioned snapshot format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.types.len();
        let mut out = Vec::with_capacity(SNAPSHOT_HEADER_LEN + n * (1 + 4 * self.state_size + 4));
        out.extend_from_slice(SNAPSHOT_MAGIC);
        for v in [
            SNAPSHOT_VERSION,
            self.height as u32,
            self.width as u32,
            self.state_size as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend(self.types.iter().map(|&t| t as u8));
        for &v in &self.states {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        for &id in &self.agent_ids {
            out.extend_from_slice(&id.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Environment> {
        let err = |m: &str| Error::Snapshot(m.to_string());
        if bytes.len() < SNAPSHOT_HEADER_LEN || &bytes[..4] != SNAPSHOT_MAGIC {
            return Err(err("bad magic"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        if word(0) != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!("unsupported version {}", word(0))));
        }
        let (height, width, state_size) = (word(1) as usize, word(2) as usize, word(3) as usize);
        if state_size < INTERNAL_START {
            return Err(err("state size below 4"));
        }
        let n = height
            .checked_mul(width)
            .ok_or_else(|| err("dimensions overflow"))?;
        let expected = SNAPSHOT_HEADER_LEN + n + 4 * n * state_size + 4 * n;
        if bytes.len() != expected {
            return Err(Error::Snapshot(format!(
                "expected {expected} bytes, got {}",
                bytes.len()
            )));
        }
        let mut at = SNAPSHOT_HEADER_LEN;
        let mut types = Vec::with_capacity(n);
        for &b in &bytes[at..at + n] {
            match CellType::from_u8(b) {
                Some(CellType::OutOfBounds) | None => {
                    return Err(Error::Snapshot(format!("invalid cell type byte {b}")))
                }
                Some(t) => types.push(t),
            }
        }
        at += n;
        let states = bytes[at..at + 4 * n * state_size]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        at += 4 * n * state_size;
        let agent_ids = bytes[at..]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Environment {
            height,
            width,
            state_size,
            types,
            states,
            agent_ids,
        })
    }
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"FLSN";
const SNAPSHOT_VERSION: u32 = 1;
const SNAPSHOT_HEADER_LEN: usize = 4 + 4 * 4;

/// A world layout: one character per cell plus the columns that receive a seed.
///
/// Legend: `V` Void, `A` Air, `E` Earth, `I` Immovable, `S` Sun.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Blueprint {
    pub width: usize,
    pub height: usize,
    pub rows: Vec<String>,
    pub seeds: Vec<usize>,
}

impl Blueprint {
    pub fn new(rows: Vec<String>, seeds: Vec<usize>) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        Self {
            width,
            height,
            rows,
            seeds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Blueprint("dimensions must be positive".into()));
        }
        if self.rows.len() != self.height {
            return Err(Error::Blueprint(format!(
                "expected {} rows, found {}",
                self.height,
                self.rows.len()
            )));
        }
        for (r, row) in self.rows.iter().enumerate() {
            let len = row.chars().count();
            if len != self.width {
                return Err(Error::Blueprint(format!(
                    "row {r} has width {len}, expected {}",
                    self.width
                )));
            }
            if let Some(c) = row.chars().find(|&c| CellType::from_blueprint_char(c).is_none()) {
                return Err(Error::Blueprint(format!("row {r}: unknown material `{c}`")));
            }
        }
        if let Some(&c) = self.seeds.iter().find(|&&c| c >= self.width) {
            return Err(Error::Blueprint(format!("seed column {c} outside width {}", self.width)));
        }
        Ok(())
    }

    pub fn materials(&self) -> BTreeSet<CellType> {
        self.rows
            .iter()
            .flat_map(|r| r.chars())
            .filter_map(CellType::from_blueprint_char)
            .collect()
    }

    /// Earth, Air, Immovable and Sun present and at least one seed.
    pub fn is_fertile(&self) -> bool {
        let m = self.materials();
        [CellType::Earth, CellType::Air, CellType::Immovable, CellType::Sun]
            .iter()
            .all(|t| m.contains(t))
            && !self.seeds.is_empty()
    }

    /// Parse the text form: optional `#` comments, a `seeds` line, then layout rows.
    pub fn parse(text: &str) -> Result<Blueprint> {
        let mut seeds = Vec::new();
        let mut rows = Vec::new();
        for line in text.lines() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("seeds") {
                for tok in rest.split_whitespace() {
                    seeds.push(
                        tok.parse()
                            .map_err(|_| Error::Blueprint(format!("bad seed column `{tok}`")))?,
                    );
                }
            } else {
                rows.push(line.to_string());
            }
        }
        let bp = Blueprint::new(rows, seeds);
        bp.validate()?;
        Ok(bp)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# florae blueprint v1: V void, A air, E earth, I immovable, S sun\nseeds");
        for s in &self.seeds {
            out.push_str(&format!(" {s}"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(row);
            out.push('\n');
        }
        out
    }
}

/// Build a world from a blueprint. Blueprint seeds get agent ids `1..=n`.
pub fn new_environment(blueprint: &Blueprint, config: &EnvConfig) -> Result<Environment> {
    blueprint.validate()?;
    config.validate()?;
    let mut env = Environment::filled(
        blueprint.height,
        blueprint.width,
        config.state_size,
        CellType::Void,
    );
    for (r, row) in blueprint.rows.iter().enumerate() {
        for (c, ch) in row.chars().enumerate() {
            let kind = CellType::from_blueprint_char(ch).expect("validated");
            let pos = Pos::new(r, c);
            env.set_type(pos, kind);
            if kind == CellType::Immovable {
                env.state_mut(pos)[STRUCTURE] = config.struct_generation;
            }
        }
    }
    for (i, &column) in blueprint.seeds.iter().enumerate() {
        place_seed(&mut env, column, i as AgentId + 1, config.seed_nutrients)?;
    }
    Ok(env)
}

/// Topmost row `r` in `column` where an Air/Void cell sits directly on Earth.
pub fn find_seed_site(env: &Environment, column: usize) -> Option<usize> {
    if column >= env.width() || env.height() < 2 {
        return None;
    }
    (0..env.height() - 1).find(|&r| {
        let upper = env.cell_type(Pos::new(r, column));
        let lower = env.cell_type(Pos::new(r + 1, column));
        matches!(upper, CellType::Air | CellType::Void) && lower == CellType::Earth
    })
}

/// Write a two-cell seed at the air/earth interface of `column`.
///
/// Returns the row of the upper cell. Nothing is modified on failure.
pub fn place_seed(
    env: &mut Environment,
    column: usize,
    agent_id: AgentId,
    per_cell: Nutrients,
) -> Result<usize> {
    let row = find_seed_site(env, column).ok_or(Error::SeedPlacementFailed { column })?;
    for r in [row, row + 1] {
        let pos = Pos::new(r, column);
        let mut cell = Cell::empty(CellType::AgentUnspecialized, env.state_size());
        cell.agent_id = agent_id;
        cell.set_nutrients(per_cell);
        env.set_cell(pos, &cell);
    }
    Ok(row)
}
