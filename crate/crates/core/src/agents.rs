//! Agent logic: perception, feature encoding and the two policy architectures.
//!
//! Both architectures share a weight-tied affine core. Global features feed
//! nine global outputs (four specialization logits, two give gates, spawn,
//! reproduce and child share). Per-neighbour features feed three outputs per
//! neighbour (earth gift, air gift, spawn direction), with the same weights for
//! all eight neighbours. The extended architecture adds a tanh hidden layer over
//! everything the cell sees, including its internal channels, and can rewrite
//! those channels.

use serde::{Deserialize, Serialize};

use crate::config::EnvConfig;
use crate::error::{Error, Result};
use crate::grid::{
    CellType, Environment, Pos, AGE, AIR_NUTRIENT, EARTH_NUTRIENT, INTERNAL_START, NEIGHBORS,
};
use crate::ops::{ExclusiveInterface, ParallelInterface, ReproduceInterface};
use crate::rng::splitmix64;

/// Global feature count.
pub const DG: usize = 24;
/// Global output count.
pub const OG: usize = 9;
/// Per-neighbour feature count.
pub const DN: usize = 20;
/// Per-neighbour output count.
pub const ON: usize = 3;
/// Parameters of the minimal architecture.
pub const MINIMAL_LEN: usize = DG * OG + DN * ON;

/// Internal channels read and written by the extended architecture.
pub const EXT_INTERNAL: usize = 8;
pub const EXT_HIDDEN: usize = 48;
const EXT_IN: usize = DG + 8 * DN + EXT_INTERNAL;
const EXT_OUT: usize = OG + 8 * ON + EXT_INTERNAL;
pub const EXTENDED_LEN: usize = MINIMAL_LEN + EXT_IN * EXT_HIDDEN + EXT_HIDDEN + EXT_HIDDEN * EXT_OUT;

// Global output rows.
const G_SPEC: usize = 0;
const G_GIVE_EARTH: usize = 4;
const G_GIVE_AIR: usize = 5;
const G_SPAWN: usize = 6;
const G_REPRODUCE: usize = 7;
const G_CHILD_SHARE: usize = 8;

// Neighbour output rows.
const N_GIFT_EARTH: usize = 0;
const N_GIFT_AIR: usize = 1;
const N_DIRECTION: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Minimal,
    Extended,
}

impl Architecture {
    pub fn param_len(self) -> usize {
        match self {
            Architecture::Minimal => MINIMAL_LEN,
            Architecture::Extended => EXTENDED_LEN,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Architecture::Minimal => 1,
            Architecture::Extended => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(Architecture::Minimal),
            2 => Some(Architecture::Extended),
            _ => None,
        }
    }

    pub fn init(self) -> Vec<f64> {
        match self {
            Architecture::Minimal => init_minimal(),
            Architecture::Extended => init_extended(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Minimal => "minimal",
            Architecture::Extended => "extended",
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minimal" => Ok(Architecture::Minimal),
            "extended" => Ok(Architecture::Extended),
            other => Err(Error::Params(format!("unknown architecture `{other}`"))),
        }
    }
}

/// A flat parameter vector tagged with its architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub arch: Architecture,
    pub values: Vec<f64>,
}

impl AgentParams {
    pub fn new(arch: Architecture, values: Vec<f64>) -> Result<Self> {
        if values.len() != arch.param_len() {
            return Err(Error::ParamsLength {
                expected: arch.param_len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Params("parameters must be finite".into()));
        }
        Ok(Self { arch, values })
    }

    pub fn init(arch: Architecture) -> Self {
        Self {
            arch,
            values: arch.init(),
        }
    }
}

/// Scales applied to raw state values before they reach the policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureScale {
    pub max_nutrient: f64,
    pub max_lifetime: f64,
}

impl FeatureScale {
    pub fn from_config(config: &EnvConfig) -> Self {
        Self {
            max_nutrient: config.max_nutrient_cell,
            max_lifetime: config.max_lifetime as f64,
        }
    }
}

/// What one agent cell sees: its 3×3 neighbourhood, row-major, centre at 4.
#[derive(Debug, Clone, PartialEq)]
pub struct Perception {
    pub types: [CellType; 9],
    /// 9 × state_size values; zero outside the grid.
    pub states: Vec<f64>,
    pub state_size: usize,
    /// Whether each cell belongs to the same organism as the centre.
    pub same: [bool; 9],
}

pub const CENTER: usize = 4;

/// Fixed gain applied to every policy output before it is interpreted.
///
/// Keeps the parameters themselves of order one, so that mutation and search
/// noise of a few hundredths moves decision thresholds by a useful amount.
pub const LOGIT_GAIN: f64 = 100.0;

/// Age in steps at which the leaf maturity feature saturates.
pub const MATURITY_STEPS: f64 = 100.0;

/// Index into a 3×3 perception for a [`NEIGHBORS`] entry.
pub const fn neighbor_slot(k: usize) -> usize {
    if k < 4 {
        k
    } else {
        k + 1
    }
}

impl Perception {
    pub fn state(&self, slot: usize) -> &[f64] {
        &self.states[slot * self.state_size..(slot + 1) * self.state_size]
    }

    pub fn kind(&self) -> CellType {
        self.types[CENTER]
    }

    pub fn internal(&self) -> &[f64] {
        &self.state(CENTER)[INTERNAL_START..]
    }
}

/// Read the 3×3 neighbourhood of `pos`, padding with OutOfBounds.
pub fn perceive(env: &Environment, pos: Pos) -> Perception {
    let n = env.state_size();
    let mut types = [CellType::OutOfBounds; 9];
    let mut states = vec![0.0; 9 * n];
    let mut same = [false; 9];
    let me = env.agent_id(pos);
    for dr in -1..=1i32 {
        for dc in -1..=1i32 {
            let slot = ((dr + 1) * 3 + (dc + 1)) as usize;
            if let Some(p) = env.offset(pos, dr, dc) {
                types[slot] = env.cell_type(p);
                states[slot * n..(slot + 1) * n].copy_from_slice(env.state(p));
                same[slot] = types[slot].is_agent() && env.agent_id(p) == me;
            }
        }
    }
    Perception {
        types,
        states,
        state_size: n,
        same,
    }
}

/// Everything an agent wants to do this step.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub parallel: ParallelInterface,
    pub exclusive: ExclusiveInterface,
    pub reproduce: ReproduceInterface,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Neighbour class index within the one-hot block: void, air, earth, same, other, solid.
fn class_of(kind: CellType, same: bool) -> usize {
    match kind {
        CellType::Void => 0,
        CellType::Air => 1,
        CellType::Earth => 2,
        k if k.is_agent() => {
            if same {
                3
            } else {
                4
            }
        }
        _ => 5,
    }
}

struct Features {
    global: [f64; DG],
    neighbors: [[f64; DN]; 8],
}

fn encode(p: &Perception, scale: &FeatureScale, noise: f64) -> Features {
    let own = p.kind();
    let s = p.state(CENTER);
    let e = s[EARTH_NUTRIENT] / scale.max_nutrient;
    let a = s[AIR_NUTRIENT] / scale.max_nutrient;
    let m = e.min(a);
    let age = s[AGE] / scale.max_lifetime;
    let is = |t: CellType| if own == t { 1.0 } else { 0.0 };
    let (is_u, is_r, is_l, is_f) = (
        is(CellType::AgentUnspecialized),
        is(CellType::AgentRoot),
        is(CellType::AgentLeaf),
        is(CellType::AgentFlower),
    );

    let mut counts = [0.0f64; 6];
    let mut same_flowers = 0.0;
    let mut up_open = 0.0;
    let mut down_earth = 0.0;
    let mut neighbors = [[0.0; DN]; 8];
    for (k, &(dr, dc)) in NEIGHBORS.iter().enumerate() {
        let slot = neighbor_slot(k);
        let kind = p.types[slot];
        let same = p.same[slot];
        let class = class_of(kind, same);
        counts[class] += 1.0;
        let sj = p.state(slot);
        let (ej, aj) = (sj[EARTH_NUTRIENT] / scale.max_nutrient, sj[AIR_NUTRIENT] / scale.max_nutrient);
        let flower_j = same && kind == CellType::AgentFlower;
        if flower_j {
            same_flowers += 1.0;
        }
        let open = matches!(kind, CellType::Void | CellType::Air);
        if dr == -1 && open {
            up_open += 1.0;
        }
        if dr == 1 && kind == CellType::Earth {
            down_earth += 1.0;
        }
        let sm = if same { 1.0 } else { 0.0 };
        let x = &mut neighbors[k];
        x[0] = 1.0;
        x[1 + class] = 1.0;
        x[7] = sm * (e - ej);
        x[8] = sm * (a - aj);
        x[9] = if flower_j { 1.0 } else { 0.0 };
        x[10] = dr as f64;
        x[11] = (dc as f64).abs();
        x[12] = is_r * if kind == CellType::Earth { 1.0 } else { 0.0 };
        x[13] = is_l * if open { 1.0 } else { 0.0 };
        x[14] = is_r * dr as f64;
        x[15] = is_l * dr as f64;
        x[16] = sm * if kind == CellType::AgentUnspecialized { 1.0 } else { 0.0 };
        x[17] = sm * if kind == CellType::AgentRoot { 1.0 } else { 0.0 };
        x[18] = sm * if kind == CellType::AgentLeaf { 1.0 } else { 0.0 };
        x[19] = is_f;
    }

    let mut g = [0.0; DG];
    g[0] = 1.0;
    g[1] = is_u;
    g[2] = is_r;
    g[3] = is_l;
    g[4] = is_f;
    for c in 0..6 {
        g[5 + c] = counts[c] / 8.0;
    }
    g[11] = e;
    g[12] = a;
    g[13] = m;
    g[14] = age;
    g[15] = same_flowers / 8.0;
    // Only leaves touching Air can bloom usefully: seeds need an exposed flower.
    g[16] = is_l * m * counts[1].min(1.0);
    g[17] = is_f * m;
    g[18] = up_open / 3.0;
    g[19] = down_earth / 3.0;
    g[20] = is_l * (s[AGE] / MATURITY_STEPS).min(1.0);
    g[21] = is_f * age;
    g[22] = is_r * m;
    g[23] = noise - 0.5;
    Features {
        global: g,
        neighbors,
    }
}

fn affine_core(params: &[f64], f: &Features) -> ([f64; OG], [[f64; ON]; 8]) {
    let (wg, wn) = params[..MINIMAL_LEN].split_at(DG * OG);
    let mut go = [0.0; OG];
    for (o, out) in go.iter_mut().enumerate() {
        let row = &wg[o * DG..(o + 1) * DG];
        *out = row.iter().zip(&f.global).map(|(w, x)| w * x).sum();
    }
    let mut no = [[0.0; ON]; 8];
    for (k, outs) in no.iter_mut().enumerate() {
        for (o, out) in outs.iter_mut().enumerate() {
            let row = &wn[o * DN..(o + 1) * DN];
            *out = row.iter().zip(&f.neighbors[k]).map(|(w, x)| w * x).sum();
        }
    }
    (go, no)
}

/// Evaluate the policy for one cell.
///
/// `noise` is a uniform draw in `[0, 1)` that the policy may use as an input.
pub fn decide(
    arch: Architecture,
    params: &[f64],
    perception: &Perception,
    scale: &FeatureScale,
    noise: f64,
) -> Decision {
    debug_assert_eq!(params.len(), arch.param_len());
    let f = encode(perception, scale, noise);
    let (mut go, mut no) = affine_core(params, &f);

    let internal_len = perception.state_size - INTERNAL_START;
    let mut new_internal = None;
    if arch == Architecture::Extended {
        let internal = perception.internal();
        let mut input = Vec::with_capacity(EXT_IN);
        input.extend_from_slice(&f.global);
        for x in &f.neighbors {
            input.extend_from_slice(x);
        }
        for c in 0..EXT_INTERNAL {
            input.push(internal.get(c).copied().unwrap_or(0.0));
        }
        let rest = &params[MINIMAL_LEN..];
        let (w1, rest) = rest.split_at(EXT_IN * EXT_HIDDEN);
        let (b1, w2) = rest.split_at(EXT_HIDDEN);
        let mut hidden = [0.0; EXT_HIDDEN];
        for (j, h) in hidden.iter_mut().enumerate() {
            let row = &w1[j * EXT_IN..(j + 1) * EXT_IN];
            let z: f64 = row.iter().zip(&input).map(|(w, x)| w * x).sum::<f64>() + b1[j];
            *h = z.tanh();
        }
        let mut out = [0.0; EXT_OUT];
        for (o, v) in out.iter_mut().enumerate() {
            let row = &w2[o * EXT_HIDDEN..(o + 1) * EXT_HIDDEN];
            *v = row.iter().zip(&hidden).map(|(w, x)| w * x).sum();
        }
        for (o, v) in go.iter_mut().enumerate() {
            *v += out[o];
        }
        for k in 0..8 {
            for o in 0..ON {
                no[k][o] += out[OG + k * ON + o];
            }
        }
        let deltas = &out[OG + 8 * ON..];
        if internal_len > 0 && deltas.iter().any(|d| *d != 0.0) {
            let mut next = internal.to_vec();
            for (c, d) in deltas.iter().enumerate().take(internal_len) {
                next[c] += d;
            }
            new_internal = Some(next);
        }
    }

    for v in go.iter_mut().chain(no.iter_mut().flatten()) {
        *v *= LOGIT_GAIN;
    }

    let s = perception.state(CENTER);
    let give = [sigmoid(go[G_GIVE_EARTH]), sigmoid(go[G_GIVE_AIR])];
    let own = [s[EARTH_NUTRIENT], s[AIR_NUTRIENT]];
    let mut gifts = [[0.0; 2]; 8];
    let mut direction_logits = [0.0; 8];
    for k in 0..8 {
        gifts[k][0] = own[0] * give[0] * sigmoid(no[k][N_GIFT_EARTH]) / 8.0;
        gifts[k][1] = own[1] * give[1] * sigmoid(no[k][N_GIFT_AIR]) / 8.0;
        direction_logits[k] = no[k][N_DIRECTION];
    }
    let mut spec_logits = [0.0; 4];
    spec_logits.copy_from_slice(&go[G_SPEC..G_SPEC + 4]);

    Decision {
        parallel: ParallelInterface {
            gifts,
            spec_logits,
            new_internal,
        },
        exclusive: ExclusiveInterface {
            spawn: go[G_SPAWN] > 0.0,
            direction_logits,
            child_share: sigmoid(go[G_CHILD_SHARE]),
        },
        reproduce: ReproduceInterface {
            trigger: perception.kind() == CellType::AgentFlower && go[G_REPRODUCE] > 0.0,
        },
    }
}

pub fn run_parallel(
    arch: Architecture,
    params: &[f64],
    perception: &Perception,
    scale: &FeatureScale,
    noise: f64,
) -> ParallelInterface {
    decide(arch, params, perception, scale, noise).parallel
}

pub fn run_exclusive(
    arch: Architecture,
    params: &[f64],
    perception: &Perception,
    scale: &FeatureScale,
    noise: f64,
) -> ExclusiveInterface {
    decide(arch, params, perception, scale, noise).exclusive
}

pub fn run_reproduce(
    arch: Architecture,
    params: &[f64],
    perception: &Perception,
    scale: &FeatureScale,
    noise: f64,
) -> ReproduceInterface {
    decide(arch, params, perception, scale, noise).reproduce
}

/// Thresholds of the hand-written policy, in normalized nutrient units.
pub mod hand {
    /// Keep everything below this; give surplus above it.
    pub const KEEP: f64 = 0.05;
    /// Roots and leaves spawn once both channels exceed this.
    pub const SPAWN: f64 = 0.3;
    /// Mature leaves touching Air turn into flowers once both channels exceed this.
    pub const FLOWER: f64 = 0.3;
    /// Flowers reproduce once both channels exceed this.
    pub const REPRODUCE: f64 = 0.5;
}

// Hand weights below are written in logit units.
fn gw(params: &mut [f64], out: usize, feature: usize, v: f64) {
    params[out * DG + feature] = v / LOGIT_GAIN;
}

fn nw(params: &mut [f64], out: usize, feature: usize, v: f64) {
    params[DG * OG + out * DN + feature] = v / LOGIT_GAIN;
}

/// The hand-designed fertile policy.
///
/// Unspecialized cells follow the neighbour majority (Earth makes roots, Air
/// makes leaves) and stick to their choice. Rich leaves without flower
/// neighbours bloom. Surplus nutrients flow to poorer cells of the same
/// organism. Rich roots grow into Earth, rich leaves into open space, and rich
/// flowers reproduce.
pub fn init_minimal() -> Vec<f64> {
    let mut p = vec![0.0; MINIMAL_LEN];
    let (u, r, l, f) = (G_SPEC, G_SPEC + 1, G_SPEC + 2, G_SPEC + 3);

    // Specialization: majority vote for unspecialized cells, sticky afterwards.
    gw(&mut p, u, 0, 0.2);
    gw(&mut p, r, 7, 40.0);
    gw(&mut p, l, 6, 40.0);
    gw(&mut p, l, 5, 40.0);
    gw(&mut p, r, 2, 50.0);
    gw(&mut p, l, 3, 50.0);
    gw(&mut p, f, 4, 200.0);
    // Leaf -> flower when rich and not next to another flower.
    gw(&mut p, f, 16, 200.0);
    gw(&mut p, f, 3, 50.0 - 200.0 * hand::FLOWER - 100.0);
    gw(&mut p, f, 20, 100.0);
    gw(&mut p, f, 15, -800.0);

    // Give gates: open above the keep threshold, flowers hoard.
    for (out, feat) in [(G_GIVE_EARTH, 11), (G_GIVE_AIR, 12)] {
        gw(&mut p, out, 0, -40.0 * hand::KEEP);
        gw(&mut p, out, feat, 40.0);
        gw(&mut p, out, 4, -50.0);
    }
    // Spawn when both channels are comfortably above cost.
    gw(&mut p, G_SPAWN, 13, 60.0);
    gw(&mut p, G_SPAWN, 0, -60.0 * hand::SPAWN);
    gw(&mut p, G_SPAWN, 1, -100.0);
    gw(&mut p, G_SPAWN, 4, -100.0);
    // Leave the air around flowers open: no spawning next to them, and mature
    // canopies stop growing.
    gw(&mut p, G_SPAWN, 15, -800.0);
    gw(&mut p, G_SPAWN, 20, -100.0);
    // Reproduce when a flower is rich.
    gw(&mut p, G_REPRODUCE, 17, 100.0);
    gw(&mut p, G_REPRODUCE, 4, -100.0 * hand::REPRODUCE);
    gw(&mut p, G_REPRODUCE, 0, -1.0);

    // Gifts go to poorer cells of the same organism, flowers first.
    for (out, diff) in [(N_GIFT_EARTH, 7), (N_GIFT_AIR, 8)] {
        nw(&mut p, out, 0, -23.0);
        nw(&mut p, out, 4, 20.0);
        nw(&mut p, out, diff, 30.0);
        nw(&mut p, out, 9, 4.0);
    }
    // Spawn direction: roots into Earth (downwards), leaves into open space (upwards).
    nw(&mut p, N_DIRECTION, 4, -10.0);
    nw(&mut p, N_DIRECTION, 5, -10.0);
    nw(&mut p, N_DIRECTION, 6, -10.0);
    nw(&mut p, N_DIRECTION, 12, 5.0);
    nw(&mut p, N_DIRECTION, 13, 5.0);
    nw(&mut p, N_DIRECTION, 14, 1.5);
    nw(&mut p, N_DIRECTION, 15, -2.0);
    p
}

/// The minimal policy embedded in the extended architecture.
///
/// Hidden-layer input weights are small fixed pseudo-random values so that
/// mutations of the output weights have an effect; output weights start at
/// zero, which makes the initial behaviour identical to [`init_minimal`].
pub fn init_extended() -> Vec<f64> {
    let mut p = init_minimal();
    let scale = 1.0 / (EXT_IN as f64).sqrt();
    let mut z = 0x5eed_u64;
    for _ in 0..EXT_IN * EXT_HIDDEN {
        z = splitmix64(z);
        let u = (z >> 11) as f64 / (1u64 << 53) as f64;
        p.push((2.0 * u - 1.0) * scale);
    }
    p.extend(std::iter::repeat_n(0.0, EXT_HIDDEN + EXT_HIDDEN * EXT_OUT));
    debug_assert_eq!(p.len(), EXTENDED_LEN);
    p
}
