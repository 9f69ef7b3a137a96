//! Operation records proposed by cells and the rules that make them physics-legal.

use std::collections::BTreeMap;

use rand::Rng;

use crate::config::{EnvConfig, Nutrients};
use crate::grid::{
    Cell, CellType, Environment, Pos, AGE, AIR_NUTRIENT, EARTH_NUTRIENT, NEIGHBORS, STRUCTURE,
};
use crate::physics::NutrientLedger;
use crate::rng::{StepRng, Substep};

/// Raw output of an agent's parallel function. Untrusted until sanitized.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelInterface {
    /// Requested nutrient amounts per neighbour (in [`NEIGHBORS`] order), `[earth, air]`.
    pub gifts: [[f64; 2]; 8],
    /// Logits over [`CellType::AGENTS`].
    pub spec_logits: [f64; 4],
    /// Replacement internal state, if the logic writes one.
    pub new_internal: Option<Vec<f64>>,
}

impl ParallelInterface {
    pub fn idle() -> Self {
        Self {
            gifts: [[0.0; 2]; 8],
            spec_logits: [0.0; 4],
            new_internal: None,
        }
    }
}

/// Raw output of an agent's exclusive function.
#[derive(Debug, Clone, PartialEq)]
pub struct ExclusiveInterface {
    pub spawn: bool,
    /// Logits over [`NEIGHBORS`].
    pub direction_logits: [f64; 8],
    /// Fraction of the post-cost nutrients handed to the child.
    pub child_share: f64,
}

impl ExclusiveInterface {
    pub fn idle() -> Self {
        Self {
            spawn: false,
            direction_logits: [0.0; 8],
            child_share: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReproduceInterface {
    pub trigger: bool,
}

/// A validated parallel operation.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelOp {
    pub actor: Pos,
    pub new_internal: Option<Vec<f64>>,
    pub specialize: Option<CellType>,
    pub gifts: [[f64; 2]; 8],
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Clamp an interface into an op the actor can afford.
///
/// Gifts are only ever outgoing, only to agent neighbours, and never exceed what
/// is left after paying for a specialization.
pub fn sanitize_parallel(
    interface: &ParallelInterface,
    env: &Environment,
    actor: Pos,
    config: &EnvConfig,
) -> ParallelOp {
    let kind = env.cell_type(actor);
    debug_assert!(kind.is_agent());
    let mut stored = env.nutrients(actor);

    let logits = interface.spec_logits.map(|v| if v.is_finite() { v } else { f64::NEG_INFINITY });
    let wanted = CellType::AGENTS[argmax(&logits)];
    let specialize = (wanted != kind && stored.covers(&config.specialize_cost)).then_some(wanted);
    if specialize.is_some() {
        stored.earth -= config.specialize_cost.earth;
        stored.air -= config.specialize_cost.air;
    }

    let mut gifts = [[0.0; 2]; 8];
    for (k, &(dr, dc)) in NEIGHBORS.iter().enumerate() {
        let recipient = env.type_or_oob(actor, dr, dc);
        if !recipient.is_agent() {
            continue;
        }
        for ch in 0..2 {
            let g = interface.gifts[k][ch];
            gifts[k][ch] = if g.is_finite() && g > 0.0 { g } else { 0.0 };
        }
    }
    for (ch, available) in stored.as_array().into_iter().enumerate() {
        let total: f64 = gifts.iter().map(|g| g[ch]).sum();
        if total > available {
            let scale = if total > 0.0 { available.max(0.0) / total } else { 0.0 };
            for g in gifts.iter_mut() {
                g[ch] *= scale;
            }
            // Guard against rounding pushing the sum past the budget.
            let total: f64 = gifts.iter().map(|g| g[ch]).sum();
            if total > available {
                let fix = available / total;
                gifts.iter_mut().for_each(|g| g[ch] *= fix);
            }
        }
    }

    let internal_len = env.state_size() - crate::grid::INTERNAL_START;
    let new_internal = interface.new_internal.as_ref().and_then(|v| {
        let current = &env.state(actor)[crate::grid::INTERNAL_START..];
        let valid = v.len() == internal_len && v.iter().all(|x| x.is_finite());
        (valid && v.as_slice() != current).then(|| v.clone())
    });

    ParallelOp {
        actor,
        new_internal,
        specialize,
        gifts,
    }
}

/// Apply all parallel ops at once. Donors pay in full; recipients clamp at the cap.
pub fn apply_parallel(
    env: &mut Environment,
    ops: &[ParallelOp],
    config: &EnvConfig,
    ledger: &mut NutrientLedger,
) {
    let mut credit: BTreeMap<usize, [f64; 2]> = BTreeMap::new();
    for op in ops {
        let i = env.index(op.actor);
        let mut debit = [0.0; 2];
        if let Some(kind) = op.specialize {
            let cost = config.specialize_cost.as_array();
            for ch in 0..2 {
                debit[ch] += cost[ch];
                ledger.op_costs[ch] += cost[ch];
            }
            env.set_type(op.actor, kind);
        }
        for (k, &(dr, dc)) in NEIGHBORS.iter().enumerate() {
            let g = op.gifts[k];
            if g[0] == 0.0 && g[1] == 0.0 {
                continue;
            }
            let to = env.offset(op.actor, dr, dc).expect("sanitized gift target");
            let entry = credit.entry(env.index(to)).or_default();
            for ch in 0..2 {
                entry[ch] += g[ch];
                debit[ch] += g[ch];
            }
        }
        let s = env.state_at_mut(i);
        s[EARTH_NUTRIENT] = (s[EARTH_NUTRIENT] - debit[0]).max(0.0);
        s[AIR_NUTRIENT] = (s[AIR_NUTRIENT] - debit[1]).max(0.0);
        if let Some(internal) = &op.new_internal {
            s[crate::grid::INTERNAL_START..].copy_from_slice(internal);
        }
    }
    for (i, add) in credit {
        let s = env.state_at_mut(i);
        for (ch, idx) in [EARTH_NUTRIENT, AIR_NUTRIENT].into_iter().enumerate() {
            let total = s[idx] + add[ch];
            let kept = total.min(config.max_nutrient_cell);
            ledger.cap_loss[ch] += total - kept;
            s[idx] = kept;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExclusiveKind {
    AirSpread,
    EarthSlide,
    Spawn,
}

/// A proposed two-cell write: the actor cell and one neighbouring target.
#[derive(Debug, Clone, PartialEq)]
pub struct ExclusiveOp {
    pub kind: ExclusiveKind,
    pub actor: Pos,
    pub target: Pos,
    pub new_target: Cell,
    pub new_actor: Cell,
    /// Nutrients consumed by the operation itself.
    pub cost: [f64; 2],
    /// Nutrients wiped from the overwritten target.
    pub destroyed: [f64; 2],
}

fn pick<R: Rng + ?Sized>(rng: &mut R, len: usize) -> usize {
    if len == 1 {
        0
    } else {
        rng.random_range(0..len)
    }
}

fn uniform_index(u: f64, len: usize) -> usize {
    ((u * len as f64) as usize).min(len - 1)
}

/// Every Air cell copies itself into one random neighbouring Void cell.
pub fn propose_air(env: &Environment, rng: &StepRng) -> Vec<ExclusiveOp> {
    let mut ops = Vec::new();
    for i in 0..env.len() {
        if env.type_at(i) != CellType::Air {
            continue;
        }
        let actor = env.pos(i);
        let voids: Vec<Pos> = NEIGHBORS
            .iter()
            .filter_map(|&(dr, dc)| env.offset(actor, dr, dc))
            .filter(|&p| env.cell_type(p) == CellType::Void)
            .collect();
        if voids.is_empty() {
            continue;
        }
        let target = voids[uniform_index(rng.cell_uniform(Substep::AirSpread, i), voids.len())];
        ops.push(ExclusiveOp {
            kind: ExclusiveKind::AirSpread,
            actor,
            target,
            new_target: Cell::empty(CellType::Air, env.state_size()),
            new_actor: env.cell(actor),
            cost: [0.0; 2],
            destroyed: [0.0; 2],
        });
    }
    ops
}

fn is_open(kind: CellType) -> bool {
    matches!(kind, CellType::Void | CellType::Air)
}

/// Supported Earth slides sideways when both the side cell and the one below it are open.
pub fn propose_earth(env: &Environment, rng: &StepRng) -> Vec<ExclusiveOp> {
    let mut ops = Vec::new();
    for i in 0..env.len() {
        if env.type_at(i) != CellType::Earth {
            continue;
        }
        let actor = env.pos(i);
        let below = env.type_or_oob(actor, 1, 0);
        if below.is_intangible() || below == CellType::OutOfBounds {
            continue;
        }
        let sides: Vec<i32> = [-1, 1]
            .into_iter()
            .filter(|&s| is_open(env.type_or_oob(actor, 0, s)) && is_open(env.type_or_oob(actor, 1, s)))
            .collect();
        if sides.is_empty() {
            continue;
        }
        let s = sides[uniform_index(rng.cell_uniform(Substep::EarthSlide, i), sides.len())];
        let target = env.offset(actor, 0, s).expect("open side is in bounds");
        ops.push(ExclusiveOp {
            kind: ExclusiveKind::EarthSlide,
            actor,
            target,
            new_target: env.cell(actor),
            new_actor: env.cell(target),
            cost: [0.0; 2],
            destroyed: [0.0; 2],
        });
    }
    ops
}

fn softmax_sample(logits: &[f64; 8], u: f64) -> usize {
    let finite: Vec<f64> = logits
        .iter()
        .map(|v| if v.is_finite() { *v } else { f64::NEG_INFINITY })
        .collect();
    let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return uniform_index(u, 8);
    }
    let weights: Vec<f64> = finite.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    let x = u * total;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if x < acc {
            return k;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(7)
}

/// Validate a single spawn intent. Returns `None` when the spawn cannot happen.
pub fn sanitize_spawn(
    interface: &ExclusiveInterface,
    env: &Environment,
    actor: Pos,
    config: &EnvConfig,
    u: f64,
) -> Option<ExclusiveOp> {
    if !interface.spawn {
        return None;
    }
    let dir = softmax_sample(&interface.direction_logits, u);
    let (dr, dc) = NEIGHBORS[dir];
    let target = env.offset(actor, dr, dc)?;
    let target_cell = env.cell(target);
    if !target_cell.kind.is_replaceable() {
        return None;
    }
    let stored = env.nutrients(actor);
    if !stored.covers(&config.spawn_cost) {
        return None;
    }
    let share = if interface.child_share.is_finite() {
        interface.child_share.clamp(0.0, 1.0)
    } else {
        0.5
    };
    let post = Nutrients::new(
        stored.earth - config.spawn_cost.earth,
        stored.air - config.spawn_cost.air,
    );
    let child_n = Nutrients::new(post.earth * share, post.air * share);
    let actor_n = Nutrients::new(post.earth - child_n.earth, post.air - child_n.air);

    let mut new_actor = env.cell(actor);
    new_actor.set_nutrients(actor_n);
    let mut child = new_actor.clone();
    child.kind = CellType::AgentUnspecialized;
    child.set_nutrients(child_n);
    child.state[STRUCTURE] = 0.0;
    child.state[AGE] = new_actor.state[AGE];

    Some(ExclusiveOp {
        kind: ExclusiveKind::Spawn,
        actor,
        target,
        new_target: child,
        new_actor,
        cost: config.spawn_cost.as_array(),
        destroyed: target_cell.nutrients().as_array(),
    })
}

/// Validate every agent's spawn intent.
pub fn propose_spawn(
    env: &Environment,
    interfaces: &[(Pos, ExclusiveInterface)],
    config: &EnvConfig,
    rng: &StepRng,
) -> Vec<ExclusiveOp> {
    interfaces
        .iter()
        .filter_map(|(actor, iface)| {
            let u = rng.cell_uniform(Substep::Spawn, env.index(*actor));
            sanitize_spawn(iface, env, *actor, config, u)
        })
        .collect()
}

/// What `resolve_exclusive` did, for accounting and write-safety checks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResolveOutcome {
    /// Indices into the submitted ops, in commit order.
    pub committed: Vec<usize>,
    /// Every cell written, one entry per write.
    pub writes: Vec<Pos>,
}

/// Pick one uniform winner per target, cancel winners whose own cell is
/// overwritten by another committed winner, then commit the rest.
///
/// A winner whose overwriter is itself cancelled goes ahead; ops caught in a
/// cycle of mutual overwrites are all cancelled.
pub fn resolve_exclusive<R: Rng + ?Sized>(
    env: &mut Environment,
    ops: &[ExclusiveOp],
    rng: &mut R,
    ledger: &mut NutrientLedger,
) -> ResolveOutcome {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut acting = std::collections::BTreeSet::new();
    for (k, op) in ops.iter().enumerate() {
        // One op per actor; later duplicates are ignored.
        if acting.insert(env.index(op.actor)) {
            groups.entry(env.index(op.target)).or_default().push(k);
        }
    }
    // target cell index -> winning op
    let mut winner_at: BTreeMap<usize, usize> = BTreeMap::new();
    for (&target, members) in &groups {
        winner_at.insert(target, members[pick(rng, members.len())]);
    }

    #[derive(Clone, Copy, PartialEq)]
    enum State {
        Unknown,
        Visiting,
        Valid,
        Invalid,
    }
    let mut state = vec![State::Unknown; ops.len()];
    fn validity(
        k: usize,
        ops: &[ExclusiveOp],
        env: &Environment,
        winner_at: &BTreeMap<usize, usize>,
        state: &mut [State],
    ) -> bool {
        match state[k] {
            State::Valid => return true,
            State::Invalid | State::Visiting => return false,
            State::Unknown => {}
        }
        state[k] = State::Visiting;
        let overwriter = winner_at.get(&env.index(ops[k].actor)).copied();
        let ok = match overwriter {
            None => true,
            Some(x) => !validity(x, ops, env, winner_at, state),
        };
        state[k] = if ok { State::Valid } else { State::Invalid };
        ok
    }

    let winners: Vec<usize> = winner_at.values().copied().collect();
    let mut in_cycle = vec![false; ops.len()];
    for &w in &winners {
        // Detect cycles along the overwriter chain first.
        let mut seen = Vec::new();
        let mut cur = w;
        loop {
            if seen.contains(&cur) {
                let start = seen.iter().position(|&x| x == cur).unwrap();
                for &c in &seen[start..] {
                    in_cycle[c] = true;
                }
                break;
            }
            seen.push(cur);
            match winner_at.get(&env.index(ops[cur].actor)) {
                Some(&next) => cur = next,
                None => break,
            }
        }
    }
    for (k, cyc) in in_cycle.iter().enumerate() {
        if *cyc {
            state[k] = State::Invalid;
        }
    }

    let mut outcome = ResolveOutcome::default();
    let committed: Vec<usize> = winners
        .into_iter()
        .filter(|&w| validity(w, ops, env, &winner_at, &mut state))
        .collect();
    for &k in &committed {
        let op = &ops[k];
        env.set_cell(op.target, &op.new_target);
        env.set_cell(op.actor, &op.new_actor);
        outcome.writes.push(op.target);
        outcome.writes.push(op.actor);
        for ch in 0..2 {
            ledger.op_costs[ch] += op.cost[ch];
            ledger.destroyed[ch] += op.destroyed[ch];
        }
    }
    outcome.committed = committed;
    outcome
}
