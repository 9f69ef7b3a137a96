//! Environment-driven substeps: gravity, structural integrity, aging and energy.

use serde::{Deserialize, Serialize};

use crate::config::EnvConfig;
use crate::grid::{
    CellType, Environment, Pos, AGE, AIR_NUTRIENT, EARTH_NUTRIENT, INTERNAL_START, NEIGHBORS,
    NEIGHBORS4, NULL_AGENT, STRUCTURE,
};

/// Per-channel accounting of every nutrient source and sink during a step.
///
/// Index 0 is the earth channel, index 1 the air channel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NutrientLedger {
    pub generated: [f64; 2],
    /// Excess lost because a recipient was already at `max_nutrient_cell`.
    pub cap_loss: [f64; 2],
    pub dissipated: [f64; 2],
    /// Specialize, spawn and reproduce costs.
    pub op_costs: [f64; 2],
    /// Nutrients that vanish when a dead agent keeps at most one channel.
    pub death_loss: [f64; 2],
    /// Nutrients wiped by overwrites: spawns onto Earth/Air, seeds, intercepted or
    /// unplaceable reproductions.
    pub destroyed: [f64; 2],
}

impl NutrientLedger {
    /// Expected change of the grid total implied by the recorded flows.
    pub fn expected_delta(&self) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (ch, o) in out.iter_mut().enumerate() {
            *o = self.generated[ch]
                - self.cap_loss[ch]
                - self.dissipated[ch]
                - self.op_costs[ch]
                - self.death_loss[ch]
                - self.destroyed[ch];
        }
        out
    }

    pub fn add(&mut self, other: &NutrientLedger) {
        for ch in 0..2 {
            self.generated[ch] += other.generated[ch];
            self.cap_loss[ch] += other.cap_loss[ch];
            self.dissipated[ch] += other.dissipated[ch];
            self.op_costs[ch] += other.op_costs[ch];
            self.death_loss[ch] += other.death_loss[ch];
            self.destroyed[ch] += other.destroyed[ch];
        }
    }
}

/// One gravity pass. Rows are scanned bottom to top so a detached block falls one
/// row per call without tearing.
pub fn gravity_step(env: &mut Environment) {
    let (h, w) = (env.height(), env.width());
    if h < 2 {
        return;
    }
    for r in (0..h - 1).rev() {
        for c in 0..w {
            let pos = Pos::new(r, c);
            let kind = env.cell_type(pos);
            if !kind.is_gravity_affected() {
                continue;
            }
            let below = Pos::new(r + 1, c);
            if !env.cell_type(below).is_intangible() {
                continue;
            }
            if kind == CellType::Earth || env.state(pos)[STRUCTURE] <= 0.0 {
                env.swap_cells(pos, below);
            }
        }
    }
}

/// One synchronous structural-integrity iteration.
///
/// Immovable cells hold `struct_generation`; Earth and agent cells take the best
/// integrity among their 8 neighbours minus their own decay; everything else is 0.
pub fn structural_iteration(env: &mut Environment, config: &EnvConfig) {
    let old: Vec<f64> = (0..env.len()).map(|i| env.state_at(i)[STRUCTURE]).collect();
    for i in 0..env.len() {
        let kind = env.type_at(i);
        let value = if kind == CellType::Immovable {
            config.struct_generation
        } else if kind.is_structural_propagator() {
            let pos = env.pos(i);
            let best = NEIGHBORS
                .iter()
                .filter_map(|&(dr, dc)| env.offset(pos, dr, dc))
                .map(|p| old[env.index(p)])
                .fold(0.0f64, f64::max);
            (best - config.struct_decay(kind)).max(0.0)
        } else {
            0.0
        };
        env.state_at_mut(i)[STRUCTURE] = value;
    }
}

pub fn structural_step(env: &mut Environment, config: &EnvConfig) {
    for _ in 0..config.struct_iterations_per_step {
        structural_iteration(env, config);
    }
}

pub fn aging_step(env: &mut Environment) {
    for i in 0..env.len() {
        if env.type_at(i).is_agent() {
            env.state_at_mut(i)[AGE] += 1.0;
        }
    }
}

/// Inject nutrients into Earth touching Immovable and Air touching Sun.
pub fn generation_step(env: &mut Environment, config: &EnvConfig, ledger: &mut NutrientLedger) {
    let max = config.max_nutrient_cell;
    for i in 0..env.len() {
        let (channel, source) = match env.type_at(i) {
            CellType::Earth => (EARTH_NUTRIENT, CellType::Immovable),
            CellType::Air => (AIR_NUTRIENT, CellType::Sun),
            _ => continue,
        };
        let pos = env.pos(i);
        let touches = NEIGHBORS4
            .iter()
            .any(|&(dr, dc)| env.type_or_oob(pos, dr, dc) == source);
        if touches {
            let s = env.state_at_mut(i);
            let before = s[channel];
            s[channel] = (before + config.generator_amount).min(max).max(before);
            ledger.generated[channel] += s[channel] - before;
        }
    }
}

/// Edge-wise diffusion inside Earth (earth channel) and inside Air (air channel).
///
/// Each shared edge moves `rate * (a - b) / 2` from the richer to the poorer cell;
/// all flows are computed from the pre-step values.
pub fn diffusion_step(env: &mut Environment, rate: f64) {
    let (h, w) = (env.height(), env.width());
    let mut delta = vec![0.0f64; env.len()];
    for (kind, channel) in [
        (CellType::Earth, EARTH_NUTRIENT),
        (CellType::Air, AIR_NUTRIENT),
    ] {
        delta.iter_mut().for_each(|d| *d = 0.0);
        let mut any = false;
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                if env.type_at(i) != kind {
                    continue;
                }
                // Right and down edges; each edge visited once.
                for j in [
                    (c + 1 < w).then(|| i + 1),
                    (r + 1 < h).then(|| i + w),
                ]
                .into_iter()
                .flatten()
                {
                    if env.type_at(j) != kind {
                        continue;
                    }
                    let flow = rate * (env.state_at(i)[channel] - env.state_at(j)[channel]) / 2.0;
                    delta[i] -= flow;
                    delta[j] += flow;
                    any = true;
                }
            }
        }
        if any {
            for (i, d) in delta.iter().enumerate() {
                if *d != 0.0 {
                    let s = env.state_at_mut(i);
                    s[channel] = (s[channel] + d).max(0.0);
                }
            }
        }
    }
}

/// Roots pull from neighbouring Earth, leaves from neighbouring Air.
///
/// Each source is shared proportionally when its neighbours ask for more than it
/// holds. Anything a harvester cannot store above the cap is lost.
pub fn harvest_step(env: &mut Environment, config: &EnvConfig, ledger: &mut NutrientLedger) {
    let amount = config.absorption_amount;
    if amount <= 0.0 {
        return;
    }
    for (harvester, source, channel) in [
        (CellType::AgentRoot, CellType::Earth, EARTH_NUTRIENT),
        (CellType::AgentLeaf, CellType::Air, AIR_NUTRIENT),
    ] {
        let mut demand = vec![0.0f64; env.len()];
        let mut any = false;
        for i in 0..env.len() {
            if env.type_at(i) != harvester {
                continue;
            }
            let pos = env.pos(i);
            for &(dr, dc) in &NEIGHBORS {
                if let Some(p) = env.offset(pos, dr, dc) {
                    if env.cell_type(p) == source {
                        demand[env.index(p)] += amount;
                        any = true;
                    }
                }
            }
        }
        if !any {
            continue;
        }
        let scale: Vec<f64> = (0..env.len())
            .map(|j| {
                if demand[j] > 0.0 {
                    (env.state_at(j)[channel] / demand[j]).min(1.0)
                } else {
                    0.0
                }
            })
            .collect();
        let mut gain = vec![0.0f64; env.len()];
        for i in 0..env.len() {
            if env.type_at(i) != harvester {
                continue;
            }
            let pos = env.pos(i);
            for &(dr, dc) in &NEIGHBORS {
                if let Some(p) = env.offset(pos, dr, dc) {
                    let j = env.index(p);
                    if env.type_at(j) == source {
                        gain[i] += amount * scale[j];
                    }
                }
            }
        }
        for j in 0..env.len() {
            if demand[j] > 0.0 {
                let taken = demand[j] * scale[j];
                let s = env.state_at_mut(j);
                s[channel] = (s[channel] - taken).max(0.0);
            }
        }
        for (i, g) in gain.iter().enumerate() {
            if *g > 0.0 {
                let s = env.state_at_mut(i);
                let total = s[channel] + g;
                let kept = total.min(config.max_nutrient_cell);
                ledger.cap_loss[channel] += total - kept;
                s[channel] = kept;
            }
        }
    }
}

/// Per-step upkeep of an agent of `kind` at `age`, paid on both channels.
pub fn upkeep(config: &EnvConfig, kind: CellType, age: f64) -> f64 {
    let half = config.max_lifetime as f64 / 2.0;
    let mut cost = config.dissipation.get(kind);
    if age > half {
        cost += config.aging_slope * (age - half);
    }
    cost
}

/// Charge upkeep; agents that cannot pay turn into Earth, Air or Void.
///
/// Returns the number of deaths.
pub fn dissipation_step(
    env: &mut Environment,
    config: &EnvConfig,
    ledger: &mut NutrientLedger,
) -> usize {
    let mut deaths = 0;
    for i in 0..env.len() {
        let kind = env.type_at(i);
        if !kind.is_agent() {
            continue;
        }
        let s = env.state_at_mut(i);
        let cost = upkeep(config, kind, s[AGE]);
        let mut starving = false;
        for ch in [EARTH_NUTRIENT, AIR_NUTRIENT] {
            let paid = cost.min(s[ch]);
            if paid < cost {
                starving = true;
            }
            s[ch] -= paid;
            ledger.dissipated[ch] += paid;
        }
        if starving {
            kill(env, i, ledger);
            deaths += 1;
        }
    }
    deaths
}

/// Turn the agent at `index` into the material matching what it still holds.
pub fn kill(env: &mut Environment, index: usize, ledger: &mut NutrientLedger) {
    let s = env.state_at(index);
    let (earth, air) = (s[EARTH_NUTRIENT], s[AIR_NUTRIENT]);
    let (kind, keep) = if earth > 0.0 {
        (CellType::Earth, [earth, 0.0])
    } else if air > 0.0 {
        (CellType::Air, [0.0, air])
    } else {
        (CellType::Void, [0.0, 0.0])
    };
    ledger.death_loss[0] += earth - keep[0];
    ledger.death_loss[1] += air - keep[1];
    let pos = env.pos(index);
    env.set_type(pos, kind);
    env.set_agent_id(pos, NULL_AGENT);
    let s = env.state_at_mut(index);
    s[EARTH_NUTRIENT] = keep[0];
    s[AIR_NUTRIENT] = keep[1];
    s[AGE] = 0.0;
    s[INTERNAL_START..].iter_mut().for_each(|v| *v = 0.0);
}

/// Generation, diffusion, harvest, then upkeep and death. Returns deaths.
pub fn energy_step(env: &mut Environment, config: &EnvConfig, ledger: &mut NutrientLedger) -> usize {
    generation_step(env, config, ledger);
    diffusion_step(env, config.diffusion_rate);
    harvest_step(env, config, ledger);
    dissipation_step(env, config, ledger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Nutrients;
    use crate::grid::Cell;
    use crate::presets::{make_preset, PresetName};
    use proptest::prelude::*;

    fn cfg() -> EnvConfig {
        let (mut c, _) = make_preset(PresetName::Persistence, 16, 16).unwrap();
        c.struct_decay_earth = 1.0;
        c.struct_decay_agent = 5.0;
        c.struct_generation = 10.0;
        c
    }

    fn world(rows: &[&str], state_size: usize) -> Environment {
        Environment::from_ascii(rows, state_size).unwrap()
    }

    fn agent(env: &mut Environment, pos: Pos, kind: CellType, earth: f64, air: f64) {
        let mut cell = Cell::empty(kind, env.state_size());
        cell.agent_id = 1;
        cell.set_nutrients(Nutrients::new(earth, air));
        env.set_cell(pos, &cell);
    }

    #[test]
    fn earth_falls_one_row() {
        let mut env = world(&["E", "V", "V"], 4);
        gravity_step(&mut env);
        assert_eq!(env.types(), &[CellType::Void, CellType::Earth, CellType::Void]);
    }

    #[test]
    fn supported_agent_with_integrity_stays() {
        let mut env = world(&["U", "V"], 4);
        env.state_mut(Pos::new(0, 0))[STRUCTURE] = 3.0;
        let before = env.clone();
        gravity_step(&mut env);
        assert_eq!(env, before);
        env.state_mut(Pos::new(0, 0))[STRUCTURE] = 0.0;
        gravity_step(&mut env);
        assert_eq!(env.cell_type(Pos::new(1, 0)), CellType::AgentUnspecialized);
    }

    #[test]
    fn earth_ignores_integrity() {
        let mut env = world(&["E", "A"], 4);
        env.state_mut(Pos::new(0, 0))[STRUCTURE] = 9.0;
        gravity_step(&mut env);
        assert_eq!(env.cell_type(Pos::new(1, 0)), CellType::Earth);
    }

    #[test]
    fn no_immovable_decays_to_zero() {
        let c = cfg();
        let mut env = world(&["EEEE", "ELLE", "EEEE"], 4);
        for i in 0..env.len() {
            env.state_at_mut(i)[STRUCTURE] = 10.0;
        }
        // Earth decays by 1 per iteration from at most 10.
        for _ in 0..10 {
            structural_iteration(&mut env, &c);
        }
        assert!((0..env.len()).all(|i| env.state_at(i)[STRUCTURE] == 0.0));
    }

    #[test]
    fn structural_fixed_point_and_oracle() {
        let c = cfg();
        let mut env = world(
            &["AAAAAA", "AALLAA", "AARRAA", "EEEEEE", "EEEEEE", "IIIIII"],
            4,
        );
        let n = env.height() + env.width();
        for _ in 0..n {
            structural_iteration(&mut env, &c);
        }
        let settled = env.clone();
        structural_iteration(&mut env, &c);
        assert_eq!(env, settled);
        // Oracle: Chebyshev-distance relaxation from Immovable, by hand.
        let expect = |r: usize, c: usize| -> f64 {
            match (r, c) {
                (5, _) => 10.0,
                (4, _) => 9.0,
                (3, _) => 8.0,
                (2, 2) | (2, 3) => 3.0,
                _ => 0.0,
            }
        };
        for r in 0..6 {
            for col in 0..6 {
                assert_eq!(env.state(Pos::new(r, col))[STRUCTURE], expect(r, col), "({r},{col})");
            }
        }
    }

    #[test]
    fn diffusion_pair() {
        let mut env = world(&["EE"], 4);
        env.state_mut(Pos::new(0, 0))[EARTH_NUTRIENT] = 10.0;
        diffusion_step(&mut env, 0.5);
        assert_eq!(env.state(Pos::new(0, 0))[EARTH_NUTRIENT], 7.5);
        assert_eq!(env.state(Pos::new(0, 1))[EARTH_NUTRIENT], 2.5);
    }

    #[test]
    fn diffusion_respects_material_boundaries() {
        let mut env = world(&["EAE"], 4);
        env.state_mut(Pos::new(0, 0))[EARTH_NUTRIENT] = 10.0;
        env.state_mut(Pos::new(0, 1))[AIR_NUTRIENT] = 4.0;
        let before = env.clone();
        diffusion_step(&mut env, 0.25);
        assert_eq!(env, before);
    }

    #[test]
    fn starving_agents_map_to_materials() {
        let mut c = cfg();
        c.dissipation.unspecialized = 1.0;
        let mut env = world(&["VVV"], 4);
        agent(&mut env, Pos::new(0, 0), CellType::AgentUnspecialized, 0.0, 0.0);
        agent(&mut env, Pos::new(0, 1), CellType::AgentUnspecialized, 3.0, 0.5);
        agent(&mut env, Pos::new(0, 2), CellType::AgentUnspecialized, 0.5, 3.0);
        let mut ledger = NutrientLedger::default();
        let deaths = dissipation_step(&mut env, &c, &mut ledger);
        assert_eq!(deaths, 3);
        assert_eq!(env.cell_type(Pos::new(0, 0)), CellType::Void);
        assert_eq!(env.cell_type(Pos::new(0, 1)), CellType::Earth);
        assert_eq!(env.nutrients(Pos::new(0, 1)), Nutrients::new(2.0, 0.0));
        assert_eq!(env.cell_type(Pos::new(0, 2)), CellType::Air);
        assert_eq!(env.nutrients(Pos::new(0, 2)), Nutrients::new(0.0, 2.0));
        assert_eq!(env.agent_id(Pos::new(0, 1)), NULL_AGENT);
        assert_eq!(ledger.dissipated, [1.5, 1.5]);
    }

    #[test]
    fn aging_upkeep_grows_linearly() {
        let mut c = cfg();
        c.max_lifetime = 100;
        c.aging_slope = 0.5;
        let base = c.dissipation.root;
        assert_eq!(upkeep(&c, CellType::AgentRoot, 50.0), base);
        assert_eq!(upkeep(&c, CellType::AgentRoot, 54.0), base + 2.0);
    }

    #[test]
    fn aging_loop_oracle() {
        let mut env = world(&["UA"], 4);
        for _ in 0..17 {
            aging_step(&mut env);
        }
        assert_eq!(env.state(Pos::new(0, 0))[AGE], 17.0);
        assert_eq!(env.state(Pos::new(0, 1))[AGE], 0.0);
    }

    #[test]
    fn harvest_shares_scarce_source() {
        let mut c = cfg();
        c.absorption_amount = 2.0;
        c.max_nutrient_cell = 100.0;
        let mut env = world(&["RER"], 4);
        env.state_mut(Pos::new(0, 1))[EARTH_NUTRIENT] = 3.0;
        let mut ledger = NutrientLedger::default();
        harvest_step(&mut env, &c, &mut ledger);
        assert_eq!(env.state(Pos::new(0, 0))[EARTH_NUTRIENT], 1.5);
        assert_eq!(env.state(Pos::new(0, 2))[EARTH_NUTRIENT], 1.5);
        assert_eq!(env.state(Pos::new(0, 1))[EARTH_NUTRIENT], 0.0);
    }

    fn arb_world() -> impl Strategy<Value = Environment> {
        (2usize..7, 2usize..7).prop_flat_map(|(h, w)| {
            (
                proptest::collection::vec(0u8..10, h * w),
                proptest::collection::vec(0.0f64..50.0, h * w * 2),
            )
                .prop_map(move |(kinds, nutrients)| {
                    let mut env = Environment::filled(h, w, 4, CellType::Void);
                    for i in 0..h * w {
                        let mut k = CellType::from_u8(kinds[i]).unwrap();
                        if k == CellType::OutOfBounds {
                            k = CellType::Earth;
                        }
                        let p = env.pos(i);
                        env.set_type(p, k);
                        if k.is_agent() {
                            env.set_agent_id(p, 1);
                        }
                        let s = env.state_at_mut(i);
                        s[EARTH_NUTRIENT] = nutrients[2 * i];
                        s[AIR_NUTRIENT] = nutrients[2 * i + 1];
                    }
                    env
                })
        })
    }

    proptest! {
        #[test]
        fn diffusion_conserves(env in arb_world(), rate in 0.01f64..0.25) {
            let mut after = env.clone();
            diffusion_step(&mut after, rate);
            let (a, b) = (env.nutrient_totals(), after.nutrient_totals());
            prop_assert!((a[0] - b[0]).abs() < 1e-6);
            prop_assert!((a[1] - b[1]).abs() < 1e-6);
            prop_assert!(after.states().iter().all(|v| *v >= 0.0));
        }

        #[test]
        fn energy_ledger_balances(env in arb_world()) {
            let c = cfg();
            let mut after = env.clone();
            let mut ledger = NutrientLedger::default();
            energy_step(&mut after, &c, &mut ledger);
            let (a, b) = (env.nutrient_totals(), after.nutrient_totals());
            let exp = ledger.expected_delta();
            prop_assert!((b[0] - a[0] - exp[0]).abs() < 1e-6);
            prop_assert!((b[1] - a[1] - exp[1]).abs() < 1e-6);
        }

        #[test]
        fn gravity_idempotent_when_settled(env in arb_world()) {
            let mut settled = env.clone();
            for _ in 0..settled.height() {
                gravity_step(&mut settled);
            }
            let once = settled.clone();
            gravity_step(&mut settled);
            prop_assert_eq!(settled, once);
        }

        #[test]
        fn integrity_monotone_in_generation(env in arb_world(), extra in 0.0f64..20.0) {
            let c = cfg();
            let mut hi_cfg = c.clone();
            hi_cfg.struct_generation += extra;
            let (mut lo, mut hi) = (env.clone(), env.clone());
            for i in 0..lo.len() {
                lo.state_at_mut(i)[STRUCTURE] = 0.0;
                hi.state_at_mut(i)[STRUCTURE] = 0.0;
            }
            for _ in 0..(lo.height() + lo.width() + 40) {
                structural_iteration(&mut lo, &c);
                structural_iteration(&mut hi, &hi_cfg);
            }
            for i in 0..lo.len() {
                prop_assert!(hi.state_at(i)[STRUCTURE] >= lo.state_at(i)[STRUCTURE]);
            }
        }
    }
}
