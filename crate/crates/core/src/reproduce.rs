//! Flower reproduction: selection, seed placement and lineage bookkeeping.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{EnvConfig, Nutrients};
use crate::grid::{find_seed_site, place_seed, AgentId, Cell, CellType, Environment, Pos, NEIGHBORS};
use crate::mutators::{spawn_child_params, MutatorConfig};
use crate::ops::ReproduceInterface;
use crate::physics::NutrientLedger;
use crate::programs::ProgramStore;
use crate::rng::{StepRng, Substep};

/// A validated request: the flower has paid `reproduce_cost` and holds `remaining`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReproduceOp {
    pub flower: Pos,
    pub remaining: Nutrients,
    pub parent: AgentId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReproduceMode {
    #[default]
    Normal,
    /// Selected flowers are consumed but no seed is written; a reproduction
    /// counts as successful when the flower could have funded a viable seed.
    Intercept,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReproStats {
    pub attempts: usize,
    pub selected: usize,
    pub placed: usize,
    pub failed_no_ground: usize,
    pub failed_table_full: usize,
    /// Successful reproductions: placed seeds, or viable intercepted ones.
    pub successes: usize,
}

/// Keep triggers from flowers that can pay for reproduction.
pub fn collect_reproduce(
    env: &Environment,
    triggers: &[(Pos, ReproduceInterface)],
    config: &EnvConfig,
) -> Vec<ReproduceOp> {
    triggers
        .iter()
        .filter(|(pos, iface)| {
            iface.trigger
                && env.cell_type(*pos) == CellType::AgentFlower
                && env.nutrients(*pos).covers(&config.reproduce_cost)
        })
        .map(|(pos, _)| {
            let n = env.nutrients(*pos);
            ReproduceOp {
                flower: *pos,
                remaining: Nutrients::new(
                    n.earth - config.reproduce_cost.earth,
                    n.air - config.reproduce_cost.air,
                ),
                parent: env.agent_id(*pos),
            }
        })
        .collect()
}

/// Number of Air cells around `pos`; the selection weight of a flower there.
pub fn air_exposure(env: &Environment, pos: Pos) -> usize {
    NEIGHBORS
        .iter()
        .filter(|&&(dr, dc)| env.type_or_oob(pos, dr, dc) == CellType::Air)
        .count()
}

/// Weighted sampling without replacement; zero-weight items are never picked.
pub fn select_weighted<R: Rng + ?Sized>(weights: &[f64], budget: usize, rng: &mut R) -> Vec<usize> {
    let mut w = weights.to_vec();
    let mut out = Vec::new();
    while out.len() < budget {
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            break;
        }
        let x = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (i, wi) in w.iter().enumerate() {
            if *wi <= 0.0 {
                continue;
            }
            acc += wi;
            if x < acc {
                chosen = Some(i);
                break;
            }
        }
        let i = chosen.unwrap_or_else(|| w.iter().rposition(|v| *v > 0.0).unwrap());
        out.push(i);
        w[i] = 0.0;
    }
    out
}

/// Candidate seed columns around `pos`, in random order, without repeats.
fn candidate_columns<R: Rng + ?Sized>(env: &Environment, pos: Pos, radius: usize, rng: &mut R) -> Vec<usize> {
    let r = radius as i32;
    let mut offsets: Vec<(i32, i32)> = (-r..=r)
        .flat_map(|dr| (-r..=r).map(move |dc| (dr, dc)))
        .filter(|&o| o != (0, 0))
        .collect();
    offsets.shuffle(rng);
    let mut cols = Vec::new();
    for (_, dc) in offsets {
        let c = pos.col as i64 + dc as i64;
        if c >= 0 && (c as usize) < env.width() && !cols.contains(&(c as usize)) {
            cols.push(c as usize);
        }
    }
    cols
}

/// Select flowers, consume them and try to turn each into a seed nearby.
#[allow(clippy::too_many_arguments)]
pub fn reproduce_pipeline(
    env: &mut Environment,
    ops: &[ReproduceOp],
    programs: &mut ProgramStore,
    mutator: &MutatorConfig,
    rng: &StepRng,
    config: &EnvConfig,
    mode: ReproduceMode,
    ledger: &mut NutrientLedger,
) -> ReproStats {
    let mut stats = ReproStats {
        attempts: ops.len(),
        ..Default::default()
    };
    if ops.is_empty() {
        return stats;
    }
    let weights: Vec<f64> = ops.iter().map(|op| air_exposure(env, op.flower) as f64).collect();
    let chosen = select_weighted(&weights, config.max_reproduce_per_step, &mut rng.stream(Substep::ReproduceSelect));
    stats.selected = chosen.len();

    let mut place_rng = rng.stream(Substep::ReproducePlace);
    let mut mutate_rng = rng.stream(Substep::Mutate);
    let seed_min = Nutrients::splat(config.seed_min_nutrient);
    for i in chosen {
        let op = ops[i];
        env.set_cell(op.flower, &Cell::empty(CellType::Void, env.state_size()));
        ledger.op_costs[0] += config.reproduce_cost.earth;
        ledger.op_costs[1] += config.reproduce_cost.air;
        let lost = op.remaining.as_array();

        if mode == ReproduceMode::Intercept {
            if op.remaining.covers(&seed_min) {
                stats.successes += 1;
            }
            ledger.destroyed[0] += lost[0];
            ledger.destroyed[1] += lost[1];
            continue;
        }

        let site = candidate_columns(env, op.flower, config.reproduce_radius, &mut place_rng)
            .into_iter()
            .find_map(|c| find_seed_site(env, c).map(|r| (r, c)));
        let Some((row, column)) = site else {
            stats.failed_no_ground += 1;
            ledger.destroyed[0] += lost[0];
            ledger.destroyed[1] += lost[1];
            continue;
        };
        let id = if mutator.varies() {
            if programs.is_full() {
                stats.failed_table_full += 1;
                ledger.destroyed[0] += lost[0];
                ledger.destroyed[1] += lost[1];
                continue;
            }
            let parent = programs
                .get(op.parent)
                .expect("every live agent id has a program entry");
            let child = spawn_child_params(parent, mutator, &mut mutate_rng);
            programs.mint(child).expect("checked capacity")
        } else {
            op.parent
        };
        for r in [row, row + 1] {
            let n = env.nutrients(Pos::new(r, column));
            ledger.destroyed[0] += n.earth;
            ledger.destroyed[1] += n.air;
        }
        let half = Nutrients::new(op.remaining.earth / 2.0, op.remaining.air / 2.0);
        place_seed(env, column, id, half).expect("site was checked");
        stats.placed += 1;
        stats.successes += 1;
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::programs::ProgramEntry;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> EnvConfig {
        let (mut c, _) = crate::presets::make_preset(crate::presets::PresetName::Persistence, 16, 16).unwrap();
        c.reproduce_cost = Nutrients::splat(1.0);
        c.seed_min_nutrient = 1.0;
        c.max_reproduce_per_step = 2;
        c.reproduce_radius = 1;
        c
    }

    fn world() -> Environment {
        // Five flowers on a shelf of Earth.
        let rows = ["AAAAAAAAAAA", "AFAFAFAFAFA", "EEEEEEEEEEE", "IIIIIIIIIII"];
        let mut env = Environment::filled(4, 11, 6, CellType::Void);
        for (r, row) in rows.iter().enumerate() {
            for (c, ch) in row.chars().enumerate() {
                let p = Pos::new(r, c);
                if ch == 'F' {
                    let mut cell = Cell::empty(CellType::AgentFlower, 6);
                    cell.agent_id = 1;
                    cell.set_nutrients(Nutrients::splat(5.0));
                    env.set_cell(p, &cell);
                } else {
                    env.set_type(p, CellType::from_blueprint_char(ch).unwrap());
                }
            }
        }
        env
    }

    fn triggers(env: &Environment) -> Vec<(Pos, ReproduceInterface)> {
        env.agent_positions()
            .into_iter()
            .map(|p| (p, ReproduceInterface { trigger: true }))
            .collect()
    }

    #[test]
    fn budget_limits_selection_and_seed_gets_remainder() {
        let c = cfg();
        let mut env = world();
        let ops = collect_reproduce(&env, &triggers(&env), &c);
        assert_eq!(ops.len(), 5);
        let entry = ProgramEntry::new(vec![0.0; 4], &MutatorConfig::basic(0.1));
        let mut store = ProgramStore::with_seeds(100, &entry, 1);
        let mut ledger = NutrientLedger::default();
        let before = env.nutrient_totals();
        let stats = reproduce_pipeline(
            &mut env,
            &ops,
            &mut store,
            &MutatorConfig::basic(0.1),
            &StepRng::new(4, 0),
            &c,
            ReproduceMode::Normal,
            &mut ledger,
        );
        assert_eq!(stats.selected, 2);
        assert_eq!(stats.placed, 2);
        assert_eq!(env.count_type(CellType::AgentFlower), 3);
        assert_eq!(env.count_type(CellType::AgentUnspecialized), 4);
        assert_eq!(store.len(), 3);
        for p in env.agent_positions() {
            if env.cell_type(p) == CellType::AgentUnspecialized {
                assert_eq!(env.nutrients(p), Nutrients::splat(2.0));
                assert!(env.agent_id(p) > 1);
            }
        }
        let after = env.nutrient_totals();
        let exp = ledger.expected_delta();
        for ch in 0..2 {
            assert!((after[ch] - before[ch] - exp[ch]).abs() < 1e-9);
        }
    }

    #[test]
    fn buried_flower_is_never_selected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let picked = select_weighted(&[0.0, 3.0, 0.0, 1.0], 2, &mut rng);
            assert!(!picked.contains(&0) && !picked.contains(&2));
            assert_eq!(picked.len(), 2);
        }
    }

    #[test]
    fn full_table_fails_placement() {
        let c = cfg();
        let mut env = world();
        let ops = collect_reproduce(&env, &triggers(&env), &c);
        let m = MutatorConfig::basic(0.1);
        let mut store = ProgramStore::with_seeds(1, &ProgramEntry::new(vec![0.0; 4], &m), 1);
        let stats = reproduce_pipeline(
            &mut env,
            &ops,
            &mut store,
            &m,
            &StepRng::new(1, 0),
            &c,
            ReproduceMode::Normal,
            &mut NutrientLedger::default(),
        );
        assert_eq!(stats.failed_table_full, 2);
        assert_eq!(stats.placed, 0);
        assert_eq!(env.count_type(CellType::AgentFlower), 3);
    }

    #[test]
    fn intercept_counts_viable_seeds() {
        let mut c = cfg();
        let mut env = world();
        let ops = collect_reproduce(&env, &triggers(&env), &c);
        let m = MutatorConfig::basic(0.1);
        let mut store = ProgramStore::with_seeds(10, &ProgramEntry::new(vec![0.0; 4], &m), 1);
        let stats = reproduce_pipeline(
            &mut env, &ops, &mut store, &m, &StepRng::new(1, 0), &c,
            ReproduceMode::Intercept, &mut NutrientLedger::default(),
        );
        assert_eq!((stats.selected, stats.successes, stats.placed), (2, 2, 0));
        assert_eq!(env.live_agent_ids().len(), 1);
        c.seed_min_nutrient = 4.5;
        let ops = collect_reproduce(&env, &triggers(&env), &c);
        let stats = reproduce_pipeline(
            &mut env, &ops, &mut store, &m, &StepRng::new(1, 1), &c,
            ReproduceMode::Intercept, &mut NutrientLedger::default(),
        );
        assert_eq!((stats.selected, stats.successes), (2, 0));
    }

    #[test]
    fn disabled_mutation_reuses_parent_id() {
        let c = cfg();
        let mut env = world();
        let ops = collect_reproduce(&env, &triggers(&env), &c);
        let m = MutatorConfig::disabled();
        let mut store = ProgramStore::with_seeds(1, &ProgramEntry::new(vec![0.0; 4], &m), 1);
        let stats = reproduce_pipeline(
            &mut env, &ops, &mut store, &m, &StepRng::new(2, 0), &c,
            ReproduceMode::Normal, &mut NutrientLedger::default(),
        );
        assert_eq!(stats.placed, 2);
        assert_eq!(store.len(), 1);
        assert_eq!(env.live_agent_ids().into_iter().collect::<Vec<_>>(), vec![1]);
    }
}
