//! The master step and a self-contained simulation handle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{decide, perceive, Architecture, Decision, FeatureScale};
use crate::config::EnvConfig;
use crate::error::{Error, Result};
use crate::grid::{new_environment, Blueprint, Environment, Pos};
use crate::mutators::MutatorConfig;
use crate::ops::{apply_parallel, propose_air, propose_earth, propose_spawn, resolve_exclusive, sanitize_parallel, ExclusiveKind};
use crate::physics::{aging_step, energy_step, gravity_step, structural_step, NutrientLedger};
use crate::programs::{ProgramEntry, ProgramStore};
use crate::reproduce::{collect_reproduce, reproduce_pipeline, ReproStats, ReproduceMode};
use crate::rng::{StepRng, Substep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StepStats {
    pub step: u64,
    /// Agent cells alive after the step.
    pub n_agents: usize,
    /// Agent cells created by spawns and seeds.
    pub births: usize,
    /// Agent cells that starved.
    pub deaths: usize,
    pub n_repro_success: usize,
    pub n_repro_attempts: usize,
    pub repro: ReproStats,
}

impl StepStats {
    pub const CSV_HEADER: &'static str = "step,n_agents,births,deaths,n_repro_success,n_repro_attempts,repro_selected,repro_placed,repro_failed_no_ground,repro_failed_table_full";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.n_agents,
            self.births,
            self.deaths,
            self.n_repro_success,
            self.n_repro_attempts,
            self.repro.selected,
            self.repro.placed,
            self.repro.failed_no_ground,
            self.repro.failed_table_full
        )
    }
}

/// World rules shared by every step of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub config: EnvConfig,
    pub arch: Architecture,
    pub mutator: MutatorConfig,
    pub mode: ReproduceMode,
}

/// Compute every agent's decision from the current world.
pub fn decide_all(
    env: &Environment,
    programs: &ProgramStore,
    settings: &RunSettings,
    rng: &StepRng,
) -> Vec<(Pos, Decision)> {
    let scale = FeatureScale::from_config(&settings.config);
    let positions = env.agent_positions();
    positions
        .par_iter()
        .map(|&pos| {
            let id = env.agent_id(pos);
            let entry = programs
                .get(id)
                .unwrap_or_else(|| panic!("agent id {id} at {pos} has no program"));
            let noise = rng.cell_uniform(Substep::AgentNoise, env.index(pos));
            let d = decide(settings.arch, &entry.logic, &perceive(env, pos), &scale, noise);
            (pos, d)
        })
        .collect()
}

/// Advance the world by one step.
///
/// Order: agent decisions and parallel ops, exclusive ops (air, earth, spawn)
/// with conflict resolution, reproduction, gravity, structural integrity,
/// aging, energy.
pub fn step(
    env: &mut Environment,
    programs: &mut ProgramStore,
    settings: &RunSettings,
    rng: &StepRng,
    ledger: &mut NutrientLedger,
) -> StepStats {
    let config = &settings.config;
    let mut stats = StepStats {
        step: rng.step,
        ..Default::default()
    };

    let decisions = decide_all(env, programs, settings, rng);
    let parallel: Vec<_> = decisions
        .iter()
        .map(|(pos, d)| sanitize_parallel(&d.parallel, env, *pos, config))
        .collect();
    apply_parallel(env, &parallel, config, ledger);

    let mut exclusive = propose_air(env, rng);
    exclusive.extend(propose_earth(env, rng));
    let intents: Vec<_> = decisions
        .iter()
        .filter(|(_, d)| d.exclusive.spawn)
        .map(|(pos, d)| (*pos, d.exclusive.clone()))
        .collect();
    exclusive.extend(propose_spawn(env, &intents, config, rng));
    let outcome = resolve_exclusive(env, &exclusive, &mut rng.stream(Substep::Resolve), ledger);
    stats.births += outcome
        .committed
        .iter()
        .filter(|&&k| exclusive[k].kind == ExclusiveKind::Spawn)
        .count();

    programs.retain_live(&env.live_agent_ids());
    let triggers: Vec<_> = decisions
        .iter()
        .filter(|(_, d)| d.reproduce.trigger)
        .map(|(pos, d)| (*pos, d.reproduce))
        .collect();
    let repro_ops = collect_reproduce(env, &triggers, config);
    let repro = reproduce_pipeline(
        env,
        &repro_ops,
        programs,
        &settings.mutator,
        rng,
        config,
        settings.mode,
        ledger,
    );
    stats.births += 2 * repro.placed;
    stats.repro = repro;
    stats.n_repro_success = repro.successes;
    stats.n_repro_attempts = repro.attempts;

    gravity_step(env);
    structural_step(env, config);
    aging_step(env);
    stats.deaths = energy_step(env, config, ledger);
    stats.n_agents = env.count_agents();
    stats
}

/// A world plus everything needed to keep stepping it deterministically.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub env: Environment,
    pub programs: ProgramStore,
    pub settings: RunSettings,
    pub seed: u64,
    /// Index of the next step to run.
    pub step: u64,
    /// Cumulative nutrient flows since construction.
    pub ledger: NutrientLedger,
}

impl Simulation {
    pub fn new(
        env: Environment,
        programs: ProgramStore,
        settings: RunSettings,
        seed: u64,
    ) -> Self {
        Self {
            env,
            programs,
            settings,
            seed,
            step: 0,
            ledger: NutrientLedger::default(),
        }
    }

    /// Build a world from a blueprint; every blueprint seed runs `logic`.
    pub fn from_blueprint(
        blueprint: &Blueprint,
        settings: RunSettings,
        logic: &[f64],
        seed: u64,
    ) -> Result<Self> {
        let entry = ProgramEntry::new(logic.to_vec(), &settings.mutator);
        Self::from_entry(blueprint, settings, &entry, seed)
    }

    /// Like [`Simulation::from_blueprint`] but keeps the entry's mutator state.
    pub fn from_entry(
        blueprint: &Blueprint,
        settings: RunSettings,
        entry: &ProgramEntry,
        seed: u64,
    ) -> Result<Self> {
        if entry.logic.len() != settings.arch.param_len() {
            return Err(Error::ParamsLength {
                expected: settings.arch.param_len(),
                got: entry.logic.len(),
            });
        }
        settings.mutator.validate()?;
        let env = new_environment(blueprint, &settings.config)?;
        let programs = ProgramStore::with_seeds(settings.config.max_programs, entry, blueprint.seeds.len());
        Ok(Self::new(env, programs, settings, seed))
    }

    pub fn step(&mut self) -> StepStats {
        let rng = StepRng::new(self.seed, self.step);
        let mut ledger = NutrientLedger::default();
        let stats = step(&mut self.env, &mut self.programs, &self.settings, &rng, &mut ledger);
        self.ledger.add(&ledger);
        self.step += 1;
        stats
    }

    /// Step with a per-step ledger, for conservation checks.
    pub fn step_with_ledger(&mut self) -> (StepStats, NutrientLedger) {
        let rng = StepRng::new(self.seed, self.step);
        let mut ledger = NutrientLedger::default();
        let stats = step(&mut self.env, &mut self.programs, &self.settings, &rng, &mut ledger);
        self.ledger.add(&ledger);
        self.step += 1;
        (stats, ledger)
    }

    pub fn run(&mut self, n_steps: u64) -> Vec<StepStats> {
        (0..n_steps).map(|_| self.step()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::init_minimal;
    use crate::grid::CellType;
    use crate::presets::{make_preset, PresetName};

    fn settings(name: PresetName) -> (RunSettings, Blueprint) {
        let (config, bp) = make_preset(name, 24, 32).unwrap();
        (
            RunSettings {
                config,
                arch: Architecture::Minimal,
                mutator: MutatorConfig::basic(0.01),
                mode: ReproduceMode::Normal,
            },
            bp,
        )
    }

    #[test]
    fn empty_world_is_fixed() {
        let (s, _) = settings(PresetName::Persistence);
        let bp = Blueprint::new(vec!["VVVV".into(); 4], vec![]);
        let mut sim = Simulation::from_blueprint(&bp, s, &init_minimal(), 1).unwrap();
        let before = sim.env.clone();
        let stats = sim.step();
        assert_eq!(sim.env, before);
        assert_eq!(stats, StepStats::default());
    }

    #[test]
    fn deterministic() {
        let (s, bp) = settings(PresetName::Persistence);
        let mut a = Simulation::from_blueprint(&bp, s.clone(), &init_minimal(), 9).unwrap();
        let mut b = Simulation::from_blueprint(&bp, s, &init_minimal(), 9).unwrap();
        let sa = a.run(60);
        let sb = b.run(60);
        assert_eq!(sa, sb);
        assert_eq!(a.env.to_bytes(), b.env.to_bytes());
    }

    #[test]
    fn seed_specializes_then_grows() {
        let (s, bp) = settings(PresetName::Persistence);
        let mut sim = Simulation::from_blueprint(&bp, s, &init_minimal(), 3).unwrap();
        sim.step();
        assert_eq!(sim.env.count_type(CellType::AgentRoot), 1);
        assert_eq!(sim.env.count_type(CellType::AgentLeaf), 1);
        let mut grew = false;
        for _ in 0..5 {
            sim.step();
            grew |= sim.env.count_agents() > 2;
        }
        assert!(grew, "seed did not spawn within a few steps");
    }

    #[test]
    fn starving_world_goes_extinct() {
        let (mut s, bp) = settings(PresetName::Persistence);
        s.config.generator_amount = 0.0;
        s.config.seed_nutrients = crate::config::Nutrients::ZERO;
        s.config.dissipation.unspecialized = 0.5;
        let mut sim = Simulation::from_blueprint(&bp, s, &init_minimal(), 3).unwrap();
        assert_eq!(sim.env.count_agents(), 2);
        sim.run(5);
        assert_eq!(sim.env.count_agents(), 0);
        assert!(sim.env.is_extinct());
    }
}
