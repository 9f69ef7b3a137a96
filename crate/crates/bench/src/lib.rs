//! Shared fixtures for the benchmarks.

use florae::agents::init_minimal;
use florae::presets::make_preset;
use florae::{Architecture, MutatorConfig, PresetName, ReproduceMode, RunSettings, Simulation};

/// A persistence world of the given size, already grown for `warmup` steps so
/// benchmarks see a realistic number of agents.
pub fn grown_world(height: usize, width: usize, warmup: u64) -> Simulation {
    let (config, bp) = make_preset(PresetName::Persistence, height, width).expect("preset");
    let settings = RunSettings {
        config,
        arch: Architecture::Minimal,
        mutator: MutatorConfig::basic(0.01),
        mode: ReproduceMode::Normal,
    };
    let mut sim = Simulation::from_blueprint(&bp, settings, &init_minimal(), 1).expect("simulation");
    sim.run(warmup);
    sim
}
