//! A deterministic falling-sand biome in which plant-like agents grow, trade
//! nutrients, reproduce with mutation and evolve, plus tools to evaluate and
//! meta-evolve their policies.

pub mod agents;
pub mod config;
pub mod evolve;
pub mod error;
pub mod grid;
pub mod mutators;
pub mod ops;
pub mod physics;
pub mod presets;
pub mod params_io;
pub mod programs;
pub mod record;
pub mod render;
pub mod reproduce;
pub mod rng;
pub mod session;
pub mod sim;

pub use agents::{AgentParams, Architecture};
pub use config::{EnvConfig, Nutrients, PerSpecialization};
pub use error::{Error, Result};
pub use evolve::{EvalReport, EvalSpec, MetaConfig, PetriSpec, Pgpe, PgpeConfig};
pub use grid::{AgentId, Blueprint, Cell, CellType, Environment, Pos};
pub use mutators::{MutatorConfig, MutatorKind};
pub use physics::NutrientLedger;
pub use presets::PresetName;
pub use programs::{ProgramEntry, ProgramStore};
pub use record::{ReplayReport, RunRecord};
pub use reproduce::{ReproStats, ReproduceMode};
pub use rng::StepRng;
pub use session::{Session, SessionConfig};
pub use sim::{RunSettings, Simulation, StepStats};
