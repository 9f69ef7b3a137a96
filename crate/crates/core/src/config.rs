//! The "laws of physics" of a world.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellType, INTERNAL_START};

/// A pair of nutrient amounts, one per channel.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Nutrients {
    pub earth: f64,
    pub air: f64,
}

impl Nutrients {
    pub const ZERO: Nutrients = Nutrients { earth: 0.0, air: 0.0 };

    pub const fn new(earth: f64, air: f64) -> Self {
        Self { earth, air }
    }

    pub const fn splat(v: f64) -> Self {
        Self { earth: v, air: v }
    }

    pub fn get(&self, channel: usize) -> f64 {
        match channel {
            0 => self.earth,
            1 => self.air,
            _ => panic!("nutrient channel {channel} out of range"),
        }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.earth, self.air]
    }

    pub fn from_array(a: [f64; 2]) -> Self {
        Self { earth: a[0], air: a[1] }
    }

    /// True when both channels are at least `other`.
    pub fn covers(&self, other: &Nutrients) -> bool {
        self.earth >= other.earth && self.air >= other.air
    }
}

/// A value per agent specialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerSpecialization {
    pub unspecialized: f64,
    pub root: f64,
    pub leaf: f64,
    pub flower: f64,
}

impl PerSpecialization {
    pub fn get(&self, kind: CellType) -> f64 {
        match kind {
            CellType::AgentUnspecialized => self.unspecialized,
            CellType::AgentRoot => self.root,
            CellType::AgentLeaf => self.leaf,
            CellType::AgentFlower => self.flower,
            other => panic!("{other:?} is not an agent type"),
        }
    }

    fn values(&self) -> [f64; 4] {
        [self.unspecialized, self.root, self.leaf, self.flower]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    /// Length of each cell's state vector: 4 fixed channels plus internal ones.
    pub state_size: usize,
    pub max_nutrient_cell: f64,
    /// Nutrients injected per step into Earth next to Immovable and Air next to Sun.
    pub generator_amount: f64,
    pub diffusion_rate: f64,
    /// Amount a root (leaf) may take from each neighbouring Earth (Air) cell per step.
    pub absorption_amount: f64,
    pub dissipation: PerSpecialization,
    pub specialize_cost: Nutrients,
    pub spawn_cost: Nutrients,
    pub reproduce_cost: Nutrients,
    /// Per-channel amount a seed needs to count as viable.
    pub seed_min_nutrient: f64,
    /// Per-cell nutrients given to the seeds written by a blueprint.
    pub seed_nutrients: Nutrients,
    pub max_lifetime: u64,
    pub aging_slope: f64,
    pub struct_decay_earth: f64,
    pub struct_decay_agent: f64,
    /// Integrity emitted by Immovable cells; also the integrity cap.
    pub struct_generation: f64,
    pub struct_iterations_per_step: usize,
    pub max_reproduce_per_step: usize,
    pub max_programs: usize,
    /// Chebyshev radius around a reproducing flower searched for fertile ground.
    pub reproduce_radius: usize,
}

impl EnvConfig {
    pub fn internal_channels(&self) -> usize {
        self.state_size - INTERNAL_START
    }

    pub fn structural_cap(&self) -> f64 {
        self.struct_generation
    }

    pub fn struct_decay(&self, kind: CellType) -> f64 {
        if kind == CellType::Earth {
            self.struct_decay_earth
        } else {
            self.struct_decay_agent
        }
    }

    pub fn with_internal_channels(mut self, k: usize) -> Self {
        self.state_size = INTERNAL_START + k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.state_size < INTERNAL_START {
            return bad("state_size must be at least 4");
        }
        let non_negative = [
            ("max_nutrient_cell", self.max_nutrient_cell),
            ("generator_amount", self.generator_amount),
            ("absorption_amount", self.absorption_amount),
            ("seed_min_nutrient", self.seed_min_nutrient),
            ("aging_slope", self.aging_slope),
            ("struct_decay_earth", self.struct_decay_earth),
            ("struct_decay_agent", self.struct_decay_agent),
            ("struct_generation", self.struct_generation),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        for (name, n) in [
            ("specialize_cost", self.specialize_cost),
            ("spawn_cost", self.spawn_cost),
            ("reproduce_cost", self.reproduce_cost),
            ("seed_nutrients", self.seed_nutrients),
        ] {
            if !(n.earth >= 0.0 && n.air >= 0.0 && n.earth.is_finite() && n.air.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0")));
            }
        }
        if self.dissipation.values().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("dissipation must be finite and >= 0");
        }
        if !(self.diffusion_rate > 0.0 && self.diffusion_rate <= 1.0) {
            return bad("diffusion_rate must lie in (0, 1]");
        }
        // Four edges per cell; beyond this an explicit step can drive a cell negative.
        if self.diffusion_rate * 4.0 > 1.0 {
            return bad("diffusion_rate * 4 must not exceed 1");
        }
        if self.max_reproduce_per_step < 1 {
            return bad("max_reproduce_per_step must be >= 1");
        }
        if self.max_programs < 1 {
            return bad("max_programs must be >= 1");
        }
        if self.max_lifetime == 0 {
            return bad("max_lifetime must be >= 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use crate::presets::{make_preset, PresetName};

    #[test]
    fn presets_validate() {
        for name in PresetName::ALL {
            let (config, _) = make_preset(name, 48, 96).unwrap();
            config.validate().unwrap();
        }
    }

    #[test]
    fn rejects_unstable_diffusion() {
        let (mut config, _) = make_preset(PresetName::Persistence, 16, 16).unwrap();
        config.diffusion_rate = 0.5;
        assert!(config.validate().is_err());
    }

    #[test]
    fn rejects_negative_cost() {
        let (mut config, _) = make_preset(PresetName::Persistence, 16, 16).unwrap();
        config.spawn_cost.air = -1.0;
        assert!(config.validate().is_err());
        config.spawn_cost.air = 1.0;
        config.max_programs = 0;
        assert!(config.validate().is_err());
    }
}
