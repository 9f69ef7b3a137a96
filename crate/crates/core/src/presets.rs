//! Named world configurations and their blueprint families.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::{EnvConfig, Nutrients, PerSpecialization};
use crate::error::{Error, Result};
use crate::grid::{Blueprint, CellType, INTERNAL_START};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    Persistence,
    Collaboration,
    Sideways,
    Pestilence,
}

impl PresetName {
    pub const ALL: [PresetName; 4] = [
        PresetName::Persistence,
        PresetName::Collaboration,
        PresetName::Sideways,
        PresetName::Pestilence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::Persistence => "persistence",
            PresetName::Collaboration => "collaboration",
            PresetName::Sideways => "sideways",
            PresetName::Pestilence => "pestilence",
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PresetName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

/// Default desk-scale world size.
pub const DEFAULT_HEIGHT: usize = 72;
pub const DEFAULT_WIDTH: usize = 128;

/// Size of the narrow single-organism worlds used for Petri-dish runs. They
/// keep the vertical layout of the default evaluation worlds.
pub const PETRI_HEIGHT: usize = 48;
pub const PETRI_WIDTH: usize = 32;

/// Internal channels carried by every preset, enough for the extended logic.
pub const PRESET_INTERNAL_CHANNELS: usize = 8;

fn base_config() -> EnvConfig {
    EnvConfig {
        state_size: INTERNAL_START + PRESET_INTERNAL_CHANNELS,
        max_nutrient_cell: 10.0,
        generator_amount: 1.0,
        diffusion_rate: 0.25,
        absorption_amount: 0.25,
        dissipation: PerSpecialization {
            unspecialized: 0.01,
            root: 0.02,
            leaf: 0.02,
            flower: 0.02,
        },
        specialize_cost: Nutrients::splat(0.05),
        spawn_cost: Nutrients::splat(1.0),
        reproduce_cost: Nutrients::splat(1.5),
        seed_min_nutrient: 0.4,
        seed_nutrients: Nutrients::splat(4.0),
        max_lifetime: 10_000,
        aging_slope: 0.001,
        struct_decay_earth: 1.0,
        struct_decay_agent: 5.0,
        struct_generation: 100.0,
        struct_iterations_per_step: 5,
        max_reproduce_per_step: 2,
        max_programs: 128,
        reproduce_radius: 3,
    }
}

pub fn preset_config(name: PresetName) -> EnvConfig {
    let mut c = base_config();
    match name {
        PresetName::Persistence | PresetName::Sideways => {}
        PresetName::Collaboration => {
            c.max_lifetime = 100_000_000;
            c.dissipation = PerSpecialization {
                unspecialized: 0.05,
                root: 0.08,
                leaf: 0.08,
                flower: 0.08,
            };
            c.specialize_cost = Nutrients::splat(0.5);
        }
        PresetName::Pestilence => {
            c.max_lifetime = 300;
            c.aging_slope = 0.005;
            c.specialize_cost = Nutrients::splat(0.4);
            c.dissipation = PerSpecialization {
                unspecialized: 0.02,
                root: 0.04,
                leaf: 0.04,
                flower: 0.04,
            };
        }
    }
    c
}

/// Rows of Sun, Air and Earth from the top for a world of height `h`; the
/// remaining bottom rows are Immovable.
///
/// Thick Sun and Immovable bands keep both nutrient sources close to the
/// Air/Earth interface where seeds land.
fn bands(h: usize) -> (usize, usize, usize) {
    let sun = (h / 3).max(1);
    let air = (h / 6).max(1);
    let earth = (h / 8).max(1);
    (sun, air, earth)
}

fn layout(h: usize, w: usize, sun_cols: impl Fn(usize) -> bool, rock_cols: impl Fn(usize) -> bool) -> Vec<String> {
    let (sun, air, earth) = bands(h);
    let earth_start = sun + air;
    let rock_start = earth_start + earth;
    (0..h)
        .map(|r| {
            (0..w)
                .map(|c| {
                    if r < sun {
                        if sun_cols(c) {
                            CellType::Sun
                        } else {
                            CellType::Air
                        }
                    } else if r < earth_start {
                        CellType::Air
                    } else if r < rock_start {
                        CellType::Earth
                    } else if rock_cols(c) {
                        CellType::Immovable
                    } else {
                        CellType::Earth
                    }
                    .blueprint_char()
                    .unwrap()
                })
                .collect()
        })
        .collect()
}

/// The named preset at size `h × w`: its rules and a single-seed blueprint.
pub fn make_preset(name: PresetName, h: usize, w: usize) -> Result<(EnvConfig, Blueprint)> {
    if h < 8 || w < 8 {
        return Err(Error::Config(format!("preset worlds need at least 8×8, got {h}×{w}")));
    }
    let rows = match name {
        PresetName::Sideways => layout(h, w, |c| c < w / 2, |c| c >= w / 2),
        _ => layout(h, w, |_| true, |_| true),
    };
    let bp = Blueprint::new(rows, vec![w / 2]);
    bp.validate()?;
    Ok((preset_config(name), bp))
}

/// A small single-seed world with the rules of `name`, for Petri-dish runs.
pub fn make_petri(name: PresetName) -> Result<(EnvConfig, Blueprint)> {
    make_preset(name, PETRI_HEIGHT, PETRI_WIDTH)
}
