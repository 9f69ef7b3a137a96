//! Interactive evolution: a person repeatedly picks one of several mutated
//! offspring after watching each grow alone in a Petri dish, then deploys the
//! final lineage into a full-size world.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::Architecture;
use crate::error::{Error, Result};
use crate::evolve::{evaluate, petri_run_observed, EvalReport, EvalSpec, PetriSpec};
use crate::mutators::{spawn_child_params, MutatorConfig};
use crate::presets::{make_preset, PresetName};
use crate::programs::ProgramEntry;
use crate::record::{record_run, RunRecord};
use crate::render::frame_indices;
use crate::rng::{derive_seed, keyed_rng, Substep};
use crate::sim::Simulation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub preset: PresetName,
    pub arch: Architecture,
    pub mutator: MutatorConfig,
    pub n_candidates: usize,
    pub seed: u64,
    /// Keep one Petri frame every this many steps.
    pub frame_every: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            preset: PresetName::Persistence,
            arch: Architecture::Minimal,
            mutator: MutatorConfig::basic(0.01),
            n_candidates: 8,
            seed: 0,
            frame_every: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub entry: ProgramEntry,
    pub n_repro: usize,
    /// Palette-indexed frames, row-major, `width × height` each.
    pub frames: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub generation: usize,
    pub index: usize,
    pub n_repro: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Active,
    Deployed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeployRequest {
    pub preset: PresetName,
    pub width: usize,
    pub height: usize,
    pub steps: u64,
    pub reps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Deployment {
    pub report: EvalReport,
    /// The first replica, recorded for replay.
    pub record: RunRecord,
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub config: SessionConfig,
    pub petri: PetriSpec,
    pub parent: ProgramEntry,
    pub generation: usize,
    pub candidates: Vec<Candidate>,
    pub history: Vec<Choice>,
    pub state: SessionState,
}

/// Children of `parent` for one generation. Child `i` depends only on the
/// parent, the mutator and `(seed, generation, i)`.
pub fn offspring(
    parent: &ProgramEntry,
    mutator: &MutatorConfig,
    seed: u64,
    generation: usize,
    n: usize,
) -> Vec<ProgramEntry> {
    (0..n)
        .map(|i| {
            let mut rng = keyed_rng(&[seed, Substep::Candidates as u64, generation as u64, i as u64]);
            spawn_child_params(parent, mutator, &mut rng)
        })
        .collect()
}

impl Session {
    pub fn start(id: impl Into<String>, config: SessionConfig, init: ProgramEntry) -> Result<Self> {
        if config.n_candidates == 0 {
            return Err(Error::Config("n_candidates must be positive".into()));
        }
        if init.logic.len() != config.arch.param_len() {
            return Err(Error::ParamsLength {
                expected: config.arch.param_len(),
                got: init.logic.len(),
            });
        }
        config.mutator.validate()?;
        let petri = PetriSpec::preset(config.preset, config.arch)?;
        let mut s = Self {
            id: id.into(),
            config,
            petri,
            parent: init,
            generation: 0,
            candidates: Vec::new(),
            history: Vec::new(),
            state: SessionState::Active,
        };
        s.candidates = s.generate()?;
        Ok(s)
    }

    pub fn frame_size(&self) -> (usize, usize) {
        (self.petri.blueprint.width, self.petri.blueprint.height)
    }

    fn generate(&self) -> Result<Vec<Candidate>> {
        let c = &self.config;
        let children = offspring(&self.parent, &c.mutator, c.seed, self.generation, c.n_candidates);
        // Every candidate of a generation grows under the same world noise.
        let dish_seed = derive_seed(c.seed, Substep::Replica, self.generation as u64);
        let every = c.frame_every.max(1);
        children
            .into_par_iter()
            .map(|entry| {
                let mut frames = Vec::new();
                let out = petri_run_observed(&self.petri, &entry.logic, dish_seed, |sim| {
                    if sim.step.is_multiple_of(every) || sim.step == self.petri.n_steps {
                        frames.push(frame_indices(&sim.env, &sim.settings.config));
                    }
                })?;
                Ok(Candidate {
                    entry,
                    n_repro: out.n_repro,
                    frames,
                })
            })
            .collect()
    }

    /// Make candidate `index` the new parent and breed the next generation.
    /// On error the session is left as it was.
    pub fn choose(&mut self, index: usize) -> Result<()> {
        if self.state != SessionState::Active {
            return Err(Error::SessionClosed);
        }
        let len = self.candidates.len();
        let chosen = self
            .candidates
            .get(index)
            .ok_or(Error::CandidateIndex { index, len })?
            .clone();
        let old_parent = std::mem::replace(&mut self.parent, chosen.entry);
        self.generation += 1;
        match self.generate() {
            Ok(c) => {
                self.candidates = c;
                self.history.push(Choice {
                    generation: self.generation - 1,
                    index,
                    n_repro: chosen.n_repro,
                });
                Ok(())
            }
            Err(e) => {
                self.parent = old_parent;
                self.generation -= 1;
                Err(e)
            }
        }
    }

    /// Evaluate the current parent in a normal (non-intercepted) world. Closes the session.
    pub fn deploy(&mut self, req: &DeployRequest) -> Result<Deployment> {
        if self.state != SessionState::Active {
            return Err(Error::SessionClosed);
        }
        let (config, blueprint) = make_preset(req.preset, req.height, req.width)?;
        let spec = EvalSpec {
            config,
            blueprint,
            arch: self.config.arch,
            mutator: self.config.mutator,
            n_reps: req.reps,
            n_steps: req.steps,
        };
        let report = evaluate(&spec, &self.parent.logic, self.config.seed)?;
        let mut sim = Simulation::from_entry(
            &spec.blueprint,
            spec.settings(),
            &self.parent,
            derive_seed(self.config.seed, Substep::Replica, 0),
        )?;
        let every = (req.steps / 10).max(1);
        let record = record_run(&mut sim, &spec.blueprint, req.steps, every, false, |_, _| {})?;
        self.state = SessionState::Deployed;
        Ok(Deployment { report, record })
    }
}
