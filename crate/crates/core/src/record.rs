//! Run records: everything needed to re-run a simulation, plus state digests
//! taken along the way so a replay can be checked bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{Blueprint, Environment};
use crate::programs::ProgramStore;
use crate::sim::{RunSettings, Simulation, StepStats};

pub const RECORD_VERSION: u32 = 1;

/// SHA-256 over dimensions, cell types, exact f64 state bits and agent ids.
pub fn state_digest(env: &Environment) -> String {
    let mut h = Sha256::new();
    for d in [env.height(), env.width(), env.state_size()] {
        h.update((d as u64).to_le_bytes());
    }
    h.update(env.types().iter().map(|&t| t as u8).collect::<Vec<_>>());
    for v in env.states() {
        h.update(v.to_bits().to_le_bytes());
    }
    for id in env.agent_ids() {
        h.update(id.to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotDigest {
    /// Number of steps completed when the digest was taken.
    pub step: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub version: u32,
    pub settings: RunSettings,
    pub blueprint: Blueprint,
    /// Programs at step 0.
    pub programs: ProgramStore,
    pub seed: u64,
    pub n_steps: u64,
    pub snapshot_every: u64,
    pub snapshots: Vec<SnapshotDigest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<Vec<StepStats>>,
}

impl RunRecord {
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let r: RunRecord = serde_json::from_reader(f)?;
        if r.version != RECORD_VERSION {
            return Err(Error::Config(format!("unsupported record version {}", r.version)));
        }
        Ok(r)
    }

    /// The simulation as it stood at step 0.
    pub fn initial_simulation(&self) -> Result<Simulation> {
        let env = crate::grid::new_environment(&self.blueprint, &self.settings.config)?;
        Ok(Simulation::new(env, self.programs.clone(), self.settings.clone(), self.seed))
    }
}

fn due(step: u64, every: u64, n_steps: u64) -> bool {
    step == n_steps || (every > 0 && step.is_multiple_of(every))
}

/// Run `sim` (which must be at step 0) for `n_steps`, digesting the state at
/// step 0, every `snapshot_every` steps and at the end. `observe` sees the
/// simulation after each step.
pub fn record_run(
    sim: &mut Simulation,
    blueprint: &Blueprint,
    n_steps: u64,
    snapshot_every: u64,
    keep_stats: bool,
    mut observe: impl FnMut(&Simulation, &StepStats),
) -> Result<RunRecord> {
    if sim.step != 0 {
        return Err(Error::Config("recording must start at step 0".into()));
    }
    let mut record = RunRecord {
        version: RECORD_VERSION,
        settings: sim.settings.clone(),
        blueprint: blueprint.clone(),
        programs: sim.programs.clone(),
        seed: sim.seed,
        n_steps,
        snapshot_every,
        snapshots: vec![SnapshotDigest {
            step: 0,
            sha256: state_digest(&sim.env),
        }],
        stats: keep_stats.then(Vec::new),
    };
    for _ in 0..n_steps {
        let s = sim.step();
        observe(sim, &s);
        if let Some(v) = record.stats.as_mut() {
            v.push(s);
        }
        if due(sim.step, snapshot_every, n_steps) {
            record.snapshots.push(SnapshotDigest {
                step: sim.step,
                sha256: state_digest(&sim.env),
            });
        }
    }
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub steps: u64,
    pub checked: usize,
    /// Steps whose digest differed from the record.
    pub mismatches: Vec<u64>,
}

impl ReplayReport {
    pub fn is_exact(&self) -> bool {
        self.mismatches.is_empty()
    }

    pub fn into_result(self) -> Result<Self> {
        match self.mismatches.first() {
            Some(&step) => Err(Error::ReplayDiverged { step }),
            None => Ok(self),
        }
    }
}

/// Re-run a record from scratch and compare every stored digest.
pub fn replay(record: &RunRecord) -> Result<ReplayReport> {
    let mut sim = record.initial_simulation()?;
    let mut report = ReplayReport {
        steps: record.n_steps,
        checked: 0,
        mismatches: Vec::new(),
    };
    let mut expected = record.snapshots.iter().peekable();
    let mut check = |sim: &Simulation, report: &mut ReplayReport| {
        while let Some(s) = expected.next_if(|s| s.step == sim.step) {
            report.checked += 1;
            if s.sha256 != state_digest(&sim.env) {
                report.mismatches.push(s.step);
            }
        }
    };
    check(&sim, &mut report);
    for _ in 0..record.n_steps {
        sim.step();
        check(&sim, &mut report);
    }
    if report.checked != record.snapshots.len() {
        return Err(Error::Config(format!(
            "record holds {} digests but only {} fall within {} steps",
            record.snapshots.len(),
            report.checked,
            record.n_steps
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{init_minimal, Architecture};
    use crate::mutators::MutatorConfig;
    use crate::presets::{make_preset, PresetName};
    use crate::reproduce::ReproduceMode;

    fn sim(seed: u64) -> (Simulation, Blueprint) {
        let (config, bp) = make_preset(PresetName::Persistence, 24, 32).unwrap();
        let settings = RunSettings {
            config,
            arch: Architecture::Minimal,
            mutator: MutatorConfig::basic(0.01),
            mode: ReproduceMode::Normal,
        };
        (Simulation::from_blueprint(&bp, settings, &init_minimal(), seed).unwrap(), bp)
    }

    #[test]
    fn replay_matches() {
        let (mut s, bp) = sim(5);
        let mut seen = 0;
        let rec = record_run(&mut s, &bp, 120, 50, true, |_, _| seen += 1).unwrap();
        assert_eq!(seen, 120);
        let steps: Vec<u64> = rec.snapshots.iter().map(|s| s.step).collect();
        assert_eq!(steps, vec![0, 50, 100, 120]);
        assert_eq!(rec.stats.as_ref().unwrap().len(), 120);
        let report = replay(&rec).unwrap();
        assert!(report.is_exact());
        assert_eq!(report.checked, 4);
    }

    #[test]
    fn tampering_is_detected() {
        let (mut s, bp) = sim(5);
        let mut rec = record_run(&mut s, &bp, 60, 20, false, |_, _| {}).unwrap();
        rec.seed += 1;
        let report = replay(&rec).unwrap();
        assert!(!report.is_exact());
        assert!(matches!(report.into_result(), Err(Error::ReplayDiverged { .. })));
    }

    #[test]
    fn digest_sees_last_bit() {
        let (s, _) = sim(1);
        let mut env = s.env.clone();
        let a = state_digest(&env);
        let i = env.len() - 1;
        let v = env.state_at(i)[0];
        env.state_at_mut(i)[0] = f64::from_bits(v.to_bits() ^ 1);
        assert_ne!(a, state_digest(&env));
    }

    #[test]
    fn json_round_trip() {
        let (mut s, bp) = sim(9);
        let rec = record_run(&mut s, &bp, 30, 10, true, |_, _| {}).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        rec.save(&p).unwrap();
        let back = RunRecord::load(&p).unwrap();
        assert_eq!(back, rec);
        assert!(replay(&back).unwrap().is_exact());
    }
}
