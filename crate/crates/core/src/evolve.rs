//! Evaluation, fitness, PGPE and the two meta-evolution loops.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::Architecture;
use crate::config::EnvConfig;
use crate::error::{Error, Result};
use crate::grid::Blueprint;
use crate::mutators::MutatorConfig;
use crate::presets::{make_petri, make_preset, PresetName};
use crate::reproduce::ReproduceMode;
use crate::rng::{derive_seed, keyed_rng, Substep};
use crate::sim::{RunSettings, Simulation};

/// Fitness subtracted from a run that ends extinct.
pub const DEATH_PENALTY: f64 = 1_000_000.0;

/// Default Petri reward per successful reproduction: worth as much as being
/// one cell off target for a whole 300-step dish run.
pub const PETRI_LAMBDA: f64 = 300.0;

/// A world and policy family to evaluate candidates in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSpec {
    pub config: EnvConfig,
    pub blueprint: Blueprint,
    pub arch: Architecture,
    pub mutator: MutatorConfig,
    pub n_reps: usize,
    pub n_steps: u64,
}

impl EvalSpec {
    /// 16 replicas of 1000 steps in the named preset.
    pub fn preset(
        name: PresetName,
        height: usize,
        width: usize,
        arch: Architecture,
        mutator: MutatorConfig,
    ) -> Result<Self> {
        let (config, blueprint) = make_preset(name, height, width)?;
        Ok(Self {
            config,
            blueprint,
            arch,
            mutator,
            n_reps: 16,
            n_steps: 1000,
        })
    }

    pub fn settings(&self) -> RunSettings {
        RunSettings {
            config: self.config.clone(),
            arch: self.arch,
            mutator: self.mutator,
            mode: ReproduceMode::Normal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaResult {
    pub seed: u64,
    /// Sum of the agent count over all steps.
    pub total_agents: u64,
    pub extinct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub replicas: Vec<ReplicaResult>,
    pub mean_total: f64,
    pub std_total: f64,
    pub n_extinct: usize,
    pub extinction_pct: f64,
}

impl EvalReport {
    pub fn from_replicas(replicas: Vec<ReplicaResult>) -> Self {
        let n = replicas.len();
        let totals: Vec<f64> = replicas.iter().map(|r| r.total_agents as f64).collect();
        let mean_total = if n == 0 { 0.0 } else { totals.iter().sum::<f64>() / n as f64 };
        let std_total = if n == 0 {
            0.0
        } else {
            (totals.iter().map(|t| (t - mean_total).powi(2)).sum::<f64>() / n as f64).sqrt()
        };
        let n_extinct = replicas.iter().filter(|r| r.extinct).count();
        let extinction_pct = if n == 0 { 0.0 } else { 100.0 * n_extinct as f64 / n as f64 };
        Self {
            replicas,
            mean_total,
            std_total,
            n_extinct,
            extinction_pct,
        }
    }

    /// Mean per-replica fitness.
    pub fn mean_fitness(&self) -> f64 {
        if self.replicas.is_empty() {
            return 0.0;
        }
        self.replicas
            .iter()
            .map(|r| fitness(r.total_agents as f64, r.extinct))
            .sum::<f64>()
            / self.replicas.len() as f64
    }
}

/// Run one replica from the blueprint to `spec.n_steps`.
pub fn run_replica(spec: &EvalSpec, logic: &[f64], seed: u64) -> Result<ReplicaResult> {
    let mut sim = Simulation::from_blueprint(&spec.blueprint, spec.settings(), logic, seed)?;
    let mut total = 0u64;
    for _ in 0..spec.n_steps {
        let stats = sim.step();
        total += stats.n_agents as u64;
        // Nothing can ever appear again in an empty world.
        if stats.n_agents == 0 {
            break;
        }
    }
    Ok(ReplicaResult {
        seed,
        total_agents: total,
        extinct: sim.env.is_extinct(),
    })
}

/// Run `spec.n_reps` independent replicas in parallel.
pub fn evaluate(spec: &EvalSpec, logic: &[f64], seed: u64) -> Result<EvalReport> {
    let replicas = (0..spec.n_reps as u64)
        .into_par_iter()
        .map(|i| run_replica(spec, logic, derive_seed(seed, Substep::Replica, i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_replicas(replicas))
}

/// Total agent-steps, minus a large penalty if the run went extinct.
pub fn fitness(total_agents: f64, extinct: bool) -> f64 {
    total_agents - if extinct { DEATH_PENALTY } else { 0.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgpeConfig {
    /// Population size; must be even because samples come in mirrored pairs.
    pub pop_size: usize,
    pub center_lr: f64,
    /// Factor applied to the center learning rate after every update.
    pub center_lr_decay: f64,
    pub std_lr: f64,
    pub init_std: f64,
    /// Largest relative change of any std in one update.
    pub max_std_change: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for PgpeConfig {
    fn default() -> Self {
        Self {
            pop_size: 32,
            center_lr: 0.05,
            center_lr_decay: 0.99,
            std_lr: 0.1,
            init_std: 0.02,
            max_std_change: 0.2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl PgpeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pop_size < 2 || !self.pop_size.is_multiple_of(2) {
            return Err(Error::Config(format!("pop_size must be even and ≥ 2, got {}", self.pop_size)));
        }
        if !(self.init_std > 0.0)
            || self.center_lr < 0.0
            || self.std_lr < 0.0
            || !(0.0..=1.0).contains(&self.center_lr_decay)
        {
            return Err(Error::Config("PGPE rates must be non-negative and init_std positive".into()));
        }
        Ok(())
    }
}

/// Symmetric-sampling PGPE with centered-rank shaping and Adam on the center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pgpe {
    pub config: PgpeConfig,
    pub center: Vec<f64>,
    pub std: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    /// Number of updates applied.
    pub t: u64,
}

/// Ranks mapped linearly onto `[-0.5, 0.5]`; ties share their mean rank.
pub fn centered_ranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = r / (n - 1) as f64 - 0.5;
        }
        i = j + 1;
    }
    ranks
}

impl Pgpe {
    pub fn new(center: Vec<f64>, config: PgpeConfig) -> Result<Self> {
        config.validate()?;
        let n = center.len();
        Ok(Self {
            std: vec![config.init_std; n],
            m: vec![0.0; n],
            v: vec![0.0; n],
            center,
            config,
            t: 0,
        })
    }

    /// Sample a population laid out as mirrored pairs `center ± ε`.
    pub fn ask<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.config.pop_size);
        for _ in 0..self.config.pop_size / 2 {
            let eps: Vec<f64> = self
                .std
                .iter()
                .map(|s| s * rng.sample::<f64, _>(StandardNormal))
                .collect();
            out.push(self.center.iter().zip(&eps).map(|(c, e)| c + e).collect());
            out.push(self.center.iter().zip(&eps).map(|(c, e)| c - e).collect());
        }
        out
    }

    /// Update from the fitnesses (higher is better) of a population from [`Pgpe::ask`].
    pub fn tell(&mut self, samples: &[Vec<f64>], fitnesses: &[f64]) -> Result<()> {
        if samples.len() != self.config.pop_size || fitnesses.len() != samples.len() {
            return Err(Error::Config(format!(
                "expected {} samples and fitnesses, got {} and {}",
                self.config.pop_size,
                samples.len(),
                fitnesses.len()
            )));
        }
        if fitnesses.iter().all(|f| *f == fitnesses[0]) {
            return Ok(());
        }
        let ranks = centered_ranks(fitnesses);
        let n = self.center.len();
        let pairs = samples.len() / 2;
        let mut grad_c = vec![0.0; n];
        let mut grad_s = vec![0.0; n];
        for i in 0..pairs {
            let (plus, minus) = (&samples[2 * i], &samples[2 * i + 1]);
            let (rp, rm) = (ranks[2 * i], ranks[2 * i + 1]);
            let diff = (rp - rm) / 2.0;
            let avg = (rp + rm) / 2.0;
            for j in 0..n {
                let eps = (plus[j] - minus[j]) / 2.0;
                let s = self.std[j];
                grad_c[j] += eps * diff;
                grad_s[j] += avg * (eps * eps - s * s) / s;
            }
        }
        let c = &self.config;
        self.t += 1;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let lr = c.center_lr * c.center_lr_decay.powi(self.t as i32 - 1);
        for j in 0..n {
            let g = grad_c[j] / pairs as f64;
            self.m[j] = c.beta1 * self.m[j] + (1.0 - c.beta1) * g;
            self.v[j] = c.beta2 * self.v[j] + (1.0 - c.beta2) * g * g;
            let mh = self.m[j] / bc1;
            let vh = self.v[j] / bc2;
            self.center[j] += lr * mh / (vh.sqrt() + c.epsilon);

            let allowed = self.std[j].abs() * c.max_std_change;
            let delta = (c.std_lr * grad_s[j] / pairs as f64).clamp(-allowed, allowed);
            self.std[j] += delta;
        }
        Ok(())
    }
}

/// A small world where one organism lives alone and its reproductions are counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PetriSpec {
    pub config: EnvConfig,
    pub blueprint: Blueprint,
    pub arch: Architecture,
    pub n_steps: u64,
    /// Desired organism size in cells.
    pub target: usize,
    /// Fitness value of one successful reproduction.
    pub lambda: f64,
}

impl PetriSpec {
    /// The named preset's rules in a Petri-sized single-seed world.
    pub fn preset(name: PresetName, arch: Architecture) -> Result<Self> {
        let (config, blueprint) = make_petri(name)?;
        Ok(Self {
            config,
            blueprint,
            arch,
            n_steps: 300,
            target: 50,
            lambda: PETRI_LAMBDA,
        })
    }

    /// A simulation of this dish; `Intercept` keeps the organism alone.
    pub fn simulation(&self, logic: &[f64], seed: u64, mode: ReproduceMode) -> Result<Simulation> {
        let settings = RunSettings {
            config: self.config.clone(),
            arch: self.arch,
            mutator: MutatorConfig::disabled(),
            mode,
        };
        Simulation::from_blueprint(&self.blueprint, settings, logic, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PetriOutcome {
    pub n_repro: usize,
    /// Agent count after each step.
    pub trace: Vec<usize>,
}

/// Run a Petri dish with intercepted reproduction.
pub fn petri_run(spec: &PetriSpec, logic: &[f64], seed: u64) -> Result<PetriOutcome> {
    petri_run_observed(spec, logic, seed, |_| {})
}

/// [`petri_run`] that also shows `observe` the world at step 0 and after every step.
pub fn petri_run_observed(
    spec: &PetriSpec,
    logic: &[f64],
    seed: u64,
    mut observe: impl FnMut(&Simulation),
) -> Result<PetriOutcome> {
    let mut sim = spec.simulation(logic, seed, ReproduceMode::Intercept)?;
    let mut out = PetriOutcome {
        n_repro: 0,
        trace: Vec::with_capacity(spec.n_steps as usize),
    };
    observe(&sim);
    for _ in 0..spec.n_steps {
        let stats = sim.step();
        out.n_repro += stats.n_repro_success;
        out.trace.push(stats.n_agents);
        observe(&sim);
    }
    Ok(out)
}

/// Distance of the organism size from `target` over time, plus a bonus per reproduction.
pub fn petri_fitness(trace: &[usize], n_repro: usize, target: usize, lambda: f64) -> f64 {
    let err: f64 = trace.iter().map(|&c| (c as f64 - target as f64).abs()).sum();
    -err + lambda * n_repro as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaConfig {
    pub outer_steps: usize,
    pub pgpe: PgpeConfig,
}

impl Default for MetaConfig {
    /// 30 outer steps of 32 candidates. The center moves more slowly than the
    /// generic PGPE default: Adam's first update shifts every coordinate by the
    /// full learning rate, which at 0.05 breaks the hand-set policies.
    fn default() -> Self {
        Self {
            outer_steps: 30,
            pgpe: PgpeConfig {
                center_lr: 0.01,
                ..PgpeConfig::default()
            },
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaLogEntry {
    pub outer_step: usize,
    /// Best fitness within this step's population.
    pub best_fitness: f64,
    pub mean_fitness: f64,
    /// Best fitness seen in any step so far.
    pub best_so_far: f64,
    /// Seconds since the loop started.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaResult {
    pub best_params: Vec<f64>,
    pub best_fitness: f64,
    pub history: Vec<MetaLogEntry>,
    pub final_center: Vec<f64>,
}

/// Generic PGPE loop. All candidates of one outer step share an evaluation seed.
///
/// `on_step` sees every log entry together with the optimizer and best
/// parameters so far, for logging and checkpoints.
pub fn meta_evolve<F, S>(
    init: &[f64],
    config: &MetaConfig,
    seed: u64,
    eval: F,
    mut on_step: S,
) -> Result<MetaResult>
where
    F: Fn(&[f64], u64) -> Result<f64> + Sync,
    S: FnMut(&MetaLogEntry, &Pgpe, &[f64]),
{
    let mut pgpe = Pgpe::new(init.to_vec(), config.pgpe.clone())?;
    let mut best_params = init.to_vec();
    let mut best_fitness = f64::NEG_INFINITY;
    let mut history = Vec::with_capacity(config.outer_steps);
    let start = Instant::now();
    for t in 0..config.outer_steps {
        let samples = pgpe.ask(&mut keyed_rng(&[seed, Substep::Population as u64, t as u64]));
        let eval_seed = derive_seed(seed, Substep::Replica, t as u64);
        let fitnesses = samples
            .par_iter()
            .map(|s| eval(s, eval_seed))
            .collect::<Result<Vec<_>>>()?;
        let (arg, step_best) = fitnesses
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, f)| if f > acc.1 { (i, f) } else { acc });
        if step_best > best_fitness {
            best_fitness = step_best;
            best_params = samples[arg].clone();
        }
        let entry = MetaLogEntry {
            outer_step: t,
            best_fitness: step_best,
            mean_fitness: fitnesses.iter().sum::<f64>() / fitnesses.len() as f64,
            best_so_far: best_fitness,
            wall_time: start.elapsed().as_secs_f64(),
        };
        pgpe.tell(&samples, &fitnesses)?;
        on_step(&entry, &pgpe, &best_params);
        history.push(entry);
    }
    Ok(MetaResult {
        best_params,
        best_fitness,
        history,
        final_center: pgpe.center,
    })
}

/// Meta-evolve by full simulations; a candidate's fitness is its mean over replicas.
pub fn meta_evolve_e2e<S>(
    spec: &EvalSpec,
    init: &[f64],
    config: &MetaConfig,
    seed: u64,
    on_step: S,
) -> Result<MetaResult>
where
    S: FnMut(&MetaLogEntry, &Pgpe, &[f64]),
{
    check_len(spec.arch, init)?;
    meta_evolve(
        init,
        config,
        seed,
        |params, s| {
            let mut total = 0.0;
            for i in 0..spec.n_reps as u64 {
                let r = run_replica(spec, params, derive_seed(s, Substep::Replica, i))?;
                total += fitness(r.total_agents as f64, r.extinct);
            }
            Ok(total / spec.n_reps.max(1) as f64)
        },
        on_step,
    )
}

/// Meta-evolve in a Petri dish with intercepted reproduction.
pub fn meta_evolve_petri<S>(
    spec: &PetriSpec,
    init: &[f64],
    config: &MetaConfig,
    seed: u64,
    on_step: S,
) -> Result<MetaResult>
where
    S: FnMut(&MetaLogEntry, &Pgpe, &[f64]),
{
    check_len(spec.arch, init)?;
    meta_evolve(
        init,
        config,
        seed,
        |params, s| {
            let out = petri_run(spec, params, s)?;
            Ok(petri_fitness(&out.trace, out.n_repro, spec.target, spec.lambda))
        },
        on_step,
    )
}

fn check_len(arch: Architecture, params: &[f64]) -> Result<()> {
    if params.len() != arch.param_len() {
        return Err(Error::ParamsLength {
            expected: arch.param_len(),
            got: params.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{init_minimal, MINIMAL_LEN};

    #[test]
    fn fitness_values() {
        assert_eq!(fitness(250387.0, false), 250387.0);
        assert_eq!(fitness(0.0, true), -1_000_000.0);
        assert_eq!(fitness(151439.0, true), -848561.0);
    }

    #[test]
    fn petri_fitness_values() {
        assert_eq!(petri_fitness(&[50; 300], 0, 50, 10.0), 0.0);
        assert_eq!(petri_fitness(&[49; 300], 0, 50, 10.0), -300.0);
        let base = petri_fitness(&[40, 60, 55], 2, 50, 10.0);
        assert_eq!(petri_fitness(&[40, 60, 55], 3, 50, 10.0) - base, 10.0);
    }

    #[test]
    fn ranks_are_centered() {
        assert_eq!(centered_ranks(&[3.0, 1.0, 2.0]), vec![0.5, -0.5, 0.0]);
        assert_eq!(centered_ranks(&[1.0, 1.0, 5.0]), vec![-0.25, -0.25, 0.5]);
        assert_eq!(centered_ranks(&[7.0]), vec![0.0]);
    }

    #[test]
    fn equal_fitnesses_leave_center() {
        let mut p = Pgpe::new(vec![0.3; 5], PgpeConfig { pop_size: 4, ..Default::default() }).unwrap();
        let samples = p.ask(&mut keyed_rng(&[1]));
        let before = p.clone();
        p.tell(&samples, &[2.0; 4]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn antisymmetric_pair_moves_along_sample() {
        // One pair in 1-D: the + sample wins, so the center moves by +lr (first
        // Adam step has magnitude lr), and the std gradient vanishes.
        let mut p = Pgpe::new(vec![1.0], PgpeConfig { pop_size: 2, ..Default::default() }).unwrap();
        let samples = vec![vec![1.5], vec![0.5]];
        p.tell(&samples, &[1.0, -1.0]).unwrap();
        assert!((p.center[0] - 1.05).abs() < 1e-6, "{}", p.center[0]);
        assert_eq!(p.std[0], 0.02);
        let mut q = Pgpe::new(vec![1.0], PgpeConfig { pop_size: 2, ..Default::default() }).unwrap();
        q.tell(&samples, &[-1.0, 1.0]).unwrap();
        assert!((q.center[0] - 0.95).abs() < 1e-6);
    }

    #[test]
    fn odd_population_rejected() {
        assert!(Pgpe::new(vec![0.0], PgpeConfig { pop_size: 3, ..Default::default() }).is_err());
    }

    #[test]
    fn replica_seeds_are_independent_of_order() {
        let mut spec = EvalSpec::preset(PresetName::Persistence, 24, 32, Architecture::Minimal, MutatorConfig::basic(0.01)).unwrap();
        spec.n_reps = 3;
        spec.n_steps = 40;
        let a = evaluate(&spec, &init_minimal(), 5).unwrap();
        let b = evaluate(&spec, &init_minimal(), 5).unwrap();
        assert_eq!(a, b);
        for (i, r) in a.replicas.iter().enumerate() {
            assert_eq!(*r, run_replica(&spec, &init_minimal(), derive_seed(5, Substep::Replica, i as u64)).unwrap());
        }
    }

    #[test]
    fn zero_steps_counts_nothing() {
        let mut spec = EvalSpec::preset(PresetName::Persistence, 24, 32, Architecture::Minimal, MutatorConfig::basic(0.01)).unwrap();
        spec.n_reps = 2;
        spec.n_steps = 0;
        let r = evaluate(&spec, &init_minimal(), 1).unwrap();
        assert!(r.replicas.iter().all(|x| x.total_agents == 0 && !x.extinct));
        assert_eq!(r.extinction_pct, 0.0);
    }

    #[test]
    fn zero_params_never_reproduce() {
        let spec = PetriSpec::preset(PresetName::Pestilence, Architecture::Minimal).unwrap();
        let out = petri_run(&spec, &vec![0.0; MINIMAL_LEN], 3).unwrap();
        assert_eq!(out.n_repro, 0);
        assert_eq!(out.trace.len(), 300);
    }

    #[test]
    fn zero_outer_steps_returns_init() {
        let spec = PetriSpec::preset(PresetName::Pestilence, Architecture::Minimal).unwrap();
        let cfg = MetaConfig { outer_steps: 0, ..Default::default() };
        let r = meta_evolve_petri(&spec, &init_minimal(), &cfg, 1, |_, _, _| {}).unwrap();
        assert_eq!(r.best_params, init_minimal());
        assert!(r.history.is_empty());
    }

    #[test]
    fn wrong_length_rejected() {
        let spec = PetriSpec::preset(PresetName::Pestilence, Architecture::Extended).unwrap();
        let cfg = MetaConfig { outer_steps: 1, ..Default::default() };
        assert!(matches!(
            meta_evolve_petri(&spec, &init_minimal(), &cfg, 1, |_, _, _| {}),
            Err(Error::ParamsLength { .. })
        ));
    }
}
