use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use florae::evolve::{evaluate, meta_evolve_e2e, meta_evolve_petri, MetaResult};
use florae::params_io::{load_params, save_params};
use florae::presets::make_preset;
use florae::record::{record_run, replay, ReplayReport};
use florae::render::{frame_indices, indices_to_image, write_gif, write_png};
use florae::{
    Architecture, EvalReport, EvalSpec, MetaConfig, MutatorConfig, PetriSpec, PresetName,
    ProgramEntry, ReproduceMode, RunRecord, RunSettings, Simulation, StepStats,
};

use crate::args::{EvalArgs, MetaArgs, MetaMode, PolicyArgs, ReplayArgs, RunArgs};

/// Read a policy from a `.flpr` file or a JSON array; the architecture of a
/// JSON array is inferred from its length.
pub fn load_policy(path: &Path, mutator: &MutatorConfig) -> Result<(Architecture, ProgramEntry)> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let logic: Vec<f64> = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let arch = [Architecture::Minimal, Architecture::Extended]
            .into_iter()
            .find(|a| a.param_len() == logic.len())
            .with_context(|| format!("{} holds {} values, which fits no architecture", path.display(), logic.len()))?;
        return Ok((arch, ProgramEntry::new(logic, mutator)));
    }
    let (arch, mut entry) = load_params(path).with_context(|| format!("loading {}", path.display()))?;
    // Mutator state only carries over when its shape matches the chosen mutator.
    let fresh = mutator.initial_state(entry.logic.len());
    if entry.mutator_state.len() != fresh.len() {
        entry.mutator_state = fresh;
    }
    Ok((arch, entry))
}

pub fn resolve_policy(args: &PolicyArgs) -> Result<(Architecture, ProgramEntry)> {
    let mutator = args.mutator_config();
    mutator.validate()?;
    match &args.params {
        Some(p) => load_policy(p, &mutator),
        None => {
            let arch = Architecture::from(args.arch);
            Ok((arch, ProgramEntry::new(arch.init(), &mutator)))
        }
    }
}

#[derive(Debug)]
pub struct RunOutput {
    pub record_path: PathBuf,
    pub final_agents: usize,
    pub extinct: bool,
}

pub fn cmd_run(args: &RunArgs) -> Result<RunOutput> {
    let (arch, entry) = resolve_policy(&args.policy)?;
    let w = &args.world;
    let (config, blueprint) = make_preset(w.preset.into(), w.height, w.width)?;
    let settings = RunSettings {
        config,
        arch,
        mutator: args.policy.mutator_config(),
        mode: ReproduceMode::Normal,
    };
    let mut sim = Simulation::from_entry(&blueprint, settings, &entry, w.seed)?;
    fs::create_dir_all(&args.out_dir)?;

    let every = args.frame_every.max(1);
    let mut frames = vec![frame_indices(&sim.env, &sim.settings.config)];
    let record = record_run(&mut sim, &blueprint, w.steps, args.snapshot_every, true, |s, _| {
        if s.step.is_multiple_of(every) {
            frames.push(frame_indices(&s.env, &s.settings.config));
        }
    })?;

    let record_path = args.out_dir.join("record.json");
    record.save(&record_path)?;
    write_stats_csv(&args.out_dir.join("stats.csv"), record.stats.as_deref().unwrap_or(&[]))?;
    let (ww, hh) = (sim.env.width(), sim.env.height());
    let last = frame_indices(&sim.env, &sim.settings.config);
    write_png(&args.out_dir.join("final.png"), &indices_to_image(&last, ww, hh, args.scale))?;
    write_gif(&args.out_dir.join("run.gif"), &frames, ww, hh, args.scale, 80)?;
    Ok(RunOutput {
        record_path,
        final_agents: sim.env.count_agents(),
        extinct: sim.env.is_extinct(),
    })
}

fn write_stats_csv(path: &Path, stats: &[StepStats]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "{}", StepStats::CSV_HEADER)?;
    for s in stats {
        writeln!(f, "{}", s.csv_row())?;
    }
    f.flush()?;
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport> {
    let (arch, entry) = resolve_policy(&args.policy)?;
    let w = &args.world;
    let mut spec = EvalSpec::preset(w.preset.into(), w.height, w.width, arch, args.policy.mutator_config())?;
    spec.n_reps = args.reps;
    spec.n_steps = w.steps;
    Ok(evaluate(&spec, &entry.logic, w.seed)?)
}

/// A one-row table: preset, policy, mutator, total agents, extinction.
pub fn format_report(preset: PresetName, policy: &str, mutator: &str, report: &EvalReport) -> String {
    let header = format!(
        "{:<14} {:<24} {:<10} {:>24} {:>12}",
        "preset", "params", "mutator", "total agents", "extinction"
    );
    let row = format!(
        "{:<14} {:<24} {:<10} {:>24} {:>11.2}%",
        preset.as_str(),
        policy,
        mutator,
        format!("{:.0} ± {:.0}", report.mean_total, report.std_total),
        report.extinction_pct
    );
    format!("{header}\n{row}\n({} of {} replicas extinct)", report.n_extinct, report.replicas.len())
}

pub fn cmd_meta(args: &MetaArgs) -> Result<MetaResult> {
    let (arch, entry) = resolve_policy(&args.policy)?;
    if args.checkpoint_every == 0 {
        bail!("--checkpoint-every must be positive");
    }
    let mut cfg = MetaConfig {
        outer_steps: args.outer_steps,
        ..MetaConfig::default()
    };
    cfg.pgpe.pop_size = args.pop_size;
    if let Some(lr) = args.center_lr {
        cfg.pgpe.center_lr = lr;
    }
    if let Some(s) = args.init_std {
        cfg.pgpe.init_std = s;
    }
    let ckpt_dir = args.out_dir.join("checkpoints");
    fs::create_dir_all(&ckpt_dir)?;
    let mut log = BufWriter::new(File::create(args.out_dir.join("log.jsonl"))?);
    let mut io_err: Option<anyhow::Error> = None;
    let mutator = args.policy.mutator_config();
    let w = &args.world;
    let on_step = |e: &florae::evolve::MetaLogEntry, pgpe: &florae::Pgpe, best: &[f64]| {
        let res = (|| -> Result<()> {
            writeln!(log, "{}", serde_json::to_string(e)?)?;
            log.flush()?;
            if (e.outer_step + 1).is_multiple_of(args.checkpoint_every) {
                let tag = format!("{:04}", e.outer_step + 1);
                save_params(&ckpt_dir.join(format!("center_{tag}.flpr")), arch, &ProgramEntry::new(pgpe.center.clone(), &mutator))?;
                save_params(&ckpt_dir.join(format!("best_{tag}.flpr")), arch, &ProgramEntry::new(best.to_vec(), &mutator))?;
            }
            Ok(())
        })();
        if let Err(err) = res {
            io_err.get_or_insert(err);
        }
        eprintln!(
            "step {:>3}  best {:>14.1}  mean {:>14.1}  best so far {:>14.1}  {:>7.1}s",
            e.outer_step, e.best_fitness, e.mean_fitness, e.best_so_far, e.wall_time
        );
    };
    let result = match args.mode {
        MetaMode::E2e => {
            let mut spec = EvalSpec::preset(w.preset.into(), w.height, w.width, arch, mutator)?;
            spec.n_reps = args.reps;
            spec.n_steps = w.steps;
            meta_evolve_e2e(&spec, &entry.logic, &cfg, w.seed, on_step)?
        }
        MetaMode::Petri => {
            let spec = PetriSpec::preset(w.preset.into(), arch)?;
            meta_evolve_petri(&spec, &entry.logic, &cfg, w.seed, on_step)?
        }
    };
    if let Some(e) = io_err {
        return Err(e);
    }
    save_params(&args.out_dir.join("best.flpr"), arch, &ProgramEntry::new(result.best_params.clone(), &mutator))?;
    save_params(&args.out_dir.join("center.flpr"), arch, &ProgramEntry::new(result.final_center.clone(), &mutator))?;
    Ok(result)
}

pub fn cmd_replay(args: &ReplayArgs) -> Result<ReplayReport> {
    let record = RunRecord::load(&args.record).with_context(|| format!("loading {}", args.record.display()))?;
    Ok(replay(&record)?)
}
