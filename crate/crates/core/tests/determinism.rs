use florae::presets::make_preset;
use florae::record::{record_run, replay, state_digest};
use florae::{Architecture, MutatorConfig, PresetName, ReproduceMode, RunSettings, Simulation};

fn world(preset: PresetName, seed: u64) -> (Simulation, florae::Blueprint) {
    let (config, blueprint) = make_preset(preset, 24, 40).unwrap();
    let settings = RunSettings {
        config,
        arch: Architecture::Minimal,
        mutator: MutatorConfig::basic(0.01),
        mode: ReproduceMode::Normal,
    };
    let sim = Simulation::from_blueprint(&blueprint, settings, &Architecture::Minimal.init(), seed).unwrap();
    (sim, blueprint)
}

#[test]
fn same_seed_same_world() {
    for preset in PresetName::ALL {
        let (mut a, _) = world(preset, 7);
        let (mut b, _) = world(preset, 7);
        let sa = a.run(120);
        let sb = b.run(120);
        assert_eq!(sa, sb, "{preset}");
        assert_eq!(state_digest(&a.env), state_digest(&b.env), "{preset}");
    }
}

#[test]
fn seeds_matter() {
    let (mut a, _) = world(PresetName::Persistence, 1);
    let (mut b, _) = world(PresetName::Persistence, 2);
    a.run(120);
    b.run(120);
    assert_ne!(state_digest(&a.env), state_digest(&b.env));
}

#[test]
fn saved_record_replays_after_reload() {
    let dir = tempfile::tempdir().unwrap();
    let (mut sim, bp) = world(PresetName::Sideways, 5);
    let record = record_run(&mut sim, &bp, 60, 20, false, |_, _| {}).unwrap();
    let path = dir.path().join("record.json");
    record.save(&path).unwrap();
    let loaded = florae::RunRecord::load(&path).unwrap();
    let report = replay(&loaded).unwrap();
    assert!(report.is_exact());
    assert_eq!(report.checked, record.snapshots.len());
}
