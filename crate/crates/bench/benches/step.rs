use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use florae::agents::{decide, perceive, FeatureScale};
use florae::ops::{propose_air, propose_earth, propose_spawn, resolve_exclusive};
use florae::sim::decide_all;
use florae::rng::{StepRng, Substep};
use florae::{Environment, NutrientLedger};
use florae_bench::grown_world;
use std::hint::black_box;

fn step(c: &mut Criterion) {
    let mut g = c.benchmark_group("step");
    for (h, w) in [(48, 96), (72, 128)] {
        let sim = grown_world(h, w, 200);
        g.bench_function(format!("{h}x{w}"), |b| {
            b.iter_batched(|| sim.clone(), |mut s| black_box(s.step()), BatchSize::LargeInput)
        });
    }
    g.finish();
}

fn decide_all_agents(c: &mut Criterion) {
    let sim = grown_world(48, 96, 200);
    let scale = FeatureScale::from_config(&sim.settings.config);
    let positions = sim.env.agent_positions();
    let rng = StepRng::new(sim.seed, sim.step);
    c.bench_function(&format!("decide/{}_agents", positions.len()), |b| {
        b.iter(|| {
            for &pos in &positions {
                let id = sim.env.agent_id(pos);
                let logic = &sim.programs.get(id).expect("program").logic;
                let u = rng.cell_uniform(Substep::AgentNoise, sim.env.index(pos));
                black_box(decide(sim.settings.arch, logic, &perceive(&sim.env, pos), &scale, u));
            }
        })
    });
}

fn resolve(c: &mut Criterion) {
    let sim = grown_world(48, 96, 200);
    let rng = StepRng::new(sim.seed, sim.step);
    let intents: Vec<_> = decide_all(&sim.env, &sim.programs, &sim.settings, &rng)
        .into_iter()
        .filter(|(_, d)| d.exclusive.spawn)
        .map(|(pos, d)| (pos, d.exclusive))
        .collect();
    let mut ops = propose_air(&sim.env, &rng);
    ops.extend(propose_earth(&sim.env, &rng));
    ops.extend(propose_spawn(&sim.env, &intents, &sim.settings.config, &rng));
    c.bench_function(&format!("resolve/{}_ops", ops.len()), |b| {
        b.iter_batched(
            || sim.env.clone(),
            |mut env| {
                let mut ledger = NutrientLedger::default();
                black_box(resolve_exclusive(&mut env, &ops, &mut rng.stream(Substep::Resolve), &mut ledger))
            },
            BatchSize::LargeInput,
        )
    });
}

/// Air pouring into an empty lower half: many ops contend for the same cells.
fn resolve_contended(c: &mut Criterion) {
    let rows: Vec<String> = (0..48).map(|r| if r < 24 { "A" } else { "V" }.repeat(96)).collect();
    let rows: Vec<&str> = rows.iter().map(String::as_str).collect();
    let env = Environment::from_ascii(&rows, 12).expect("world");
    let rng = StepRng::new(0, 0);
    let ops = propose_air(&env, &rng);
    c.bench_function(&format!("resolve/contended_{}_ops", ops.len()), |b| {
        b.iter_batched(
            || env.clone(),
            |mut env| {
                let mut ledger = NutrientLedger::default();
                black_box(resolve_exclusive(&mut env, &ops, &mut rng.stream(Substep::Resolve), &mut ledger))
            },
            BatchSize::LargeInput,
        )
    });
}

criterion_group!(benches, step, decide_all_agents, resolve, resolve_contended);
criterion_main!(benches);
