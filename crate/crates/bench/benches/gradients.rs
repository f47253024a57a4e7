use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use metalag::harness::gradcheck::random_network;
use metalag::harness::train::run_seed;
use metalag::harness::ExperimentConfig;
use metalag::mesh::MeshInstance;
use metalag::metal::{MetalInstance, OuterLossKind};

fn approx(c: &mut Criterion) {
    let (shape, params, x, cot) = random_network(3);
    c.bench_function("approx/grad_params", |b| b.iter(|| shape.grad_params(black_box(&params), &x, &cot).unwrap()));
}

fn metal(c: &mut Criterion) {
    for kind in [OuterLossKind::CriticOnly, OuterLossKind::ActorPlusCritic] {
        let inst = MetalInstance::random(1, kind);
        let p = inst.problem();
        c.bench_function(&format!("metal/meta_gradient/{}", kind.name()), |b| {
            b.iter(|| {
                let inner = p.inner().unwrap();
                p.meta_gradient(black_box(&inner)).unwrap()
            })
        });
    }
}

fn mesh(c: &mut Criterion) {
    let inst = MeshInstance::random(1);
    let p = inst.problem();
    c.bench_function("mesh/meta_gradient", |b| {
        b.iter(|| {
            let inner = p.inner().unwrap();
            p.meta_gradient(black_box(&inner)).unwrap()
        })
    });
}

fn episodes(c: &mut Criterion) {
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    for agent in ["rc", "metal"] {
        let mut cfg =
            ExperimentConfig::parse("episodes = 8\nwindow = 4\nagent.warmup = 400\nagent.learner_period = 4").unwrap();
        cfg.apply_label(agent).unwrap();
        group.bench_function(format!("{agent}/8_episodes"), |b| b.iter(|| run_seed(black_box(&cfg), 1).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, approx, metal, mesh, episodes);
criterion_main!(benches);
