use criterion::{black_box, criterion_group, criterion_main, Criterion};
use gaussvis::experiments::tracking::{RigOptions, TrackingRig};
use gaussvis::{render, SampleScheme};

fn tracking_rig(c: &mut Criterion) {
    let rig = TrackingRig::new(&RigOptions::default()).expect("rig");
    let objective = rig.objective();
    let theta = rig.manual_inits()[0].1.clone();
    let scene = objective.scene(&theta).expect("scene");
    let camera = rig.views[0].camera.clone();
    let scheme = SampleScheme::default();

    let mut group = c.benchmark_group("rig_128");
    group.sample_size(20);
    group.bench_function("render", |b| b.iter(|| render(black_box(&scene), &camera, &scheme)));
    group.bench_function("energy", |b| b.iter(|| objective.value(black_box(&theta)).expect("energy")));
    group.bench_function("energy_and_gradient", |b| {
        b.iter(|| objective.value_grad(black_box(&theta)).expect("gradient"))
    });
    group.finish();
}

criterion_group!(benches, tracking_rig);
criterion_main!(benches);
