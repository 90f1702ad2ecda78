use criterion::{criterion_group, criterion_main, Criterion};
use isopulse_core::*;
use std::hint::black_box;

fn setup() -> (ToggleStates, PulseProblem) {
    let model = toggle_switch_model();
    let q = toggle::Q_INT;
    let states = ToggleStates::find(&model, &q).unwrap();
    let ef = states
        .eigenfunction(&model, &q, true, LaplaceOptions::default())
        .unwrap();
    (states, PulseProblem::new(ef, 0).unwrap())
}

fn eigenfunction(c: &mut Criterion) {
    let (states, pb) = setup();
    let near = [states.bullet[0] - 5.0, states.bullet[1] + 0.2];
    let mut g = c.benchmark_group("s1");
    g.bench_function("near x•", |b| b.iter(|| pb.ef.eval(black_box(&near))));
    g.bench_function("near separatrix", |b| b.iter(|| pb.ef.eval(black_box(&[7.0, 6.0]))));
    g.finish();
}

fn pulse(c: &mut Criterion) {
    let (states, pb) = setup();
    let mut g = c.benchmark_group("r");
    g.bench_function("r_eval switching", |b| {
        b.iter(|| pb.r_eval(black_box(&states.star), 8.0, 6.0))
    });
    g.sample_size(10);
    g.bench_function("static program", |b| {
        b.iter(|| solve_static_program(&pb, &states.star, 1e-2, 30.0, &StaticProgramOptions::default()))
    });
    g.finish();
}

criterion_group!(benches, eigenfunction, pulse);
criterion_main!(benches);
