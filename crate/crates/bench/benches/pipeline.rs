use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use epictrl_core::{
    costates_for_schedule, objective, preset, refine_stationary, simulate, verify_schedule, BangSchedule, Control,
};

const H: f64 = 0.01;

fn forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate");
    for name in ["cities3", "cities5", "cities8"] {
        let sc = preset(name).unwrap();
        let control = Control::Bang(BangSchedule::full(&sc));
        group.bench_with_input(BenchmarkId::from_parameter(name), &control, |b, control| {
            b.iter(|| simulate(&sc, black_box(control), H).unwrap())
        });
    }
    group.finish();
}

fn costates(c: &mut Criterion) {
    let mut group = c.benchmark_group("costates");
    for name in ["cities3", "cities8"] {
        let sc = preset(name).unwrap();
        let schedule = BangSchedule::uniform(&sc, 0.6);
        let traj = simulate(&sc, &Control::Bang(schedule.clone()), H).unwrap();
        group.bench_function(name, |b| {
            b.iter(|| costates_for_schedule(&sc, black_box(&traj), &schedule).unwrap())
        });
    }
    group.finish();
}

fn evaluation(c: &mut Criterion) {
    let sc = preset("cities5").unwrap();
    let schedule = BangSchedule::uniform(&sc, 0.6);
    c.bench_function("objective/cities5", |b| b.iter(|| objective(&sc, black_box(&schedule), H).unwrap()));
    c.bench_function("verify/cities5", |b| b.iter(|| verify_schedule(&sc, black_box(&schedule), H).unwrap()));
}

fn refinement(c: &mut Criterion) {
    let sc = preset("toy").unwrap();
    let start = BangSchedule::new(1, 1, vec![3.0]).unwrap();
    let mut group = c.benchmark_group("refine");
    group.sample_size(10);
    group.bench_function("toy", |b| b.iter(|| refine_stationary(&sc, black_box(&start), H, 60).unwrap()));
    group.finish();
}

criterion_group!(benches, forward, costates, evaluation, refinement);
criterion_main!(benches);
