use criterion::{criterion_group, criterion_main, Criterion};
use xlat_core::*;

fn pattern(side: usize, shift: usize) -> ImageTensor {
    ImageTensor::new(Tensor::from_fn([3, side, side], |c, y, x| ((c * 5 + y + x * 3 + shift) % 13) as f32 / 6.5 - 1.0))
        .unwrap()
}

fn train_iteration(c: &mut Criterion) {
    let names = ["a".to_string(), "b".to_string()];
    let reg = DomainRegistry::build(&names, &ArchSpec::with_width(Width::new(1, 8).unwrap()), 0).unwrap();
    let (a, b) = (reg.id(0).unwrap(), reg.id(1).unwrap());
    let plan = TrainPlan::new(2, 1, 0).unwrap();
    let mut trainer = Trainer::new(reg, plan, ObjectiveConfig::default(), 50).unwrap();
    let (x, y) = (pattern(32, 0), pattern(32, 4));
    let mut g = c.benchmark_group("train");
    g.sample_size(10);
    g.bench_function("iteration_w1/8_32px", |bench| {
        bench.iter(|| trainer.train_iteration(&x, &y, a, b, (2e-4, 2e-4)).unwrap())
    });
    g.finish();
}

fn pairs(c: &mut Criterion) {
    let mut sampler = PairSampler::new(0);
    c.bench_function("sample_pair_n14", |bench| bench.iter(|| sampler.sample(14).unwrap()));
}

criterion_group!(benches, train_iteration, pairs);
criterion_main!(benches);
