use criterion::{criterion_group, criterion_main, Criterion};
use nfield::datagen::phantom;
use nfield::metrics::{dice, psnr, ssim};
use nfield_bench::DIMS;

fn metrics(c: &mut Criterion) {
    let (a, la) = phantom(DIMS[0], DIMS[1], DIMS[2], -1.0, 0).unwrap();
    let (b, lb) = phantom(DIMS[0], DIMS[1], DIMS[2], 1.0, 0).unwrap();
    c.bench_function("psnr", |bn| bn.iter(|| psnr(&a, &b, 1.0).unwrap()));
    c.bench_function("ssim", |bn| bn.iter(|| ssim(&a, &b).unwrap()));
    c.bench_function("dice", |bn| bn.iter(|| dice(&la, &lb, 3).unwrap()));
}

criterion_group!(benches, metrics);
criterion_main!(benches);
