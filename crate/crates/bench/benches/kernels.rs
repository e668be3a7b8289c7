use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use embedalign::models::{Aligner, Arch};
use embedalign::numkernel::{matmul, matmul_at, matmul_bt, mse_loss, AdamW, AdamWConfig, Matrix, Mode, RngStream};

fn random(rows: usize, cols: usize, rng: &mut RngStream) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal() as f32).collect()).unwrap()
}

fn products(c: &mut Criterion) {
    let mut rng = RngStream::new(1, "bench");
    let mut g = c.benchmark_group("matmul");
    for d in [64, 256, 768] {
        let x = random(16, d, &mut rng);
        let w = random(d, d, &mut rng);
        let gy = random(16, d, &mut rng);
        g.bench_with_input(BenchmarkId::new("x·Wᵀ", d), &d, |b, _| {
            b.iter(|| matmul_bt(black_box(&x), black_box(&w)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("gᵀ·x", d), &d, |b, _| {
            b.iter(|| matmul_at(black_box(&gy), black_box(&x)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("g·W", d), &d, |b, _| {
            b.iter(|| matmul(black_box(&gy), black_box(&w)).unwrap())
        });
    }
    g.finish();
}

fn aligner_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("aligner_batch16");
    for (arch, d) in [(Arch::Fc, 64), (Arch::Ae, 64), (Arch::Fc, 768), (Arch::Ae, 768)] {
        let mut rng = RngStream::new(2, "bench");
        let mut aligner = Aligner::new(arch, d, &mut rng).unwrap();
        let x = random(16, d, &mut rng);
        let y = random(16, d, &mut rng);
        let mut opt = AdamW::new(AdamWConfig::with_lr(1e-5));
        g.bench_function(BenchmarkId::new(arch.as_str(), d), |b| {
            b.iter(|| {
                let net = aligner.network_mut();
                net.zero_grad();
                let pred = net.forward(&x, Mode::Train, &mut rng).unwrap();
                let (_, grad) = mse_loss(&pred, &y).unwrap();
                net.backward(&grad).unwrap();
                opt.step(&mut net.params("")).unwrap();
            })
        });
        g.bench_function(BenchmarkId::new(format!("{}-infer", arch.as_str()), d), |b| {
            b.iter(|| aligner.infer(black_box(&x)).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, products, aligner_step);
criterion_main!(benches);
