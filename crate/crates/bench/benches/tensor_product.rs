use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use segnn::o3::IrrepsLayout;
use segnn::rng::{normal, seeded};
use segnn::steerable::{balanced_layout, LayoutMode, TensorProduct};

const ROWS: usize = 500;

fn tensor_product(c: &mut Criterion) {
    let mut group = c.benchmark_group("tensor_product");
    for l in [1u32, 2] {
        let hidden = balanced_layout(64, l, false, LayoutMode::Copies, l).unwrap();
        let attrs = IrrepsLayout::spherical_harmonics(l);
        let tp = TensorProduct::build(&hidden, &attrs, &hidden, None).unwrap();
        let mut rng = seeded(l as u64);
        let mut draw = |n: usize| (0..n).map(|_| normal(&mut rng)).collect::<Vec<f64>>();
        let h = draw(ROWS * hidden.dim());
        let a = draw(ROWS * attrs.dim());
        let w = draw(tp.weight_count());
        let grad = draw(ROWS * hidden.dim());
        group.bench_with_input(BenchmarkId::new("forward", l), &l, |b, _| {
            b.iter(|| tp.forward_raw(black_box(&h), &a, &w, ROWS))
        });
        group.bench_with_input(BenchmarkId::new("backward", l), &l, |b, _| {
            b.iter(|| tp.backward_raw(black_box(&h), &a, &w, &grad, ROWS, [true, true, true]))
        });
    }
    group.finish();
}

criterion_group!(benches, tensor_product);
criterion_main!(benches);
