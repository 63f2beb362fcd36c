use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use poisint_core::oracles::{irwin_hall_grid, mc_sample};
use poisint_core::transforms::convolve;
use poisint_core::{compose_piecewise, ComposeConfig, ControlDensity, Expression, Mesh};

fn unit(t: f64) -> ControlDensity {
    ControlDensity::on_horizon(Expression::Num(1.0), t).unwrap()
}

fn identity_kernel(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve g=s");
    for delta in [4e-3, 2e-3, 1e-3, 5e-4] {
        let cfg = ComposeConfig::new(delta, delta, 3.0);
        let n = unit(1.0);
        group.bench_with_input(BenchmarkId::from_parameter(delta), &cfg, |b, cfg| {
            b.iter(|| compose_piecewise(&Expression::Var, &n, black_box(cfg)).unwrap())
        });
    }
    group.finish();
}

fn piecewise_kernels(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve piecewise");
    group.sample_size(20);
    for (name, g, t, x_max) in [("parabola", "1-(1-s)^2", 2.0, 6.0), ("sine", "sin(2*pi*s)", 1.0, 3.0)] {
        let g = Expression::parse(g).unwrap();
        let n = unit(t);
        let cfg = ComposeConfig::new(1e-3, 1e-3, x_max);
        group.bench_function(name, |b| b.iter(|| compose_piecewise(&g, &n, &cfg).unwrap()));
    }
    group.finish();
}

fn convolution(c: &mut Criterion) {
    let mut group = c.benchmark_group("convolve");
    for nodes in [1_000usize, 4_000] {
        let mesh = Mesh::from_origin(4.0 / nodes as f64, 4.0).unwrap();
        let a = irwin_hall_grid(&mesh, 11).unwrap();
        let b = a.clone();
        group.bench_with_input(BenchmarkId::from_parameter(nodes), &(a, b), |bch, (a, b)| {
            bch.iter(|| convolve(black_box(a), black_box(b)).unwrap())
        });
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let g = Expression::parse("1-(1-s)^2").unwrap();
    let n = unit(2.0);
    let mut group = c.benchmark_group("mc_sample");
    group.sample_size(10);
    group.bench_function("100k", |b| b.iter(|| mc_sample(&g, &n, 100_000, black_box(1)).unwrap()));
    group.finish();
}

criterion_group!(benches, identity_kernel, piecewise_kernels, convolution, monte_carlo);
criterion_main!(benches);
