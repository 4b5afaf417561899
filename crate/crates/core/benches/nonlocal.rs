use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use smp_core::grid::{DomainSpec, Grid};
use smp_core::operator::{AssemblyOptions, CoefficientSpec, KernelSpec, OperatorPair, Strategy};
use smp_core::par::Parallelism;

const MODES: [Parallelism; 2] = [Parallelism::Sequential, Parallelism::Rayon];

fn square(h: f64) -> Grid {
    Grid::build(DomainSpec::Rectangle { x: [0.0, 1.0], y: [0.0, 1.0] }, h).unwrap()
}

fn assemble(grid: &Grid, strategy: Strategy, parallelism: Parallelism) -> OperatorPair {
    OperatorPair::assemble(
        grid,
        Some(&CoefficientSpec::identity()),
        Some(&KernelSpec::fractional(0.5)),
        AssemblyOptions { strategy, parallelism },
    )
    .unwrap()
}

fn bench_assembly(c: &mut Criterion) {
    let grid = square(1.0 / 32.0);
    let mut group = c.benchmark_group("assemble_dense");
    group.sample_size(10);
    for mode in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &mode, |b, &mode| {
            b.iter(|| black_box(assemble(&grid, Strategy::Dense, mode)))
        });
    }
    group.finish();
}

fn bench_apply(c: &mut Criterion) {
    let cases = [("dense", 1.0 / 32.0, Strategy::Dense), ("matrix_free", 1.0 / 64.0, Strategy::MatrixFree)];
    for (name, h, strategy) in cases {
        let grid = square(h);
        let u = grid.sample(|p| (std::f64::consts::PI * p[0]).sin() * (std::f64::consts::PI * p[1]).sin());
        let mut group = c.benchmark_group(format!("apply_{name}"));
        for mode in MODES {
            let op = assemble(&grid, strategy, mode);
            group.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &op, |b, op| {
                b.iter(|| black_box(op.apply(black_box(&u)).unwrap()))
            });
        }
        group.finish();
    }
}

criterion_group!(benches, bench_assembly, bench_apply);
criterion_main!(benches);
