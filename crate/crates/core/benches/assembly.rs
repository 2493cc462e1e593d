use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rstokes::assembly::StokesOperator;
use rstokes::mesh::generate_cavity_mesh;
use rstokes::{Execution, Rheology, Spaces};

fn jacobian_assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("jacobian");
    group.sample_size(20);
    let rheology = Rheology::new(0.5, 3.0, 1e-2).unwrap();
    for nx in [16usize, 32, 64] {
        let mesh = generate_cavity_mesh(nx, nx, 0.08).unwrap();
        let spaces = Spaces::new(&mesh);
        let u = spaces.interpolate(|p| [p[1], 0.1 * p[0] * p[1]]);
        for exec in [Execution::Sequential, Execution::Parallel] {
            let op = StokesOperator::new(&mesh, &spaces, exec);
            group.bench_with_input(BenchmarkId::new(format!("{exec:?}"), nx), &nx, |b, _| {
                b.iter(|| op.jacobian(&rheology, black_box(&u)).unwrap())
            });
        }
    }
    group.finish();
}

fn residual_assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("residual");
    let rheology = Rheology::new(0.5, 3.0, 1e-2).unwrap();
    let mesh = generate_cavity_mesh(64, 64, 0.08).unwrap();
    let spaces = Spaces::new(&mesh);
    let u = spaces.interpolate(|p| [p[1], 0.1 * p[0] * p[1]]);
    for exec in [Execution::Sequential, Execution::Parallel] {
        let op = StokesOperator::new(&mesh, &spaces, exec);
        group.bench_function(format!("{exec:?}"), |b| {
            b.iter(|| op.residual(&rheology, black_box(&u)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, jacobian_assembly, residual_assembly);
criterion_main!(benches);
