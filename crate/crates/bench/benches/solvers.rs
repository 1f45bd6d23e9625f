use criterion::{black_box, criterion_group, criterion_main, Criterion};
use tbr_core::{
    adjoint_solve, eta_from_params, forward_solve, measurement_and_gradient, AdjointBoundary, AdjointOptions,
    BoundarySource, ForwardOptions, GridConfig, MeasurementFunctional, Model, TanhParams,
};

fn solvers(c: &mut Criterion) {
    let model = Model::from_config(GridConfig::coarse()).unwrap();
    let grid = &model.grid;
    let eta = eta_from_params(TanhParams::REFERENCE, grid);
    let phi = BoundarySource::kronecker(grid, 1.5).unwrap();
    let psi = MeasurementFunctional::kronecker(grid, 5.0);
    let boundary = AdjointBoundary::Measurement(psi.clone());
    let adj_opts = AdjointOptions {
        store_trajectory: false,
        snapshot_steps: Vec::new(),
        mollify_width: None,
    };

    let mut g = c.benchmark_group("coarse");
    g.bench_function("forward", |b| {
        b.iter(|| forward_solve(&model, black_box(&eta), &phi, &ForwardOptions::default()).unwrap())
    });
    g.bench_function("adjoint", |b| {
        b.iter(|| adjoint_solve(&model, black_box(&eta), &boundary, &adj_opts).unwrap())
    });
    g.bench_function("measurement_and_gradient", |b| {
        b.iter(|| measurement_and_gradient(&model, black_box(&eta), &phi, &psi).unwrap())
    });
    g.finish();
}

criterion_group!(benches, solvers);
criterion_main!(benches);
