use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tbr_core::oracle::{gradient_check, DEFAULT_FD_STEP};
use tbr_core::{
    eta_from_params, make_bank_paper_default, measurement, measurement_and_gradient, BoundarySource,
    GridConfig, MeasurementFunctional, Model, ReflectionCoeff, TanhParams,
};

fn coarse() -> Model {
    Model::from_config(GridConfig::coarse()).unwrap()
}

fn weighted_dot(model: &Model, grad: &[f64], dir: &[f64]) -> f64 {
    grad.iter()
        .zip(dir)
        .zip(model.grid.quad_weights_omega())
        .map(|((g, d), w)| g * d * w)
        .sum()
}

#[test]
fn duality_remainder_is_second_order() {
    let model = coarse();
    let grid = &model.grid;
    let eta = eta_from_params(TanhParams::REFERENCE, grid);
    let phi = BoundarySource::kronecker(grid, 1.5).unwrap();
    let psi = MeasurementFunctional::kronecker(grid, 5.0);
    let (m0, grad) = measurement_and_gradient(&model, &eta, &phi, &psi).unwrap();
    let dir: Vec<f64> = grid.omega_nodes().iter().map(|w| 0.1 * (3.0 * w).sin()).collect();

    let remainder = |s: f64| {
        let moved: Vec<f64> = eta.values().iter().zip(&dir).map(|(e, d)| e + s * d).collect();
        let m = measurement(&model, &ReflectionCoeff::new(moved).unwrap(), &phi, &psi).unwrap();
        (m - m0 - s * weighted_dot(&model, &grad, &dir)).abs()
    };
    let mut prev = remainder(1.0);
    for k in 1..4 {
        let r = remainder(0.5f64.powi(k));
        assert!(prev / r >= 1.9, "halving {k}: {prev:e} -> {r:e}");
        prev = r;
    }
}

#[test]
fn gradient_is_linear_in_injection_and_measurement() {
    let model = coarse();
    let grid = &model.grid;
    let eta = eta_from_params(TanhParams::new(1.3, 0.9), grid);
    let p1 = BoundarySource::kronecker_at_index(grid, 3);
    let p2 = BoundarySource::kronecker_at_index(grid, 14);
    let q1 = MeasurementFunctional::kronecker(grid, 5.0);
    let q2 = MeasurementFunctional::kronecker(grid, 4.6);
    let grad = |p: &BoundarySource, q: &MeasurementFunctional| measurement_and_gradient(&model, &eta, p, q).unwrap().1;

    let (a, b) = (0.7, -1.9);
    let g1 = grad(&p1, &q1);
    let g2 = grad(&p2, &q1);
    let g12 = grad(&p1.combine(a, &p2, b).unwrap(), &q1);
    let scale = g1.iter().chain(&g2).fold(0.0f64, |m, v| m.max(v.abs()));
    for ((x, y), z) in g1.iter().zip(&g2).zip(&g12) {
        assert!((a * x + b * y - z).abs() <= 1e-12 * scale);
    }

    let h2 = grad(&p1, &q2);
    let q12 = MeasurementFunctional::new(
        grid,
        q1.values().iter().zip(q2.values()).map(|(x, y)| a * x + b * y).collect(),
    )
    .unwrap();
    let h12 = grad(&p1, &q12);
    let scale = g1.iter().chain(&h2).fold(0.0f64, |m, v| m.max(v.abs()));
    for ((x, y), z) in g1.iter().zip(&h2).zip(&h12) {
        assert!((a * x + b * y - z).abs() <= 1e-12 * scale);
    }
}

#[test]
fn more_reflection_never_lowers_the_final_surface_temperature() {
    let model = coarse();
    let grid = &model.grid;
    let eta = eta_from_params(TanhParams::REFERENCE, grid);
    let bank = make_bank_paper_default(grid, grid.nomega(), 1, (4.5, 5.0), 0).unwrap();
    for (i, phi) in bank.phis.iter().enumerate() {
        let (_, g) = measurement_and_gradient(&model, &eta, phi, &bank.psis[0]).unwrap();
        let worst = g.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(worst >= -1e-10, "injection {i}: min component {worst:e}");
    }
}

#[test]
fn adjoint_gradient_matches_finite_differences() {
    let model = coarse();
    let grid = &model.grid;
    let eta = eta_from_params(TanhParams::REFERENCE, grid);
    let phi = BoundarySource::kronecker(grid, 1.5).unwrap();
    let psi = MeasurementFunctional::kronecker(grid, 5.0);
    let report = gradient_check(&model, &eta, &phi, &psi, DEFAULT_FD_STEP).unwrap();
    assert!(report.relative_error <= 0.02, "{}", report.relative_error);
    assert_eq!(report.grid, GridConfig::coarse());

    let zero = gradient_check(&model, &eta, &BoundarySource::zero(grid), &psi, DEFAULT_FD_STEP).unwrap();
    assert!(zero.adjoint.iter().all(|&v| v == 0.0));
    assert_eq!(zero.relative_error, 0.0);
}

#[test]
fn gradient_near_the_bounds_of_the_box() {
    // Components at 0 and 1 force one-sided differences.
    let model = coarse();
    let grid = &model.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let values: Vec<f64> = (0..grid.nomega())
        .map(|l| match l % 3 {
            0 => 0.0,
            1 => 1.0,
            _ => rng.gen_range(0.2..0.8),
        })
        .collect();
    let eta = ReflectionCoeff::new(values).unwrap();
    let phi = BoundarySource::kronecker_at_index(grid, 7);
    let psi = MeasurementFunctional::kronecker(grid, 5.0);
    let report = gradient_check(&model, &eta, &phi, &psi, 1e-4).unwrap();
    assert!(report.relative_error <= 0.02, "{}", report.relative_error);
}
