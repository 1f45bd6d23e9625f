//! Independent checks of the solvers: finite-difference gradients,
//! monotonicity / convexity sweeps and probes of the collision operator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::adjoint::MeasurementFunctional;
use crate::error::{Error, Result};
use crate::field::{sup_norm, KineticField};
use crate::grid::GridConfig;
use crate::inverse::{measurement, measurement_and_gradient, InverseProblem, ReflectionCoeff};
use crate::model::Model;
use crate::transport::{forward_solve, BoundarySource, ForwardOptions};

/// Default finite-difference step on the components of `eta`.
pub const DEFAULT_FD_STEP: f64 = 1e-3;

/// Derivative of `f` at `x` on `[lo, hi]`. Uses central differences with the
/// step shrunk to stay inside the interval; falls back to a one-sided
/// difference of step `h` when `x` sits (almost) on a bound.
pub fn central_difference(
    f: impl Fn(f64) -> Result<f64>,
    x: f64,
    h: f64,
    lo: f64,
    hi: f64,
) -> Result<f64> {
    if !(h > 0.0) || !(hi - lo >= h) || !(lo..=hi).contains(&x) {
        return Err(Error::Precondition(format!(
            "finite difference needs h > 0 and x in [lo, hi] wider than h (h = {h}, x = {x}, [{lo}, {hi}])"
        )));
    }
    let room = (x - lo).min(hi - x);
    if room >= 0.25 * h {
        let s = h.min(room);
        return Ok((f(x + s)? - f(x - s)?) / (2.0 * s));
    }
    if x - lo < hi - x {
        Ok((f(x + h)? - f(x)?) / h)
    } else {
        Ok((f(x)? - f(x - h)?) / h)
    }
}

/// Partial derivatives `dM/d eta_l` of one measurement, by finite
/// differences per frequency node (parallel over nodes).
pub fn fd_measurement_gradient(
    model: &Model,
    eta: &ReflectionCoeff,
    phi: &BoundarySource,
    psi: &MeasurementFunctional,
    h: f64,
) -> Result<Vec<f64>> {
    eta.check_grid(&model.grid)?;
    let base = eta.values();
    (0..base.len())
        .into_par_iter()
        .map(|l| {
            let f = |v: f64| {
                let mut e = base.to_vec();
                e[l] = v;
                measurement(model, &ReflectionCoeff::new(e)?, phi, psi)
            };
            central_difference(f, base[l], h, 0.0, 1.0)
        })
        .collect()
}

/// `dL_gamma / d eta_l` for an experiment of an inverse problem. The datum
/// drops out, so this is the measurement derivative.
pub fn fd_gradient(
    problem: &InverseProblem<'_>,
    eta: &ReflectionCoeff,
    gamma: (usize, usize),
    h: f64,
) -> Result<Vec<f64>> {
    let (i, j) = gamma;
    let (phi, psi) = match (problem.bank.phis.get(i), problem.bank.psis.get(j)) {
        (Some(p), Some(q)) => (p, q),
        _ => return Err(Error::MissingDatum { i: i + 1, j: j + 1 }),
    };
    fd_measurement_gradient(problem.model, eta, phi, psi, h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheckReport {
    /// Adjoint gradient density per frequency node.
    pub adjoint: Vec<f64>,
    /// Finite-difference partials divided by the frequency weights, so that
    /// they are comparable with `adjoint`.
    pub fd: Vec<f64>,
    /// `|adjoint - fd|_2 / |fd|_2`.
    pub relative_error: f64,
    pub h: f64,
    pub grid: GridConfig,
}

/// Compares the adjoint gradient of one measurement with finite differences.
pub fn gradient_check(
    model: &Model,
    eta: &ReflectionCoeff,
    phi: &BoundarySource,
    psi: &MeasurementFunctional,
    h: f64,
) -> Result<GradientCheckReport> {
    let (_, adjoint) = measurement_and_gradient(model, eta, phi, psi)?;
    let partials = fd_measurement_gradient(model, eta, phi, psi, h)?;
    let fd: Vec<f64> = partials
        .iter()
        .zip(model.grid.quad_weights_omega())
        .map(|(p, w)| p / w)
        .collect();
    let diff = adjoint
        .iter()
        .zip(&fd)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
    let relative_error = if scale > 0.0 {
        diff / scale
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(GradientCheckReport {
        adjoint,
        fd,
        relative_error,
        h,
        grid: *model.grid.config(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityReport {
    /// Smallest `a dT1 + (1 - a) dT2 - dT(a eta1 + (1 - a) eta2)` over all
    /// `a` and surface times.
    pub worst_margin: f64,
    /// Smallest `g1 - g2` over every cell, ordinate and time level.
    pub monotone_margin: f64,
}

impl ConvexityReport {
    pub fn pass(&self, convex_tol: f64, monotone_tol: f64) -> bool {
        self.worst_margin >= -convex_tol && self.monotone_margin >= -monotone_tol
    }
}

fn trajectory_of(
    model: &Model,
    eta: &ReflectionCoeff,
    phi: &BoundarySource,
) -> Result<(Vec<f64>, Vec<KineticField>)> {
    let opts = ForwardOptions {
        store_trajectory: true,
        ..ForwardOptions::default()
    };
    let sol = forward_solve(model, eta, phi, &opts)?;
    let traj = sol
        .trajectory
        .ok_or_else(|| Error::Precondition("trajectory was not stored".into()))?;
    Ok((sol.surface_delta_t, traj))
}

/// Checks that `eta -> g` is monotone and that the surface temperature is
/// convex along the segment from `eta2` to `eta1` (`eta1 >= eta2`).
pub fn convexity_sweep(
    model: &Model,
    phi: &BoundarySource,
    eta1: &ReflectionCoeff,
    eta2: &ReflectionCoeff,
    alphas: &[f64],
) -> Result<ConvexityReport> {
    eta1.check_grid(&model.grid)?;
    eta2.check_grid(&model.grid)?;
    if eta1.values().iter().zip(eta2.values()).any(|(a, b)| a < b) {
        return Err(Error::Precondition("convexity sweep needs eta1 >= eta2 pointwise".into()));
    }
    if alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::Precondition("blend weights must lie in [0, 1]".into()));
    }
    let (t1, t2) = rayon::join(|| trajectory_of(model, eta1, phi), || trajectory_of(model, eta2, phi));
    let ((s1, t1), (s2, t2)) = (t1?, t2?);
    let mut monotone_margin = f64::INFINITY;
    for (f1, f2) in t1.iter().zip(&t2) {
        for (a, b) in f1.as_slice().iter().zip(f2.as_slice()) {
            monotone_margin = monotone_margin.min(a - b);
        }
    }
    let margins: Vec<f64> = alphas
        .par_iter()
        .map(|&a| -> Result<f64> {
            let blend: Vec<f64> = eta1
                .values()
                .iter()
                .zip(eta2.values())
                .map(|(x, y)| a * x + (1.0 - a) * y)
                .collect();
            let blend = ReflectionCoeff::projected(blend)?;
            let sb = forward_solve(model, &blend, phi, &ForwardOptions::default())?.surface_delta_t;
            Ok(s1
                .iter()
                .zip(&s2)
                .zip(&sb)
                .map(|((x, y), b)| a * x + (1.0 - a) * y - b)
                .fold(f64::INFINITY, f64::min))
        })
        .collect::<Result<_>>()?;
    let worst_margin = margins.into_iter().fold(f64::INFINITY, f64::min);
    Ok(ConvexityReport {
        worst_margin: if worst_margin.is_finite() { worst_margin } else { 0.0 },
        monotone_margin,
    })
}

/// Largest `|g(t) - g*|` for the equilibrium problem: `eta = 1`, inflow
/// `g*` and initial field `g*`. Checks every time level when the stored
/// fields fit in about 64M doubles, otherwise an evenly strided subset plus
/// the final level.
pub fn equilibrium_probe(model: &Model) -> Result<f64> {
    let grid = &model.grid;
    let gstar = model.table.gstar();
    let eta = ReflectionCoeff::constant(grid, 1.0)?;
    let phi = BoundarySource::from_omega_profile(grid, gstar)?;
    let init = KineticField::broadcast_omega(grid, gstar)?;
    let budget = (1usize << 26) / grid.phase_len().max(1) / grid.nx().max(1);
    let stride = (grid.nt() + 1).div_ceil(budget.max(1)).max(1);
    let mut steps: Vec<usize> = (0..=grid.nt()).step_by(stride).collect();
    steps.push(grid.nt());
    let opts = ForwardOptions {
        initial: Some(init.clone()),
        store_trajectory: false,
        snapshot_steps: steps,
    };
    let sol = forward_solve(model, &eta, &phi, &opts)?;
    Ok(sol
        .snapshots
        .iter()
        .flat_map(|(_, g)| g.as_slice().iter().zip(init.as_slice()).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max))
}

fn random_slice(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Largest `|<L g>| / |g|_inf` over random `(mu, omega)` slices.
pub fn conservation_probe(model: &Model, trials: usize, seed: u64) -> f64 {
    let grid = &model.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; grid.phase_len()];
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let g = random_slice(&mut rng, grid.phase_len());
        model.table.collide_slice(&g, &mut out);
        let total = grid.bracket(&out).expect("slice has phase length");
        worst = worst.max(total.abs() / sup_norm(&g));
    }
    worst
}

/// Largest `|<L g, h / g*> - <L h, g / g*>|`, normalized by
/// `|g|_inf |h|_inf`, over random slice pairs.
pub fn selfadjoint_probe(model: &Model, trials: usize, seed: u64) -> f64 {
    let grid = &model.grid;
    let gstar = model.table.gstar();
    let nw = grid.nomega();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lg = vec![0.0; grid.phase_len()];
    let mut lh = vec![0.0; grid.phase_len()];
    let pair = |a: &[f64], b: &[f64]| -> f64 {
        let prod: Vec<f64> = a
            .iter()
            .zip(b)
            .enumerate()
            .map(|(idx, (x, y))| x * y / gstar[idx % nw])
            .collect();
        grid.bracket(&prod).expect("slice has phase length")
    };
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let g = random_slice(&mut rng, grid.phase_len());
        let h = random_slice(&mut rng, grid.phase_len());
        model.table.collide_slice(&g, &mut lg);
        model.table.collide_slice(&h, &mut lh);
        let d = (pair(&lg, &h) - pair(&lh, &g)).abs();
        worst = worst.max(d / (sup_norm(&g) * sup_norm(&h)));
    }
    worst
}
