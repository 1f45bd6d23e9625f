//! Adjoint transport and the Frechet derivative of a measurement with
//! respect to the reflection coefficient.
//!
//! The adjoint field `h` solves, backward in time,
//!
//! ```text
//! dh/dt + mu omega dh/dx = -L h,     h(t_max) = 0
//! h(x = 0, mu < 0)     = psi(t) g*(omega) / mu
//! h(x = x_max, mu > 0) = eta(omega) h(x = x_max, -mu)
//! ```
//!
//! Writing `s = t_max - t` and flipping `mu` turns this into the forward
//! problem with the same data carried over to `mu > 0`, so both directions
//! share one march kernel. The derivative is then
//!
//! ```text
//! dM/d eta(omega) = 1/<omega g*> sum_t sum_{mu<0} mu omega h(t, x_max, mu) g(t, x_max, -mu) / g* w_mu dt
//! ```
//!
//! which is a density in `omega`: the partial derivative with respect to
//! the value at one frequency node is this times `w_omega`.

use crate::error::{check_len, Error, Result};
use crate::field::KineticField;
use crate::grid::PhaseGrid;
use crate::inverse::ReflectionCoeff;
use crate::model::Model;
use crate::transport::{march, BoundarySource, ForwardOptions, ForwardSolution};

/// Test function `psi(t)` applied to the surface temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementFunctional(Vec<f64>);

impl MeasurementFunctional {
    pub fn new(grid: &PhaseGrid, values: Vec<f64>) -> Result<Self> {
        check_len("measurement functional", grid.nt() + 1, values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite measurement functional".into()));
        }
        Ok(Self(values))
    }

    /// `delta(t - t_j)` realized as `1 / dt` at the nearest time node, so
    /// that its time integral is one.
    pub fn kronecker(grid: &PhaseGrid, t: f64) -> Self {
        Self::kronecker_at_index(grid, grid.nearest_time_index(t))
    }

    pub fn kronecker_at_index(grid: &PhaseGrid, n: usize) -> Self {
        let mut values = vec![0.0; grid.nt() + 1];
        values[n] = 1.0 / grid.dt();
        Self(values)
    }

    pub fn zero(grid: &PhaseGrid) -> Self {
        Self(vec![0.0; grid.nt() + 1])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.iter().map(|v| c * v).collect())
    }

    /// `sum_t dT(t) psi(t) dt`.
    pub fn apply(&self, grid: &PhaseGrid, surface_delta_t: &[f64]) -> Result<f64> {
        check_len("surface temperature", self.0.len(), surface_delta_t.len())?;
        Ok(self
            .0
            .iter()
            .zip(surface_delta_t)
            .map(|(p, d)| p * d)
            .sum::<f64>()
            * grid.dt())
    }

    /// Time index of the single nonzero entry, if there is exactly one.
    pub fn support(&self) -> Option<usize> {
        let mut nz = self.0.iter().enumerate().filter(|(_, v)| **v != 0.0);
        match (nz.next(), nz.next()) {
            (Some((n, _)), None) => Some(n),
            _ => None,
        }
    }
}

/// Boundary datum of the adjoint problem at `x = 0` on `mu < 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum AdjointBoundary {
    /// `psi(t) g*(omega) / mu`, the datum that yields the Frechet derivative.
    Measurement(MeasurementFunctional),
    /// Demonstration pulse `Mdemo(omega) [t = t_max] / (mu omega dt)` with
    /// `Mdemo(omega) = (10 omega)^3 e^(10 omega) / (e^(10 omega) - 1)^2`.
    Demo,
}

/// `(10 w)^3 e^(10 w) / (e^(10 w) - 1)^2`.
pub fn demo_profile(omega: f64) -> f64 {
    let s = 10.0 * omega;
    let denom = -(-s).exp_m1();
    s * s * s * (-s).exp() / (denom * denom)
}

#[derive(Debug, Clone, Default)]
pub struct AdjointOptions {
    pub store_trajectory: bool,
    /// Time-node indices (in physical time) at which to keep the field.
    pub snapshot_steps: Vec<usize>,
    /// Width of a Gaussian in `mu` used to smooth the `1/mu` boundary datum.
    pub mollify_width: Option<f64>,
}

/// Output of [`adjoint_solve`], in physical time and ordinate order.
#[derive(Debug, Clone)]
pub struct AdjointSolution {
    /// `h(t_n, x_max, mu < 0, omega)`, one `(mu < 0, omega)` slice per node.
    pub interface_trace: Vec<f64>,
    pub trajectory: Option<Vec<KineticField>>,
    pub snapshots: Vec<(usize, KineticField)>,
    half_len: usize,
}

impl AdjointSolution {
    pub fn interface_at(&self, n: usize) -> &[f64] {
        &self.interface_trace[n * self.half_len..(n + 1) * self.half_len]
    }
}

/// Boundary values `b(t_n, mu_k < 0, omega_l)` for every time node.
fn boundary_values(
    model: &Model,
    boundary: &AdjointBoundary,
    mollify_width: Option<f64>,
) -> Result<Vec<f64>> {
    let grid = &model.grid;
    let half = grid.nmu_half();
    let nw = grid.nomega();
    let nt = grid.nt();
    let mu = &grid.mu_nodes()[..half];
    let omega = grid.omega_nodes();
    let gstar = model.table.gstar();

    let mut out = vec![0.0; (nt + 1) * half * nw];
    for n in 0..=nt {
        let slot = &mut out[n * half * nw..(n + 1) * half * nw];
        match boundary {
            AdjointBoundary::Measurement(psi) => {
                check_len("measurement functional", nt + 1, psi.values().len())?;
                let p = psi.values()[n];
                if p == 0.0 {
                    continue;
                }
                for k in 0..half {
                    for l in 0..nw {
                        slot[k * nw + l] = p * gstar[l] / mu[k];
                    }
                }
            }
            AdjointBoundary::Demo => {
                if n != nt {
                    continue;
                }
                for k in 0..half {
                    for l in 0..nw {
                        slot[k * nw + l] = demo_profile(omega[l]) / (mu[k] * omega[l] * grid.dt());
                    }
                }
            }
        }
        if let Some(width) = mollify_width {
            mollify(slot, mu, nw, width)?;
        }
    }
    Ok(out)
}

/// Normalized discrete Gaussian smoothing along `mu` within the `mu < 0` half.
fn mollify(slot: &mut [f64], mu: &[f64], nw: usize, width: f64) -> Result<()> {
    if !(width > 0.0) {
        return Err(Error::Domain(format!(
            "mollifier width must be positive, got {width}"
        )));
    }
    let original = slot.to_vec();
    for (k, &mk) in mu.iter().enumerate() {
        let weights: Vec<f64> = mu
            .iter()
            .map(|&mj| (-(mk - mj).powi(2) / (2.0 * width * width)).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        for l in 0..nw {
            slot[k * nw + l] = weights
                .iter()
                .enumerate()
                .map(|(j, w)| w * original[j * nw + l])
                .sum::<f64>()
                / total;
        }
    }
    Ok(())
}

/// Maps a field of the mirrored, time-reversed problem back to `h`.
fn unmirror(grid: &PhaseGrid, field: &KineticField) -> KineticField {
    KineticField::from_fn(grid, |i, k, l| field.get(i, grid.mirror(k), l))
}

/// Solves the adjoint problem backward from `t_max`.
pub fn adjoint_solve(
    model: &Model,
    eta: &ReflectionCoeff,
    boundary: &AdjointBoundary,
    opts: &AdjointOptions,
) -> Result<AdjointSolution> {
    let grid = &model.grid;
    eta.check_grid(grid)?;
    let nt = grid.nt();
    let half = grid.nmu_half();
    let nw = grid.nomega();
    let half_len = half * nw;

    // Inflow of the mirrored problem at s-level m: ordinate half + kp sees
    // the datum of mu_(half - 1 - kp) at physical time level nt - m.
    let values = boundary_values(model, boundary, opts.mollify_width)?;
    let mut mirrored = vec![0.0; (nt + 1) * half_len];
    for m in 0..=nt {
        let src = &values[(nt - m) * half_len..(nt - m + 1) * half_len];
        let dst = &mut mirrored[m * half_len..(m + 1) * half_len];
        for kp in 0..half {
            let k = half - 1 - kp;
            dst[kp * nw..(kp + 1) * nw].copy_from_slice(&src[k * nw..(k + 1) * nw]);
        }
    }
    let inflow = BoundarySource::transient(grid, mirrored)?;

    let fwd_opts = ForwardOptions {
        initial: None,
        store_trajectory: opts.store_trajectory,
        snapshot_steps: opts.snapshot_steps.iter().map(|&n| nt - n.min(nt)).collect(),
    };
    let sol = march(model, eta.values(), &inflow, &fwd_opts)?;

    let mut trace = vec![0.0; (nt + 1) * half_len];
    for n in 0..=nt {
        let src = sol.interface_at(nt - n);
        let dst = &mut trace[n * half_len..(n + 1) * half_len];
        for k in 0..half {
            let kp = half - 1 - k;
            dst[k * nw..(k + 1) * nw].copy_from_slice(&src[kp * nw..(kp + 1) * nw]);
        }
    }

    let trajectory = sol.trajectory.map(|levels| {
        levels
            .iter()
            .rev()
            .map(|f| unmirror(grid, f))
            .collect::<Vec<_>>()
    });
    let mut snapshots: Vec<(usize, KineticField)> = sol
        .snapshots
        .iter()
        .map(|(m, f)| (nt - m, unmirror(grid, f)))
        .collect();
    snapshots.sort_by_key(|s| std::cmp::Reverse(s.0));

    Ok(AdjointSolution {
        interface_trace: trace,
        trajectory,
        snapshots,
        half_len,
    })
}

/// Assembles `dM/d eta(omega)` from the forward and adjoint interface
/// traces. Returns one density value per frequency node.
pub fn frechet_gradient(
    model: &Model,
    fwd: &ForwardSolution,
    adj: &AdjointSolution,
) -> Result<Vec<f64>> {
    let grid = &model.grid;
    let half = grid.nmu_half();
    let nw = grid.nomega();
    let levels = grid.nt() + 1;
    check_len("forward interface trace", levels * half * nw, fwd.interface_trace.len())?;
    check_len("adjoint interface trace", levels * half * nw, adj.interface_trace.len())?;

    let mu = grid.mu_nodes();
    let w_mu = grid.quad_weights_mu();
    let omega = grid.omega_nodes();
    let gstar = model.table.gstar();
    let dt = grid.dt();

    let mut grad = vec![0.0; nw];
    for n in 0..levels {
        let h = adj.interface_at(n);
        let g = fwd.interface_at(n);
        for k in 0..half {
            // g(-mu_k) sits at position half - 1 - k of the mu > 0 trace.
            let kp = half - 1 - k;
            let weight = mu[k] * w_mu[k] * dt;
            for l in 0..nw {
                grad[l] += weight * h[k * nw + l] * g[kp * nw + l];
            }
        }
    }
    let z = model.table.z_norm();
    for l in 0..nw {
        grad[l] *= omega[l] / (gstar[l] * z);
    }
    Ok(grad)
}
