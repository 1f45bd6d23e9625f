//! Explicit upwind / discrete-ordinates solver for the forward problem
//!
//! ```text
//! dg/dt + mu omega dg/dx = -omega g + M <omega g>,   x in [0, x_max]
//! g(x = 0, mu > 0)     = phi
//! g(x = x_max, mu < 0) = eta(omega) g(x = x_max, -mu)
//! ```
//!
//! with zero initial data unless overridden. One step is a single unsplit
//! explicit Euler update combining first-order upwind transport per ordinate
//! and the collision operator. Inflow and reflection are imposed through
//! ghost values taken at the old time level, and boundary traces are the
//! upwind face values (last cell for outgoing ordinates).

use crate::error::{check_len, Error, Result};
use crate::field::{sup_norm, KineticField};
use crate::grid::PhaseGrid;
use crate::inverse::ReflectionCoeff;
use crate::model::Model;

/// Abort when `|g|_inf` exceeds this multiple of the data size.
const BLOW_UP_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
enum SourceData {
    Steady(Vec<f64>),
    Transient(Vec<f64>),
}

/// Inflow data `phi(mu > 0, omega, t)` at `x = 0`.
///
/// Values are laid out per time node as a `(mu > 0, omega)` slice, with the
/// positive ordinates in increasing order. Time-independent data is stored
/// once.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySource {
    half_len: usize,
    levels: usize,
    data: SourceData,
}

impl BoundarySource {
    pub fn zero(grid: &PhaseGrid) -> Self {
        Self::steady_unchecked(grid, vec![0.0; grid.nmu_half() * grid.nomega()])
    }

    fn steady_unchecked(grid: &PhaseGrid, slice: Vec<f64>) -> Self {
        Self {
            half_len: grid.nmu_half() * grid.nomega(),
            levels: grid.nt() + 1,
            data: SourceData::Steady(slice),
        }
    }

    /// Time-independent data given on the `(mu > 0, omega)` half slice.
    pub fn steady(grid: &PhaseGrid, slice: Vec<f64>) -> Result<Self> {
        check_len("inflow slice", grid.nmu_half() * grid.nomega(), slice.len())?;
        Ok(Self::steady_unchecked(grid, slice))
    }

    /// Time-independent data constant in `mu`.
    pub fn from_omega_profile(grid: &PhaseGrid, profile: &[f64]) -> Result<Self> {
        check_len("omega profile", grid.nomega(), profile.len())?;
        let slice = (0..grid.nmu_half())
            .flat_map(|_| profile.iter().copied())
            .collect();
        Ok(Self::steady_unchecked(grid, slice))
    }

    /// Kronecker injection: value 1 at the frequency node `omega` for every
    /// `mu > 0` and every time, zero elsewhere.
    pub fn kronecker(grid: &PhaseGrid, omega: f64) -> Result<Self> {
        let l = grid.nearest_omega_index(omega);
        if (grid.omega_nodes()[l] - omega).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "Kronecker injection at omega = {omega} is not on a frequency node"
            )));
        }
        Ok(Self::kronecker_at_index(grid, l))
    }

    /// Kronecker injection at frequency node `l`.
    pub fn kronecker_at_index(grid: &PhaseGrid, l: usize) -> Self {
        let mut profile = vec![0.0; grid.nomega()];
        profile[l] = 1.0;
        let slice = (0..grid.nmu_half())
            .flat_map(|_| profile.iter().copied())
            .collect();
        Self::steady_unchecked(grid, slice)
    }

    /// Fully time-dependent data, `nt + 1` consecutive half slices.
    pub fn transient(grid: &PhaseGrid, data: Vec<f64>) -> Result<Self> {
        let half_len = grid.nmu_half() * grid.nomega();
        check_len("transient inflow", half_len * (grid.nt() + 1), data.len())?;
        Ok(Self {
            half_len,
            levels: grid.nt() + 1,
            data: SourceData::Transient(data),
        })
    }

    /// The `(mu > 0, omega)` slice at time node `n`.
    pub fn at(&self, n: usize) -> &[f64] {
        match &self.data {
            SourceData::Steady(s) => s,
            SourceData::Transient(d) => &d[n * self.half_len..(n + 1) * self.half_len],
        }
    }

    fn raw(&self) -> &[f64] {
        match &self.data {
            SourceData::Steady(s) | SourceData::Transient(s) => s,
        }
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(self.raw())
    }

    pub fn is_nonnegative(&self) -> bool {
        self.raw().iter().all(|&v| v >= 0.0)
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &BoundarySource, b: f64) -> Result<Self> {
        check_len("inflow slice", self.half_len, other.half_len)?;
        let mix = |x: &[f64], y: &[f64]| -> Vec<f64> {
            x.iter().zip(y).map(|(u, v)| a * u + b * v).collect()
        };
        let data = match (&self.data, &other.data) {
            (SourceData::Steady(x), SourceData::Steady(y)) => SourceData::Steady(mix(x, y)),
            _ => SourceData::Transient(
                (0..self.levels)
                    .flat_map(|n| mix(self.at(n), other.at(n)))
                    .collect(),
            ),
        };
        Ok(Self {
            half_len: self.half_len,
            levels: self.levels,
            data,
        })
    }

    pub fn scaled(&self, c: f64) -> Self {
        let data = match &self.data {
            SourceData::Steady(s) => SourceData::Steady(s.iter().map(|v| c * v).collect()),
            SourceData::Transient(s) => SourceData::Transient(s.iter().map(|v| c * v).collect()),
        };
        Self {
            half_len: self.half_len,
            levels: self.levels,
            data,
        }
    }

    pub(crate) fn check_grid(&self, grid: &PhaseGrid) -> Result<()> {
        check_len("inflow slice", grid.nmu_half() * grid.nomega(), self.half_len)?;
        check_len("inflow time levels", grid.nt() + 1, self.levels)
    }
}

/// Options for a forward march.
#[derive(Debug, Clone, Default)]
pub struct ForwardOptions {
    /// Initial field; zero when absent.
    pub initial: Option<KineticField>,
    /// Keep every time level (memory `nt * nx * nmu * nomega` doubles).
    pub store_trajectory: bool,
    /// Time-node indices at which to keep a copy of the field.
    pub snapshot_steps: Vec<usize>,
}

/// Output of [`forward_solve`].
#[derive(Debug, Clone)]
pub struct ForwardSolution {
    /// `dT(t_n, x = 0)` for every time node.
    pub surface_delta_t: Vec<f64>,
    /// Outgoing interface values `g(t_n, x_max, mu > 0, omega)`, one
    /// `(mu > 0, omega)` slice per time node.
    pub interface_trace: Vec<f64>,
    /// Every time level, when requested.
    pub trajectory: Option<Vec<KineticField>>,
    /// `(time index, field)` for each requested snapshot.
    pub snapshots: Vec<(usize, KineticField)>,
    /// Largest `|g|` over every time level, tracked during the march.
    pub sup_norm: f64,
    /// Smallest value of `g` over every time level.
    pub min_value: f64,
    pub(crate) half_len: usize,
}

impl ForwardSolution {
    /// Interface slice at time node `n`.
    pub fn interface_at(&self, n: usize) -> &[f64] {
        &self.interface_trace[n * self.half_len..(n + 1) * self.half_len]
    }

    /// Largest `|g|` over the stored trajectory.
    pub fn trajectory_sup_norm(&self) -> Option<f64> {
        self.trajectory
            .as_ref()
            .map(|t| t.iter().map(KineticField::sup_norm).fold(0.0, f64::max))
    }
}

/// Per-ordinate Courant numbers `|mu| omega dt / dx`, laid out like a slice.
fn courant_table(grid: &PhaseGrid) -> Vec<f64> {
    let ratio = grid.dt() / grid.dx();
    grid.mu_nodes()
        .iter()
        .flat_map(|&m| grid.omega_nodes().iter().map(move |&w| m.abs() * w * ratio))
        .collect()
}

/// Shared explicit march used by the forward problem and, with `mu`
/// mirrored and time reversed, by the adjoint problem.
pub(crate) fn march(
    model: &Model,
    eta: &[f64],
    inflow: &BoundarySource,
    opts: &ForwardOptions,
) -> Result<ForwardSolution> {
    let grid = &model.grid;
    let table = &model.table;
    if grid.config().cfl() > 1.0 + 1e-12 {
        return Err(Error::Cfl {
            cfl: grid.config().cfl(),
        });
    }
    check_len("reflection coefficient", grid.nomega(), eta.len())?;
    inflow.check_grid(grid)?;

    let nx = grid.nx();
    let nmu = grid.nmu();
    let half = grid.nmu_half();
    let nw = grid.nomega();
    let plen = grid.phase_len();
    let nt = grid.nt();
    let dt = grid.dt();
    let half_len = half * nw;
    let omega = grid.omega_nodes();
    let maxwellian = table.maxwellian();
    let nu = courant_table(grid);
    let z = table.z_norm();

    let mut g = match &opts.initial {
        Some(init) => {
            init.check_grid(grid)?;
            init.clone()
        }
        None => KineticField::zeros(grid),
    };
    let mut next = KineticField::zeros(grid);

    let scale = inflow.sup_norm().max(g.sup_norm());
    let limit = BLOW_UP_FACTOR * scale;

    let mut surface = Vec::with_capacity(nt + 1);
    let mut trace = Vec::with_capacity((nt + 1) * half_len);
    let mut trajectory = opts.store_trajectory.then(|| Vec::with_capacity(nt + 1));
    let mut snapshots = Vec::new();
    let mut surface_slice = vec![0.0; plen];

    let mut record = |n: usize, g: &KineticField, surface: &mut Vec<f64>, trace: &mut Vec<f64>| {
        // Face values at x = 0: outgoing (mu < 0) from the first cell,
        // incoming (mu > 0) from the inflow data.
        surface_slice[..half_len].copy_from_slice(&g.cell(0)[..half_len]);
        surface_slice[half_len..].copy_from_slice(inflow.at(n));
        surface.push(table.omega_moment(&surface_slice) / z);
        trace.extend_from_slice(&g.cell(nx - 1)[half_len..]);
    };

    record(0, &g, &mut surface, &mut trace);
    let mut running_sup = g.sup_norm();
    let mut running_min = g.min_value();
    if let Some(t) = trajectory.as_mut() {
        t.push(g.clone());
    }
    if opts.snapshot_steps.contains(&0) {
        snapshots.push((0, g.clone()));
    }

    let mut rho = vec![0.0; nx];
    for n in 0..nt {
        for (i, r) in rho.iter_mut().enumerate() {
            *r = table.omega_moment(g.cell(i));
        }
        let phi = inflow.at(n);
        let src = g.as_slice();
        let dst = next.as_mut_slice();
        for (i, &r) in rho.iter().enumerate() {
            let base = i * plen;
            let gain = dt * r;
            for k in 0..nmu {
                let row = base + k * nw;
                let nu_row = &nu[k * nw..(k + 1) * nw];
                if k >= half {
                    // mu > 0: upwind neighbour on the left, inflow at x = 0.
                    let up: &[f64] = if i == 0 {
                        &phi[(k - half) * nw..(k - half + 1) * nw]
                    } else {
                        &src[row - plen..row - plen + nw]
                    };
                    for l in 0..nw {
                        let old = src[row + l];
                        dst[row + l] = old - nu_row[l] * (old - up[l])
                            + dt * (-omega[l] * old)
                            + maxwellian[l] * gain;
                    }
                } else if i + 1 < nx {
                    let up = &src[row + plen..row + plen + nw];
                    for l in 0..nw {
                        let old = src[row + l];
                        dst[row + l] = old - nu_row[l] * (old - up[l])
                            + dt * (-omega[l] * old)
                            + maxwellian[l] * gain;
                    }
                } else {
                    // mu < 0 at the interface: reflected outgoing value.
                    let mrow = base + (nmu - 1 - k) * nw;
                    for l in 0..nw {
                        let old = src[row + l];
                        let ghost = eta[l] * src[mrow + l];
                        dst[row + l] = old - nu_row[l] * (old - ghost)
                            + dt * (-omega[l] * old)
                            + maxwellian[l] * gain;
                    }
                }
            }
        }
        std::mem::swap(&mut g, &mut next);

        let norm = g.sup_norm();
        if !norm.is_finite() {
            return Err(Error::NonFinite { step: n + 1 });
        }
        if norm > limit {
            return Err(Error::BlowUp { step: n + 1, norm });
        }

        running_sup = running_sup.max(norm);
        running_min = running_min.min(g.min_value());
        record(n + 1, &g, &mut surface, &mut trace);
        if let Some(t) = trajectory.as_mut() {
            t.push(g.clone());
        }
        if opts.snapshot_steps.contains(&(n + 1)) {
            snapshots.push((n + 1, g.clone()));
        }
    }

    Ok(ForwardSolution {
        surface_delta_t: surface,
        interface_trace: trace,
        trajectory,
        snapshots,
        sup_norm: running_sup,
        min_value: running_min,
        half_len,
    })
}

/// Solves the forward problem with reflection coefficient `eta` and inflow
/// `phi`, recording the surface temperature and the interface trace.
pub fn forward_solve(
    model: &Model,
    eta: &ReflectionCoeff,
    phi: &BoundarySource,
    opts: &ForwardOptions,
) -> Result<ForwardSolution> {
    eta.check_grid(&model.grid)?;
    march(model, eta.values(), phi, opts)
}

/// Result of [`max_principle_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct MaxPrincipleReport {
    /// `|g|_inf / |phi|_inf`; `None` when `phi = 0`.
    pub ratio: Option<f64>,
    /// Smallest value of `g` over all time levels.
    pub min_value: f64,
    /// `g >= -tol` everywhere, checked only for nonnegative `phi`.
    pub nonnegative: Option<bool>,
    pub pass: bool,
}

/// Compares the size of the solution over all time levels with the
/// inflow size.
pub fn max_principle_check(
    solution: &ForwardSolution,
    phi: &BoundarySource,
    bound: f64,
    tol: f64,
) -> MaxPrincipleReport {
    let min_value = solution.min_value;
    let phi_norm = phi.sup_norm();
    let ratio = (phi_norm > 0.0).then(|| solution.sup_norm / phi_norm);
    let nonnegative = phi.is_nonnegative().then(|| min_value >= -tol);
    let pass = ratio.is_none_or(|r| r <= bound) && nonnegative.unwrap_or(true);
    MaxPrincipleReport {
        ratio,
        min_value,
        nonnegative,
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridConfig;
    use crate::inverse::{eta_from_params, TanhParams};

    fn coarse() -> Model {
        Model::from_config(GridConfig::coarse()).unwrap()
    }

    #[test]
    fn zero_source_gives_zero_solution() {
        let model = coarse();
        let eta = eta_from_params(TanhParams::REFERENCE, &model.grid);
        let phi = BoundarySource::zero(&model.grid);
        let opts = ForwardOptions {
            store_trajectory: true,
            ..Default::default()
        };
        let sol = forward_solve(&model, &eta, &phi, &opts).unwrap();
        assert!(sol.surface_delta_t.iter().all(|&v| v == 0.0));
        assert_eq!(sol.trajectory_sup_norm(), Some(0.0));
        let report = max_principle_check(&sol, &phi, 1.0, 0.0);
        assert!(report.ratio.is_none() && report.pass);
    }

    #[test]
    fn equilibrium_is_preserved() {
        let model = coarse();
        let grid = &model.grid;
        let eta = ReflectionCoeff::constant(grid, 1.0).unwrap();
        let gstar = model.table.gstar();
        let phi = BoundarySource::from_omega_profile(grid, gstar).unwrap();
        let init = KineticField::broadcast_omega(grid, gstar).unwrap();
        let opts = ForwardOptions {
            initial: Some(init.clone()),
            store_trajectory: true,
            ..Default::default()
        };
        let sol = forward_solve(&model, &eta, &phi, &opts).unwrap();
        for g in sol.trajectory.as_ref().unwrap() {
            let diff = g
                .as_slice()
                .iter()
                .zip(init.as_slice())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(diff <= 1e-12, "{diff}");
        }
        assert!(sol.surface_delta_t.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn lengths_and_trace_shape() {
        let model = coarse();
        let grid = &model.grid;
        let eta = eta_from_params(TanhParams::REFERENCE, grid);
        let phi = BoundarySource::kronecker(grid, 1.5).unwrap();
        let sol = forward_solve(&model, &eta, &phi, &ForwardOptions::default()).unwrap();
        assert_eq!(sol.surface_delta_t.len(), grid.nt() + 1);
        assert_eq!(
            sol.interface_trace.len(),
            (grid.nt() + 1) * grid.nmu_half() * grid.nomega()
        );
        assert!(sol.trajectory.is_none());
        assert!(sol.trajectory_sup_norm().is_none());
    }

    #[test]
    fn kronecker_must_be_on_grid() {
        let model = coarse();
        assert!(BoundarySource::kronecker(&model.grid, 1.55).is_err());
        assert!(BoundarySource::kronecker(&model.grid, 1.5).is_ok());
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let model = coarse();
        let other = Model::from_config(GridConfig::coarse().refined()).unwrap();
        let eta = ReflectionCoeff::constant(&other.grid, 0.5).unwrap();
        let phi = BoundarySource::zero(&model.grid);
        assert!(forward_solve(&model, &eta, &phi, &ForwardOptions::default()).is_err());
        let eta = ReflectionCoeff::constant(&model.grid, 0.5).unwrap();
        let phi = BoundarySource::zero(&other.grid);
        assert!(forward_solve(&model, &eta, &phi, &ForwardOptions::default()).is_err());
    }

    #[test]
    fn running_extrema_match_the_trajectory() {
        let model = coarse();
        let eta = ReflectionCoeff::constant(&model.grid, 0.5).unwrap();
        let phi = BoundarySource::kronecker(&model.grid, 1.5).unwrap();
        let opts = ForwardOptions {
            store_trajectory: true,
            ..Default::default()
        };
        let sol = forward_solve(&model, &eta, &phi, &opts).unwrap();
        assert_eq!(sol.trajectory_sup_norm(), Some(sol.sup_norm));
        let min = sol
            .trajectory
            .as_ref()
            .unwrap()
            .iter()
            .map(KineticField::min_value)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(min, sol.min_value);
        let report = max_principle_check(&sol, &phi, 10.0, 0.0);
        let scaled = forward_solve(&model, &eta, &phi.scaled(10.0), &ForwardOptions::default()).unwrap();
        let report10 = max_principle_check(&scaled, &phi.scaled(10.0), 10.0, 0.0);
        let (r1, r10) = (report.ratio.unwrap(), report10.ratio.unwrap());
        assert!((r1 - r10).abs() <= 1e-14 * r1);
    }

    #[test]
    fn snapshots_are_recorded() {
        let model = coarse();
        let eta = ReflectionCoeff::constant(&model.grid, 0.5).unwrap();
        let phi = BoundarySource::kronecker(&model.grid, 1.5).unwrap();
        let opts = ForwardOptions {
            snapshot_steps: vec![0, 25, 250],
            ..Default::default()
        };
        let sol = forward_solve(&model, &eta, &phi, &opts).unwrap();
        let steps: Vec<usize> = sol.snapshots.iter().map(|(n, _)| *n).collect();
        assert_eq!(steps, vec![0, 25, 250]);
        assert_eq!(sol.snapshots[0].1.sup_norm(), 0.0);
        assert!(sol.snapshots[2].1.sup_norm() > 0.0);
    }
}
