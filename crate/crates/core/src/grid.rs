//! Phase-space and time discretization.
//!
//! Space is cell-centered on `[0, x_max]` with ghost values at both ends.
//! The velocity cosine uses cell-centered nodes `mu_k = -1 + (k + 1/2) dmu`,
//! so the lattice is symmetric and never contains `mu = 0`. Frequency nodes
//! run from `omega_min` to `omega_max` inclusive. Both `mu` and `omega` use
//! uniform midpoint weights equal to the spacing, and every integral over
//! `(mu, omega)` in the crate goes through [`PhaseGrid::bracket`].

use crate::error::{check_len, Error, Result};

const SPACING_TOL: f64 = 1e-9;
const CFL_TOL: f64 = 1e-12;

/// Extents and spacings of a grid, before validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub x_max: f64,
    pub t_max: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub dx: f64,
    pub dt: f64,
    pub dmu: f64,
    pub domega: f64,
}

impl GridConfig {
    /// The full-resolution setup: `x in [0, 0.5]`, `t in [0, 5]`,
    /// `dx = 0.02`, `dt = 0.01`, `dmu = 0.01`, `domega = 0.05` on `[0.05, 2]`.
    pub fn paper() -> Self {
        Self {
            x_max: 0.5,
            t_max: 5.0,
            omega_min: 0.05,
            omega_max: 2.0,
            dx: 0.02,
            dt: 0.01,
            dmu: 0.01,
            domega: 0.05,
        }
    }

    /// Coarse verification grid: 10 cells, 20 ordinates, 20 frequencies
    /// (`0.1..=2.0`), 250 time steps. CFL = 0.8.
    pub fn coarse() -> Self {
        Self {
            x_max: 0.5,
            t_max: 5.0,
            omega_min: 0.1,
            omega_max: 2.0,
            dx: 0.05,
            dt: 0.02,
            dmu: 0.1,
            domega: 0.1,
        }
    }

    /// Same extents with every spacing halved.
    pub fn refined(&self) -> Self {
        Self {
            dx: self.dx / 2.0,
            dt: self.dt / 2.0,
            dmu: self.dmu / 2.0,
            domega: self.domega / 2.0,
            ..*self
        }
    }

    /// Builds a config from node counts instead of spacings. `nt` counts time
    /// steps, so there are `nt + 1` time nodes.
    #[allow(clippy::too_many_arguments)]
    pub fn from_counts(
        x_max: f64,
        t_max: f64,
        omega_min: f64,
        omega_max: f64,
        nx: usize,
        nmu: usize,
        nomega: usize,
        nt: usize,
    ) -> Result<Self> {
        if nx == 0 || nmu == 0 || nomega < 2 || nt == 0 {
            return Err(Error::InvalidGrid(
                "node counts must be positive (at least two frequency nodes)".into(),
            ));
        }
        Ok(Self {
            x_max,
            t_max,
            omega_min,
            omega_max,
            dx: x_max / nx as f64,
            dt: t_max / nt as f64,
            dmu: 2.0 / nmu as f64,
            domega: (omega_max - omega_min) / (nomega - 1) as f64,
        })
    }

    /// `max|mu| * omega_max * dt / dx`, with `max|mu|` taken as 1.
    pub fn cfl(&self) -> f64 {
        self.omega_max * self.dt / self.dx
    }
}

/// Number of whole spacings in `extent`, rejecting non-commensurate input.
fn count(name: &str, extent: f64, spacing: f64) -> Result<usize> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::InvalidGrid(format!(
            "{name} spacing must be positive, got {spacing}"
        )));
    }
    if !(extent > 0.0) || !extent.is_finite() {
        return Err(Error::InvalidGrid(format!(
            "{name} extent must be positive, got {extent}"
        )));
    }
    let n = (extent / spacing).round();
    if n < 1.0 || (n * spacing - extent).abs() > SPACING_TOL * extent.max(1.0) {
        return Err(Error::InvalidGrid(format!(
            "{name} spacing {spacing} does not divide extent {extent}"
        )));
    }
    Ok(n as usize)
}

/// Validated discrete `(x, mu, omega, t)` lattice. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    config: GridConfig,
    x_nodes: Vec<f64>,
    mu_nodes: Vec<f64>,
    omega_nodes: Vec<f64>,
    t_nodes: Vec<f64>,
    quad_weights_mu: Vec<f64>,
    quad_weights_omega: Vec<f64>,
}

impl PhaseGrid {
    pub fn new(config: GridConfig) -> Result<Self> {
        let nx = count("x", config.x_max, config.dx)?;
        let nt = count("t", config.t_max, config.dt)?;
        let nmu = count("mu", 2.0, config.dmu)?;
        if nmu % 2 == 1 {
            return Err(Error::InvalidGrid(format!(
                "dmu = {} yields an odd number of ordinates, which places a node at mu = 0",
                config.dmu
            )));
        }
        if !(config.omega_min > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "omega_min must be positive, got {}",
                config.omega_min
            )));
        }
        let nomega = count("omega", config.omega_max - config.omega_min, config.domega)? + 1;

        let cfl = config.cfl();
        if cfl > 1.0 + CFL_TOL {
            return Err(Error::Cfl { cfl });
        }

        let x_nodes = (0..nx).map(|i| (i as f64 + 0.5) * config.dx).collect();
        let half = nmu / 2;
        let positive: Vec<f64> = (0..half).map(|k| (k as f64 + 0.5) * config.dmu).collect();
        let mu_nodes = positive
            .iter()
            .rev()
            .map(|m| -m)
            .chain(positive.iter().copied())
            .collect();
        let omega_nodes = (0..nomega)
            .map(|l| config.omega_min + l as f64 * config.domega)
            .collect();
        let t_nodes = (0..=nt).map(|n| n as f64 * config.dt).collect();

        Ok(Self {
            config,
            x_nodes,
            mu_nodes,
            omega_nodes,
            t_nodes,
            quad_weights_mu: vec![config.dmu; nmu],
            quad_weights_omega: vec![config.domega; nomega],
        })
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn x_nodes(&self) -> &[f64] {
        &self.x_nodes
    }

    pub fn mu_nodes(&self) -> &[f64] {
        &self.mu_nodes
    }

    pub fn omega_nodes(&self) -> &[f64] {
        &self.omega_nodes
    }

    pub fn t_nodes(&self) -> &[f64] {
        &self.t_nodes
    }

    pub fn quad_weights_mu(&self) -> &[f64] {
        &self.quad_weights_mu
    }

    pub fn quad_weights_omega(&self) -> &[f64] {
        &self.quad_weights_omega
    }

    pub fn nx(&self) -> usize {
        self.x_nodes.len()
    }

    pub fn nmu(&self) -> usize {
        self.mu_nodes.len()
    }

    /// Number of ordinates with `mu > 0` (equal to the number with `mu < 0`).
    pub fn nmu_half(&self) -> usize {
        self.mu_nodes.len() / 2
    }

    pub fn nomega(&self) -> usize {
        self.omega_nodes.len()
    }

    /// Number of time steps; there are `nt() + 1` time nodes.
    pub fn nt(&self) -> usize {
        self.t_nodes.len() - 1
    }

    pub fn dx(&self) -> f64 {
        self.config.dx
    }

    pub fn dt(&self) -> f64 {
        self.config.dt
    }

    /// Size of one `(mu, omega)` slice.
    pub fn phase_len(&self) -> usize {
        self.nmu() * self.nomega()
    }

    /// Index of the ordinate `-mu_k`.
    pub fn mirror(&self, k: usize) -> usize {
        self.nmu() - 1 - k
    }

    /// Index of the time node closest to `t`, clamped to `[0, t_max]`.
    pub fn nearest_time_index(&self, t: f64) -> usize {
        let n = (t / self.config.dt).round();
        n.clamp(0.0, self.nt() as f64) as usize
    }

    /// Index of the frequency node closest to `omega`.
    pub fn nearest_omega_index(&self, omega: f64) -> usize {
        let l = ((omega - self.config.omega_min) / self.config.domega).round();
        l.clamp(0.0, (self.nomega() - 1) as f64) as usize
    }

    /// `<f> = sum_mu sum_omega f(mu, omega) w_mu w_omega` over a
    /// `(mu, omega)` slice laid out with `omega` fastest.
    pub fn bracket(&self, field: &[f64]) -> Result<f64> {
        check_len("(mu, omega) slice", self.phase_len(), field.len())?;
        let half = self.nmu_half();
        Ok(self.bracket_range(field, 0, half) + self.bracket_range(field, half, self.nmu()))
    }

    /// Bracket restricted to `mu > 0`.
    pub fn bracket_pos(&self, field: &[f64]) -> Result<f64> {
        check_len("(mu, omega) slice", self.phase_len(), field.len())?;
        Ok(self.bracket_range(field, self.nmu_half(), self.nmu()))
    }

    /// Bracket restricted to `mu < 0`.
    pub fn bracket_neg(&self, field: &[f64]) -> Result<f64> {
        check_len("(mu, omega) slice", self.phase_len(), field.len())?;
        Ok(self.bracket_range(field, 0, self.nmu_half()))
    }

    fn bracket_range(&self, field: &[f64], k0: usize, k1: usize) -> f64 {
        let nw = self.nomega();
        let mut total = 0.0;
        for k in k0..k1 {
            let row = &field[k * nw..(k + 1) * nw];
            let mut s = 0.0;
            for (v, w) in row.iter().zip(&self.quad_weights_omega) {
                s += v * w;
            }
            total += s * self.quad_weights_mu[k];
        }
        total
    }

    /// Bracket of a function of `omega` alone, broadcast over every `mu`.
    pub fn bracket_omega(&self, per_omega: &[f64]) -> Result<f64> {
        check_len("omega vector", self.nomega(), per_omega.len())?;
        let s: f64 = per_omega
            .iter()
            .zip(&self.quad_weights_omega)
            .map(|(v, w)| v * w)
            .sum();
        let mu_total: f64 = self.quad_weights_mu.iter().sum();
        Ok(s * mu_total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coarse() -> PhaseGrid {
        PhaseGrid::new(GridConfig::coarse()).unwrap()
    }

    #[test]
    fn paper_grid_sits_on_the_cfl_boundary() {
        let cfg = GridConfig::paper();
        assert!((cfg.cfl() - 1.0).abs() < 1e-12);
        let g = PhaseGrid::new(cfg).unwrap();
        assert_eq!((g.nx(), g.nmu(), g.nomega(), g.nt()), (25, 200, 40, 500));
        assert!((g.omega_nodes()[39] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn doubled_dt_is_rejected() {
        let cfg = GridConfig {
            dt: 0.02,
            ..GridConfig::paper()
        };
        match PhaseGrid::new(cfg) {
            Err(Error::Cfl { cfl }) => assert!((cfl - 2.0).abs() < 1e-12),
            other => panic!("expected CFL error, got {other:?}"),
        }
    }

    #[test]
    fn coarse_grid_is_valid() {
        let g = coarse();
        assert!((g.config().cfl() - 0.8).abs() < 1e-12);
        assert_eq!((g.nx(), g.nmu(), g.nomega(), g.nt()), (10, 20, 20, 250));
        assert_eq!(g.t_nodes().len(), 251);
    }

    #[test]
    fn rejects_bad_spacings() {
        let base = GridConfig::coarse();
        for cfg in [
            GridConfig { dx: 0.0, ..base },
            GridConfig { dt: -0.01, ..base },
            GridConfig { dmu: 0.3, ..base },
            GridConfig { domega: 0.07, ..base },
            GridConfig {
                omega_min: 0.0,
                ..base
            },
        ] {
            assert!(matches!(PhaseGrid::new(cfg), Err(Error::InvalidGrid(_))), "{cfg:?}");
        }
    }

    #[test]
    fn odd_ordinate_count_is_rejected() {
        // 2 / 0.4 = 5 ordinates would put a node on mu = 0.
        let cfg = GridConfig {
            dmu: 0.4,
            ..GridConfig::coarse()
        };
        assert!(matches!(PhaseGrid::new(cfg), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn mu_nodes_are_symmetric_and_nonzero() {
        let g = coarse();
        for k in 0..g.nmu() {
            assert_eq!(g.mu_nodes()[k], -g.mu_nodes()[g.mirror(k)]);
            assert_ne!(g.mu_nodes()[k], 0.0);
            assert_eq!(g.mirror(g.mirror(k)), k);
        }
        assert!(g.mu_nodes()[..g.nmu_half()].iter().all(|&m| m < 0.0));
    }

    #[test]
    fn bracket_of_zero_and_one() {
        let g = coarse();
        assert_eq!(g.bracket(&vec![0.0; g.phase_len()]).unwrap(), 0.0);
        let ones = vec![1.0; g.phase_len()];
        // Midpoint weights: 2 * nomega * domega = 2 * (omega_max - omega_min + domega).
        let full = g.bracket(&ones).unwrap();
        assert!((full - 4.0).abs() < 1e-12, "{full}");
        assert!((g.bracket_pos(&ones).unwrap() - 2.0).abs() < 1e-12);
        assert!((g.bracket_neg(&ones).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bracket_of_mu_is_antisymmetric() {
        let g = coarse();
        let nw = g.nomega();
        let f: Vec<f64> = (0..g.phase_len()).map(|i| g.mu_nodes()[i / nw]).collect();
        let p = g.bracket_pos(&f).unwrap();
        let n = g.bracket_neg(&f).unwrap();
        assert!(p > 0.0);
        // Same terms summed in opposite order.
        assert!((p + n).abs() <= 4.0 * f64::EPSILON * p);
    }

    #[test]
    fn bracket_rejects_wrong_length() {
        let g = coarse();
        assert!(matches!(g.bracket(&[1.0; 3]), Err(Error::Shape { .. })));
        assert!(g.bracket_pos(&[1.0; 3]).is_err());
    }

    #[test]
    fn refinement_halves_spacings() {
        let g = PhaseGrid::new(GridConfig::coarse().refined()).unwrap();
        assert_eq!((g.nx(), g.nmu(), g.nomega(), g.nt()), (20, 40, 39, 500));
    }

    #[test]
    fn from_counts_matches_spacings() {
        let cfg = GridConfig::from_counts(0.5, 5.0, 0.1, 2.0, 10, 20, 20, 250).unwrap();
        let g = PhaseGrid::new(cfg).unwrap();
        assert_eq!(g.nomega(), 20);
        assert!((g.config().domega - 0.1).abs() < 1e-15);
    }
}
