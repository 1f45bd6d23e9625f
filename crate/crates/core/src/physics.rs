//! Closed-form kernels of the linearized model: the linearization kernel
//! `g*(omega) = omega^2 e^omega / (e^omega - 1)^2`, the normalized Maxwellian
//! `M = omega g* / <omega g*>`, the surface temperature functional
//! `dT = <omega g> / <omega g*>` and the linearized BGK operator
//! `L g = -omega g + M <omega g>`.

use crate::error::{check_len, Error, Result};
use crate::field::KineticField;
use crate::grid::PhaseGrid;

/// `omega^2 e^omega / (e^omega - 1)^2`, evaluated as
/// `omega^2 e^-omega / (1 - e^-omega)^2` so neither small nor large
/// frequencies lose precision.
pub fn gstar_at(omega: f64) -> Result<f64> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::Domain(format!(
            "g* needs a positive finite frequency, got {omega}"
        )));
    }
    let denom = -(-omega).exp_m1();
    let ratio = omega / denom;
    Ok(ratio * ratio * (-omega).exp())
}

/// Per-frequency tables shared by every solve on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxwellianTable {
    gstar: Vec<f64>,
    maxwellian: Vec<f64>,
    /// `omega_l * w_omega_l`, the weight of `<omega g>` along a row.
    omega_weight: Vec<f64>,
    mu_weight: Vec<f64>,
    omega: Vec<f64>,
    z_norm: f64,
}

impl MaxwellianTable {
    /// Builds `g*` and a Maxwellian renormalized against the discrete
    /// quadrature, so `<M> = 1` and `L g* = 0` hold to rounding.
    pub fn new(grid: &PhaseGrid) -> Result<Self> {
        let omega = grid.omega_nodes().to_vec();
        let gstar = omega
            .iter()
            .map(|&w| gstar_at(w))
            .collect::<Result<Vec<_>>>()?;
        let omega_weight: Vec<f64> = omega
            .iter()
            .zip(grid.quad_weights_omega())
            .map(|(w, q)| w * q)
            .collect();
        let mut table = Self {
            maxwellian: Vec::new(),
            omega_weight,
            mu_weight: grid.quad_weights_mu().to_vec(),
            omega,
            z_norm: 0.0,
            gstar,
        };
        let nmu = grid.nmu();
        let broadcast: Vec<f64> = (0..nmu).flat_map(|_| table.gstar.iter().copied()).collect();
        table.z_norm = table.omega_moment(&broadcast);
        table.maxwellian = table
            .omega
            .iter()
            .zip(&table.gstar)
            .map(|(w, g)| w * g / table.z_norm)
            .collect();
        Ok(table)
    }

    pub fn gstar(&self) -> &[f64] {
        &self.gstar
    }

    pub fn maxwellian(&self) -> &[f64] {
        &self.maxwellian
    }

    /// `<omega g*>` under the grid quadrature.
    pub fn z_norm(&self) -> f64 {
        self.z_norm
    }

    /// `<omega g>` of one `(mu, omega)` slice. No shape check.
    #[inline]
    pub(crate) fn omega_moment(&self, slice: &[f64]) -> f64 {
        let nw = self.omega_weight.len();
        let mut total = 0.0;
        for (row, wm) in slice.chunks_exact(nw).zip(&self.mu_weight) {
            let mut s = 0.0;
            for (v, w) in row.iter().zip(&self.omega_weight) {
                s += v * w;
            }
            total += s * wm;
        }
        total
    }

    /// `dT = <omega g> / <omega g*>` for one `(mu, omega)` slice.
    pub fn delta_t(&self, slice: &[f64]) -> Result<f64> {
        check_len(
            "(mu, omega) slice",
            self.mu_weight.len() * self.omega.len(),
            slice.len(),
        )?;
        Ok(self.omega_moment(slice) / self.z_norm)
    }

    /// `dT` of every cell of a field.
    pub fn delta_t_profile(&self, g: &KineticField) -> Vec<f64> {
        (0..g.nx())
            .map(|i| self.omega_moment(g.cell(i)) / self.z_norm)
            .collect()
    }

    /// Applies `L g = -omega g + M <omega g>` to one slice, writing into `out`.
    pub(crate) fn collide_slice(&self, g: &[f64], out: &mut [f64]) {
        let rho = self.omega_moment(g);
        let nw = self.omega.len();
        for (row_in, row_out) in g.chunks_exact(nw).zip(out.chunks_exact_mut(nw)) {
            for l in 0..nw {
                row_out[l] = -self.omega[l] * row_in[l] + self.maxwellian[l] * rho;
            }
        }
    }

    /// The linearized BGK operator applied cell by cell.
    pub fn collide(&self, grid: &PhaseGrid, g: &KineticField) -> Result<KineticField> {
        g.check_grid(grid)?;
        let mut out = KineticField::zeros(grid);
        for i in 0..g.nx() {
            self.collide_slice(g.cell(i), out.cell_mut(i));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (PhaseGrid, MaxwellianTable) {
        let grid = PhaseGrid::new(GridConfig::coarse()).unwrap();
        let table = MaxwellianTable::new(&grid).unwrap();
        (grid, table)
    }

    fn random_field(grid: &PhaseGrid, rng: &mut ChaCha8Rng) -> KineticField {
        KineticField::from_fn(grid, |_, _, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn gstar_values() {
        // Reference values from 30-digit evaluation of w^2 e^w / (e^w - 1)^2.
        assert!((gstar_at(1.0).unwrap() - 0.920_673_594_207_792_3).abs() < 1e-15);
        assert!((gstar_at(2.0).unwrap() - 0.724_061_660_966_310_5).abs() < 1e-15);
        assert!((gstar_at(1e-9).unwrap() - 1.0).abs() < 1e-9);
        assert!((gstar_at(1e-5).unwrap() - 1.0).abs() < 1e-9);
        assert!(gstar_at(800.0).unwrap().is_finite());
    }

    #[test]
    fn gstar_rejects_nonpositive() {
        assert!(matches!(gstar_at(0.0), Err(Error::Domain(_))));
        assert!(gstar_at(-1.0).is_err());
        assert!(gstar_at(f64::NAN).is_err());
    }

    #[test]
    fn maxwellian_is_normalized() {
        let (grid, table) = setup();
        let m: Vec<f64> = (0..grid.nmu())
            .flat_map(|_| table.maxwellian().iter().copied())
            .collect();
        assert!((grid.bracket(&m).unwrap() - 1.0).abs() < 1e-14);
        assert!(table.gstar().iter().all(|&g| g > 0.0));
    }

    #[test]
    fn delta_t_of_gstar_multiples() {
        let (grid, table) = setup();
        let g = KineticField::broadcast_omega(&grid, table.gstar()).unwrap();
        assert_eq!(table.delta_t(g.cell(0)).unwrap(), 1.0);
        let scaled: Vec<f64> = g.cell(0).iter().map(|v| -2.5 * v).collect();
        assert!((table.delta_t(&scaled).unwrap() + 2.5).abs() < 1e-14);
        assert_eq!(table.delta_t(&vec![0.0; grid.phase_len()]).unwrap(), 0.0);
        assert!(table.delta_t(&[1.0]).is_err());
    }

    #[test]
    fn collision_annihilates_equilibrium() {
        let (grid, table) = setup();
        let g = KineticField::broadcast_omega(&grid, table.gstar()).unwrap();
        let out = table.collide(&grid, &g).unwrap();
        assert!(out.sup_norm() <= 1e-12, "{}", out.sup_norm());
        let zero = table.collide(&grid, &KineticField::zeros(&grid)).unwrap();
        assert_eq!(zero.sup_norm(), 0.0);
    }

    #[test]
    fn collision_conserves_energy() {
        let (grid, table) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let g = random_field(&grid, &mut rng);
            let out = table.collide(&grid, &g).unwrap();
            for i in 0..grid.nx() {
                let b = grid.bracket(out.cell(i)).unwrap();
                assert!(b.abs() <= 1e-12 * g.sup_norm(), "{b}");
            }
        }
    }

    #[test]
    fn collision_is_self_adjoint_with_weight() {
        let (grid, table) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let nw = grid.nomega();
        let weigh = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter()
                .zip(b)
                .enumerate()
                .map(|(idx, (x, y))| x * y / table.gstar()[idx % nw])
                .collect()
        };
        for _ in 0..20 {
            let g = random_field(&grid, &mut rng);
            let h = random_field(&grid, &mut rng);
            let lg = table.collide(&grid, &g).unwrap();
            let lh = table.collide(&grid, &h).unwrap();
            for i in 0..grid.nx() {
                let lhs = grid.bracket(&weigh(lg.cell(i), h.cell(i))).unwrap();
                let rhs = grid.bracket(&weigh(lh.cell(i), g.cell(i))).unwrap();
                assert!((lhs - rhs).abs() <= 1e-12 * g.sup_norm() * h.sup_norm());
            }
        }
    }

    #[test]
    fn delta_t_is_linear() {
        let (grid, table) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = random_field(&grid, &mut rng);
        let h = random_field(&grid, &mut rng);
        let (a, b) = (0.7, -3.1);
        let combo: Vec<f64> = g
            .cell(2)
            .iter()
            .zip(h.cell(2))
            .map(|(x, y)| a * x + b * y)
            .collect();
        let lhs = table.delta_t(&combo).unwrap();
        let rhs = a * table.delta_t(g.cell(2)).unwrap() + b * table.delta_t(h.cell(2)).unwrap();
        assert!((lhs - rhs).abs() < 1e-13);
    }
}
