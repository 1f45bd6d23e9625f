use crate::error::{check_len, Result};
use crate::grid::PhaseGrid;

/// A scalar field `g(x, mu, omega)` at one time level.
///
/// Storage is row-major with `omega` fastest, then `mu`, then `x`, so each
/// cell's `(mu, omega)` slice is contiguous and can be handed straight to
/// [`PhaseGrid::bracket`].
#[derive(Debug, Clone, PartialEq)]
pub struct KineticField {
    nx: usize,
    nmu: usize,
    nomega: usize,
    data: Vec<f64>,
}

impl KineticField {
    pub fn zeros(grid: &PhaseGrid) -> Self {
        Self {
            nx: grid.nx(),
            nmu: grid.nmu(),
            nomega: grid.nomega(),
            data: vec![0.0; grid.nx() * grid.phase_len()],
        }
    }

    pub fn from_vec(grid: &PhaseGrid, data: Vec<f64>) -> Result<Self> {
        check_len("kinetic field", grid.nx() * grid.phase_len(), data.len())?;
        Ok(Self {
            nx: grid.nx(),
            nmu: grid.nmu(),
            nomega: grid.nomega(),
            data,
        })
    }

    /// Evaluates `f(x_i, mu_k, omega_l)` at every node.
    pub fn from_fn(grid: &PhaseGrid, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut field = Self::zeros(grid);
        for i in 0..field.nx {
            for k in 0..field.nmu {
                for l in 0..field.nomega {
                    let idx = field.index(i, k, l);
                    field.data[idx] = f(i, k, l);
                }
            }
        }
        field
    }

    /// Broadcasts a per-frequency profile over every `x` and `mu`.
    pub fn broadcast_omega(grid: &PhaseGrid, profile: &[f64]) -> Result<Self> {
        check_len("omega profile", grid.nomega(), profile.len())?;
        Ok(Self::from_fn(grid, |_, _, l| profile[l]))
    }

    /// Checks that the field was built on a grid with the same shape.
    pub fn check_grid(&self, grid: &PhaseGrid) -> Result<()> {
        check_len("field x nodes", grid.nx(), self.nx)?;
        check_len("field mu nodes", grid.nmu(), self.nmu)?;
        check_len("field omega nodes", grid.nomega(), self.nomega)
    }

    #[inline]
    pub fn index(&self, i: usize, k: usize, l: usize) -> usize {
        (i * self.nmu + k) * self.nomega + l
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize, l: usize) -> f64 {
        self.data[self.index(i, k, l)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, k: usize, l: usize, v: f64) {
        let idx = self.index(i, k, l);
        self.data[idx] = v;
    }

    /// The `(mu, omega)` slice of cell `i`.
    pub fn cell(&self, i: usize) -> &[f64] {
        let len = self.nmu * self.nomega;
        &self.data[i * len..(i + 1) * len]
    }

    pub fn cell_mut(&mut self, i: usize) -> &mut [f64] {
        let len = self.nmu * self.nomega;
        &mut self.data[i * len..(i + 1) * len]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.data)
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `sum_omega g w_omega` as an `(x, mu)` matrix.
    pub fn integrate_omega(&self, grid: &PhaseGrid) -> Vec<Vec<f64>> {
        let w = grid.quad_weights_omega();
        (0..self.nx)
            .map(|i| {
                (0..self.nmu)
                    .map(|k| (0..self.nomega).map(|l| self.get(i, k, l) * w[l]).sum())
                    .collect()
            })
            .collect()
    }

    /// `sum_mu g w_mu` as an `(x, omega)` matrix.
    pub fn integrate_mu(&self, grid: &PhaseGrid) -> Vec<Vec<f64>> {
        let w = grid.quad_weights_mu();
        (0..self.nx)
            .map(|i| {
                (0..self.nomega)
                    .map(|l| (0..self.nmu).map(|k| self.get(i, k, l) * w[k]).sum())
                    .collect()
            })
            .collect()
    }
}

pub(crate) fn sup_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}
