use crate::error::{check_len, Error, Result};
use crate::grid::PhaseGrid;

/// Reflection coefficient `eta(omega)` sampled on the frequency nodes.
/// Every entry lies in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionCoeff(Vec<f64>);

impl ReflectionCoeff {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((l, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::Domain(format!(
                "reflection coefficient must lie in [0, 1], got {v} at node {l}"
            )));
        }
        Ok(Self(values))
    }

    /// Clamps each entry into `[0, 1]`. Non-finite entries are rejected.
    pub fn projected(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite reflection coefficient".into()));
        }
        Ok(Self(values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect()))
    }

    pub fn constant(grid: &PhaseGrid, value: f64) -> Result<Self> {
        Self::new(vec![value; grid.nomega()])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn check_grid(&self, grid: &PhaseGrid) -> Result<()> {
        check_len("reflection coefficient", grid.nomega(), self.0.len())
    }
}

/// Parameters of the two-shift family
/// `eta = (tanh(10 (omega - a)) - tanh(2 (omega - b))) / 4 + 1/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TanhParams {
    pub a: f64,
    pub b: f64,
}

impl TanhParams {
    /// Ground truth of the synthetic experiments.
    pub const REFERENCE: TanhParams = TanhParams { a: 1.5, b: 1.0 };

    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    pub fn eval(&self, omega: f64) -> f64 {
        ((10.0 * (omega - self.a)).tanh() - (2.0 * (omega - self.b)).tanh()) / 4.0 + 0.5
    }

    /// `(d eta / d a, d eta / d b)` at one frequency.
    pub fn partials(&self, omega: f64) -> (f64, f64) {
        let ta = (10.0 * (omega - self.a)).tanh();
        let tb = (2.0 * (omega - self.b)).tanh();
        (-10.0 * (1.0 - ta * ta) / 4.0, 2.0 * (1.0 - tb * tb) / 4.0)
    }

    /// Chain rule from an `omega`-gradient density to `(a, b)`:
    /// `G_a = sum_omega d eta/d a * G(omega) w_omega`, likewise for `b`.
    pub fn chain_rule(&self, grid: &PhaseGrid, gradient: &[f64]) -> Result<(f64, f64)> {
        check_len("omega gradient", grid.nomega(), gradient.len())?;
        let mut ga = 0.0;
        let mut gb = 0.0;
        for ((&w, &q), &g) in grid
            .omega_nodes()
            .iter()
            .zip(grid.quad_weights_omega())
            .zip(gradient)
        {
            let (da, db) = self.partials(w);
            ga += da * g * q;
            gb += db * g * q;
        }
        Ok((ga, gb))
    }
}

/// Evaluates the tanh family on the frequency nodes.
pub fn eta_from_params(params: TanhParams, grid: &PhaseGrid) -> ReflectionCoeff {
    // The family maps into (0, 1) for finite parameters; clamp guards the
    // saturated tails where rounding can land exactly on 0 or 1.
    ReflectionCoeff(
        grid.omega_nodes()
            .iter()
            .map(|&w| params.eval(w).clamp(0.0, 1.0))
            .collect(),
    )
}

/// Plain (unweighted) l2 distance over the frequency nodes.
pub fn reconstruction_error(eta: &[f64], reference: &[f64]) -> Result<f64> {
    check_len("reference coefficient", eta.len(), reference.len())?;
    Ok(eta
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}
