//! Loss functional, measurements and stochastic gradient descent for the
//! reflection coefficient.

mod eta;
mod sgd;

pub use eta::{eta_from_params, reconstruction_error, ReflectionCoeff, TanhParams};
pub use sgd::{
    auto_step_size, normalized_step_size, run_sgd, sgd_step, update_direction, Iterate, ReconstructionState, RunOptions,
    RunSummary, StepOutcome, StepSchedule,
};

use rayon::prelude::*;

use crate::adjoint::{adjoint_solve, frechet_gradient, AdjointBoundary, AdjointOptions, MeasurementFunctional};
use crate::data::{measure_all, Dataset, ExperimentBank};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::transport::{forward_solve, BoundarySource, ForwardOptions};

/// `M(eta) = sum_t dT(t, x = 0) psi(t) dt` for one injection and one
/// measurement functional.
pub fn measurement(
    model: &Model,
    eta: &ReflectionCoeff,
    phi: &BoundarySource,
    psi: &MeasurementFunctional,
) -> Result<f64> {
    let sol = forward_solve(model, eta, phi, &ForwardOptions::default())?;
    psi.apply(&model.grid, &sol.surface_delta_t)
}

/// Measurement and its Frechet derivative density in `omega`, from one
/// forward and one adjoint solve run side by side.
pub fn measurement_and_gradient(
    model: &Model,
    eta: &ReflectionCoeff,
    phi: &BoundarySource,
    psi: &MeasurementFunctional,
) -> Result<(f64, Vec<f64>)> {
    let boundary = AdjointBoundary::Measurement(psi.clone());
    let (fwd, adj) = rayon::join(
        || forward_solve(model, eta, phi, &ForwardOptions::default()),
        || adjoint_solve(model, eta, &boundary, &AdjointOptions::default()),
    );
    let fwd = fwd?;
    let adj = adj?;
    let value = psi.apply(&model.grid, &fwd.surface_delta_t)?;
    let grad = frechet_gradient(model, &fwd, &adj)?;
    Ok((value, grad))
}

/// An experiment bank paired with its data.
#[derive(Debug, Clone, Copy)]
pub struct InverseProblem<'a> {
    pub model: &'a Model,
    pub bank: &'a ExperimentBank,
    pub dataset: &'a Dataset,
}

impl<'a> InverseProblem<'a> {
    pub fn new(model: &'a Model, bank: &'a ExperimentBank, dataset: &'a Dataset) -> Result<Self> {
        if bank.injections() != dataset.injections() || bank.measurements() != dataset.measurements() {
            return Err(Error::Validation(format!(
                "bank is {}x{} but dataset is {}x{}",
                bank.injections(),
                bank.measurements(),
                dataset.injections(),
                dataset.measurements()
            )));
        }
        Ok(Self {
            model,
            bank,
            dataset,
        })
    }

    fn experiment(&self, gamma: (usize, usize)) -> Result<(&BoundarySource, &MeasurementFunctional, f64)> {
        let (i, j) = gamma;
        let datum = self.dataset.get(i, j)?;
        match (self.bank.phis.get(i), self.bank.psis.get(j)) {
            (Some(phi), Some(psi)) => Ok((phi, psi, datum)),
            _ => Err(Error::MissingDatum { i: i + 1, j: j + 1 }),
        }
    }

    /// `L_ij = M_ij(eta) - d_ij` with 0-based `(i, j)`.
    pub fn residual(&self, eta: &ReflectionCoeff, gamma: (usize, usize)) -> Result<f64> {
        let (phi, psi, datum) = self.experiment(gamma)?;
        Ok(measurement(self.model, eta, phi, psi)? - datum)
    }

    /// `L_ij` and `grad_eta L_ij` (a density in `omega`).
    pub fn residual_and_gradient(
        &self,
        eta: &ReflectionCoeff,
        gamma: (usize, usize),
    ) -> Result<(f64, Vec<f64>)> {
        let (phi, psi, datum) = self.experiment(gamma)?;
        let (value, grad) = measurement_and_gradient(self.model, eta, phi, psi)?;
        Ok((value - datum, grad))
    }

    /// All residuals, row-major. Parallel over injections.
    pub fn residuals(&self, eta: &ReflectionCoeff) -> Result<Vec<f64>> {
        let predicted = measure_all(self.model, self.bank, eta)?;
        Ok(predicted
            .iter()
            .zip(self.dataset.values())
            .map(|(m, d)| m - d)
            .collect())
    }

    /// `1/(IJ) sum_ij |M_ij(eta) - d_ij|^2`.
    pub fn loss(&self, eta: &ReflectionCoeff) -> Result<f64> {
        let r = self.residuals(eta)?;
        if r.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64)
    }

    /// Loss over a batch of coefficients, evaluated in parallel.
    pub fn loss_many(&self, etas: &[ReflectionCoeff]) -> Result<Vec<f64>> {
        etas.par_iter().map(|eta| self.loss(eta)).collect()
    }
}
