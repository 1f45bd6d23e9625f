//! Linearized phonon transport through a slab with a partially reflecting
//! interface, its adjoint, and stochastic gradient reconstruction of the
//! frequency-dependent reflection coefficient `eta(omega)` from surface
//! temperature measurements.
//!
//! ```no_run
//! use tbr_core::{forward_solve, BoundarySource, ForwardOptions, GridConfig, Model, TanhParams, eta_from_params};
//!
//! let model = Model::from_config(GridConfig::coarse())?;
//! let eta = eta_from_params(TanhParams::REFERENCE, &model.grid);
//! let phi = BoundarySource::kronecker_at_index(&model.grid, 4);
//! let sol = forward_solve(&model, &eta, &phi, &ForwardOptions::default())?;
//! println!("dT(t_max, 0) = {}", sol.surface_delta_t.last().unwrap());
//! # Ok::<(), tbr_core::Error>(())
//! ```

pub mod adjoint;
pub mod data;
pub mod error;
pub mod field;
pub mod grid;
pub mod inverse;
pub mod model;
pub mod oracle;
pub mod physics;
pub mod transport;

pub use adjoint::{
    adjoint_solve, demo_profile, frechet_gradient, AdjointBoundary, AdjointOptions, AdjointSolution,
    MeasurementFunctional,
};
pub use data::{
    generate_dataset, make_bank_paper_default, measure_all, surface_traces, Dataset, ExperimentBank,
    NoiseKind, NoiseSpec,
};
pub use error::{Error, Result};
pub use field::KineticField;
pub use grid::{GridConfig, PhaseGrid};
pub use inverse::{
    auto_step_size, eta_from_params, normalized_step_size, measurement, measurement_and_gradient, reconstruction_error,
    run_sgd, sgd_step, InverseProblem, Iterate, ReconstructionState, ReflectionCoeff, RunOptions,
    RunSummary, StepOutcome, StepSchedule, TanhParams,
};
pub use model::Model;
pub use physics::{gstar_at, MaxwellianTable};
pub use transport::{
    forward_solve, max_principle_check, BoundarySource, ForwardOptions, ForwardSolution,
    MaxPrincipleReport,
};
