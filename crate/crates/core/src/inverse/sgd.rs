use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::eta::{eta_from_params, reconstruction_error, ReflectionCoeff, TanhParams};
use super::InverseProblem;
use crate::adjoint::{adjoint_solve, frechet_gradient, AdjointBoundary, AdjointOptions};
use crate::error::{check_len, Error, Result};
use crate::grid::PhaseGrid;
use crate::transport::{forward_solve, ForwardOptions};

/// Unknown being reconstructed: the full nodal coefficient or the two
/// parameters of the tanh family.
#[derive(Debug, Clone, PartialEq)]
pub enum Iterate {
    Free(ReflectionCoeff),
    Tanh(TanhParams),
}

impl Iterate {
    pub fn eta(&self, grid: &PhaseGrid) -> ReflectionCoeff {
        match self {
            Iterate::Free(eta) => eta.clone(),
            Iterate::Tanh(p) => eta_from_params(*p, grid),
        }
    }

    fn coords(&self) -> Vec<f64> {
        match self {
            Iterate::Free(eta) => eta.values().to_vec(),
            Iterate::Tanh(p) => vec![p.a, p.b],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// `alpha0 / (1 + n / n0)`
    Decay { alpha0: f64, n0: f64 },
}

impl StepSchedule {
    pub fn alpha(&self, n: usize) -> f64 {
        match *self {
            StepSchedule::Constant(a) => a,
            StepSchedule::Decay { alpha0, n0 } => alpha0 / (1.0 + n as f64 / n0),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSchedule::Constant(a) => a.is_finite() && a > 0.0,
            StepSchedule::Decay { alpha0, n0 } => {
                alpha0.is_finite() && alpha0 > 0.0 && n0.is_finite() && n0 > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Precondition(format!("invalid step size schedule {self:?}")))
        }
    }
}

/// `2 L_gamma grad L_gamma`, the stochastic gradient of `|L_gamma|^2`.
pub fn update_direction(residual: f64, gradient: &[f64]) -> Vec<f64> {
    gradient.iter().map(|g| 2.0 * residual * g).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Sampled experiment, 0-based.
    pub gamma: (usize, usize),
    pub residual: f64,
    /// l2 norm of the change in the iterate (nodal values or `(a, b)`).
    pub update_norm: f64,
    pub accepted: bool,
}

/// Iterate, sampler and histories of one SGD run.
#[derive(Debug, Clone)]
pub struct ReconstructionState {
    iterate: Iterate,
    iteration: usize,
    rng: ChaCha8Rng,
    schedule: StepSchedule,
    reference: Option<Vec<f64>>,
    loss_history: Vec<f64>,
    error_history: Vec<f64>,
    param_history: Vec<TanhParams>,
    rejected: usize,
}

impl ReconstructionState {
    /// `reference` enables the error history `||eta_n - reference||`.
    pub fn new(
        grid: &PhaseGrid,
        iterate: Iterate,
        schedule: StepSchedule,
        seed: u64,
        reference: Option<Vec<f64>>,
    ) -> Result<Self> {
        schedule.validate()?;
        if let Iterate::Free(eta) = &iterate {
            eta.check_grid(grid)?;
        }
        if let Iterate::Tanh(p) = &iterate {
            if !p.a.is_finite() || !p.b.is_finite() {
                return Err(Error::Precondition("non-finite tanh parameters".into()));
            }
        }
        if let Some(r) = &reference {
            check_len("reference coefficient", grid.nomega(), r.len())?;
        }
        let mut state = Self {
            iterate,
            iteration: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            schedule,
            reference,
            loss_history: Vec::new(),
            error_history: Vec::new(),
            param_history: Vec::new(),
            rejected: 0,
        };
        state.record(grid)?;
        Ok(state)
    }

    pub fn iterate(&self) -> &Iterate {
        &self.iterate
    }

    pub fn eta(&self, grid: &PhaseGrid) -> ReflectionCoeff {
        self.iterate.eta(grid)
    }

    /// Accepted steps so far.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn schedule(&self) -> StepSchedule {
        self.schedule
    }

    pub fn set_schedule(&mut self, schedule: StepSchedule) -> Result<()> {
        schedule.validate()?;
        self.schedule = schedule;
        Ok(())
    }

    /// `|L_gamma|^2` at each accepted step, before the update.
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    /// Error against the reference, starting with the initial guess.
    pub fn error_history(&self) -> &[f64] {
        &self.error_history
    }

    /// `(a, b)` per iteration, starting with the initial guess. Empty for
    /// the free iterate.
    pub fn param_history(&self) -> &[TanhParams] {
        &self.param_history
    }

    pub fn rejected_steps(&self) -> usize {
        self.rejected
    }

    fn sample(rng: &mut ChaCha8Rng, injections: usize, measurements: usize) -> (usize, usize) {
        (rng.gen_range(0..injections), rng.gen_range(0..measurements))
    }

    fn record(&mut self, grid: &PhaseGrid) -> Result<()> {
        if let Some(r) = &self.reference {
            let e = reconstruction_error(self.iterate.eta(grid).values(), r)?;
            self.error_history.push(e);
        }
        if let Iterate::Tanh(p) = self.iterate {
            self.param_history.push(p);
        }
        Ok(())
    }

    /// Applies one update from a residual and its gradient density.
    /// A non-finite residual or gradient leaves the state untouched and is
    /// counted as rejected.
    pub(crate) fn apply_update(
        &mut self,
        grid: &PhaseGrid,
        gamma: (usize, usize),
        residual: f64,
        gradient: &[f64],
    ) -> Result<StepOutcome> {
        check_len("gradient", grid.nomega(), gradient.len())?;
        let rejected = StepOutcome {
            gamma,
            residual,
            update_norm: 0.0,
            accepted: false,
        };
        if !residual.is_finite() || gradient.iter().any(|g| !g.is_finite()) {
            self.rejected += 1;
            return Ok(rejected);
        }
        let alpha = self.schedule.alpha(self.iteration);
        let dir = update_direction(residual, gradient);
        let old = self.iterate.coords();
        let next = match &self.iterate {
            Iterate::Free(eta) => {
                let moved: Vec<f64> = eta.values().iter().zip(&dir).map(|(v, d)| v - alpha * d).collect();
                match ReflectionCoeff::projected(moved) {
                    Ok(e) => Iterate::Free(e),
                    Err(_) => {
                        self.rejected += 1;
                        return Ok(rejected);
                    }
                }
            }
            Iterate::Tanh(p) => {
                let (ga, gb) = p.chain_rule(grid, &dir)?;
                let next = TanhParams::new(p.a - alpha * ga, p.b - alpha * gb);
                if !next.a.is_finite() || !next.b.is_finite() {
                    self.rejected += 1;
                    return Ok(rejected);
                }
                Iterate::Tanh(next)
            }
        };
        let update_norm = next
            .coords()
            .iter()
            .zip(&old)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        self.iterate = next;
        self.iteration += 1;
        self.loss_history.push(residual * residual);
        self.record(grid)?;
        Ok(StepOutcome {
            gamma,
            residual,
            update_norm,
            accepted: true,
        })
    }
}

/// One stochastic gradient step: sample `gamma` uniformly with replacement,
/// compute `L_gamma` and its gradient with a forward and an adjoint solve,
/// then move against `2 L_gamma grad L_gamma`. Free iterates are projected
/// onto `[0, 1]`; tanh parameters are updated through the chain rule.
pub fn sgd_step(state: &mut ReconstructionState, problem: &InverseProblem<'_>) -> Result<StepOutcome> {
    let gamma = ReconstructionState::sample(
        &mut state.rng,
        problem.bank.injections(),
        problem.bank.measurements(),
    );
    let eta = state.iterate.eta(&problem.model.grid);
    let (residual, gradient) = problem.residual_and_gradient(&eta, gamma)?;
    state.apply_update(&problem.model.grid, gamma, residual, &gradient)
}

/// Step size for which the first update changes the iterate by
/// `target_relative` of its norm. Uses the experiment the sampler would pick
/// next without advancing it.
pub fn auto_step_size(
    state: &ReconstructionState,
    problem: &InverseProblem<'_>,
    target_relative: f64,
) -> Result<f64> {
    if !(target_relative > 0.0) || !target_relative.is_finite() {
        return Err(Error::Precondition(format!(
            "target relative change must be positive, got {target_relative}"
        )));
    }
    let grid = &problem.model.grid;
    let mut rng = state.rng.clone();
    let gamma = ReconstructionState::sample(&mut rng, problem.bank.injections(), problem.bank.measurements());
    let eta = state.iterate.eta(grid);
    let (residual, gradient) = problem.residual_and_gradient(&eta, gamma)?;
    let dir = update_direction(residual, &gradient);
    let step = match &state.iterate {
        Iterate::Free(_) => dir,
        Iterate::Tanh(p) => {
            let (ga, gb) = p.chain_rule(grid, &dir)?;
            vec![ga, gb]
        }
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let dn = norm(&step);
    let xn = norm(&state.iterate.coords());
    if !(dn > 0.0) || !dn.is_finite() || !(xn > 0.0) {
        return Err(Error::Precondition(format!(
            "cannot size the step: iterate norm {xn}, update norm {dn}"
        )));
    }
    Ok(target_relative * xn / dn)
}

/// Squared sensitivity of the measurement to the iterate: `sum G^2 w_omega`
/// for the free coefficient, `G_a^2 + G_b^2` for the tanh parameters.
fn sensitivity(iterate: &Iterate, grid: &PhaseGrid, gradient: &[f64]) -> Result<f64> {
    Ok(match iterate {
        Iterate::Free(_) => gradient
            .iter()
            .zip(grid.quad_weights_omega())
            .map(|(g, w)| g * g * w)
            .sum(),
        Iterate::Tanh(p) => {
            let (ga, gb) = p.chain_rule(grid, gradient)?;
            ga * ga + gb * gb
        }
    })
}

/// Step size `c / (2 max_gamma |grad M_gamma|^2)` at the current iterate.
///
/// For a measurement that is linear in the iterate, `c = 1` removes the
/// residual of the most sensitive experiment in one step and any
/// `0 < c < 2` reduces it. Needs one forward solve per injection and one
/// adjoint solve per measurement time.
pub fn normalized_step_size(
    state: &ReconstructionState,
    problem: &InverseProblem<'_>,
    c: f64,
) -> Result<f64> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Precondition(format!(
            "step size factor must be positive, got {c}"
        )));
    }
    let model = problem.model;
    let grid = &model.grid;
    let eta = state.iterate.eta(grid);
    let (fwd, adj) = rayon::join(
        || {
            problem
                .bank
                .phis
                .par_iter()
                .map(|phi| forward_solve(model, &eta, phi, &ForwardOptions::default()))
                .collect::<Result<Vec<_>>>()
        },
        || {
            problem
                .bank
                .psis
                .par_iter()
                .map(|psi| {
                    let boundary = AdjointBoundary::Measurement(psi.clone());
                    adjoint_solve(model, &eta, &boundary, &AdjointOptions::default())
                })
                .collect::<Result<Vec<_>>>()
        },
    );
    let (fwd, adj) = (fwd?, adj?);
    let mut worst: f64 = 0.0;
    for f in &fwd {
        for a in &adj {
            let g = frechet_gradient(model, f, a)?;
            worst = worst.max(sensitivity(&state.iterate, grid, &g)?);
        }
    }
    if !(worst > 0.0) || !worst.is_finite() {
        return Err(Error::Precondition(format!(
            "cannot size the step: largest sensitivity is {worst}"
        )));
    }
    Ok(c / (2.0 * worst))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub max_iters: usize,
    /// Stop once an accepted step moves the iterate by at most this much.
    pub stop_tol: f64,
    /// Iterations after which `eta` is captured.
    pub snapshot_iters: Vec<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            max_iters: 3000,
            stop_tol: 0.0,
            snapshot_iters: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    /// Step attempts made, accepted or not.
    pub attempts: usize,
    pub stopped_on_tolerance: bool,
    pub snapshots: Vec<(usize, ReflectionCoeff)>,
}

/// Repeats [`sgd_step`] until the update falls below `stop_tol` or
/// `max_iters` attempts have been made.
pub fn run_sgd(
    state: &mut ReconstructionState,
    problem: &InverseProblem<'_>,
    opts: &RunOptions,
) -> Result<RunSummary> {
    let grid = &problem.model.grid;
    let mut snapshots = Vec::new();
    if opts.snapshot_iters.contains(&state.iteration) {
        snapshots.push((state.iteration, state.eta(grid)));
    }
    let mut attempts = 0;
    let mut stopped = false;
    while attempts < opts.max_iters {
        attempts += 1;
        let out = sgd_step(state, problem)?;
        if !out.accepted {
            continue;
        }
        if opts.snapshot_iters.contains(&state.iteration) {
            snapshots.push((state.iteration, state.eta(grid)));
        }
        if out.update_norm <= opts.stop_tol {
            stopped = true;
            break;
        }
    }
    Ok(RunSummary {
        attempts,
        stopped_on_tolerance: stopped,
        snapshots,
    })
}
