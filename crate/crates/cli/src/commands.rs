use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use tbr_core::oracle::{self, ConvexityReport};
use tbr_core::{
    adjoint_solve, auto_step_size, frechet_gradient, generate_dataset, make_bank_paper_default,
    max_principle_check, normalized_step_size, run_sgd, AdjointBoundary, AdjointOptions, BoundarySource,
    Dataset, ExperimentBank, ForwardOptions, GridConfig, InverseProblem, Iterate, MeasurementFunctional,
    Model, ReconstructionState, ReflectionCoeff, RunOptions, StepSchedule, TanhParams,
};

use crate::config::{AdjointKind, ConfigError, EtaSpec, InjectionKind, InversionMode, RunConfig, StepRule};
use crate::output::{num, write_csv, write_metadata, write_series, write_snapshot, Metadata};

fn prepare(config: &RunConfig) -> Result<(Model, PathBuf)> {
    let grid = config.validate()?;
    let model = Model::new(grid).context("building the Maxwellian tables")?;
    let dir = config.output.dir.clone();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok((model, dir))
}

fn metadata<E: Serialize>(command: &str, config: &RunConfig, start: Instant, results: E) -> Metadata<E> {
    Metadata {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed_data: config.experiment.seed,
        seed_sgd: config.inversion.seed,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        results,
        config: config.clone(),
    }
}

fn injection(config: &RunConfig, model: &Model) -> Result<BoundarySource> {
    let grid = &model.grid;
    Ok(match config.forward.injection {
        InjectionKind::Kronecker => BoundarySource::kronecker(grid, config.forward.injection_omega)?,
        InjectionKind::Flat => BoundarySource::from_omega_profile(grid, &vec![1.0; grid.nomega()])?,
        InjectionKind::Zero => BoundarySource::zero(grid),
    })
}

fn time_steps(model: &Model, times: &[f64]) -> Vec<(f64, usize)> {
    times.iter().map(|&t| (t, model.grid.nearest_time_index(t))).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ForwardSummary {
    /// `|g|_inf / |phi|_inf`; absent for zero inflow.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_ratio: Option<f64>,
    pub min_value: f64,
    pub final_delta_t: f64,
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

pub fn cmd_forward(config: &RunConfig) -> Result<ForwardSummary> {
    let start = Instant::now();
    let (model, dir) = prepare(config)?;
    let grid = &model.grid;
    let eta = config.forward.eta.build(grid, "forward.eta")?;
    let phi = injection(config, &model)?;
    let snaps = time_steps(&model, &config.forward.snapshots);
    let opts = ForwardOptions {
        snapshot_steps: snaps.iter().map(|s| s.1).collect(),
        ..Default::default()
    };
    let sol = tbr_core::forward_solve(&model, &eta, &phi, &opts).context("forward solve")?;

    let mut files = vec![write_series(
        &dir.join("deltaT.csv"),
        ["t", "deltaT"],
        grid.t_nodes(),
        &sol.surface_delta_t,
    )?];
    for (t, n) in &snaps {
        if let Some((_, field)) = sol.snapshots.iter().find(|(m, _)| m == n) {
            files.extend(write_snapshot(&dir, "forward", *t, grid, field)?);
        }
    }
    let report = max_principle_check(&sol, &phi, f64::INFINITY, 0.0);
    let summary = ForwardSummary {
        max_ratio: report.ratio,
        min_value: sol.min_value,
        final_delta_t: *sol.surface_delta_t.last().unwrap_or(&0.0),
        files,
    };
    write_metadata(&dir, &metadata("forward", config, start, &summary))?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct AdjointSummary {
    pub interface_peak: f64,
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

pub fn cmd_adjoint(config: &RunConfig) -> Result<AdjointSummary> {
    let start = Instant::now();
    let (model, dir) = prepare(config)?;
    let grid = &model.grid;
    let a = &config.adjoint;
    let eta = a.eta.build(grid, "adjoint.eta")?;
    let psi = MeasurementFunctional::kronecker(grid, a.measure_time.unwrap_or(grid.config().t_max));
    let boundary = match a.boundary {
        AdjointKind::Measurement => AdjointBoundary::Measurement(psi.clone()),
        AdjointKind::Demo => AdjointBoundary::Demo,
    };
    let snaps = time_steps(&model, &a.snapshots);
    let opts = AdjointOptions {
        store_trajectory: false,
        snapshot_steps: snaps.iter().map(|s| s.1).collect(),
        mollify_width: a.mollify_width,
    };
    let adj = adjoint_solve(&model, &eta, &boundary, &opts).context("adjoint solve")?;

    // Frequency-weighted moment of h over mu < 0 at the interface.
    let half = grid.nmu_half();
    let nw = grid.nomega();
    let moments: Vec<f64> = (0..=grid.nt())
        .map(|n| {
            let slice = adj.interface_at(n);
            (0..half)
                .map(|k| {
                    let row: f64 = (0..nw)
                        .map(|l| grid.omega_nodes()[l] * grid.quad_weights_omega()[l] * slice[k * nw + l])
                        .sum();
                    row * grid.quad_weights_mu()[k]
                })
                .sum()
        })
        .collect();
    let mut files = vec![write_series(&dir.join("interface.csv"), ["t", "h_moment"], grid.t_nodes(), &moments)?];
    for (t, n) in &snaps {
        if let Some((_, field)) = adj.snapshots.iter().find(|(m, _)| m == n) {
            files.extend(write_snapshot(&dir, "adjoint", *t, grid, field)?);
        }
    }
    if a.boundary == AdjointKind::Measurement {
        let phi = injection(config, &model)?;
        let fwd = tbr_core::forward_solve(&model, &eta, &phi, &ForwardOptions::default())?;
        let grad = frechet_gradient(&model, &fwd, &adj)?;
        files.push(write_series(&dir.join("gradient.csv"), ["omega", "gradient"], grid.omega_nodes(), &grad)?);
    }
    let summary = AdjointSummary {
        interface_peak: moments.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        files,
    };
    write_metadata(&dir, &metadata("adjoint", config, start, &summary))?;
    Ok(summary)
}

fn bank(config: &RunConfig, model: &Model) -> Result<ExperimentBank> {
    let e = &config.experiment;
    let injections = if e.injections == 0 { model.grid.nomega() } else { e.injections };
    Ok(make_bank_paper_default(
        &model.grid,
        injections,
        e.measurements,
        (e.window[0], e.window[1]),
        e.seed,
    )?)
}

fn synthesize(config: &RunConfig, model: &Model, bank: &ExperimentBank) -> Result<Dataset> {
    let e = &config.experiment;
    let truth = e.truth.build(&model.grid, "experiment.truth")?;
    generate_dataset(model, bank, &truth, e.noise, e.noise_model.into(), e.seed).context("generating synthetic data")
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerateSummary {
    pub dataset_hash: String,
    pub injections: usize,
    pub measurements: usize,
    #[serde(skip)]
    pub path: PathBuf,
}

pub fn cmd_generate(config: &RunConfig) -> Result<GenerateSummary> {
    let start = Instant::now();
    let (model, dir) = prepare(config)?;
    let bank = bank(config, &model)?;
    let ds = synthesize(config, &model, &bank)?;
    let path = dir.join("dataset.txt");
    ds.save(&path).with_context(|| format!("writing {}", path.display()))?;
    write_series(
        &dir.join("measurement_times.csv"),
        ["j", "t"],
        &(1..=bank.measurements()).map(|j| j as f64).collect::<Vec<_>>(),
        &bank.measurement_nodes.iter().map(|&n| model.grid.t_nodes()[n]).collect::<Vec<_>>(),
    )?;
    let summary = GenerateSummary {
        dataset_hash: ds.hash(),
        injections: ds.injections(),
        measurements: ds.measurements(),
        path,
    };
    write_metadata(&dir, &metadata("generate", config, start, &summary))?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub alpha: f64,
    pub iterations: usize,
    pub attempts: usize,
    pub rejected: usize,
    pub stopped_on_tolerance: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_b: Option<f64>,
    #[serde(skip)]
    pub error_history: Vec<f64>,
    #[serde(skip)]
    pub loss_history: Vec<f64>,
    #[serde(skip)]
    pub final_eta: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReconstructSummary {
    pub dataset_hash: String,
    pub runs: Vec<RunReport>,
}

fn iterate_from(spec: &EtaSpec, mode: InversionMode, model: &Model) -> Result<Iterate> {
    Ok(match (mode, spec) {
        (InversionMode::Parametrized, EtaSpec::Params { a, b }) => Iterate::Tanh(TanhParams::new(*a, *b)),
        (InversionMode::Parametrized, _) => {
            return Err(ConfigError("inversion.initial: parametrized mode needs kind = \"params\"".into()).into())
        }
        (InversionMode::Free, spec) => Iterate::Free(spec.build(&model.grid, "inversion.initial")?),
    })
}

pub fn cmd_reconstruct(config: &RunConfig) -> Result<ReconstructSummary> {
    let start = Instant::now();
    let (model, dir) = prepare(config)?;
    let grid = &model.grid;
    let bank = bank(config, &model)?;
    let ds = match &config.experiment.dataset {
        Some(path) => {
            if !path.exists() {
                return Err(ConfigError(format!("experiment.dataset: {} not found", path.display())).into());
            }
            Dataset::load(path).with_context(|| format!("loading {}", path.display()))?
        }
        None => synthesize(config, &model, &bank)?,
    };
    let problem = InverseProblem::new(&model, &bank, &ds)
        .map_err(|e| ConfigError(format!("experiment: {e}")))?;
    let reference = ds.generator().map(<[f64]>::to_vec);
    let inv = &config.inversion;

    let mut runs = Vec::new();
    for (k, spec) in inv.initial.iter().enumerate() {
        let iterate = iterate_from(spec, inv.mode, &model)?;
        let mut state = ReconstructionState::new(
            grid,
            iterate,
            StepSchedule::Constant(1.0),
            inv.seed,
            reference.clone(),
        )?;
        let alpha = match inv.step {
            StepRule::Normalized { factor } => normalized_step_size(&state, &problem, factor)?,
            StepRule::Relative { target } => auto_step_size(&state, &problem, target)?,
            StepRule::Constant { alpha } => alpha,
        };
        let schedule = match inv.decay_n0 {
            Some(n0) => StepSchedule::Decay { alpha0: alpha, n0 },
            None => StepSchedule::Constant(alpha),
        };
        state.set_schedule(schedule)?;
        let opts = RunOptions {
            max_iters: inv.max_iters,
            stop_tol: inv.stop_tol,
            snapshot_iters: inv.snapshot_iters.clone(),
        };
        let summary = run_sgd(&mut state, &problem, &opts).context("SGD run")?;

        let errors = state.error_history();
        let losses = state.loss_history();
        let params = state.param_history();
        let mut header = vec!["n", "loss_sample"];
        if !errors.is_empty() {
            header.push("error");
        }
        if !params.is_empty() {
            header.extend(["a", "b"]);
        }
        let rows: Vec<Vec<String>> = (0..=state.iteration())
            .map(|n| {
                let mut row = vec![n.to_string(), if n == 0 { String::new() } else { num(losses[n - 1]) }];
                if let Some(e) = errors.get(n) {
                    row.push(num(*e));
                }
                if let Some(p) = params.get(n) {
                    row.extend([num(p.a), num(p.b)]);
                }
                row
            })
            .collect();
        write_csv(&dir.join(format!("run{k}_history.csv")), &header, &rows)?;

        let final_eta = state.eta(grid);
        write_eta(&dir.join(format!("run{k}_eta_final.csv")), grid.omega_nodes(), &final_eta, reference.as_deref())?;
        for (n, eta) in &summary.snapshots {
            write_eta(&dir.join(format!("run{k}_eta_n{n}.csv")), grid.omega_nodes(), eta, reference.as_deref())?;
        }
        let last = params.last();
        runs.push(RunReport {
            alpha,
            iterations: state.iteration(),
            attempts: summary.attempts,
            rejected: state.rejected_steps(),
            stopped_on_tolerance: summary.stopped_on_tolerance,
            final_error: errors.last().copied(),
            final_a: last.map(|p| p.a),
            final_b: last.map(|p| p.b),
            error_history: errors.to_vec(),
            loss_history: losses.to_vec(),
            final_eta: final_eta.into_inner(),
        });
    }
    let summary = ReconstructSummary {
        dataset_hash: ds.hash(),
        runs,
    };
    write_metadata(&dir, &metadata("reconstruct", config, start, &summary))?;
    Ok(summary)
}

fn write_eta(path: &Path, omega: &[f64], eta: &ReflectionCoeff, reference: Option<&[f64]>) -> Result<PathBuf> {
    let mut header = vec!["omega", "eta"];
    if reference.is_some() {
        header.push("eta_ref");
    }
    let rows: Vec<Vec<String>> = omega
        .iter()
        .zip(eta.values())
        .enumerate()
        .map(|(l, (w, v))| {
            let mut row = vec![num(*w), num(*v)];
            if let Some(r) = reference {
                row.push(num(r[l]));
            }
            row
        })
        .collect();
    write_csv(path, &header, &rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct Probe {
    pub name: String,
    pub value: f64,
    /// `<=` for upper bounds, `>=` for lower bounds.
    pub relation: String,
    pub threshold: f64,
    pub pass: bool,
}

impl Probe {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: "<=".into(),
            threshold,
            pass: value <= threshold,
        }
    }

    fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: ">=".into(),
            threshold,
            pass: value >= threshold,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifySummary {
    pub probes: Vec<Probe>,
}

impl VerifySummary {
    pub fn all_pass(&self) -> bool {
        self.probes.iter().all(|p| p.pass)
    }
}

/// Gradient check of the reference experiment: Kronecker injection at
/// `omega = 1.5`, measurement at `t_max`, truth coefficient.
pub fn reference_gradient_error(config: GridConfig, h: f64) -> Result<f64> {
    let model = Model::from_config(config)?;
    let eta = tbr_core::eta_from_params(TanhParams::REFERENCE, &model.grid);
    let phi = BoundarySource::kronecker(&model.grid, 1.5)?;
    let psi = MeasurementFunctional::kronecker(&model.grid, config.t_max);
    Ok(oracle::gradient_check(&model, &eta, &phi, &psi, h)?.relative_error)
}

/// Worst margins over seeded ordered pairs and `alpha = 0.1, ..., 0.9`.
pub fn convexity_battery(model: &Model, pairs: usize, seed: u64) -> Result<ConvexityReport> {
    use rand_free::uniform_pairs;
    let alphas: Vec<f64> = (1..10).map(|k| k as f64 / 10.0).collect();
    let mut worst = ConvexityReport {
        worst_margin: f64::INFINITY,
        monotone_margin: f64::INFINITY,
    };
    for (p, (hi, lo, l)) in uniform_pairs(model.grid.nomega(), pairs, seed).into_iter().enumerate() {
        let phi = BoundarySource::kronecker_at_index(&model.grid, l);
        let r = oracle::convexity_sweep(
            model,
            &phi,
            &ReflectionCoeff::new(hi)?,
            &ReflectionCoeff::new(lo)?,
            &alphas,
        )
        .with_context(|| format!("convexity pair {p}"))?;
        worst.worst_margin = worst.worst_margin.min(r.worst_margin);
        worst.monotone_margin = worst.monotone_margin.min(r.monotone_margin);
    }
    Ok(worst)
}

/// Deterministic ordered pairs without pulling a random number crate into
/// the CLI: a SplitMix64 stream is plenty for test inputs.
mod rand_free {
    fn splitmix(state: &mut u64) -> f64 {
        *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = *state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn uniform_pairs(n: usize, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>, usize)> {
        let mut s = seed;
        (0..count)
            .map(|_| {
                let (hi, lo) = (0..n)
                    .map(|_| {
                        let (x, y) = (splitmix(&mut s), splitmix(&mut s));
                        (x.max(y), x.min(y))
                    })
                    .unzip();
                let l = ((splitmix(&mut s) * n as f64) as usize).min(n - 1);
                (hi, lo, l)
            })
            .collect()
    }
}

pub fn cmd_verify(config: &RunConfig) -> Result<VerifySummary> {
    let start = Instant::now();
    let (model, dir) = prepare(config)?;
    let v = &config.verify;
    let mut probes = vec![
        Probe::at_most("conservation", oracle::conservation_probe(&model, v.trials, v.seed), 1e-12),
        Probe::at_most("equilibrium", oracle::equilibrium_probe(&model)?, 1e-12),
        Probe::at_most("self_adjoint", oracle::selfadjoint_probe(&model, v.trials, v.seed), 1e-12),
    ];
    let coarse_err = reference_gradient_error(*model.grid.config(), v.fd_step)?;
    probes.push(Probe::at_most("gradient_vs_fd", coarse_err, 0.02));
    if v.refine {
        let fine_err = reference_gradient_error(model.grid.config().refined(), v.fd_step)?;
        let ratio = if coarse_err > 0.0 { fine_err / coarse_err } else { 0.0 };
        probes.push(Probe::at_most("gradient_refinement_ratio", ratio, 0.6));
    }
    let conv = convexity_battery(&model, v.pairs, v.seed)?;
    probes.push(Probe::at_least("monotonicity_margin", conv.monotone_margin, -1e-12));
    probes.push(Probe::at_least("convexity_margin", conv.worst_margin, -1e-10));
    let eta = tbr_core::eta_from_params(TanhParams::REFERENCE, &model.grid);
    let phi = BoundarySource::kronecker(&model.grid, 1.5)?;
    let sol = tbr_core::forward_solve(&model, &eta, &phi, &ForwardOptions::default())?;
    probes.push(Probe::at_least("positivity_min", sol.min_value, 0.0));

    let rows: Vec<Vec<String>> = probes
        .iter()
        .map(|p| {
            vec![
                p.name.clone(),
                num(p.value),
                p.relation.clone(),
                num(p.threshold),
                if p.pass { "pass" } else { "fail" }.into(),
            ]
        })
        .collect();
    write_csv(&dir.join("verify.csv"), &["probe", "value", "relation", "threshold", "result"], &rows)?;
    let summary = VerifySummary { probes };
    write_metadata(&dir, &metadata("verify", config, start, &summary))?;
    Ok(summary)
}
