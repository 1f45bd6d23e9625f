//! End-to-end acceptance checks. Prints one line per criterion and exits
//! nonzero if any fails. Runtime budgets are reported next to each line.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::Result;
use tbr_cli::commands::{cmd_reconstruct, convexity_battery, reference_gradient_error};
use tbr_cli::config::RunConfig;
use tbr_core::oracle::{conservation_probe, equilibrium_probe, selfadjoint_probe, DEFAULT_FD_STEP};
use tbr_core::{
    eta_from_params, generate_dataset, make_bank_paper_default, GridConfig, InverseProblem, Model,
    TanhParams,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn coarse() -> Model {
    Model::from_config(GridConfig::coarse()).expect("coarse model")
}

fn preset_in(name: &str, dir: &Path) -> RunConfig {
    let mut cfg = RunConfig::preset(name).expect("preset");
    cfg.output.dir = dir.join(name);
    cfg
}

fn c1() -> Result<Outcome> {
    let v = conservation_probe(&coarse(), 100, 1);
    outcome(v <= 1e-12, format!("max |<Lg>|/|g|_inf = {v:.3e} (<= 1e-12)"))
}

fn c2() -> Result<Outcome> {
    let v = equilibrium_probe(&coarse())?;
    outcome(v <= 1e-12, format!("max |g(t) - g*|_inf = {v:.3e} (<= 1e-12)"))
}

fn c3() -> Result<Outcome> {
    let v = selfadjoint_probe(&coarse(), 100, 1);
    outcome(v <= 1e-12, format!("max discrepancy = {v:.3e} (<= 1e-12)"))
}

fn c4() -> Result<Outcome> {
    let coarse = reference_gradient_error(GridConfig::coarse(), DEFAULT_FD_STEP)?;
    let fine = reference_gradient_error(GridConfig::coarse().refined(), DEFAULT_FD_STEP)?;
    let ratio = fine / coarse;
    outcome(
        coarse <= 0.02 && ratio <= 0.6,
        format!("coarse rel err {coarse:.3e} (<= 2e-2), fine {fine:.3e}, ratio {ratio:.3} (<= 0.6)"),
    )
}

fn c5() -> Result<Outcome> {
    let r = convexity_battery(&coarse(), 20, 1)?;
    outcome(
        r.pass(1e-10, 1e-12),
        format!(
            "monotone margin {:.3e} (>= -1e-12), convexity margin {:.3e} (>= -1e-10)",
            r.monotone_margin, r.worst_margin
        ),
    )
}

fn c6(dir: &Path) -> Result<Outcome> {
    let s = cmd_reconstruct(&preset_in("example1", dir))?;
    let mut pass = true;
    let mut parts = Vec::new();
    for r in &s.runs {
        let (a, b) = (r.final_a.unwrap(), r.final_b.unwrap());
        let ratio = r.error_history.last().unwrap() / r.error_history[0];
        pass &= (a - 1.5).abs() <= 0.05 && (b - 1.0).abs() <= 0.05 && ratio <= 0.1 && r.iterations <= 3000;
        parts.push(format!("(a,b)=({a:.4},{b:.4}) err ratio {ratio:.1e}"));
    }
    outcome(pass, parts.join("; "))
}

/// `|e_end - e_{end-500}| / e_{end-500}`.
fn saturation(errors: &[f64]) -> f64 {
    let end = errors.len() - 1;
    let before = errors[end.saturating_sub(500)];
    (errors[end] - before).abs() / before
}

fn c7(dir: &Path) -> Result<Outcome> {
    let s = cmd_reconstruct(&preset_in("example2", dir))?;
    let e = &s.runs[0].error_history;
    let (flat, ratio) = (saturation(e), e.last().unwrap() / e[0]);
    outcome(
        flat <= 0.05 && ratio <= 0.2,
        format!("last-500 change {flat:.3} (<= 0.05), final/initial {ratio:.3} (<= 0.2)"),
    )
}

fn c8(dir: &Path) -> Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for seed in 1..=3u64 {
        let mut cfg = preset_in("example3", dir);
        cfg.experiment.seed = seed;
        cfg.inversion.seed = seed;
        let s = cmd_reconstruct(&cfg)?;
        let e = &s.runs[0].error_history;
        let ratio = e.last().unwrap() / e[0];
        pass &= ratio <= 0.5;
        parts.push(format!("seed {seed}: {ratio:.3}"));
    }
    outcome(pass, format!("final/initial (<= 0.5) {}", parts.join(", ")))
}

fn c9() -> Result<Outcome> {
    let cfg = RunConfig::preset("example1")?;
    let model = coarse();
    let e = &cfg.experiment;
    let bank = make_bank_paper_default(&model.grid, model.grid.nomega(), e.measurements, (e.window[0], e.window[1]), e.seed)?;
    let truth = eta_from_params(TanhParams::REFERENCE, &model.grid);
    let ds = generate_dataset(&model, &bank, &truth, e.noise, e.noise_model.into(), e.seed)?;
    let problem = InverseProblem::new(&model, &bank, &ds)?;
    let mesh: Vec<(f64, f64)> = (0..=10)
        .flat_map(|i| (0..=10).map(move |j| (1.0 + 0.1 * i as f64, 0.5 + 0.1 * j as f64)))
        .collect();
    let etas: Vec<_> = mesh.iter().map(|&(a, b)| eta_from_params(TanhParams::new(a, b), &model.grid)).collect();
    let losses = problem.loss_many(&etas)?;
    let (k, best) = losses
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, &l)| if l < acc.1 { (k, l) } else { acc });
    let (a, b) = mesh[k];
    let exact = (a - 1.5).abs() < 1e-9 && (b - 1.0).abs() < 1e-9;
    outcome(exact, format!("argmin (a,b) = ({a:.1}, {b:.1}), loss {best:.3e} over {} points", mesh.len()))
}

fn csv_bodies(dir: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|x| x == "csv") {
            files.push((path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path)?));
        }
    }
    files.sort();
    Ok(files)
}

fn c10(dir: &Path) -> Result<Outcome> {
    let mut cfg = RunConfig::preset("example3")?;
    cfg.inversion.max_iters = 200;
    cfg.inversion.snapshot_iters = vec![100, 200];
    let mut runs = Vec::new();
    for name in ["det_a", "det_b"] {
        cfg.output.dir = dir.join(name);
        cmd_reconstruct(&cfg)?;
        runs.push(csv_bodies(&cfg.output.dir)?);
    }
    let same = runs[0] == runs[1] && !runs[0].is_empty();
    outcome(same, format!("{} CSV files compared byte for byte", runs[0].len()))
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temp dir");
    let dir = dir.path();
    type Check<'a> = Box<dyn Fn() -> Result<Outcome> + 'a>;
    let checks: Vec<(&str, Duration, Check)> = vec![
        ("1 conservation", Duration::from_secs(1), Box::new(c1)),
        ("2 equilibrium", Duration::from_secs(5), Box::new(c2)),
        ("3 self-adjointness", Duration::from_secs(1), Box::new(c3)),
        ("4 gradient vs finite differences", Duration::from_secs(600), Box::new(c4)),
        ("5 monotonicity and convexity", Duration::from_secs(300), Box::new(c5)),
        ("6 example I", Duration::from_secs(1800), Box::new(|| c6(dir))),
        ("7 example II", Duration::from_secs(2700), Box::new(|| c7(dir))),
        ("8 example III, 3 seeds", Duration::from_secs(2700), Box::new(|| c8(dir))),
        ("9 loss landscape", Duration::from_secs(1200), Box::new(c9)),
        ("10 determinism", Duration::from_secs(60), Box::new(|| c10(dir))),
    ];
    let mut failures = 0;
    for (name, budget, check) in &checks {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let in_time = took <= *budget;
        let (pass, detail) = match result {
            Ok(o) => (o.pass && in_time, o.detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "{} criterion {name}: {detail} [{:.2} s, budget {} s{}]",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }
    println!("acceptance: {} of {} criteria passed", checks.len() - failures, checks.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
