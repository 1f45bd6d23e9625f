//! Run configuration: one TOML file with a block per concern.
//!
//! Every block is optional and falls back to the defaults below. Unknown
//! keys are rejected. See `presets/` for complete examples.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tbr_core::{GridConfig, NoiseKind, PhaseGrid, ReflectionCoeff, TanhParams};

/// Invalid or unreadable configuration. Maps to exit code 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn invalid(path: &str, msg: impl fmt::Display) -> ConfigError {
    ConfigError(format!("{path}: {msg}"))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default)]
    pub experiment: ExperimentBlock,
    #[serde(default)]
    pub forward: ForwardBlock,
    #[serde(default)]
    pub adjoint: AdjointBlock,
    #[serde(default)]
    pub inversion: InversionBlock,
    #[serde(default)]
    pub verify: VerifyBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridBase {
    #[default]
    Coarse,
    Paper,
}

/// Base grid plus optional overrides of individual extents and spacings.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    #[serde(default)]
    pub base: GridBase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dmu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domega: Option<f64>,
}

impl GridBlock {
    pub fn config(&self) -> GridConfig {
        let base = match self.base {
            GridBase::Coarse => GridConfig::coarse(),
            GridBase::Paper => GridConfig::paper(),
        };
        GridConfig {
            x_max: self.x_max.unwrap_or(base.x_max),
            t_max: self.t_max.unwrap_or(base.t_max),
            omega_min: self.omega_min.unwrap_or(base.omega_min),
            omega_max: self.omega_max.unwrap_or(base.omega_max),
            dx: self.dx.unwrap_or(base.dx),
            dt: self.dt.unwrap_or(base.dt),
            dmu: self.dmu.unwrap_or(base.dmu),
            domega: self.domega.unwrap_or(base.domega),
        }
    }
}

/// Reflection coefficient given either as tanh parameters, a constant, or
/// explicit nodal values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EtaSpec {
    Params { a: f64, b: f64 },
    Constant { value: f64 },
    Values { values: Vec<f64> },
}

impl Default for EtaSpec {
    fn default() -> Self {
        EtaSpec::Params { a: 1.5, b: 1.0 }
    }
}

impl EtaSpec {
    pub fn build(&self, grid: &PhaseGrid, path: &str) -> Result<ReflectionCoeff, ConfigError> {
        match self {
            EtaSpec::Params { a, b } => {
                if !a.is_finite() || !b.is_finite() {
                    return Err(invalid(path, "tanh parameters must be finite"));
                }
                Ok(tbr_core::eta_from_params(TanhParams::new(*a, *b), grid))
            }
            EtaSpec::Constant { value } => {
                ReflectionCoeff::constant(grid, *value).map_err(|e| invalid(path, e))
            }
            EtaSpec::Values { values } => {
                if values.len() != grid.nomega() {
                    return Err(invalid(
                        path,
                        format!("expected {} values, found {}", grid.nomega(), values.len()),
                    ));
                }
                ReflectionCoeff::new(values.clone()).map_err(|e| invalid(path, e))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseModel {
    #[default]
    Multiplicative,
    Additive,
}

impl From<NoiseModel> for NoiseKind {
    fn from(m: NoiseModel) -> Self {
        match m {
            NoiseModel::Multiplicative => NoiseKind::Multiplicative,
            NoiseModel::Additive => NoiseKind::Additive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    /// Number of injections `I`; `0` uses every frequency node.
    #[serde(default)]
    pub injections: usize,
    #[serde(default = "one")]
    pub measurements: usize,
    #[serde(default = "default_window")]
    pub window: [f64; 2],
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub noise_model: NoiseModel,
    /// Seed for measurement times and noise.
    #[serde(default)]
    pub seed: u64,
    /// Coefficient that generates synthetic data.
    #[serde(default)]
    pub truth: EtaSpec,
    /// Dataset file to load instead of generating one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
}

fn one() -> usize {
    1
}

fn default_window() -> [f64; 2] {
    [4.5, 5.0]
}

impl Default for ExperimentBlock {
    fn default() -> Self {
        Self {
            injections: 0,
            measurements: 1,
            window: default_window(),
            noise: 0.0,
            noise_model: NoiseModel::default(),
            seed: 0,
            truth: EtaSpec::default(),
            dataset: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InjectionKind {
    /// `1` at one frequency node for every `mu > 0`.
    #[default]
    Kronecker,
    /// `1` at every node.
    Flat,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardBlock {
    #[serde(default)]
    pub injection: InjectionKind,
    #[serde(default = "default_injection_omega")]
    pub injection_omega: f64,
    #[serde(default)]
    pub eta: EtaSpec,
    /// Times at which the field is written out.
    #[serde(default)]
    pub snapshots: Vec<f64>,
}

fn default_injection_omega() -> f64 {
    1.5
}

impl Default for ForwardBlock {
    fn default() -> Self {
        Self {
            injection: InjectionKind::default(),
            injection_omega: default_injection_omega(),
            eta: EtaSpec::default(),
            snapshots: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjointKind {
    /// Gradient datum `psi(t) g* / mu` with `psi` a delta at `measure_time`.
    #[default]
    Measurement,
    /// Terminal pulse used to illustrate backward propagation.
    Demo,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjointBlock {
    #[serde(default)]
    pub boundary: AdjointKind,
    /// Measurement time; defaults to `t_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure_time: Option<f64>,
    #[serde(default)]
    pub snapshots: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mollify_width: Option<f64>,
    #[serde(default)]
    pub eta: EtaSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InversionMode {
    #[default]
    Free,
    Parametrized,
}

/// How the constant step size is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase", deny_unknown_fields)]
pub enum StepRule {
    /// `factor / (2 max_gamma |grad M_gamma|^2)` at the initial guess.
    Normalized { factor: f64 },
    /// First step changes the iterate by `target` of its norm.
    Relative { target: f64 },
    Constant { alpha: f64 },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Normalized { factor: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionBlock {
    #[serde(default)]
    pub mode: InversionMode,
    /// One SGD run per entry.
    #[serde(default = "default_initial")]
    pub initial: Vec<EtaSpec>,
    #[serde(default)]
    pub step: StepRule,
    /// Turns the constant step into `alpha / (1 + n / decay_n0)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay_n0: Option<f64>,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub stop_tol: f64,
    #[serde(default = "one_u64")]
    pub seed: u64,
    /// Iterations at which `eta` is written out.
    #[serde(default)]
    pub snapshot_iters: Vec<usize>,
}

fn default_initial() -> Vec<EtaSpec> {
    vec![EtaSpec::Constant { value: 0.5 }]
}

fn default_max_iters() -> usize {
    3000
}

fn one_u64() -> u64 {
    1
}

impl Default for InversionBlock {
    fn default() -> Self {
        Self {
            mode: InversionMode::default(),
            initial: default_initial(),
            step: StepRule::default(),
            decay_n0: None,
            max_iters: default_max_iters(),
            stop_tol: 0.0,
            seed: 1,
            snapshot_iters: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBlock {
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    /// Random trials for the collision operator probes.
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Ordered coefficient pairs for the monotonicity / convexity sweep.
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    /// Also compare against a once-refined grid.
    #[serde(default = "yes")]
    pub refine: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_fd_step() -> f64 {
    tbr_core::oracle::DEFAULT_FD_STEP
}

fn default_trials() -> usize {
    100
}

fn default_pairs() -> usize {
    20
}

fn yes() -> bool {
    true
}

impl Default for VerifyBlock {
    fn default() -> Self {
        Self {
            fd_step: default_fd_step(),
            trials: default_trials(),
            pairs: default_pairs(),
            refine: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: default_out() }
    }
}

pub const PRESETS: &[(&str, &str)] = &[
    ("fig3", include_str!("../presets/fig3.toml")),
    ("fig5", include_str!("../presets/fig5.toml")),
    ("example1", include_str!("../presets/example1.toml")),
    ("example2", include_str!("../presets/example2.toml")),
    ("example3", include_str!("../presets/example3.toml")),
];

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(format!("invalid config: {}", e.message().trim())).with_span(text, e.span()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            ConfigError(format!("unknown preset `{name}`; available: {}", names.join(", ")))
        })?;
        Self::from_toml(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks everything that can be checked without solving.
    pub fn validate(&self) -> Result<PhaseGrid, ConfigError> {
        let grid = PhaseGrid::new(self.grid.config()).map_err(|e| invalid("grid", e))?;
        let e = &self.experiment;
        if e.injections > grid.nomega() {
            return Err(invalid(
                "experiment.injections",
                format!("{} exceeds the {} frequency nodes", e.injections, grid.nomega()),
            ));
        }
        if e.measurements == 0 {
            return Err(invalid("experiment.measurements", "must be at least 1"));
        }
        let t_max = grid.config().t_max;
        if !(e.window[0] <= e.window[1]) || e.window[0] < 0.0 || e.window[1] > t_max + 1e-12 {
            return Err(invalid("experiment.window", format!("must be an interval inside [0, {t_max}]")));
        }
        if !(e.noise >= 0.0) || !e.noise.is_finite() {
            return Err(invalid("experiment.noise", "must be finite and non-negative"));
        }
        e.truth.build(&grid, "experiment.truth")?;

        let f = &self.forward;
        if f.injection == InjectionKind::Kronecker {
            tbr_core::BoundarySource::kronecker(&grid, f.injection_omega)
                .map_err(|e| invalid("forward.injection_omega", e))?;
        }
        f.eta.build(&grid, "forward.eta")?;
        check_times(&f.snapshots, t_max, "forward.snapshots")?;

        let a = &self.adjoint;
        a.eta.build(&grid, "adjoint.eta")?;
        check_times(&a.snapshots, t_max, "adjoint.snapshots")?;
        if let Some(t) = a.measure_time {
            check_times(&[t], t_max, "adjoint.measure_time")?;
        }
        if let Some(w) = a.mollify_width {
            if !(w > 0.0) {
                return Err(invalid("adjoint.mollify_width", "must be positive"));
            }
        }

        let inv = &self.inversion;
        if inv.initial.is_empty() {
            return Err(invalid("inversion.initial", "needs at least one initial guess"));
        }
        for (k, init) in inv.initial.iter().enumerate() {
            let path = format!("inversion.initial[{k}]");
            match (inv.mode, init) {
                (InversionMode::Parametrized, EtaSpec::Params { .. }) => {}
                (InversionMode::Parametrized, _) => {
                    return Err(invalid(&path, "parametrized mode needs kind = \"params\""))
                }
                _ => {}
            }
            init.build(&grid, &path)?;
        }
        let step_ok = match inv.step {
            StepRule::Normalized { factor } => factor > 0.0 && factor.is_finite(),
            StepRule::Relative { target } => target > 0.0 && target.is_finite(),
            StepRule::Constant { alpha } => alpha > 0.0 && alpha.is_finite(),
        };
        if !step_ok {
            return Err(invalid("inversion.step", "step parameter must be positive and finite"));
        }
        if let Some(n0) = inv.decay_n0 {
            if !(n0 > 0.0) || !n0.is_finite() {
                return Err(invalid("inversion.decay_n0", "must be positive"));
            }
        }
        if !(inv.stop_tol >= 0.0) {
            return Err(invalid("inversion.stop_tol", "must be non-negative"));
        }
        if !(self.verify.fd_step > 0.0 && self.verify.fd_step < 0.5) {
            return Err(invalid("verify.fd_step", "must lie in (0, 0.5)"));
        }
        Ok(grid)
    }
}

trait WithSpan {
    fn with_span(self, text: &str, span: Option<std::ops::Range<usize>>) -> Self;
}

impl WithSpan for ConfigError {
    fn with_span(self, text: &str, span: Option<std::ops::Range<usize>>) -> Self {
        match span {
            Some(r) => {
                let line = text[..r.start.min(text.len())].lines().count().max(1);
                ConfigError(format!("{} (line {line})", self.0))
            }
            None => self,
        }
    }
}

fn check_times(times: &[f64], t_max: f64, path: &str) -> Result<(), ConfigError> {
    match times.iter().find(|t| !(0.0..=t_max + 1e-12).contains(*t)) {
        Some(t) => Err(invalid(path, format!("time {t} outside [0, {t_max}]"))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_validate_and_round_trip() {
        for (name, _) in PRESETS {
            let cfg = RunConfig::preset(name).unwrap();
            cfg.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
            let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
            assert_eq!(back, cfg, "{name}");
        }
        assert!(RunConfig::preset("nope").is_err());
    }

    #[test]
    fn empty_file_is_all_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let grid = cfg.validate().unwrap();
        assert_eq!(grid.nomega(), 20);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml("[grid]\nbase = \"coarse\"\nnx = 4\n").unwrap_err();
        assert!(err.0.contains("nx"), "{err}");
        assert!(RunConfig::from_toml("[nonsense]\n").is_err());
        assert!(RunConfig::from_toml("[inversion]\nstep = { rule = \"normalized\", factor = 1.0, x = 2 }\n").is_err());
    }

    #[test]
    fn validation_names_the_field() {
        let mut cfg = RunConfig::default();
        cfg.experiment.injections = 99;
        assert!(cfg.validate().unwrap_err().0.starts_with("experiment.injections"));

        let mut cfg = RunConfig::default();
        cfg.grid.dt = Some(0.1);
        assert!(cfg.validate().unwrap_err().0.starts_with("grid"));

        let mut cfg = RunConfig::default();
        cfg.inversion.mode = InversionMode::Parametrized;
        assert!(cfg.validate().unwrap_err().0.starts_with("inversion.initial[0]"));

        let mut cfg = RunConfig::default();
        cfg.forward.injection_omega = 1.55;
        assert!(cfg.validate().unwrap_err().0.starts_with("forward.injection_omega"));

        let mut cfg = RunConfig::default();
        cfg.forward.snapshots = vec![7.0];
        assert!(cfg.validate().unwrap_err().0.starts_with("forward.snapshots"));
    }
}
