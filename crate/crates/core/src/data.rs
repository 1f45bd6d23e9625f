//! Synthetic experiments and datasets.
//!
//! An [`ExperimentBank`] holds the injection profiles `phi_i` and the
//! measurement functionals `psi_j`; a [`Dataset`] holds the values `d_ij`
//! together with how they were produced. Datasets persist as plain text:
//!
//! ```text
//! # I=40
//! # J=1
//! # noise=multiplicative:0.025
//! # seed=7
//! # schema=1
//! 1,1,1.2345678901234567e-2
//! ...
//! ```
//!
//! with an optional `# eta=v1;v2;...` line recording the generating
//! coefficient. Rows are `i,j,d_ij` (1-based) in row-major order and floats
//! carry 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::adjoint::MeasurementFunctional;
use crate::error::{Error, Result};
use crate::grid::PhaseGrid;
use crate::inverse::ReflectionCoeff;
use crate::model::Model;
use crate::transport::{forward_solve, BoundarySource, ForwardOptions};

pub const SCHEMA_VERSION: u32 = 1;

/// Injection profiles and measurement functionals of a set of experiments.
#[derive(Debug, Clone)]
pub struct ExperimentBank {
    pub phis: Vec<BoundarySource>,
    pub psis: Vec<MeasurementFunctional>,
    /// Frequency node of each Kronecker injection.
    pub injection_nodes: Vec<usize>,
    /// Time node of each Kronecker measurement.
    pub measurement_nodes: Vec<usize>,
}

impl ExperimentBank {
    pub fn injections(&self) -> usize {
        self.phis.len()
    }

    pub fn measurements(&self) -> usize {
        self.psis.len()
    }
}

/// Kronecker injections at the first `injections` frequency nodes and
/// Kronecker measurements in time.
///
/// Injection `i` (1-based) sits on the `i`-th frequency node. With a single
/// measurement it is taken at `t_max`; otherwise measurement times are node
/// times drawn from `window` under `seed`, distinct whenever the window has
/// enough nodes.
pub fn make_bank_paper_default(
    grid: &PhaseGrid,
    injections: usize,
    measurements: usize,
    window: (f64, f64),
    seed: u64,
) -> Result<ExperimentBank> {
    if injections == 0 || measurements == 0 {
        return Err(Error::Precondition(
            "need at least one injection and one measurement".into(),
        ));
    }
    if injections > grid.nomega() {
        return Err(Error::Precondition(format!(
            "{injections} injections requested but the grid has {} frequency nodes",
            grid.nomega()
        )));
    }
    let injection_nodes: Vec<usize> = (0..injections).collect();
    let phis = injection_nodes
        .iter()
        .map(|&l| BoundarySource::kronecker_at_index(grid, l))
        .collect();

    let measurement_nodes = if measurements == 1 {
        vec![grid.nt()]
    } else {
        sample_times(grid, measurements, window, seed)?
    };
    let psis = measurement_nodes
        .iter()
        .map(|&n| MeasurementFunctional::kronecker_at_index(grid, n))
        .collect();

    Ok(ExperimentBank {
        phis,
        psis,
        injection_nodes,
        measurement_nodes,
    })
}

fn sample_times(grid: &PhaseGrid, count: usize, window: (f64, f64), seed: u64) -> Result<Vec<usize>> {
    let (lo, hi) = window;
    let t_max = grid.config().t_max;
    if !(lo <= hi) || lo < 0.0 || hi > t_max + 1e-12 {
        return Err(Error::Precondition(format!(
            "measurement window [{lo}, {hi}] must lie inside [0, {t_max}]"
        )));
    }
    let dt = grid.dt();
    let first = (lo / dt - 1e-9).ceil() as usize;
    let last = ((hi / dt + 1e-9).floor() as usize).min(grid.nt());
    if first > last {
        return Err(Error::Precondition(format!(
            "measurement window [{lo}, {hi}] contains no time node"
        )));
    }
    let available = last - first + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes: Vec<usize> = if count <= available {
        sample(&mut rng, available, count)
            .into_iter()
            .map(|j| first + j)
            .collect()
    } else {
        (0..count)
            .map(|_| grid.nearest_time_index(rng.gen_range(lo..=hi)))
            .collect()
    };
    nodes.sort_unstable();
    Ok(nodes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// `d = M (1 + level u)`
    Multiplicative,
    /// `d = M + level u`
    Additive,
}

impl NoiseKind {
    fn as_str(self) -> &'static str {
        match self {
            NoiseKind::Multiplicative => "multiplicative",
            NoiseKind::Additive => "additive",
        }
    }
}

/// How noise was added to a dataset; `u` is uniform on `[-1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub level: f64,
    pub seed: u64,
}

/// Data values `d_ij`, row-major over `I x J`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    injections: usize,
    measurements: usize,
    values: Vec<f64>,
    noise: Option<NoiseSpec>,
    generator: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(
        injections: usize,
        measurements: usize,
        values: Vec<f64>,
        noise: Option<NoiseSpec>,
        generator: Option<Vec<f64>>,
    ) -> Result<Self> {
        if injections == 0 || measurements == 0 {
            return Err(Error::EmptyDataset);
        }
        if values.len() != injections * measurements {
            return Err(Error::Validation(format!(
                "expected {} values for I={injections}, J={measurements}, found {}",
                injections * measurements,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite datum".into()));
        }
        if let Some(spec) = noise {
            if !(spec.level > 0.0) || !spec.level.is_finite() {
                return Err(Error::Validation(format!(
                    "noisy dataset needs a positive noise level, got {}",
                    spec.level
                )));
            }
        }
        Ok(Self {
            injections,
            measurements,
            values,
            noise,
            generator,
        })
    }

    pub fn injections(&self) -> usize {
        self.injections
    }

    pub fn measurements(&self) -> usize {
        self.measurements
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn noise(&self) -> Option<&NoiseSpec> {
        self.noise.as_ref()
    }

    pub fn generator(&self) -> Option<&[f64]> {
        self.generator.as_deref()
    }

    /// `d_ij` with 0-based indices.
    pub fn get(&self, i: usize, j: usize) -> Result<f64> {
        if i >= self.injections || j >= self.measurements {
            return Err(Error::MissingDatum { i: i + 1, j: j + 1 });
        }
        Ok(self.values[i * self.measurements + j])
    }

    /// Adds `offset` to every datum.
    pub fn shifted(&self, offset: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v + offset).collect(),
            ..self.clone()
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# I={}", self.injections);
        let _ = writeln!(out, "# J={}", self.measurements);
        match &self.noise {
            Some(spec) => {
                let _ = writeln!(out, "# noise={}:{:.16e}", spec.kind.as_str(), spec.level);
                let _ = writeln!(out, "# seed={}", spec.seed);
            }
            None => {
                let _ = writeln!(out, "# noise=none");
                let _ = writeln!(out, "# seed=none");
            }
        }
        let _ = writeln!(out, "# schema={SCHEMA_VERSION}");
        if let Some(eta) = &self.generator {
            let joined: Vec<String> = eta.iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(out, "# eta={}", joined.join(";"));
        }
        for i in 0..self.injections {
            for j in 0..self.measurements {
                let _ = writeln!(out, "{},{},{:.16e}", i + 1, j + 1, self.values[i * self.measurements + j]);
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut injections = None;
        let mut measurements = None;
        let mut noise_field: Option<Option<(NoiseKind, f64)>> = None;
        let mut seed_field: Option<Option<u64>> = None;
        let mut schema = None;
        let mut generator = None;
        let mut values = Vec::new();

        let parse_err = |line: usize, msg: String| Error::Parse { line, msg };

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(header) = trimmed.strip_prefix('#') {
                let (key, value) = header
                    .trim()
                    .split_once('=')
                    .ok_or_else(|| parse_err(line, format!("malformed header `{trimmed}`")))?;
                let value = value.trim();
                match key.trim() {
                    "I" => injections = Some(parse_usize(value, line)?),
                    "J" => measurements = Some(parse_usize(value, line)?),
                    "schema" => schema = Some(parse_usize(value, line)?),
                    "noise" => noise_field = Some(parse_noise(value, line)?),
                    "seed" => {
                        seed_field = Some(if value == "none" {
                            None
                        } else {
                            Some(value.parse().map_err(|_| {
                                parse_err(line, format!("bad seed `{value}`"))
                            })?)
                        })
                    }
                    "eta" => {
                        generator = Some(
                            value
                                .split(';')
                                .map(|v| parse_f64(v, line))
                                .collect::<Result<Vec<_>>>()?,
                        )
                    }
                    other => return Err(parse_err(line, format!("unknown header key `{other}`"))),
                }
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').collect();
            if fields.len() != 3 {
                return Err(parse_err(
                    line,
                    format!("expected `i,j,d_ij`, found {} fields", fields.len()),
                ));
            }
            let i = parse_usize(fields[0], line)?;
            let j = parse_usize(fields[1], line)?;
            let d = parse_f64(fields[2], line)?;
            values.push((line, i, j, d));
        }

        let schema = schema.ok_or_else(|| Error::Validation("missing `# schema=` header".into()))?;
        if schema != SCHEMA_VERSION as usize {
            return Err(Error::Validation(format!(
                "unsupported dataset schema {schema}, expected {SCHEMA_VERSION}"
            )));
        }
        let injections = injections.ok_or_else(|| Error::Validation("missing `# I=` header".into()))?;
        let measurements =
            measurements.ok_or_else(|| Error::Validation("missing `# J=` header".into()))?;
        let noise_field = noise_field.ok_or_else(|| Error::Validation("missing `# noise=` header".into()))?;
        let seed_field = seed_field.ok_or_else(|| Error::Validation("missing `# seed=` header".into()))?;

        let noise = match (noise_field, seed_field) {
            (None, None) => None,
            (Some((kind, level)), Some(seed)) => Some(NoiseSpec { kind, level, seed }),
            (Some(_), None) => {
                return Err(Error::Validation("noisy dataset without a seed".into()))
            }
            (None, Some(_)) => {
                return Err(Error::Validation("seed given for a clean dataset".into()))
            }
        };

        if values.len() != injections * measurements {
            return Err(Error::Validation(format!(
                "header declares I={injections}, J={measurements} ({} rows) but the file has {} rows",
                injections * measurements,
                values.len()
            )));
        }
        let mut flat = Vec::with_capacity(values.len());
        for (pos, (line, i, j, d)) in values.into_iter().enumerate() {
            let (ei, ej) = (pos / measurements + 1, pos % measurements + 1);
            if (i, j) != (ei, ej) {
                return Err(Error::Validation(format!(
                    "line {line}: expected row ({ei},{ej}), found ({i},{j})"
                )));
            }
            flat.push(d);
        }
        Dataset::new(injections, measurements, flat, noise, generator)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the serialized form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

fn parse_usize(s: &str, line: usize) -> Result<usize> {
    s.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("expected a non-negative integer, found `{}`", s.trim()),
    })
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("expected a number, found `{}`", s.trim()),
    })
}

fn parse_noise(value: &str, line: usize) -> Result<Option<(NoiseKind, f64)>> {
    if value == "none" {
        return Ok(None);
    }
    let (kind, level) = value.split_once(':').ok_or_else(|| Error::Parse {
        line,
        msg: format!("expected `none` or `<kind>:<level>`, found `{value}`"),
    })?;
    let kind = match kind {
        "multiplicative" => NoiseKind::Multiplicative,
        "additive" => NoiseKind::Additive,
        other => {
            return Err(Error::Parse {
                line,
                msg: format!("unknown noise kind `{other}`"),
            })
        }
    };
    Ok(Some((kind, parse_f64(level, line)?)))
}

/// Surface temperature traces `dT_i(t, x = 0)` for every injection, computed
/// in parallel over `i`.
pub fn surface_traces(
    model: &Model,
    bank: &ExperimentBank,
    eta: &ReflectionCoeff,
) -> Result<Vec<Vec<f64>>> {
    bank.phis
        .par_iter()
        .map(|phi| {
            forward_solve(model, eta, phi, &ForwardOptions::default()).map(|s| s.surface_delta_t)
        })
        .collect()
}

/// All measurements `M_ij(eta)`, row-major.
pub fn measure_all(model: &Model, bank: &ExperimentBank, eta: &ReflectionCoeff) -> Result<Vec<f64>> {
    let traces = surface_traces(model, bank, eta)?;
    let mut out = Vec::with_capacity(bank.injections() * bank.measurements());
    for trace in &traces {
        for psi in &bank.psis {
            out.push(psi.apply(&model.grid, trace)?);
        }
    }
    Ok(out)
}

/// Synthetic data `d_ij = M_ij(eta_truth)` perturbed by seeded uniform noise.
/// `noise_level = 0` gives clean data.
pub fn generate_dataset(
    model: &Model,
    bank: &ExperimentBank,
    eta_truth: &ReflectionCoeff,
    noise_level: f64,
    kind: NoiseKind,
    seed: u64,
) -> Result<Dataset> {
    if !(noise_level >= 0.0) || !noise_level.is_finite() {
        return Err(Error::Precondition(format!(
            "noise level must be non-negative, got {noise_level}"
        )));
    }
    let mut values = measure_all(model, bank, eta_truth)?;
    let noise = if noise_level > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        for v in values.iter_mut() {
            let u: f64 = rng.gen_range(-1.0..1.0);
            match kind {
                NoiseKind::Multiplicative => *v *= 1.0 + noise_level * u,
                NoiseKind::Additive => *v += noise_level * u,
            }
        }
        Some(NoiseSpec {
            kind,
            level: noise_level,
            seed,
        })
    } else {
        None
    };
    Dataset::new(
        bank.injections(),
        bank.measurements(),
        values,
        noise,
        Some(eta_truth.values().to_vec()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridConfig;
    use crate::inverse::{eta_from_params, TanhParams};

    #[test]
    fn paper_bank_shapes() {
        let grid = PhaseGrid::new(GridConfig::paper()).unwrap();
        let bank = make_bank_paper_default(&grid, 40, 1, (4.5, 5.0), 0).unwrap();
        assert_eq!(bank.injections(), 40);
        assert_eq!(bank.measurement_nodes, vec![500]);
        assert_eq!(bank.injection_nodes[0], 0);
        assert!((grid.omega_nodes()[bank.injection_nodes[39]] - 2.0).abs() < 1e-12);

        let a = make_bank_paper_default(&grid, 40, 50, (4.5, 5.0), 17).unwrap();
        let b = make_bank_paper_default(&grid, 40, 50, (4.5, 5.0), 17).unwrap();
        assert_eq!(a.measurement_nodes, b.measurement_nodes);
        let mut distinct = a.measurement_nodes.clone();
        distinct.dedup();
        assert_eq!(distinct.len(), 50);
        assert!(a.measurement_nodes.iter().all(|&n| (450..=500).contains(&n)));
        let c = make_bank_paper_default(&grid, 40, 50, (4.5, 5.0), 18).unwrap();
        assert_ne!(a.measurement_nodes, c.measurement_nodes);
    }

    #[test]
    fn coarse_window_allows_repeats() {
        let grid = PhaseGrid::new(GridConfig::coarse()).unwrap();
        let bank = make_bank_paper_default(&grid, 20, 50, (4.5, 5.0), 3).unwrap();
        assert_eq!(bank.measurements(), 50);
        assert!(bank.measurement_nodes.iter().all(|&n| (225..=250).contains(&n)));
    }

    #[test]
    fn bank_preconditions() {
        let grid = PhaseGrid::new(GridConfig::coarse()).unwrap();
        assert!(make_bank_paper_default(&grid, 21, 1, (4.5, 5.0), 0).is_err());
        assert!(make_bank_paper_default(&grid, 0, 1, (4.5, 5.0), 0).is_err());
        assert!(make_bank_paper_default(&grid, 1, 2, (5.5, 6.0), 0).is_err());
        let single = make_bank_paper_default(&grid, 1, 1, (4.5, 5.0), 0).unwrap();
        assert_eq!((single.injections(), single.measurements()), (1, 1));
    }

    fn sample_dataset() -> Dataset {
        Dataset::new(
            2,
            3,
            vec![0.1, 1.0 / 3.0, -2.5e-7, 7.0, f64::MIN_POSITIVE, 1e300],
            Some(NoiseSpec {
                kind: NoiseKind::Multiplicative,
                level: 0.025,
                seed: 42,
            }),
            Some(vec![0.25, 0.5]),
        )
        .unwrap()
    }

    #[test]
    fn text_round_trip_is_exact() {
        let ds = sample_dataset();
        let text = ds.to_text();
        assert!(text.starts_with("# I=2\n# J=3\n# noise=multiplicative:"));
        let back = Dataset::from_text(&text).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.hash(), ds.hash());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        ds.save(&path).unwrap();
        assert_eq!(Dataset::load(&path).unwrap(), ds);
    }

    #[test]
    fn truncated_file_names_the_line() {
        let text = sample_dataset().to_text();
        let last_comma = text.trim_end().rfind(',').unwrap();
        for cut in [&text[..=last_comma], &text[..last_comma - 1]] {
            match Dataset::from_text(cut) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, cut.lines().count()),
                other => panic!("expected parse error, got {other:?}"),
            }
        }
    }

    #[test]
    fn header_row_mismatch_is_a_validation_error() {
        let text = sample_dataset().to_text().replace("# J=3", "# J=2");
        assert!(matches!(Dataset::from_text(&text), Err(Error::Validation(_))));
        let text = sample_dataset().to_text().replace("# schema=1", "# schema=2");
        assert!(matches!(Dataset::from_text(&text), Err(Error::Validation(_))));
        let text = sample_dataset().to_text().replace("2,1,", "2,2,");
        assert!(matches!(Dataset::from_text(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn missing_datum() {
        let ds = sample_dataset();
        assert!(matches!(ds.get(2, 0), Err(Error::MissingDatum { i: 3, j: 1 })));
        assert_eq!(ds.get(1, 0).unwrap(), 7.0);
    }

    #[test]
    fn noise_is_bounded_and_seeded() {
        let model = Model::from_config(GridConfig::coarse()).unwrap();
        let bank = make_bank_paper_default(&model.grid, 4, 1, (4.5, 5.0), 0).unwrap();
        let eta = eta_from_params(TanhParams::REFERENCE, &model.grid);
        let clean = generate_dataset(&model, &bank, &eta, 0.0, NoiseKind::Multiplicative, 1).unwrap();
        assert!(clean.noise().is_none());
        let a = generate_dataset(&model, &bank, &eta, 0.025, NoiseKind::Multiplicative, 1).unwrap();
        let b = generate_dataset(&model, &bank, &eta, 0.025, NoiseKind::Multiplicative, 1).unwrap();
        let c = generate_dataset(&model, &bank, &eta, 0.025, NoiseKind::Multiplicative, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values(), c.values());
        for (d, m) in a.values().iter().zip(clean.values()) {
            assert!((d / m - 1.0).abs() <= 0.025);
        }
        assert!(generate_dataset(&model, &bank, &eta, -0.1, NoiseKind::Additive, 1).is_err());
    }
}
