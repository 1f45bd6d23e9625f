use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use tbr_core::{KineticField, PhaseGrid};

use crate::config::RunConfig;

/// Writes a CSV file with a header row. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
    let mut text = header.join(",");
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path.to_path_buf())
}

pub fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Two-column series `(name_x, name_y)`.
pub fn write_series(path: &Path, names: [&str; 2], xs: &[f64], ys: &[f64]) -> Result<PathBuf> {
    let rows: Vec<Vec<String>> = xs.iter().zip(ys).map(|(x, y)| vec![num(*x), num(*y)]).collect();
    write_csv(path, &names, &rows)
}

/// Matrix with row coordinates in the first column and column coordinates
/// in the header.
fn write_matrix(path: &Path, corner: &str, rows_at: &[f64], cols_at: &[f64], m: &[Vec<f64>]) -> Result<PathBuf> {
    let mut header = vec![corner.to_string()];
    header.extend(cols_at.iter().map(|c| num(*c)));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = rows_at
        .iter()
        .zip(m)
        .map(|(r, vals)| std::iter::once(num(*r)).chain(vals.iter().map(|v| num(*v))).collect())
        .collect();
    write_csv(path, &header, &rows)
}

/// Writes the `omega`-integrated `(x, mu)` and the `mu`-integrated
/// `(x, omega)` views of one field.
pub fn write_snapshot(dir: &Path, prefix: &str, t: f64, grid: &PhaseGrid, field: &KineticField) -> Result<Vec<PathBuf>> {
    let a = write_matrix(
        &dir.join(format!("{prefix}_t{t}_x_mu.csv")),
        "x\\mu",
        grid.x_nodes(),
        grid.mu_nodes(),
        &field.integrate_omega(grid),
    )?;
    let b = write_matrix(
        &dir.join(format!("{prefix}_t{t}_x_omega.csv")),
        "x\\omega",
        grid.x_nodes(),
        grid.omega_nodes(),
        &field.integrate_mu(grid),
    )?;
    Ok(vec![a, b])
}

#[derive(Debug, Serialize)]
pub struct Metadata<E: Serialize> {
    pub command: String,
    pub version: String,
    pub seed_data: u64,
    pub seed_sgd: u64,
    pub wall_time_seconds: f64,
    pub results: E,
    pub config: RunConfig,
}

pub fn write_metadata<E: Serialize>(dir: &Path, meta: &Metadata<E>) -> Result<PathBuf> {
    let path = dir.join("metadata.toml");
    let mut text = String::new();
    writeln!(text, "# Run metadata; [config] re-parses as a run configuration.")?;
    text.push_str(&toml::to_string(meta).context("serializing metadata")?);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}
