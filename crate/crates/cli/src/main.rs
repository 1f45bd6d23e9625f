use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tbr_cli::commands;
use tbr_cli::config::{ConfigError, RunConfig};

#[derive(Parser)]
#[command(name = "tbr", version, about = "Phonon transport forward/adjoint solver and reflection-coefficient reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forward solve; writes surface temperature and snapshots.
    Forward(Common),
    /// Adjoint solve; writes interface traces and snapshots.
    Adjoint(Common),
    /// Generates a synthetic dataset.
    Generate(Common),
    /// Runs stochastic gradient reconstruction.
    Reconstruct(Common),
    /// Runs the verification probes; exits 3 if any fails.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: fig3, fig5, example1, example2, example3.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory (overrides the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed_sgd: Option<u64>,
    #[arg(long)]
    seed_data: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, ConfigError> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(name)) => RunConfig::preset(name)?,
            (None, None) => RunConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        if let Some(s) = self.seed_sgd {
            cfg.inversion.seed = s;
        }
        if let Some(s) = self.seed_data {
            cfg.experiment.seed = s;
        }
        Ok(cfg)
    }
}

fn run(command: Command) -> anyhow::Result<bool> {
    let (common, name) = match &command {
        Command::Forward(c) => (c, "forward"),
        Command::Adjoint(c) => (c, "adjoint"),
        Command::Generate(c) => (c, "generate"),
        Command::Reconstruct(c) => (c, "reconstruct"),
        Command::Verify(c) => (c, "verify"),
    };
    if let Some(jobs) = common.jobs {
        if jobs == 0 {
            return Err(ConfigError("--jobs must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    let cfg = common.load()?;
    let dir = cfg.output.dir.display().to_string();
    match command {
        Command::Forward(_) => {
            let s = commands::cmd_forward(&cfg)?;
            match s.max_ratio {
                Some(r) => println!("max |g| / max |phi| = {r:.6}"),
                None => println!("zero inflow"),
            }
            println!("min g = {:e}, final deltaT = {:e}", s.min_value, s.final_delta_t);
        }
        Command::Adjoint(_) => {
            let s = commands::cmd_adjoint(&cfg)?;
            println!("peak interface moment = {:e}", s.interface_peak);
        }
        Command::Generate(_) => {
            let s = commands::cmd_generate(&cfg)?;
            println!("{} x {} data, sha256 {}", s.injections, s.measurements, s.dataset_hash);
        }
        Command::Reconstruct(_) => {
            let s = commands::cmd_reconstruct(&cfg)?;
            for (k, r) in s.runs.iter().enumerate() {
                print!("run {k}: alpha {:.4e}, {} iterations", r.alpha, r.iterations);
                if let Some(e) = r.final_error {
                    print!(", error {e:.4e}");
                }
                if let (Some(a), Some(b)) = (r.final_a, r.final_b) {
                    print!(", a {a:.6}, b {b:.6}");
                }
                println!();
            }
        }
        Command::Verify(_) => {
            let s = commands::cmd_verify(&cfg)?;
            for p in &s.probes {
                println!(
                    "{:<28} {:>14.6e} {} {:<10e} {}",
                    p.name,
                    p.value,
                    p.relation,
                    p.threshold,
                    if p.pass { "pass" } else { "FAIL" }
                );
            }
            println!("{name}: outputs in {dir}");
            return Ok(s.all_pass());
        }
    }
    println!("{name}: outputs in {dir}");
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
