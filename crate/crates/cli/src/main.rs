//! `lattice-current`: batch driver for the identity suite, light-cone bounds,
//! the finite-region sum rule and the spectral density.
//!
//! Exit status: 0 when every criterion passes, 1 when a numeric criterion
//! fails, 2 on configuration, parse or I/O errors.

mod config;
mod run;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lattice_current::exec::configure_workers;
use lattice_current::{Error, Exec};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{Command, Overrides, RunConfig};

/// Worker count for the parallel grid evaluations.
const WORKERS_ENV: &str = "LATTICE_CURRENT_WORKERS";
/// Bumped whenever a flag, config key or CSV column changes.
const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "lattice-current", version, about = "Current-carrying stationary states on 1-D lattices")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Operator-identity suite on the model and a seeded random model.
    Verify(Common),
    /// Measured commutator norms against the Lieb-Robinson bound and the
    /// sum-rule envelope.
    Cone(Common),
    /// (L, M) sweep of the finite-region sum rule and its three-term split.
    Sumrule(Common),
    /// Correlation grid, spectral density and the smeared sum rule.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Check the transform on a synthetic plane wave instead.
        #[arg(long)]
        synthetic: bool,
    },
}

#[derive(Args)]
struct Common {
    /// Model file path or shorthand such as `xxz,lambda=1`.
    #[arg(long)]
    model: Option<String>,
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    ring: Option<usize>,
    #[arg(long = "L")]
    l: Option<usize>,
    #[arg(long = "M")]
    m: Option<usize>,
    /// gaussian | hann
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Window half-width.
    #[arg(long = "T")]
    half_width: Option<f64>,
    #[arg(long)]
    zmax: Option<i64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Boost phase of the state.
    #[arg(long)]
    phi: Option<f64>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            model: self.model.clone(),
            ring: self.ring,
            l: self.l,
            m: self.m,
            window: self.window.clone(),
            sigma: self.sigma,
            half_width: self.half_width,
            zmax: self.zmax,
            dt: self.dt,
            tolerance: self.tolerance,
            seed: self.seed,
            phi: self.phi,
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn sha256(text: &str) -> String {
    hex(&Sha256::digest(text.as_bytes()))
}

fn write_outputs(out: &Path, cfg: &RunConfig, mode: &str, outcome: &run::Outcome) -> Result<(), Error> {
    let io = |e: std::io::Error| Error::Domain(format!("{}: {e}", out.display()));
    std::fs::create_dir_all(out).map_err(io)?;
    let report = serde_json::to_string_pretty(&outcome.report).expect("report serializes") + "\n";
    let mut files = outcome.files.clone();
    files.push(("report.json".into(), report));
    let mut hashes = Vec::new();
    for (name, body) in &files {
        std::fs::write(out.join(name), body).map_err(io)?;
        hashes.push(json!({"file": name, "sha256": sha256(body)}));
    }
    let cfg_json = cfg.canonical_json();
    let manifest = json!({
        "command": mode,
        "config": serde_json::from_str::<serde_json::Value>(&cfg_json).expect("canonical json"),
        "config_sha256": sha256(&cfg_json),
        "versions": {
            "lattice-current": env!("CARGO_PKG_VERSION"),
            "schema": SCHEMA_VERSION,
            "parallel": cfg!(feature = "parallel"),
        },
        "outputs": hashes,
        "passed": outcome.passed,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(out.join("manifest.json"), text).map_err(io)
}

fn workers() -> Result<(), Error> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => {
            let n =
                v.trim().parse::<usize>().map_err(|_| Error::Domain(format!("{WORKERS_ENV}={v:?} is not a count")))?;
            configure_workers(n).map_err(Error::Domain)
        }
        Err(_) => Ok(()),
    }
}

fn execute(cli: Cli) -> Result<bool, Error> {
    workers()?;
    let (command, common, synthetic) = match &cli.command {
        Cmd::Verify(c) => (Command::Verify, c, false),
        Cmd::Cone(c) => (Command::Cone, c, false),
        Cmd::Sumrule(c) => (Command::Sumrule, c, false),
        Cmd::Spectrum { common, synthetic } => (Command::Spectrum, common, *synthetic),
    };
    let cfg = config::resolve(command, common.config.as_deref(), &common.overrides())?;
    let exec = Exec::default();
    let (mode, outcome) = if synthetic {
        ("spectrum-synthetic", run::synthetic(&cfg, exec)?)
    } else {
        (cfg.command_name(), run::run(&cfg, exec)?)
    };
    write_outputs(&common.out, &cfg, mode, &outcome)?;
    let verdict = if outcome.passed { "PASS" } else { "FAIL" };
    println!("{mode}: {verdict} ({})", common.out.display());
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ Error::Numerical(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
