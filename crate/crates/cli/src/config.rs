//! Run configuration: built-in defaults per command, overridden by the config
//! file, overridden by flags. The resolved form is serialized to canonical
//! JSON, whose SHA-256 is recorded in the manifest.

use std::f64::consts::PI;
use std::path::Path;

use lattice_current::models::{parse_model, toml_error, ModelSpec, ModelStanza};
use lattice_current::{Error, Result};
use serde::{Deserialize, Serialize};
use toml::Spanned;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Verify,
    Cone,
    Sumrule,
    Spectrum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    /// `boosted-fermi`, `fermi-dirac`, `infinite-temperature` or `gibbs`.
    pub kind: String,
    pub nu: f64,
    pub phi: f64,
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    /// `gaussian` or `hann`.
    pub shape: String,
    pub sigma: f64,
    #[serde(rename = "T")]
    pub half_width: f64,
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeConfig {
    pub xmax: i64,
    pub times: Vec<f64>,
    pub envelope_pairs: Vec<[usize; 2]>,
    pub envelope_times: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SumruleConfig {
    /// `(L, M)` rows, expected to converge to the target.
    pub pairs: Vec<[usize; 2]>,
    /// `(L, M)` rows with `M ≫ L`, expected to vanish.
    pub swapped: Vec<[usize; 2]>,
    pub decomposition_m: Vec<usize>,
    pub l_big: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    /// `None`: chosen by the octave-decay check.
    pub zmax: Option<i64>,
    pub energy_max: f64,
}

/// Everything a run depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    /// Canonical model file text.
    pub model: String,
    /// ED ring size (identity suite size for `verify`, starting ring for the
    /// `cone` guard).
    pub ring: usize,
    /// Free-fermion ring size.
    pub sites: usize,
    pub state: StateConfig,
    pub window: WindowConfig,
    pub cone: ConeConfig,
    pub sumrule: SumruleConfig,
    pub spectrum: SpectrumConfig,
    pub tolerance: f64,
    pub seed: u64,
}

impl RunConfig {
    pub fn defaults(command: Command) -> Self {
        let model = match command {
            Command::Verify | Command::Cone => "xxz,lambda=1",
            Command::Sumrule | Command::Spectrum => "fermion,t=1,mu=0,v=0",
        };
        let tolerance = match command {
            Command::Verify => 1e-12,
            Command::Cone => 0.0,
            Command::Sumrule => 0.05,
            Command::Spectrum => 0.10,
        };
        let ring = match command {
            Command::Cone => 6,
            _ => 8,
        };
        RunConfig {
            command,
            model: parse_model(model).expect("built-in default").to_toml(),
            ring,
            sites: 256,
            state: StateConfig { kind: "boosted-fermi".into(), nu: 0.5, phi: PI / 8.0, beta: 1.0 },
            window: WindowConfig { shape: "gaussian".into(), sigma: 1.5, half_width: 6.0, dt: 0.05 },
            cone: ConeConfig {
                xmax: 5,
                times: (-5..=5).map(|i| i as f64 / 10.0).collect(),
                envelope_pairs: vec![[4, 2], [5, 2]],
                envelope_times: vec![0.005, 0.01, 0.02],
            },
            sumrule: SumruleConfig {
                pairs: vec![[16, 16], [32, 16], [64, 16]],
                swapped: vec![[16, 128]],
                decomposition_m: vec![8, 16, 32],
                l_big: 128,
            },
            spectrum: SpectrumConfig { zmax: None, energy_max: 6.0 },
            tolerance,
            seed: 0,
        }
    }

    pub fn command_name(&self) -> &'static str {
        match self.command {
            Command::Verify => "verify",
            Command::Cone => "cone",
            Command::Sumrule => "sumrule",
            Command::Spectrum => "spectrum",
        }
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        parse_model(&self.model)
    }

    /// Canonical JSON (field order fixed by the struct).
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    ring: Option<usize>,
    sites: Option<usize>,
    tolerance: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateSection {
    kind: Option<String>,
    nu: Option<f64>,
    phi: Option<f64>,
    beta: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct WindowSection {
    shape: Option<String>,
    sigma: Option<f64>,
    #[serde(rename = "T")]
    half_width: Option<f64>,
    dt: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConeSection {
    xmax: Option<i64>,
    times: Option<Vec<f64>>,
    envelope_pairs: Option<Vec<[usize; 2]>>,
    envelope_times: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SumruleSection {
    pairs: Option<Vec<[usize; 2]>>,
    swapped: Option<Vec<[usize; 2]>>,
    decomposition_m: Option<Vec<usize>>,
    l_big: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpectrumSection {
    zmax: Option<i64>,
    energy_max: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    model: Option<Spanned<ModelStanza>>,
    #[serde(default)]
    run: RunSection,
    #[serde(default)]
    state: StateSection,
    #[serde(default)]
    window: WindowSection,
    #[serde(default)]
    cone: ConeSection,
    #[serde(default)]
    sumrule: SumruleSection,
    #[serde(default)]
    spectrum: SpectrumSection,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

/// Apply a config file's contents on top of `cfg`.
pub fn apply_file(cfg: &mut RunConfig, text: &str) -> Result<()> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
    if let Some(m) = file.model {
        let at = m.span().start;
        cfg.model = m.into_inner().resolve(text, at)?.to_toml();
    }
    set(&mut cfg.ring, file.run.ring);
    set(&mut cfg.sites, file.run.sites);
    set(&mut cfg.tolerance, file.run.tolerance);
    set(&mut cfg.seed, file.run.seed);
    let s = file.state;
    set(&mut cfg.state.kind, s.kind);
    set(&mut cfg.state.nu, s.nu);
    set(&mut cfg.state.phi, s.phi);
    set(&mut cfg.state.beta, s.beta);
    let w = file.window;
    set(&mut cfg.window.shape, w.shape);
    set(&mut cfg.window.sigma, w.sigma);
    set(&mut cfg.window.half_width, w.half_width);
    set(&mut cfg.window.dt, w.dt);
    let c = file.cone;
    set(&mut cfg.cone.xmax, c.xmax);
    set(&mut cfg.cone.times, c.times);
    set(&mut cfg.cone.envelope_pairs, c.envelope_pairs);
    set(&mut cfg.cone.envelope_times, c.envelope_times);
    let r = file.sumrule;
    set(&mut cfg.sumrule.pairs, r.pairs);
    set(&mut cfg.sumrule.swapped, r.swapped);
    set(&mut cfg.sumrule.decomposition_m, r.decomposition_m);
    set(&mut cfg.sumrule.l_big, r.l_big);
    if let Some(z) = file.spectrum.zmax {
        cfg.spectrum.zmax = Some(z);
    }
    set(&mut cfg.spectrum.energy_max, file.spectrum.energy_max);
    Ok(())
}

/// Flag overrides; `None` leaves the value alone.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub model: Option<String>,
    pub ring: Option<usize>,
    pub l: Option<usize>,
    pub m: Option<usize>,
    pub window: Option<String>,
    pub sigma: Option<f64>,
    pub half_width: Option<f64>,
    pub zmax: Option<i64>,
    pub dt: Option<f64>,
    pub tolerance: Option<f64>,
    pub seed: Option<u64>,
    pub phi: Option<f64>,
}

/// `--model` takes a path to a model file or the one-line shorthand.
pub fn load_model_arg(arg: &str) -> Result<ModelSpec> {
    let p = Path::new(arg);
    if p.is_file() {
        let text = std::fs::read_to_string(p).map_err(|e| Error::Domain(format!("{}: {e}", p.display())))?;
        parse_model(&text)
    } else {
        parse_model(arg)
    }
}

pub fn apply_overrides(cfg: &mut RunConfig, o: &Overrides) -> Result<()> {
    if let Some(m) = &o.model {
        cfg.model = load_model_arg(m)?.to_toml();
    }
    set(&mut cfg.ring, o.ring);
    set(&mut cfg.window.shape, o.window.clone());
    set(&mut cfg.window.sigma, o.sigma);
    set(&mut cfg.window.half_width, o.half_width);
    set(&mut cfg.window.dt, o.dt);
    set(&mut cfg.tolerance, o.tolerance);
    set(&mut cfg.seed, o.seed);
    set(&mut cfg.state.phi, o.phi);
    if o.zmax.is_some() {
        cfg.spectrum.zmax = o.zmax;
    }
    if o.l.is_some() || o.m.is_some() {
        let (l0, m0) = match cfg.command {
            Command::Cone => cfg.cone.envelope_pairs.first().map(|p| (p[0], p[1])).unwrap_or((4, 2)),
            _ => cfg.sumrule.pairs.last().map(|p| (p[0], p[1])).unwrap_or((64, 16)),
        };
        let pair = [o.l.unwrap_or(l0), o.m.unwrap_or(m0)];
        match cfg.command {
            Command::Cone => cfg.cone.envelope_pairs = vec![pair],
            _ => cfg.sumrule.pairs = vec![pair],
        }
    }
    Ok(())
}

/// Defaults, then the file at `config` if any, then flags.
pub fn resolve(command: Command, config: Option<&Path>, o: &Overrides) -> Result<RunConfig> {
    let mut cfg = RunConfig::defaults(command);
    if let Some(path) = config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Domain(format!("{}: {e}", path.display())))?;
        apply_file(&mut cfg, &text)?;
    }
    apply_overrides(&mut cfg, o)?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let text = "[model]\nbuiltin = \"fermion\"\nparams.t = 1.0\nparams.mu = 0.0\nparams.v = 0.0\n\n[state]\nphi = 0.0\n\n[run]\nsites = 64\n";
        let mut cfg = RunConfig::defaults(Command::Sumrule);
        apply_file(&mut cfg, text).unwrap();
        assert_eq!(cfg.sites, 64);
        assert_eq!(cfg.state.phi, 0.0);
        let o = Overrides { l: Some(32), ..Overrides::default() };
        apply_overrides(&mut cfg, &o).unwrap();
        assert_eq!(cfg.sumrule.pairs, vec![[32, 16]]);
    }

    #[test]
    fn errors_carry_positions() {
        let mut cfg = RunConfig::defaults(Command::Verify);
        let e = apply_file(&mut cfg, "[run]\nring = 8\nbogus = 1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        let e = apply_file(&mut cfg, "[model]\nbuiltin = \"xxz\"\nparams.lambda = \"x\"\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
    }

    #[test]
    fn canonical_json_roundtrips() {
        let cfg = RunConfig::defaults(Command::Spectrum);
        let back: RunConfig = serde_json::from_str(&cfg.canonical_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.canonical_json(), cfg.canonical_json());
    }
}
