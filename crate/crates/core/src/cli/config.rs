//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. `preset` is applied
//! before every other key regardless of its position, so explicit prior
//! values always override the preset; `kappa` comes next so the per-step
//! budgets can follow it.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linearization::PlSettings;
use crate::model::{HyperPriorSpec, ProcessPrior};
use crate::sampler::{HmcConfig, MassMatrixMode};
use crate::schemes::{PlConfig, TemperSchedule, TemperStep};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Simulate,
    FitHmc,
    FitHmcShort,
    FitPl,
    FitPlTempered,
    Predict,
}

impl RunMode {
    pub const ALL: [RunMode; 6] = [
        RunMode::Simulate,
        RunMode::FitHmc,
        RunMode::FitHmcShort,
        RunMode::FitPl,
        RunMode::FitPlTempered,
        RunMode::Predict,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RunMode::Simulate => "simulate",
            RunMode::FitHmc => "fit-hmc",
            RunMode::FitHmcShort => "fit-hmc-short",
            RunMode::FitPl => "fit-pl",
            RunMode::FitPlTempered => "fit-pl-tempered",
            RunMode::Predict => "predict",
        }
    }
}

impl FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Synthetic,
    YoungsModulus,
    Argentopyrite,
}

impl Preset {
    pub fn as_str(&self) -> &'static str {
        match self {
            Preset::Synthetic => "synthetic",
            Preset::YoungsModulus => "youngs-modulus",
            Preset::Argentopyrite => "argentopyrite",
        }
    }

    pub fn priors(&self) -> HyperPriorSpec {
        match self {
            Preset::Synthetic => HyperPriorSpec::synthetic(),
            Preset::YoungsModulus => HyperPriorSpec::youngs_modulus(),
            Preset::Argentopyrite => HyperPriorSpec::argentopyrite(),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Preset::Synthetic, Preset::YoungsModulus, Preset::Argentopyrite]
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: RunMode,
    pub preset: Preset,
    pub dataset: Option<PathBuf>,
    /// Raw two-column spectrum, preprocessed before fitting.
    pub spectrum: Option<PathBuf>,
    pub cutoff: f64,
    pub y_max: f64,
    /// Mean vector for the Young's-modulus simulation.
    pub mean_file: Option<PathBuf>,
    pub grid_size: usize,
    pub priors: HyperPriorSpec,
    pub pl: PlConfig,
    pub hmc: HmcConfig,
    pub schedule: TemperSchedule,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub workers: usize,
    /// Output directory of an earlier fit (predict mode).
    pub result_dir: Option<PathBuf>,
    /// CSV of test locations (predict mode).
    pub test_grid: Option<PathBuf>,
    /// Predictive draws; 0 means one per stored posterior draw.
    pub n_draws: usize,
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("invalid value '{v}' for key '{key}'")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| parse(key, s.trim())).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

const PRIOR_KEYS: [&str; 7] = ["gamma_mu", "rho_mu", "rho_sigma_e", "rho_sigma_s", "gamma_l", "rho_l", "b"];

fn prior_slot<'a>(p: &'a mut ProcessPrior, name: &str) -> Option<&'a mut f64> {
    Some(match name {
        "gamma_mu" => &mut p.mean_loc,
        "rho_mu" => &mut p.mean_scale,
        "rho_sigma_e" => &mut p.noise_scale,
        "rho_sigma_s" => &mut p.signal_scale,
        "gamma_l" => &mut p.length_loc,
        "rho_l" => &mut p.length_scale,
        "b" => &mut p.length_lower,
        _ => return None,
    })
}

impl RunConfig {
    /// Defaults for `mode`: the long chain for `fit-hmc`, the short chain
    /// for `fit-hmc-short`, 1000/1000 with a diagonal metric otherwise.
    pub fn new(mode: RunMode) -> Self {
        let hmc = match mode {
            RunMode::FitHmc => HmcConfig::long(0),
            RunMode::FitHmcShort => HmcConfig::short(0),
            _ => HmcConfig::tempered_final(0),
        };
        Self {
            mode,
            preset: Preset::Synthetic,
            dataset: None,
            spectrum: None,
            cutoff: 600.0,
            y_max: 10.0,
            mean_file: None,
            grid_size: 128,
            priors: Preset::Synthetic.priors(),
            pl: PlConfig::default(),
            hmc,
            schedule: TemperSchedule::default(),
            seed: 0,
            output_dir: PathBuf::from("lggp-out"),
            workers: 0,
            result_dir: None,
            test_grid: None,
            n_draws: 0,
        }
    }

    /// Parses `text` on top of the defaults for `mode`. A `mode` key in the
    /// text must agree with `mode`.
    pub fn parse(mode: RunMode, text: &str) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let mut cfg = Self::new(mode);
        cfg.apply_all(&pairs)?;
        Ok(cfg)
    }

    pub fn from_file(mode: RunMode, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(mode, &text)
    }

    /// Applies key/value pairs: `preset` first, then `kappa`, then the rest
    /// in order.
    pub fn apply_all(&mut self, pairs: &[(String, String)]) -> Result<()> {
        for first in ["preset", "kappa"] {
            if let Some((k, v)) = pairs.iter().find(|(k, _)| k == first) {
                self.apply(k, v)?;
            }
        }
        for (k, v) in pairs.iter().filter(|(k, _)| k != "preset" && k != "kappa") {
            self.apply(k, v)?;
        }
        Ok(())
    }

    pub fn apply(&mut self, key: &str, v: &str) -> Result<()> {
        let path = || Some(PathBuf::from(v));
        let (n_k, n_s, n_w) = (
            self.schedule.steps.len(),
            self.schedule.steps.iter().map(|s| s.n_samples).collect::<Vec<_>>(),
            self.schedule.steps.iter().map(|s| s.n_warmup).collect::<Vec<_>>(),
        );
        match key {
            "mode" => {
                let m: RunMode = v.parse()?;
                if m != self.mode {
                    return Err(Error::Config(format!(
                        "config is for mode '{v}' but '{}' was requested",
                        self.mode.as_str()
                    )));
                }
            }
            "preset" => {
                self.preset = v.parse()?;
                self.priors = self.preset.priors();
            }
            "dataset" => self.dataset = path(),
            "spectrum" => self.spectrum = path(),
            "cutoff" => self.cutoff = parse(key, v)?,
            "y_max" => self.y_max = parse(key, v)?,
            "mean_file" => self.mean_file = path(),
            "grid_size" => self.grid_size = parse(key, v)?,
            "ensemble_size" => self.pl.ensemble_size = parse(key, v)?,
            "pl_iterations" => self.pl.settings.t_max = parse(key, v)?,
            "pl_tol" => {
                self.pl.settings.tol = if v == "none" { None } else { Some(parse(key, v)?) }
            }
            "n_predictive" => self.pl.n_predictive = parse(key, v)?,
            "n_samples" => self.hmc.n_samples = parse(key, v)?,
            "n_warmup" => self.hmc.n_warmup = parse(key, v)?,
            "target_accept" => self.hmc.target_accept = parse(key, v)?,
            "max_tree_depth" => self.hmc.max_tree_depth = parse(key, v)?,
            "initial_step_size" => self.hmc.initial_step_size = parse(key, v)?,
            "mass_matrix" => {
                self.hmc.mass_matrix = match v {
                    "identity" => MassMatrixMode::Identity,
                    "diagonal" => MassMatrixMode::Diagonal,
                    _ => return Err(Error::Config(format!("invalid value '{v}' for key '{key}'"))),
                }
            }
            "kappa" => {
                let k: Vec<f64> = parse_list(key, v)?;
                let steps = k
                    .iter()
                    .enumerate()
                    .map(|(i, &kappa)| TemperStep {
                        kappa,
                        n_samples: n_s.get(i).copied().unwrap_or(1),
                        n_warmup: n_w.get(i).copied().unwrap_or(100),
                    })
                    .collect();
                self.schedule = TemperSchedule { steps };
            }
            "temper_samples" | "temper_warmup" => {
                let n: Vec<usize> = parse_list(key, v)?;
                if n.len() != n_k {
                    return Err(Error::Config(format!(
                        "'{key}' has {} entries but there are {n_k} tempering weights",
                        n.len()
                    )));
                }
                for (s, x) in self.schedule.steps.iter_mut().zip(n) {
                    if key == "temper_samples" {
                        s.n_samples = x;
                    } else {
                        s.n_warmup = x;
                    }
                }
            }
            "seed" => self.seed = parse(key, v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            "workers" => self.workers = parse(key, v)?,
            "result_dir" => self.result_dir = path(),
            "test_grid" => self.test_grid = path(),
            "n_draws" => self.n_draws = parse(key, v)?,
            _ => {
                let slot = key
                    .rsplit_once('_')
                    .and_then(|(name, proc_)| {
                        let p = match proc_ {
                            "alpha" => &mut self.priors.alpha,
                            "beta" => &mut self.priors.beta,
                            _ => return None,
                        };
                        prior_slot(p, name)
                    })
                    .ok_or_else(|| Error::Config(format!("unknown config key '{key}'")))?;
                *slot = parse(key, v)?;
            }
        }
        self.hmc.seed = self.seed;
        Ok(())
    }

    /// Checks ranges and that every referenced input exists.
    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        self.priors.validate().map_err(cfg)?;
        self.hmc.validate().map_err(cfg)?;
        self.schedule.validate().map_err(cfg)?;
        if self.pl.ensemble_size < 2 {
            return Err(Error::Config("ensemble_size must be at least 2".into()));
        }
        if self.pl.settings.t_max < 1 {
            return Err(Error::Config("pl_iterations must be at least 1".into()));
        }
        if self.pl.n_predictive < 1 {
            return Err(Error::Config("n_predictive must be at least 1".into()));
        }
        if !(self.y_max > 0.0 && self.y_max.is_finite()) {
            return Err(Error::Config("y_max must be positive".into()));
        }
        if self.grid_size < 1 {
            return Err(Error::Config("grid_size must be at least 1".into()));
        }
        let need = |p: &Option<PathBuf>, key: &str| -> Result<()> {
            match p {
                None => Err(Error::Config(format!("mode '{}' requires '{key}'", self.mode.as_str()))),
                Some(p) if !p.exists() => Err(Error::Config(format!("{key} '{}' does not exist", p.display()))),
                Some(_) => Ok(()),
            }
        };
        // Input paths are checked only by the modes that read them.
        match self.mode {
            RunMode::Simulate => {
                if self.preset == Preset::YoungsModulus {
                    need(&self.mean_file, "mean_file")?;
                } else if self.preset != Preset::Synthetic {
                    return Err(Error::Config("simulate supports the synthetic and youngs-modulus presets".into()));
                }
            }
            RunMode::Predict => {
                need(&self.result_dir, "result_dir")?;
                need(&self.test_grid, "test_grid")?;
            }
            _ => {
                match (&self.dataset, &self.spectrum) {
                    (Some(_), None) => need(&self.dataset, "dataset")?,
                    (None, Some(_)) => need(&self.spectrum, "spectrum")?,
                    _ => return Err(Error::Config("exactly one of 'dataset' or 'spectrum' must be set".into())),
                }
            }
        }
        Ok(())
    }

    /// Canonical text form; parsing it reproduces this configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("mode", self.mode.as_str().into());
        put("preset", self.preset.as_str().into());
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        for (k, p) in [
            ("dataset", &self.dataset),
            ("spectrum", &self.spectrum),
            ("mean_file", &self.mean_file),
            ("result_dir", &self.result_dir),
            ("test_grid", &self.test_grid),
        ] {
            if let Some(v) = opt(p) {
                put(k, v);
            }
        }
        put("cutoff", format!("{:?}", self.cutoff));
        put("y_max", format!("{:?}", self.y_max));
        put("grid_size", self.grid_size.to_string());
        for (proc_, p) in [("alpha", &self.priors.alpha), ("beta", &self.priors.beta)] {
            let mut p = p.clone();
            for name in PRIOR_KEYS {
                let v = *prior_slot(&mut p, name).expect("known key");
                put(&format!("{name}_{proc_}"), format!("{v:?}"));
            }
        }
        put("ensemble_size", self.pl.ensemble_size.to_string());
        put("pl_iterations", self.pl.settings.t_max.to_string());
        put(
            "pl_tol",
            self.pl.settings.tol.map_or("none".into(), |t| format!("{t:?}")),
        );
        put("n_predictive", self.pl.n_predictive.to_string());
        put("n_samples", self.hmc.n_samples.to_string());
        put("n_warmup", self.hmc.n_warmup.to_string());
        put("target_accept", format!("{:?}", self.hmc.target_accept));
        put("max_tree_depth", self.hmc.max_tree_depth.to_string());
        put("initial_step_size", format!("{:?}", self.hmc.initial_step_size));
        put(
            "mass_matrix",
            match self.hmc.mass_matrix {
                MassMatrixMode::Identity => "identity".into(),
                MassMatrixMode::Diagonal => "diagonal".into(),
            },
        );
        let st = &self.schedule.steps;
        put("kappa", join(&st.iter().map(|s| format!("{:?}", s.kappa)).collect::<Vec<_>>()));
        put("temper_samples", join(&st.iter().map(|s| s.n_samples).collect::<Vec<_>>()));
        put("temper_warmup", join(&st.iter().map(|s| s.n_warmup).collect::<Vec<_>>()));
        put("seed", self.seed.to_string());
        put("output_dir", self.output_dir.display().to_string());
        put("workers", self.workers.to_string());
        put("n_draws", self.n_draws.to_string());
        s
    }

    pub fn pl_settings(&self) -> PlSettings {
        self.pl.settings
    }
}

/// Splits `key = value` lines. Duplicate keys are rejected.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", i + 1)))?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if out.iter().any(|(x, _)| *x == k) {
            return Err(Error::Config(format!("line {}: duplicate key '{k}'", i + 1)));
        }
        out.push((k, v));
    }
    Ok(out)
}
