//! Inference modes and predictive sampling.

mod fit;
mod predict;
mod simulate;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp_core::{InputGrid, KernelParams};
use crate::linearization::{MomentState, PlSettings, TraceEntry};
use crate::sampler::diagnostics::quantile;
use crate::sampler::{Chain, ParamSummary};

pub use fit::{fit_direct_hmc, fit_pl_approx, fit_pl_tempered};
pub use predict::{predict_data, predict_latent, PredictiveDraws};
pub use simulate::{simulate_lggp, simulate_youngs_modulus, GroundTruth};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Hmc,
    HmcShort,
    Pl,
    PlTempered,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Hmc => "hmc",
            Mode::HmcShort => "hmc-short",
            Mode::Pl => "pl",
            Mode::PlTempered => "pl-tempered",
        }
    }
}

/// One tempering step: weight on the exact posterior and its chain budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperStep {
    pub kappa: f64,
    pub n_samples: usize,
    pub n_warmup: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperSchedule {
    pub steps: Vec<TemperStep>,
}

impl Default for TemperSchedule {
    /// `κ = (0, 1/2, 1)`; 100 tuning steps for the first two, 1000/1000 for
    /// the last. Intermediate steps keep a single draw.
    fn default() -> Self {
        Self::new(&[0.0, 0.5, 1.0], &[(1, 100), (1, 100), (1000, 1000)])
            .expect("default schedule is valid")
    }
}

impl TemperSchedule {
    /// `budgets[i] = (n_samples, n_warmup)` for `kappas[i]`.
    pub fn new(kappas: &[f64], budgets: &[(usize, usize)]) -> Result<Self> {
        if kappas.len() != budgets.len() {
            return Err(Error::invalid("one budget per tempering weight is required"));
        }
        let s = Self {
            steps: kappas
                .iter()
                .zip(budgets)
                .map(|(&kappa, &(n_samples, n_warmup))| TemperStep {
                    kappa,
                    n_samples,
                    n_warmup,
                })
                .collect(),
        };
        s.validate()?;
        Ok(s)
    }

    /// The schedule must end at exactly 1, increase strictly, and start at
    /// exactly 0 unless it has a single step.
    pub fn validate(&self) -> Result<()> {
        let k: Vec<f64> = self.steps.iter().map(|s| s.kappa).collect();
        if k.is_empty() || *k.last().unwrap() != 1.0 {
            return Err(Error::invalid("tempering schedule must end at κ = 1"));
        }
        if k.len() > 1 && k[0] != 0.0 {
            return Err(Error::invalid("tempering schedule must start at κ = 0"));
        }
        if k.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid(format!(
                "tempering weights must increase strictly: {k:?}"
            )));
        }
        if self.steps.iter().any(|s| s.n_samples < 1) {
            return Err(Error::invalid("every tempering step needs at least one draw"));
        }
        Ok(())
    }

    pub fn kappas(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.kappa).collect()
    }
}

/// Settings of the linearization stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlConfig {
    pub ensemble_size: usize,
    pub settings: PlSettings,
    /// Draws from `N(m⁽ᵀ⁾, P⁽ᵀ⁾)` used for prediction in approximate mode.
    pub n_predictive: usize,
}

impl Default for PlConfig {
    fn default() -> Self {
        Self {
            ensemble_size: 10_000,
            settings: PlSettings::default(),
            n_predictive: 10_000,
        }
    }
}

/// Per-location mean and equal-tailed 90% band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSummary {
    pub mean: Vec<f64>,
    pub q05: Vec<f64>,
    pub q50: Vec<f64>,
    pub q95: Vec<f64>,
}

impl LatentSummary {
    /// Column-wise summary of an `n × K` draw matrix.
    pub fn from_draws(draws: &DMatrix<f64>) -> Self {
        let k = draws.ncols();
        let mut s = Self {
            mean: Vec::with_capacity(k),
            q05: Vec::with_capacity(k),
            q50: Vec::with_capacity(k),
            q95: Vec::with_capacity(k),
        };
        for c in 0..k {
            let mut col: Vec<f64> = draws.column(c).iter().copied().collect();
            s.mean.push(col.iter().sum::<f64>() / col.len().max(1) as f64);
            col.sort_by(f64::total_cmp);
            s.q05.push(quantile(&col, 0.05));
            s.q50.push(quantile(&col, 0.5));
            s.q95.push(quantile(&col, 0.95));
        }
        s
    }

    /// Exact marginal quantiles of `N(m, diag(p))`.
    pub fn gaussian(m: &DVector<f64>, var: &DVector<f64>) -> Self {
        use statrs::distribution::{ContinuousCDF, Normal};
        let z = Normal::standard().inverse_cdf(0.95);
        let sd: Vec<f64> = var.iter().map(|v| v.max(0.0).sqrt()).collect();
        Self {
            mean: m.iter().copied().collect(),
            q05: m.iter().zip(&sd).map(|(m, s)| m - z * s).collect(),
            q50: m.iter().copied().collect(),
            q95: m.iter().zip(&sd).map(|(m, s)| m + z * s).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn mean_band_width(&self) -> f64 {
        let n = self.len().max(1) as f64;
        self.q05.iter().zip(&self.q95).map(|(a, b)| b - a).sum::<f64>() / n
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WallTimes {
    pub pl: f64,
    pub warmup: f64,
    pub sampling: f64,
    pub prediction: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub divergences: usize,
    pub warmup_divergences: usize,
    pub mean_accept: f64,
    pub step_size: f64,
    pub n_grad_evals: usize,
    pub max_depth_hits: usize,
}

impl ChainDiagnostics {
    pub fn from_chain(chain: &Chain, max_depth: usize) -> Self {
        let n = chain.accept_stats.len().max(1) as f64;
        Self {
            divergences: chain.divergences,
            warmup_divergences: chain.warmup_divergences,
            mean_accept: chain.accept_stats.iter().sum::<f64>() / n,
            step_size: chain.step_size,
            n_grad_evals: chain.n_grad_evals,
            max_depth_hits: chain.tree_depths.iter().filter(|&&d| d >= max_depth).count(),
        }
    }
}

/// Moments from the linearization stage kept with the result.
#[derive(Debug, Clone)]
pub struct PlOutput {
    pub state: MomentState,
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone)]
pub struct InferenceResult {
    pub mode: Mode,
    pub seed: u64,
    pub grid: InputGrid,
    /// `n × K` latent draws. In approximate mode these come from the
    /// Gaussian approximation; otherwise they are posterior samples.
    pub alpha_draws: DMatrix<f64>,
    pub beta_draws: DMatrix<f64>,
    pub alpha: LatentSummary,
    pub beta: LatentSummary,
    pub hyper_names: Vec<String>,
    /// `n × 2(3 + D)` constrained hyperparameter draws, α block first.
    pub hyper_draws: DMatrix<f64>,
    pub hypers: Vec<ParamSummary>,
    pub predictive: Option<LatentSummary>,
    pub diagnostics: Vec<(String, ChainDiagnostics)>,
    pub timing: WallTimes,
    pub pl: Option<PlOutput>,
}

impl InferenceResult {
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn total_divergences(&self) -> usize {
        self.diagnostics.iter().map(|(_, d)| d.divergences).sum()
    }

    /// Hyperparameters of draw `i`, or the posterior means in approximate
    /// mode.
    pub fn kernel_params(&self, i: usize) -> (KernelParams, KernelParams) {
        let row: Vec<f64> = if self.mode == Mode::Pl {
            self.hypers.iter().map(|s| s.mean).collect()
        } else {
            self.hyper_draws.row(i % self.hyper_draws.nrows()).iter().copied().collect()
        };
        split_hyper_row(&row, self.dim())
    }
}

pub fn hyper_names(d: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(2 * (3 + d));
    for p in ["alpha", "beta"] {
        names.push(format!("mu_{p}"));
        names.push(format!("sigma_e_{p}"));
        names.push(format!("sigma_s_{p}"));
        for i in 1..=d {
            names.push(format!("l_{p}_{i}"));
        }
    }
    names
}

/// Constrained hyperparameters in [`hyper_names`] order.
pub fn hyper_row(a: &KernelParams, b: &KernelParams) -> Vec<f64> {
    let mut row = Vec::with_capacity(2 * (3 + a.dim()));
    for p in [a, b] {
        row.extend([p.mean, p.noise_std, p.signal_std]);
        row.extend(&p.length_scales);
    }
    row
}

pub(crate) fn split_hyper_row(row: &[f64], d: usize) -> (KernelParams, KernelParams) {
    let one = |r: &[f64]| KernelParams {
        mean: r[0],
        noise_std: r[1],
        signal_std: r[2],
        length_scales: r[3..3 + d].to_vec(),
    };
    (one(&row[..3 + d]), one(&row[3 + d..]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule() {
        let s = TemperSchedule::default();
        assert_eq!(s.kappas(), vec![0.0, 0.5, 1.0]);
        let warm: Vec<usize> = s.steps.iter().map(|s| s.n_warmup).collect();
        assert_eq!(warm, vec![100, 100, 1000]);
        assert_eq!(s.steps[2].n_samples, 1000);
    }

    #[test]
    fn schedule_validation() {
        assert!(TemperSchedule::new(&[0.0, 0.5, 0.5, 1.0], &[(1, 1); 4]).is_err());
        assert!(TemperSchedule::new(&[0.1, 1.0], &[(1, 1); 2]).is_err());
        assert!(TemperSchedule::new(&[0.0, 0.9], &[(1, 1); 2]).is_err());
        assert!(TemperSchedule::new(&[1.0], &[(10, 10)]).is_ok());
        assert!(TemperSchedule::new(&[0.0, 1.0], &[(1, 1)]).is_err());
    }

    #[test]
    fn summary_from_draws() {
        let d = DMatrix::from_fn(101, 2, |i, j| (i as f64) * if j == 0 { 1.0 } else { -1.0 });
        let s = LatentSummary::from_draws(&d);
        assert_eq!(s.mean[0], 50.0);
        assert_eq!(s.q05[0], 5.0);
        assert_eq!(s.q95[0], 95.0);
        assert_eq!(s.q50[1], -50.0);
        assert!(s.q05[1] <= s.q50[1] && s.q50[1] <= s.q95[1]);
    }

    #[test]
    fn gaussian_summary_band() {
        let s = LatentSummary::gaussian(&DVector::from_vec(vec![1.0]), &DVector::from_vec(vec![4.0]));
        assert!((s.q95[0] - (1.0 + 2.0 * 1.6448536269514722)).abs() < 1e-12);
        assert!((s.mean_band_width() - 4.0 * 1.6448536269514722).abs() < 1e-12);
    }

    #[test]
    fn hyper_row_round_trip() {
        let a = KernelParams::new(1.0, 0.1, 2.0, vec![0.3, 0.4]).unwrap();
        let b = KernelParams::new(-1.0, 0.2, 3.0, vec![0.5, 0.6]).unwrap();
        let row = hyper_row(&a, &b);
        assert_eq!(row.len(), hyper_names(2).len());
        let (a2, b2) = split_hyper_row(&row, 2);
        assert_eq!((a2, b2), (a, b));
    }
}
