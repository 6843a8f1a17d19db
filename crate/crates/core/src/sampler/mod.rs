//! No-U-Turn Hamiltonian Monte Carlo for any differentiable log-density.

pub mod diagnostics;
mod nuts;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use diagnostics::{ess, quantile, summarize, ParamSummary};
pub use nuts::{
    kinetic_energy, leapfrog, nuts_draw, run_chain, run_chain_from, Chain, DualAveraging,
    PhaseState, TransitionStats, WarmStart,
};

/// A log-density with gradient. A non-finite return value marks a point
/// outside the support; the sampler treats it as a divergence.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

impl<T: LogDensity + ?Sized> LogDensity for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (**self).log_density_grad(x, grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MassMatrixMode {
    Identity,
    Diagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmcConfig {
    pub n_samples: usize,
    pub n_warmup: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub mass_matrix: MassMatrixMode,
    pub seed: u64,
    pub initial_step_size: f64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            n_warmup: 1000,
            target_accept: 0.99,
            max_tree_depth: 10,
            mass_matrix: MassMatrixMode::Identity,
            seed: 0,
            initial_step_size: 0.1,
        }
    }
}

impl HmcConfig {
    /// 20 000 draws after 10 000 tuning steps. The joint-posterior budgets
    /// adapt a diagonal mass matrix.
    pub fn long(seed: u64) -> Self {
        Self {
            n_samples: 20_000,
            n_warmup: 10_000,
            mass_matrix: MassMatrixMode::Diagonal,
            seed,
            ..Self::default()
        }
    }

    /// 1000 draws after 1200 tuning steps.
    pub fn short(seed: u64) -> Self {
        Self {
            n_samples: 1000,
            n_warmup: 1200,
            mass_matrix: MassMatrixMode::Diagonal,
            seed,
            ..Self::default()
        }
    }

    /// Final tempering step: 1000 draws after 1000 tuning steps.
    pub fn tempered_final(seed: u64) -> Self {
        Self {
            n_samples: 1000,
            n_warmup: 1000,
            mass_matrix: MassMatrixMode::Diagonal,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 1 {
            return Err(Error::invalid("n_samples must be at least 1"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::invalid(format!(
                "target_accept {} must lie in (0, 1)",
                self.target_accept
            )));
        }
        if !(1..=15).contains(&self.max_tree_depth) {
            return Err(Error::invalid(format!(
                "max_tree_depth {} must lie in [1, 15]",
                self.max_tree_depth
            )));
        }
        if !(self.initial_step_size > 0.0 && self.initial_step_size.is_finite()) {
            return Err(Error::invalid("initial_step_size must be positive"));
        }
        Ok(())
    }
}

/// Restricts a target to a subset of coordinates, holding the rest at
/// `base`.
pub struct Subspace<'a, T: LogDensity + ?Sized> {
    inner: &'a T,
    base: Vec<f64>,
    free: Vec<usize>,
}

impl<'a, T: LogDensity + ?Sized> Subspace<'a, T> {
    pub fn new(inner: &'a T, base: Vec<f64>, free: Vec<usize>) -> Result<Self> {
        if base.len() != inner.dim() || free.iter().any(|&i| i >= base.len()) {
            return Err(Error::invalid("subspace indices out of range"));
        }
        Ok(Self { inner, base, free })
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| full[i]).collect()
    }

    pub fn embed(&self, x: &[f64]) -> Vec<f64> {
        let mut full = self.base.clone();
        for (&i, &v) in self.free.iter().zip(x) {
            full[i] = v;
        }
        full
    }
}

impl<T: LogDensity + ?Sized> LogDensity for Subspace<'_, T> {
    fn dim(&self) -> usize {
        self.free.len()
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let full = self.embed(x);
        let mut g = vec![0.0; full.len()];
        let lp = self.inner.log_density_grad(&full, &mut g);
        for (slot, &i) in grad.iter_mut().zip(&self.free) {
            *slot = g[i];
        }
        lp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let l = HmcConfig::long(1);
        assert_eq!((l.n_samples, l.n_warmup), (20_000, 10_000));
        let s = HmcConfig::short(1);
        assert_eq!((s.n_samples, s.n_warmup), (1000, 1200));
        assert_eq!(s.target_accept, 0.99);
        assert_eq!(s.max_tree_depth, 10);
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = [
            HmcConfig { n_samples: 0, ..HmcConfig::default() },
            HmcConfig { target_accept: 1.0, ..HmcConfig::default() },
            HmcConfig { max_tree_depth: 16, ..HmcConfig::default() },
            HmcConfig { max_tree_depth: 0, ..HmcConfig::default() },
            HmcConfig { initial_step_size: 0.0, ..HmcConfig::default() },
        ];
        for c in &bad {
            assert!(c.validate().is_err());
        }
    }
}
