//! The log-Gaussian gamma process: gamma observations whose log-shape `α`
//! and log-rate `β` are latent Gaussian-process fields.

pub mod likelihood;
pub mod params;
pub mod posterior;
pub mod priors;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::gp_core::InputGrid;

pub use likelihood::{gamma_loglik, gamma_loglik_grad, sample_gamma};
pub use params::{to_constrained, to_unconstrained, ParamLayout, ParamVector, Unpacked};
pub use posterior::{
    joint_logpost, joint_logpost_grad, surrogate_logpost, tempered_logpost, JointPosterior, SurrogateBlock,
    SurrogatePosterior, TemperedPosterior,
};
pub use priors::{hyperprior_logpdf, HyperPriorSpec, ProcessPrior};

/// Observations on a grid. `ln_y` is cached because every likelihood
/// evaluation needs it.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub grid: InputGrid,
    pub y: DVector<f64>,
    pub ln_y: DVector<f64>,
}

impl Dataset {
    pub fn new(grid: InputGrid, y: DVector<f64>) -> Result<Self> {
        if grid.len() != y.len() {
            return Err(Error::invalid(format!(
                "grid has {} points but {} observations were given",
                grid.len(),
                y.len()
            )));
        }
        if let Some((k, v)) = y.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Validation(format!(
                "observation {} is {v}; all observations must be positive and finite",
                k + 1
            )));
        }
        let ln_y = y.map(f64::ln);
        Ok(Self { grid, y, ln_y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Same grid, different observations.
    pub fn with_y(&self, y: DVector<f64>) -> Result<Self> {
        Self::new(self.grid.clone(), y)
    }
}

/// Log-shape and log-rate values at the observation locations.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
}

impl LatentState {
    pub fn new(alpha: DVector<f64>, beta: DVector<f64>) -> Self {
        Self { alpha, beta }
    }

    /// Splits a stacked `(α, β)` vector.
    pub fn from_stacked(v: &DVector<f64>) -> Result<Self> {
        if v.len() % 2 != 0 {
            return Err(Error::invalid("stacked latent vector must have even length"));
        }
        let k = v.len() / 2;
        Ok(Self::new(v.rows(0, k).into_owned(), v.rows(k, k).into_owned()))
    }

    pub fn stacked(&self) -> DVector<f64> {
        let k = self.alpha.len();
        let mut v = DVector::zeros(2 * k);
        v.rows_mut(0, k).copy_from(&self.alpha);
        v.rows_mut(k, self.beta.len()).copy_from(&self.beta);
        v
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.iter().chain(self.beta.iter()).all(|v| v.is_finite())
    }
}
