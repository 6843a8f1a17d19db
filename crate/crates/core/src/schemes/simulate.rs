use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gp_core::{add_noise_diag, se_covariance, Cholesky, InputGrid, JitterSchedule, KernelParams};
use crate::model::{sample_gamma, Dataset, LatentState};
use crate::rng::stream;

const TAG_SIM: u64 = 300;

/// Hyperparameters used to generate a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub alpha: KernelParams,
    pub beta: KernelParams,
}

impl GroundTruth {
    /// `(μ, l, σ_s) = (2, 0.05, 1)` for the log-shape field and `(1, 0.5, 1)`
    /// for the log-rate field, with `σ_e = 10⁻³` for both.
    pub fn synthetic() -> Self {
        Self {
            alpha: KernelParams::new(2.0, 1e-3, 1.0, vec![0.05]).expect("valid"),
            beta: KernelParams::new(1.0, 1e-3, 1.0, vec![0.5]).expect("valid"),
        }
    }
}

fn draw_field<R: Rng + ?Sized>(grid: &InputGrid, p: &KernelParams, rng: &mut R) -> Result<DVector<f64>> {
    let cov = add_noise_diag(se_covariance(grid, grid, p)?, p.noise_std)?;
    let chol = Cholesky::factor(cov.matrix(), &JitterSchedule::default())?;
    let z: Vec<f64> = (0..grid.len()).map(|_| rng.sample(StandardNormal)).collect();
    Ok(chol.correlate(&z).add_scalar(p.mean))
}

fn observe<R: Rng + ?Sized>(grid: &InputGrid, truth: &LatentState, rng: &mut R) -> Result<Dataset> {
    let y = DVector::from_fn(grid.len(), |i, _| sample_gamma(truth.alpha[i], truth.beta[i], rng));
    Dataset::new(grid.clone(), y)
}

/// Draws both latent fields from their GP priors and one observation per
/// location.
pub fn simulate_lggp(grid: &InputGrid, truth: &GroundTruth, seed: u64) -> Result<(Dataset, LatentState)> {
    truth.alpha.validate()?;
    truth.beta.validate()?;
    let mut rng = stream(seed, &[TAG_SIM]);
    let alpha = draw_field(grid, &truth.alpha, &mut rng)?;
    let beta = draw_field(grid, &truth.beta, &mut rng)?;
    let state = LatentState::new(alpha, beta);
    let data = observe(grid, &state, &mut rng)?;
    Ok((data, state))
}

/// Constant rate `e^β = 1000` and shape `1000 · mean`, so `E[y] = mean`.
pub fn simulate_youngs_modulus(
    grid: &InputGrid,
    mean: &DVector<f64>,
    seed: u64,
) -> Result<(Dataset, LatentState)> {
    if mean.len() != grid.len() {
        return Err(Error::invalid("mean vector length does not match the grid"));
    }
    if let Some((i, v)) = mean.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Validation(format!("mean value {} is {v}, must be positive", i + 1)));
    }
    let rate = 1000.0f64;
    let state = LatentState::new(mean.map(|m| (m * rate).ln()), DVector::from_element(mean.len(), rate.ln()));
    let mut rng = stream(seed, &[TAG_SIM, 1]);
    let data = observe(grid, &state, &mut rng)?;
    Ok((data, state))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_preset_values() {
        let t = GroundTruth::synthetic();
        assert_eq!((t.alpha.mean, t.alpha.length_scales[0], t.alpha.signal_std), (2.0, 0.05, 1.0));
        assert_eq!((t.beta.mean, t.beta.length_scales[0], t.beta.signal_std), (1.0, 0.5, 1.0));
        let (d, s) = simulate_lggp(&InputGrid::uniform_1d(128), &t, 1).unwrap();
        assert_eq!(d.len(), 128);
        assert_eq!(s.alpha.len(), 128);
    }

    #[test]
    fn degenerate_gp_is_constant() {
        let t = GroundTruth {
            alpha: KernelParams::new(2.0, 1e-12, 1e-12, vec![0.1]).unwrap(),
            beta: KernelParams::new(1.0, 1e-12, 1e-12, vec![0.1]).unwrap(),
        };
        let (_, s) = simulate_lggp(&InputGrid::uniform_1d(10), &t, 4).unwrap();
        assert!(s.alpha.iter().all(|v| (v - 2.0).abs() < 1e-9));
        assert!(s.beta.iter().all(|v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn youngs_modulus_mean() {
        let grid = InputGrid::uniform_1d(4);
        let mean = DVector::from_vec(vec![2.0, 3.0, 4.0, 5.0]);
        let (_, s) = simulate_youngs_modulus(&grid, &mean, 0).unwrap();
        for i in 0..4 {
            assert!(((s.alpha[i] - s.beta[i]).exp() - mean[i]).abs() < 1e-12);
            assert!((s.beta[i].exp() - 1000.0).abs() < 1e-9);
        }
    }
}
