//! Gamma observation model in the shape/rate parameterization with log-shape
//! `α` and log-rate `β`: `y ~ Gamma(a = e^α, rate b = e^β)`, mean `e^{α−β}`.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};

use super::{Dataset, LatentState};

fn check(dataset: &Dataset, state: &LatentState) -> Result<()> {
    let k = dataset.len();
    if state.alpha.len() != k || state.beta.len() != k {
        return Err(Error::invalid(format!(
            "latent state has lengths ({}, {}), dataset has {k} observations",
            state.alpha.len(),
            state.beta.len()
        )));
    }
    Ok(())
}

/// Log-likelihood term of a single observation given `ln y`.
#[inline]
pub(crate) fn gamma_loglik_point(alpha: f64, beta: f64, y: f64, ln_y: f64) -> f64 {
    let a = alpha.exp();
    let b = beta.exp();
    a * beta - ln_gamma(a) + (a - 1.0) * ln_y - b * y
}

/// `Σ_k [a_k β_k − ln Γ(a_k) + (a_k − 1) ln y_k − b_k y_k]`.
pub fn gamma_loglik(dataset: &Dataset, state: &LatentState) -> Result<f64> {
    check(dataset, state)?;
    Ok(dataset
        .y
        .iter()
        .zip(dataset.ln_y.iter())
        .enumerate()
        .map(|(k, (&y, &ly))| gamma_loglik_point(state.alpha[k], state.beta[k], y, ly))
        .sum())
}

/// Gradient of [`gamma_loglik`] with respect to α and β.
pub fn gamma_loglik_grad(
    dataset: &Dataset,
    state: &LatentState,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check(dataset, state)?;
    let k = dataset.len();
    let mut da = DVector::zeros(k);
    let mut db = DVector::zeros(k);
    for i in 0..k {
        let (g_a, g_b) = gamma_point_grad(state.alpha[i], state.beta[i], dataset.y[i], dataset.ln_y[i]);
        da[i] = g_a;
        db[i] = g_b;
    }
    Ok((da, db))
}

#[inline]
pub(crate) fn gamma_point_grad(alpha: f64, beta: f64, y: f64, ln_y: f64) -> (f64, f64) {
    let a = alpha.exp();
    (a * (beta - digamma(a) + ln_y), a - beta.exp() * y)
}

/// One draw from the observation model. Tiny shapes can underflow to zero;
/// those draws are clamped to the smallest positive normal number.
pub fn sample_gamma<R: Rng + ?Sized>(alpha: f64, beta: f64, rng: &mut R) -> f64 {
    let shape = alpha.exp();
    let scale = (-beta).exp();
    match Gamma::new(shape, scale) {
        Ok(g) => g.sample(rng).max(f64::MIN_POSITIVE),
        Err(_) => f64::NAN,
    }
}
