//! Packing of the full parameter set into one unconstrained vector.
//!
//! Layout (length `2K + 2D + 6`):
//!
//! ```text
//! [ α_1..α_K | β_1..β_K | μ_α, ln σ_αe, ln σ_αs, ln(l_α,d − B_α)… | μ_β, ln σ_βe, ln σ_βs, ln(l_β,d − B_β)… ]
//! ```

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::gp_core::KernelParams;

use super::priors::{HyperPriorSpec, ProcessPrior};
use super::LatentState;

/// Index arithmetic for the packed vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub k: usize,
    pub d: usize,
}

impl ParamLayout {
    pub fn new(k: usize, d: usize) -> Self {
        Self { k, d }
    }

    pub fn len(&self) -> usize {
        2 * self.k + 2 * self.d + 6
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn hyper_len(&self) -> usize {
        3 + self.d
    }

    pub fn alpha(&self) -> std::ops::Range<usize> {
        0..self.k
    }

    pub fn beta(&self) -> std::ops::Range<usize> {
        self.k..2 * self.k
    }

    pub fn latents(&self) -> std::ops::Range<usize> {
        0..2 * self.k
    }

    pub fn alpha_hypers(&self) -> std::ops::Range<usize> {
        2 * self.k..2 * self.k + self.hyper_len()
    }

    pub fn beta_hypers(&self) -> std::ops::Range<usize> {
        let s = 2 * self.k + self.hyper_len();
        s..s + self.hyper_len()
    }

    pub fn hypers(&self) -> std::ops::Range<usize> {
        2 * self.k..self.len()
    }

    pub fn pack(
        &self,
        state: &LatentState,
        alpha: &KernelParams,
        beta: &KernelParams,
        spec: &HyperPriorSpec,
    ) -> Result<ParamVector> {
        if state.alpha.len() != self.k || state.beta.len() != self.k {
            return Err(Error::invalid("latent state length does not match layout"));
        }
        if alpha.dim() != self.d || beta.dim() != self.d {
            return Err(Error::invalid("kernel dimension does not match layout"));
        }
        let mut v = Vec::with_capacity(self.len());
        v.extend(state.alpha.iter());
        v.extend(state.beta.iter());
        v.extend(to_unconstrained(alpha, spec.alpha.length_lower)?);
        v.extend(to_unconstrained(beta, spec.beta.length_lower)?);
        Ok(ParamVector(v))
    }

    /// Splits a packed vector into constrained values plus the log-Jacobian
    /// of the unconstrained-to-constrained map.
    pub fn unpack(&self, packed: &[f64], spec: &HyperPriorSpec) -> Result<Unpacked> {
        if packed.len() != self.len() {
            return Err(Error::invalid(format!(
                "packed vector has length {}, expected {}",
                packed.len(),
                self.len()
            )));
        }
        let state = LatentState::new(
            DVector::from_column_slice(&packed[self.alpha()]),
            DVector::from_column_slice(&packed[self.beta()]),
        );
        let (alpha, ja) = to_constrained(&packed[self.alpha_hypers()], spec.alpha.length_lower)?;
        let (beta, jb) = to_constrained(&packed[self.beta_hypers()], spec.beta.length_lower)?;
        Ok(Unpacked {
            state,
            alpha,
            beta,
            log_jacobian: ja + jb,
        })
    }
}

/// Packed unconstrained parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone)]
pub struct Unpacked {
    pub state: LatentState,
    pub alpha: KernelParams,
    pub beta: KernelParams,
    pub log_jacobian: f64,
}

/// `(μ, σ_e, σ_s, l) ↦ (μ, ln σ_e, ln σ_s, ln(l − B))`.
pub fn to_unconstrained(params: &KernelParams, lower: f64) -> Result<Vec<f64>> {
    params.validate()?;
    if params.length_scales.iter().any(|&l| l <= lower) {
        return Err(Error::invalid(format!(
            "length scales {:?} must exceed the lower bound {lower}",
            params.length_scales
        )));
    }
    let mut u = vec![params.mean, params.noise_std.ln(), params.signal_std.ln()];
    u.extend(params.length_scales.iter().map(|&l| (l - lower).ln()));
    Ok(u)
}

/// Inverse of [`to_unconstrained`]; also returns `ln |∂constrained/∂u|`,
/// which for each log-type coordinate is the coordinate itself.
pub fn to_constrained(u: &[f64], lower: f64) -> Result<(KernelParams, f64)> {
    if u.len() < 4 {
        return Err(Error::invalid("hyperparameter block needs at least 4 entries"));
    }
    let params = KernelParams {
        mean: u[0],
        noise_std: u[1].exp(),
        signal_std: u[2].exp(),
        length_scales: u[3..].iter().map(|&v| lower + v.exp()).collect(),
    };
    params.validate()?;
    let log_jac = u[1..].iter().sum();
    Ok((params, log_jac))
}

/// Chain rule from constrained partials `(∂μ, ∂σ_e, ∂σ_s, ∂l…)` to the
/// unconstrained block, adding the log-Jacobian gradient (1 per log coordinate).
pub(crate) fn chain_to_unconstrained(
    constrained_grad: &[f64],
    params: &KernelParams,
    prior: &ProcessPrior,
    out: &mut [f64],
) {
    out[0] = constrained_grad[0];
    out[1] = constrained_grad[1] * params.noise_std + 1.0;
    out[2] = constrained_grad[2] * params.signal_std + 1.0;
    for (d, &l) in params.length_scales.iter().enumerate() {
        out[3 + d] = constrained_grad[3 + d] * (l - prior.length_lower) + 1.0;
    }
}
