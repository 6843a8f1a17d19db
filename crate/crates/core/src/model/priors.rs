//! Hyperparameter priors: normal for the GP mean, half-normal for the noise
//! and signal standard deviations, lower-truncated normal for length scales.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::gp_core::{KernelParams, LN_2PI};

/// Prior parameters for one latent process (either the log-shape or the
/// log-rate field).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessPrior {
    /// Normal prior on the constant mean: location and standard deviation.
    pub mean_loc: f64,
    pub mean_scale: f64,
    /// Half-normal scale for σ_e.
    pub noise_scale: f64,
    /// Half-normal scale for σ_s.
    pub signal_scale: f64,
    /// Truncated normal on every length scale: location, scale, lower bound.
    pub length_loc: f64,
    pub length_scale: f64,
    pub length_lower: f64,
}

impl ProcessPrior {
    pub fn validate(&self) -> Result<()> {
        let scales = [
            self.mean_scale,
            self.noise_scale,
            self.signal_scale,
            self.length_scale,
        ];
        if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid(format!("prior scales must be > 0: {self:?}")));
        }
        if !(self.length_lower >= 0.0) || !self.length_lower.is_finite() {
            return Err(Error::invalid("length-scale lower bound must be >= 0"));
        }
        if !self.mean_loc.is_finite() || !self.length_loc.is_finite() {
            return Err(Error::invalid("prior locations must be finite"));
        }
        Ok(())
    }

    /// Medians of each marginal prior.
    pub fn median(&self, dim: usize) -> KernelParams {
        let half_normal_median = Normal::standard().inverse_cdf(0.75);
        KernelParams {
            mean: self.mean_loc,
            noise_std: self.noise_scale * half_normal_median,
            signal_std: self.signal_scale * half_normal_median,
            length_scales: vec![
                truncated_normal_quantile(
                    0.5,
                    self.length_loc,
                    self.length_scale,
                    self.length_lower
                );
                dim
            ],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> KernelParams {
        let z: f64 = rng.sample(StandardNormal);
        let mean = self.mean_loc + self.mean_scale * z;
        let mut half = |scale: f64| {
            let z: f64 = rng.sample(StandardNormal);
            (scale * z).abs()
        };
        let noise_std = half(self.noise_scale);
        let signal_std = half(self.signal_scale);
        let length_scales = (0..dim)
            .map(|_| {
                let u: f64 = rng.random();
                truncated_normal_quantile(u, self.length_loc, self.length_scale, self.length_lower)
            })
            .collect();
        KernelParams {
            mean,
            noise_std,
            signal_std,
            length_scales,
        }
    }
}

/// Priors for both latent processes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperPriorSpec {
    pub alpha: ProcessPrior,
    pub beta: ProcessPrior,
}

impl HyperPriorSpec {
    pub fn validate(&self) -> Result<()> {
        self.alpha.validate()?;
        self.beta.validate()
    }

    /// Priors used for the synthetic log-Gaussian gamma process dataset.
    pub fn synthetic() -> Self {
        Self {
            alpha: ProcessPrior {
                mean_loc: 2.0,
                mean_scale: 1.0,
                noise_scale: 0.001,
                signal_scale: 0.5,
                length_loc: 0.1,
                length_scale: 0.2,
                length_lower: 0.01,
            },
            beta: ProcessPrior {
                mean_loc: 1.0,
                mean_scale: 0.5,
                noise_scale: 0.001,
                signal_scale: 0.5,
                length_loc: 0.5,
                length_scale: 0.2,
                length_lower: 0.25,
            },
        }
    }

    /// Priors used for the Young's modulus dataset.
    pub fn youngs_modulus() -> Self {
        Self {
            alpha: ProcessPrior {
                mean_loc: 4.0,
                mean_scale: 1.0,
                noise_scale: 0.001,
                signal_scale: 0.5,
                length_loc: 0.5,
                length_scale: 0.2,
                length_lower: 0.01,
            },
            beta: ProcessPrior {
                mean_loc: 4.0,
                mean_scale: 1.0,
                noise_scale: 0.001,
                signal_scale: 0.5,
                length_loc: 0.5,
                length_scale: 0.2,
                length_lower: 0.25,
            },
        }
    }

    /// Priors used for the argentopyrite Raman spectrum.
    pub fn argentopyrite() -> Self {
        Self {
            alpha: ProcessPrior {
                mean_loc: 1.0,
                mean_scale: 0.5,
                noise_scale: 0.001,
                signal_scale: 0.5,
                length_loc: 0.1,
                length_scale: 0.1,
                length_lower: 0.001,
            },
            beta: ProcessPrior {
                mean_loc: 3.0,
                mean_scale: 0.5,
                noise_scale: 0.001,
                signal_scale: 0.5,
                length_loc: 0.5,
                length_scale: 0.2,
                length_lower: 0.025,
            },
        }
    }
}

pub fn normal_logpdf(x: f64, loc: f64, scale: f64) -> f64 {
    let z = (x - loc) / scale;
    -0.5 * LN_2PI - scale.ln() - 0.5 * z * z
}

/// Half-normal density on [0, ∞); `-inf` below zero.
pub fn half_normal_logpdf(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    std::f64::consts::LN_2 + normal_logpdf(x, 0.0, scale)
}

/// Normal density renormalized over [lower, ∞); `-inf` below the bound.
/// `lower = -inf` gives the plain normal density.
pub fn truncated_normal_logpdf(x: f64, loc: f64, scale: f64, lower: f64) -> f64 {
    if x < lower {
        return f64::NEG_INFINITY;
    }
    // P(X >= lower) = ½ erfc((lower − loc) / (scale √2))
    let a = (lower - loc) / scale;
    let tail = 0.5 * erfc(a / std::f64::consts::SQRT_2);
    normal_logpdf(x, loc, scale) - tail.ln()
}

/// Quantile function of the lower-truncated normal, evaluated through the
/// upper tail so that bounds far above the location stay accurate.
pub fn truncated_normal_quantile(p: f64, loc: f64, scale: f64, lower: f64) -> f64 {
    let std = Normal::standard();
    let a = (lower - loc) / scale;
    let upper_mass = 0.5 * erfc(a / std::f64::consts::SQRT_2);
    // X >= lower;  P(X > x) = (1 − p) · upper_mass
    let q = ((1.0 - p) * upper_mass).clamp(f64::MIN_POSITIVE, 1.0);
    let z = -std.inverse_cdf(q);
    (loc + scale * z).max(lower)
}

/// Joint log prior density of one process's (μ, θ). Returns `-inf` when a
/// length scale falls below the truncation bound.
pub fn hyperprior_logpdf(prior: &ProcessPrior, params: &KernelParams) -> f64 {
    let mut lp = normal_logpdf(params.mean, prior.mean_loc, prior.mean_scale)
        + half_normal_logpdf(params.noise_std, prior.noise_scale)
        + half_normal_logpdf(params.signal_std, prior.signal_scale);
    for &l in &params.length_scales {
        lp += truncated_normal_logpdf(l, prior.length_loc, prior.length_scale, prior.length_lower);
    }
    lp
}

/// Partial derivatives of [`hyperprior_logpdf`] with respect to
/// (μ, σ_e, σ_s, l_1..l_D) in constrained coordinates.
pub fn hyperprior_grad(prior: &ProcessPrior, params: &KernelParams) -> Vec<f64> {
    let mut g = Vec::with_capacity(3 + params.dim());
    g.push(-(params.mean - prior.mean_loc) / (prior.mean_scale * prior.mean_scale));
    g.push(-params.noise_std / (prior.noise_scale * prior.noise_scale));
    g.push(-params.signal_std / (prior.signal_scale * prior.signal_scale));
    for &l in &params.length_scales {
        g.push(-(l - prior.length_loc) / (prior.length_scale * prior.length_scale));
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    #[test]
    fn below_bound_is_neg_infinity() {
        let p = HyperPriorSpec::synthetic().alpha;
        let mut k = KernelParams::new(2.0, 0.001, 0.5, vec![p.length_lower + 0.1]).unwrap();
        assert!(hyperprior_logpdf(&p, &k).is_finite());
        k.length_scales[0] = p.length_lower - 1e-9;
        assert_eq!(hyperprior_logpdf(&p, &k), f64::NEG_INFINITY);
    }

    #[test]
    fn half_normal_at_zero() {
        let rho: f64 = 0.37;
        let expect = 2f64.ln() - 0.5 * (2.0 * std::f64::consts::PI * rho * rho).ln();
        assert_relative_eq!(half_normal_logpdf(0.0, rho), expect, epsilon = 1e-14);
    }

    #[test]
    fn untruncated_equals_normal() {
        for &x in &[-3.0, 0.1, 2.5] {
            assert_relative_eq!(
                truncated_normal_logpdf(x, 0.4, 1.3, f64::NEG_INFINITY),
                normal_logpdf(x, 0.4, 1.3),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn truncated_normal_integrates_to_one() {
        let (loc, scale, lower) = (0.1, 0.2, 0.01);
        let h = 1e-4;
        let total: f64 = (0..40_000)
            .map(|i| lower + (i as f64 + 0.5) * h)
            .map(|x| truncated_normal_logpdf(x, loc, scale, lower).exp() * h)
            .sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let (loc, scale, lower) = (0.5, 0.2, 0.25);
        let med = truncated_normal_quantile(0.5, loc, scale, lower);
        // integrate density from the bound to the median
        let n = 20_000;
        let h = (med - lower) / n as f64;
        let mass: f64 = (0..n)
            .map(|i| lower + (i as f64 + 0.5) * h)
            .map(|x| truncated_normal_logpdf(x, loc, scale, lower).exp() * h)
            .sum();
        assert_relative_eq!(mass, 0.5, epsilon = 1e-6);
        assert!(truncated_normal_quantile(0.0, loc, scale, lower) >= lower);
    }

    #[test]
    fn grad_matches_finite_differences() {
        let p = HyperPriorSpec::synthetic().beta;
        let k = KernelParams::new(0.7, 0.002, 0.3, vec![0.6]).unwrap();
        let g = hyperprior_grad(&p, &k);
        let h = 1e-7;
        let f = |m: &dyn Fn(&mut KernelParams)| {
            let mut kp = k.clone();
            m(&mut kp);
            hyperprior_logpdf(&p, &kp)
        };
        let fd = [
            (f(&|k| k.mean += h) - f(&|k| k.mean -= h)) / (2.0 * h),
            (f(&|k| k.noise_std += h * 1e-3) - f(&|k| k.noise_std -= h * 1e-3)) / (2e-3 * h),
            (f(&|k| k.signal_std += h) - f(&|k| k.signal_std -= h)) / (2.0 * h),
            (f(&|k| k.length_scales[0] += h) - f(&|k| k.length_scales[0] -= h)) / (2.0 * h),
        ];
        for (a, b) in g.iter().zip(fd) {
            assert_relative_eq!(*a, b, max_relative = 1e-5);
        }
    }

    #[test]
    fn samples_respect_support() {
        let p = HyperPriorSpec::synthetic().beta;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let k = p.sample(2, &mut rng);
            assert!(k.noise_std >= 0.0 && k.signal_std >= 0.0);
            assert!(k.length_scales.iter().all(|&l| l >= p.length_lower));
        }
    }
}
