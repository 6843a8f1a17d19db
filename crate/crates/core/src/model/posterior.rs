//! Joint, surrogate and tempered log-posterior densities with analytic
//! gradients.
//!
//! The free functions work in constrained coordinates. The `*Posterior`
//! structs implement [`LogDensity`] over the packed unconstrained vector and
//! include the log-Jacobian of the transform.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gp_core::{
    add_noise_diag, logpdf_with_factor, se_covariance, Cholesky, CovMatrix, InputGrid,
    JitterSchedule, KernelParams,
};
use crate::sampler::LogDensity;

use super::likelihood::{gamma_loglik, gamma_point_grad};
use super::params::{chain_to_unconstrained, to_constrained, to_unconstrained, ParamLayout};
use super::priors::{hyperprior_grad, hyperprior_logpdf, HyperPriorSpec, ProcessPrior};
use super::{Dataset, LatentState};

/// Linearized mean and covariance of one latent block, used as synthetic
/// data and error covariance for the hyperparameter surrogate.
#[derive(Debug, Clone)]
pub struct SurrogateBlock {
    pub m: DVector<f64>,
    pub p: DMatrix<f64>,
}

impl SurrogateBlock {
    pub fn new(m: DVector<f64>, p: DMatrix<f64>) -> Result<Self> {
        if !p.is_square() || p.nrows() != m.len() {
            return Err(Error::invalid(format!(
                "surrogate block: mean length {} vs covariance {}x{}",
                m.len(),
                p.nrows(),
                p.ncols()
            )));
        }
        Ok(Self { m, p })
    }
}

struct GpEval {
    value: f64,
    /// ∂/∂x of the log-density.
    d_x: DVector<f64>,
    /// ∂/∂(μ, σ_e, σ_s, l_1..l_D).
    d_hyper: Vec<f64>,
}

/// `log N(x; μ1, Σ(θ) + E)` where `E` is either `σ_e² I` or a supplied
/// synthetic error covariance.
fn gp_term(
    grid: &InputGrid,
    sqd: &[DMatrix<f64>],
    x: &DVector<f64>,
    params: &KernelParams,
    synthetic: Option<&DMatrix<f64>>,
    want_grad: bool,
) -> Result<GpEval> {
    let k = grid.len();
    if x.len() != k {
        return Err(Error::invalid(format!(
            "latent block has length {}, grid has {k} points",
            x.len()
        )));
    }
    let kse = se_covariance(grid, grid, params)?;
    let cov = match synthetic {
        None => add_noise_diag(kse.clone(), params.noise_std)?,
        Some(p) => {
            if p.nrows() != k || p.ncols() != k {
                return Err(Error::invalid("synthetic covariance has wrong shape"));
            }
            CovMatrix::new(&kse + p)?
        }
    };
    let chol = Cholesky::factor(cov.matrix(), &JitterSchedule::default())?;
    let mean = DVector::from_element(k, params.mean);
    let value = logpdf_with_factor(x, &mean, &chol)?;
    if !want_grad {
        return Ok(GpEval {
            value,
            d_x: DVector::zeros(0),
            d_hyper: Vec::new(),
        });
    }

    let r = x - &mean;
    let w = chol.solve_vec(&r);
    let cinv = chol.inverse();
    let d = params.dim();
    let mut d_hyper = vec![0.0; 3 + d];
    d_hyper[0] = w.sum();

    // M = w wᵀ − C⁻¹;  ∂ log N / ∂θ = ½ tr(M ∂C/∂θ)
    let mut tr_m_kse = 0.0;
    let mut tr_m_kse_sq = vec![0.0; d];
    for j in 0..k {
        let wj = w[j];
        for i in 0..k {
            let m = w[i] * wj - cinv[(i, j)];
            let mk = m * kse[(i, j)];
            tr_m_kse += mk;
            for (dd, acc) in tr_m_kse_sq.iter_mut().enumerate() {
                *acc += mk * sqd[dd][(i, j)];
            }
        }
    }
    if synthetic.is_none() {
        let trace_cinv: f64 = cinv.diagonal().sum();
        d_hyper[1] = params.noise_std * (w.dot(&w) - trace_cinv);
    }
    d_hyper[2] = tr_m_kse / params.signal_std;
    for (dd, &l) in params.length_scales.iter().enumerate() {
        d_hyper[3 + dd] = 0.5 * tr_m_kse_sq[dd] / (l * l * l);
    }
    Ok(GpEval {
        value,
        d_x: -w,
        d_hyper,
    })
}

/// Shared evaluator for the joint and tempered targets.
#[derive(Debug, Clone)]
struct Core {
    dataset: Dataset,
    spec: HyperPriorSpec,
    layout: ParamLayout,
    sqd: Vec<DMatrix<f64>>,
}

impl Core {
    fn new(dataset: Dataset, spec: HyperPriorSpec) -> Result<Self> {
        spec.validate()?;
        let layout = ParamLayout::new(dataset.len(), dataset.dim());
        let sqd = dataset.grid.squared_differences(&dataset.grid);
        Ok(Self {
            dataset,
            spec,
            layout,
            sqd,
        })
    }

    /// `κ (loglik + GP_α + GP_β) + (1 − κ)(Sur_α + Sur_β) + priors` in
    /// constrained coordinates. When `grad` is given it receives latent
    /// partials in the latent slots and constrained hyper partials in the
    /// hyper slots.
    #[allow(clippy::too_many_arguments)]
    fn eval(
        &self,
        state: &LatentState,
        alpha: &KernelParams,
        beta: &KernelParams,
        kappa: f64,
        blocks: Option<&[SurrogateBlock; 2]>,
        mut grad: Option<&mut [f64]>,
    ) -> Result<f64> {
        if !(0.0..=1.0).contains(&kappa) {
            return Err(Error::invalid(format!("tempering weight {kappa} is outside [0, 1]")));
        }
        let ds = &self.dataset;
        let k = ds.len();
        if state.alpha.len() != k || state.beta.len() != k {
            return Err(Error::invalid("latent state length does not match dataset"));
        }
        let lay = self.layout;
        let want = grad.is_some();
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }

        let mut exact = 0.0;
        if kappa > 0.0 {
            let ll = gamma_loglik(ds, state)?;
            let ga = gp_term(&ds.grid, &self.sqd, &state.alpha, alpha, None, want)?;
            let gb = gp_term(&ds.grid, &self.sqd, &state.beta, beta, None, want)?;
            exact = ll + ga.value + gb.value;
            if let Some(g) = grad.as_deref_mut() {
                for i in 0..k {
                    let (la, lb) =
                        gamma_point_grad(state.alpha[i], state.beta[i], ds.y[i], ds.ln_y[i]);
                    g[i] = kappa * (la + ga.d_x[i]);
                    g[k + i] = kappa * (lb + gb.d_x[i]);
                }
                for (j, v) in ga.d_hyper.iter().enumerate() {
                    g[lay.alpha_hypers().start + j] += kappa * v;
                }
                for (j, v) in gb.d_hyper.iter().enumerate() {
                    g[lay.beta_hypers().start + j] += kappa * v;
                }
            }
        }

        let mut approx = 0.0;
        if kappa < 1.0 {
            let blocks = blocks.ok_or_else(|| {
                Error::invalid("tempering weight below 1 needs surrogate blocks")
            })?;
            let sa = gp_term(&ds.grid, &self.sqd, &blocks[0].m, alpha, Some(&blocks[0].p), want)?;
            let sb = gp_term(&ds.grid, &self.sqd, &blocks[1].m, beta, Some(&blocks[1].p), want)?;
            approx = sa.value + sb.value;
            if let Some(g) = grad.as_deref_mut() {
                let w = 1.0 - kappa;
                for (j, v) in sa.d_hyper.iter().enumerate() {
                    g[lay.alpha_hypers().start + j] += w * v;
                }
                for (j, v) in sb.d_hyper.iter().enumerate() {
                    g[lay.beta_hypers().start + j] += w * v;
                }
            }
        }

        let pa = hyperprior_logpdf(&self.spec.alpha, alpha);
        let pb = hyperprior_logpdf(&self.spec.beta, beta);
        if let Some(g) = grad.as_deref_mut() {
            for (j, v) in hyperprior_grad(&self.spec.alpha, alpha).iter().enumerate() {
                g[lay.alpha_hypers().start + j] += v;
            }
            for (j, v) in hyperprior_grad(&self.spec.beta, beta).iter().enumerate() {
                g[lay.beta_hypers().start + j] += v;
            }
        }

        let body = if kappa == 1.0 {
            exact
        } else if kappa == 0.0 {
            approx
        } else {
            kappa * exact + (1.0 - kappa) * approx
        };
        Ok(body + pa + pb)
    }

    /// Unconstrained log-density (with Jacobian) and its gradient.
    fn eval_packed(
        &self,
        packed: &[f64],
        kappa: f64,
        blocks: Option<&[SurrogateBlock; 2]>,
        grad: Option<&mut [f64]>,
    ) -> Result<f64> {
        let u = self.layout.unpack(packed, &self.spec)?;
        match grad {
            None => Ok(self.eval(&u.state, &u.alpha, &u.beta, kappa, blocks, None)? + u.log_jacobian),
            Some(g) => {
                let lp = self.eval(&u.state, &u.alpha, &u.beta, kappa, blocks, Some(g))?;
                let ra = self.layout.alpha_hypers();
                let rb = self.layout.beta_hypers();
                let ca = g[ra.clone()].to_vec();
                let cb = g[rb.clone()].to_vec();
                chain_to_unconstrained(&ca, &u.alpha, &self.spec.alpha, &mut g[ra]);
                chain_to_unconstrained(&cb, &u.beta, &self.spec.beta, &mut g[rb]);
                Ok(lp + u.log_jacobian)
            }
        }
    }
}

/// Log of the full joint posterior (unnormalized) in constrained coordinates:
/// gamma log-likelihood + both GP prior densities + hyperprior densities.
pub fn joint_logpost(
    dataset: &Dataset,
    state: &LatentState,
    alpha: &KernelParams,
    beta: &KernelParams,
    spec: &HyperPriorSpec,
) -> Result<f64> {
    let core = Core::new(dataset.clone(), spec.clone())?;
    core.eval(state, alpha, beta, 1.0, None, None)
}

/// Gradient of the unconstrained joint log-density (log-Jacobian included)
/// with respect to the packed vector.
pub fn joint_logpost_grad(dataset: &Dataset, packed: &[f64], spec: &HyperPriorSpec) -> Result<Vec<f64>> {
    let core = Core::new(dataset.clone(), spec.clone())?;
    let mut grad = vec![0.0; core.layout.len()];
    core.eval_packed(packed, 1.0, None, Some(&mut grad))?;
    Ok(grad)
}

/// Surrogate hyperparameter log-posterior of one process:
/// `log N(m; μ1, Σ(θ) + P) + log π0(μ, θ)`.
pub fn surrogate_logpost(
    grid: &InputGrid,
    block: &SurrogateBlock,
    params: &KernelParams,
    prior: &ProcessPrior,
) -> Result<f64> {
    let sqd = grid.squared_differences(grid);
    let g = gp_term(grid, &sqd, &block.m, params, Some(&block.p), false)?;
    Ok(g.value + hyperprior_logpdf(prior, params))
}

/// Tempered log-density at weight `kappa` in constrained coordinates, with
/// the packed vector as input. At `kappa = 1` this takes exactly the same
/// path as [`joint_logpost`]; at `kappa = 0` the observations are not read.
pub fn tempered_logpost(
    dataset: &Dataset,
    packed: &[f64],
    spec: &HyperPriorSpec,
    blocks: &[SurrogateBlock; 2],
    kappa: f64,
) -> Result<f64> {
    let core = Core::new(dataset.clone(), spec.clone())?;
    let u = core.layout.unpack(packed, spec)?;
    core.eval(&u.state, &u.alpha, &u.beta, kappa, Some(blocks), None)
}

/// The joint posterior as a sampling target over the packed vector.
#[derive(Debug, Clone)]
pub struct JointPosterior {
    core: Core,
}

impl JointPosterior {
    pub fn new(dataset: Dataset, spec: HyperPriorSpec) -> Result<Self> {
        Ok(Self {
            core: Core::new(dataset, spec)?,
        })
    }

    pub fn layout(&self) -> ParamLayout {
        self.core.layout
    }

    pub fn dataset(&self) -> &Dataset {
        &self.core.dataset
    }

    pub fn spec(&self) -> &HyperPriorSpec {
        &self.core.spec
    }

    /// Latents at the prior means, hyperparameters at the prior medians.
    pub fn default_start(&self) -> Result<Vec<f64>> {
        let lay = self.core.layout;
        let spec = &self.core.spec;
        let state = LatentState::new(
            DVector::from_element(lay.k, spec.alpha.mean_loc),
            DVector::from_element(lay.k, spec.beta.mean_loc),
        );
        Ok(lay
            .pack(&state, &spec.alpha.median(lay.d), &spec.beta.median(lay.d), spec)?
            .0)
    }

    /// Unconstrained log-density including the log-Jacobian.
    pub fn log_density(&self, packed: &[f64]) -> Result<f64> {
        self.core.eval_packed(packed, 1.0, None, None)
    }

    pub fn log_density_and_grad(&self, packed: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.core.eval_packed(packed, 1.0, None, Some(grad))
    }
}

impl LogDensity for JointPosterior {
    fn dim(&self) -> usize {
        self.core.layout.len()
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.log_density_and_grad(x, grad)
            .unwrap_or(f64::NEG_INFINITY)
    }
}

/// Tempered target `κ · joint + (1 − κ) · surrogate` over the packed vector.
#[derive(Debug, Clone)]
pub struct TemperedPosterior {
    core: Core,
    blocks: [SurrogateBlock; 2],
    kappa: f64,
}

impl TemperedPosterior {
    pub fn new(
        dataset: Dataset,
        spec: HyperPriorSpec,
        blocks: [SurrogateBlock; 2],
        kappa: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&kappa) {
            return Err(Error::invalid(format!("tempering weight {kappa} is outside [0, 1]")));
        }
        Ok(Self {
            core: Core::new(dataset, spec)?,
            blocks,
            kappa,
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn layout(&self) -> ParamLayout {
        self.core.layout
    }

    pub fn log_density(&self, packed: &[f64]) -> Result<f64> {
        self.core
            .eval_packed(packed, self.kappa, Some(&self.blocks), None)
    }

    pub fn log_density_and_grad(&self, packed: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.core
            .eval_packed(packed, self.kappa, Some(&self.blocks), Some(grad))
    }
}

impl LogDensity for TemperedPosterior {
    fn dim(&self) -> usize {
        self.core.layout.len()
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.log_density_and_grad(x, grad)
            .unwrap_or(f64::NEG_INFINITY)
    }
}

/// Surrogate hyperparameter posterior of one process over
/// `(μ, ln σ_e, ln σ_s, ln(l_d − B))`.
#[derive(Debug, Clone)]
pub struct SurrogatePosterior {
    grid: InputGrid,
    sqd: Vec<DMatrix<f64>>,
    block: SurrogateBlock,
    prior: ProcessPrior,
}

impl SurrogatePosterior {
    pub fn new(grid: InputGrid, block: SurrogateBlock, prior: ProcessPrior) -> Result<Self> {
        prior.validate()?;
        if block.m.len() != grid.len() {
            return Err(Error::invalid("surrogate block does not match the grid"));
        }
        let sqd = grid.squared_differences(&grid);
        Ok(Self {
            grid,
            sqd,
            block,
            prior,
        })
    }

    pub fn prior(&self) -> &ProcessPrior {
        &self.prior
    }

    pub fn default_start(&self) -> Result<Vec<f64>> {
        to_unconstrained(&self.prior.median(self.grid.dim()), self.prior.length_lower)
    }

    pub fn constrained(&self, u: &[f64]) -> Result<KernelParams> {
        Ok(to_constrained(u, self.prior.length_lower)?.0)
    }

    pub fn log_density_and_grad(&self, u: &[f64], grad: &mut [f64]) -> Result<f64> {
        let (params, log_jac) = to_constrained(u, self.prior.length_lower)?;
        let g = gp_term(&self.grid, &self.sqd, &self.block.m, &params, Some(&self.block.p), true)?;
        let pg = hyperprior_grad(&self.prior, &params);
        let c: Vec<f64> = g.d_hyper.iter().zip(&pg).map(|(a, b)| a + b).collect();
        chain_to_unconstrained(&c, &params, &self.prior, grad);
        Ok(g.value + hyperprior_logpdf(&self.prior, &params) + log_jac)
    }
}

impl LogDensity for SurrogatePosterior {
    fn dim(&self) -> usize {
        3 + self.grid.dim()
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.log_density_and_grad(x, grad)
            .unwrap_or(f64::NEG_INFINITY)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp_core::gaussian_logpdf;
    use crate::model::likelihood::gamma_loglik;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(k: usize, seed: u64) -> (Dataset, LatentState, KernelParams, KernelParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = InputGrid::uniform_1d(k);
        let y = DVector::from_fn(k, |_, _| 0.5 + 3.0 * rng.random::<f64>());
        let ds = Dataset::new(grid, y).unwrap();
        let st = LatentState::new(
            DVector::from_fn(k, |_, _| 1.5 + rng.random::<f64>()),
            DVector::from_fn(k, |_, _| 0.5 + rng.random::<f64>()),
        );
        let a = KernelParams::new(2.0, 0.05, 0.8, vec![0.2]).unwrap();
        let b = KernelParams::new(1.0, 0.08, 0.6, vec![0.5]).unwrap();
        (ds, st, a, b)
    }

    fn blocks(k: usize) -> [SurrogateBlock; 2] {
        let p = DMatrix::from_fn(k, k, |i, j| {
            0.05 * (-((i as f64 - j as f64) / 3.0).powi(2)).exp() + if i == j { 0.01 } else { 0.0 }
        });
        [
            SurrogateBlock::new(DVector::from_element(k, 2.1), p.clone()).unwrap(),
            SurrogateBlock::new(DVector::from_element(k, 0.9), p).unwrap(),
        ]
    }

    #[test]
    fn joint_is_sum_of_parts() {
        let spec = HyperPriorSpec::synthetic();
        let (ds, st, a, b) = toy(6, 1);
        let total = joint_logpost(&ds, &st, &a, &b, &spec).unwrap();
        let ca = add_noise_diag(se_covariance(&ds.grid, &ds.grid, &a).unwrap(), a.noise_std).unwrap();
        let cb = add_noise_diag(se_covariance(&ds.grid, &ds.grid, &b).unwrap(), b.noise_std).unwrap();
        let parts = gamma_loglik(&ds, &st).unwrap()
            + gaussian_logpdf(&st.alpha, &DVector::from_element(6, a.mean), &ca).unwrap()
            + gaussian_logpdf(&st.beta, &DVector::from_element(6, b.mean), &cb).unwrap()
            + hyperprior_logpdf(&spec.alpha, &a)
            + hyperprior_logpdf(&spec.beta, &b);
        assert!((total - parts).abs() <= 1e-12 * total.abs().max(1.0));
    }

    #[test]
    fn moving_alpha_toward_data_increases_density() {
        // Shape-only change with β fixed: the likelihood term favours α near
        // the value that makes e^{α−β} match y.
        let spec = HyperPriorSpec::synthetic();
        let grid = InputGrid::uniform_1d(4);
        let y = DVector::from_element(4, 3f64.exp());
        let ds = Dataset::new(grid, y).unwrap();
        let a = KernelParams::new(3.0, 0.5, 0.5, vec![0.3]).unwrap();
        let b = KernelParams::new(0.0, 0.5, 0.5, vec![0.5]).unwrap();
        let beta = DVector::zeros(4);
        let eval = |v: f64| {
            let st = LatentState::new(DVector::from_element(4, v), beta.clone());
            joint_logpost(&ds, &st, &a, &b, &spec).unwrap()
        };
        let grid_vals: Vec<f64> = [0.0, 1.0, 2.0, 2.5].iter().map(|&v| eval(v)).collect();
        assert!(grid_vals.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn gradient_length_and_mu_coordinate() {
        let spec = HyperPriorSpec::synthetic();
        let (ds, _, a, b) = toy(5, 3);
        let st = LatentState::new(DVector::from_element(5, a.mean), DVector::from_element(5, b.mean));
        let target = JointPosterior::new(ds, spec.clone()).unwrap();
        let lay = target.layout();
        let packed = lay.pack(&st, &a, &b, &spec).unwrap();
        let mut g = vec![0.0; lay.len()];
        target.log_density_and_grad(packed.as_slice(), &mut g).unwrap();
        assert_eq!(g.len(), 2 * 5 + 2 * 1 + 6);
        let prior_only = -(a.mean - spec.alpha.mean_loc) / spec.alpha.mean_scale.powi(2);
        assert!((g[lay.alpha_hypers().start] - prior_only).abs() < 1e-12);
    }

    fn fd_check<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], g: &[f64], h: f64, tol: f64) {
        for i in 0..x.len() {
            let mut up = x.to_vec();
            let mut dn = x.to_vec();
            up[i] += h;
            dn[i] -= h;
            let fd = (f(&up) - f(&dn)) / (2.0 * h);
            let scale = fd.abs().max(g[i].abs()).max(1.0);
            assert!(
                (fd - g[i]).abs() <= tol * scale,
                "coordinate {i}: analytic {} vs fd {fd}",
                g[i]
            );
        }
    }

    #[test]
    fn joint_gradient_matches_finite_differences() {
        let spec = HyperPriorSpec::synthetic();
        let (ds, st, a, b) = toy(8, 5);
        let target = JointPosterior::new(ds, spec.clone()).unwrap();
        let x = target.layout().pack(&st, &a, &b, &spec).unwrap().0;
        let mut g = vec![0.0; x.len()];
        target.log_density_and_grad(&x, &mut g).unwrap();
        fd_check(|v| target.log_density(v).unwrap(), &x, &g, 1e-5, 1e-4);
    }

    #[test]
    fn tempered_gradient_matches_finite_differences() {
        let spec = HyperPriorSpec::synthetic();
        let (ds, st, a, b) = toy(6, 7);
        for &kappa in &[0.0, 0.3, 1.0] {
            let target = TemperedPosterior::new(ds.clone(), spec.clone(), blocks(6), kappa).unwrap();
            let x = target.layout().pack(&st, &a, &b, &spec).unwrap().0;
            let mut g = vec![0.0; x.len()];
            target.log_density_and_grad(&x, &mut g).unwrap();
            fd_check(|v| target.log_density(v).unwrap(), &x, &g, 1e-5, 1e-4);
        }
    }

    #[test]
    fn surrogate_gradient_matches_finite_differences() {
        let spec = HyperPriorSpec::synthetic();
        let grid = InputGrid::uniform_1d(6);
        let sur = SurrogatePosterior::new(grid, blocks(6)[0].clone(), spec.alpha.clone()).unwrap();
        let x = vec![2.0, (0.01f64).ln(), (0.7f64).ln(), (0.15f64).ln()];
        let mut g = vec![0.0; 4];
        sur.log_density_and_grad(&x, &mut g).unwrap();
        // σ_e does not enter the likelihood; only prior and Jacobian remain.
        let sigma_e = x[1].exp();
        let expect = -sigma_e * sigma_e / spec.alpha.noise_scale.powi(2) + 1.0;
        assert_relative_eq!(g[1], expect, max_relative = 1e-12);
        let f = |v: &[f64]| sur.log_density_and_grad(v, &mut [0.0; 4]).unwrap();
        fd_check(f, &x, &g, 1e-5, 1e-4);
    }

    #[test]
    fn tempered_endpoints() {
        let spec = HyperPriorSpec::synthetic();
        let (ds, st, a, b) = toy(6, 9);
        let lay = ParamLayout::new(6, 1);
        let x = lay.pack(&st, &a, &b, &spec).unwrap().0;
        let bl = blocks(6);
        let at_one = tempered_logpost(&ds, &x, &spec, &bl, 1.0).unwrap();
        let u = lay.unpack(&x, &spec).unwrap();
        let joint = joint_logpost(&ds, &u.state, &u.alpha, &u.beta, &spec).unwrap();
        assert_eq!(at_one.to_bits(), joint.to_bits());
        let (a, b) = (u.alpha, u.beta);

        let at_zero = tempered_logpost(&ds, &x, &spec, &bl, 0.0).unwrap();
        let ds2 = ds.with_y(ds.y.map(|v| v * 3.0 + 1.0)).unwrap();
        assert_eq!(at_zero, tempered_logpost(&ds2, &x, &spec, &bl, 0.0).unwrap());

        let half = tempered_logpost(&ds, &x, &spec, &bl, 0.5).unwrap();
        let priors = hyperprior_logpdf(&spec.alpha, &a) + hyperprior_logpdf(&spec.beta, &b);
        let blend = 0.5 * (joint - priors) + 0.5 * (at_zero - priors) + priors;
        assert_relative_eq!(half, blend, max_relative = 1e-12);

        assert!(tempered_logpost(&ds, &x, &spec, &bl, 1.5).is_err());
        assert!(tempered_logpost(&ds, &x, &spec, &bl, -0.1).is_err());
    }

    #[test]
    fn surrogate_with_white_error_is_gp_marginal() {
        let spec = HyperPriorSpec::synthetic();
        let grid = InputGrid::uniform_1d(5);
        let m = DVector::from_vec(vec![1.0, 1.4, 2.0, 1.7, 1.2]);
        let s = 0.3;
        let block = SurrogateBlock::new(m.clone(), DMatrix::identity(5, 5) * (s * s)).unwrap();
        let p = KernelParams::new(1.5, 0.01, 0.7, vec![0.3]).unwrap();
        let got = surrogate_logpost(&grid, &block, &p, &spec.alpha).unwrap();
        let cov = add_noise_diag(se_covariance(&grid, &grid, &p).unwrap(), s).unwrap();
        let expect = gaussian_logpdf(&m, &DVector::from_element(5, 1.5), &cov).unwrap()
            + hyperprior_logpdf(&spec.alpha, &p);
        assert_relative_eq!(got, expect, max_relative = 1e-12);
    }

    #[test]
    fn surrogate_mean_shift_invariance() {
        let grid = InputGrid::uniform_1d(4);
        let p = blocks(4)[0].p.clone();
        let m = DVector::from_vec(vec![0.2, -0.1, 0.4, 0.0]);
        let params = KernelParams::new(0.1, 0.01, 0.5, vec![0.4]).unwrap();
        let sqd = grid.squared_differences(&grid);
        let v0 = gp_term(&grid, &sqd, &m, &params, Some(&p), false).unwrap().value;
        let shifted = KernelParams {
            mean: params.mean + 3.0,
            ..params.clone()
        };
        let v1 = gp_term(&grid, &sqd, &m.add_scalar(3.0), &shifted, Some(&p), false)
            .unwrap()
            .value;
        assert_relative_eq!(v0, v1, max_relative = 1e-12);
    }

    #[test]
    fn surrogate_two_point_hand_computation() {
        let grid = InputGrid::new(DMatrix::from_column_slice(2, 1, &[0.0, 1.0])).unwrap();
        let params = KernelParams::new(0.5, 0.01, 1.0, vec![1.0]).unwrap();
        let p = DMatrix::from_row_slice(2, 2, &[0.2, 0.05, 0.05, 0.3]);
        let m = DVector::from_vec(vec![1.0, 0.0]);
        let c12 = (-0.5f64).exp() + 0.05;
        let (c11, c22) = (1.2, 1.3);
        let det = c11 * c22 - c12 * c12;
        let (r1, r2) = (0.5, -0.5);
        let quad = (c22 * r1 * r1 - 2.0 * c12 * r1 * r2 + c11 * r2 * r2) / det;
        let expect = -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * quad;
        let sqd = grid.squared_differences(&grid);
        let got = gp_term(&grid, &sqd, &m, &params, Some(&p), false).unwrap().value;
        assert_relative_eq!(got, expect, max_relative = 1e-12);
    }
}
