//! Monte Carlo iterated posterior linearization of the gamma observation
//! model around a Gaussian approximation of the stacked latent vector
//! `(α, β)`.
//!
//! Every iteration forms a statistical linear regression `y ≈ A x + b + e`,
//! `e ~ N(0, Λ)`, with respect to the current approximation and redoes a
//! Gaussian update of the prior moments with it.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gp_core::{add_noise_diag, se_covariance, Cholesky, InputGrid, JitterSchedule};
use crate::model::{sample_gamma, HyperPriorSpec};
use crate::par;
use crate::rng::stream;

const TAG_PRIOR: u64 = 1;
const TAG_POSTERIOR: u64 = 2;
const MAX_PRIOR_RETRIES: usize = 16;

/// Gaussian approximation `N(m, P)` over the stacked `(α, β)` vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub m: DVector<f64>,
    pub p: DMatrix<f64>,
    pub t: usize,
}

impl MomentState {
    pub fn new(m: DVector<f64>, p: DMatrix<f64>, t: usize) -> Result<Self> {
        if !p.is_square() || p.nrows() != m.len() {
            return Err(Error::invalid("moment state dimensions disagree"));
        }
        Ok(Self { m, p, t })
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }
}

/// Affine regression `y ≈ A x + b` with residual covariance `Λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlrParams {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub lambda: DMatrix<f64>,
    /// Sum of the negative eigenvalues removed from `Λ`.
    pub clamped: f64,
}

/// Predicted observation mean, covariance, and latent/observation
/// cross-covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimates {
    pub mu_plus: DVector<f64>,
    pub p_yy: DMatrix<f64>,
    pub p_xy: DMatrix<f64>,
}

/// Joint draws of latent vectors and observations, one column per member.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    /// `2K × J`, α rows first.
    pub latent: DMatrix<f64>,
    /// `K × J`.
    pub y: DMatrix<f64>,
}

impl Ensemble {
    pub fn new(latent: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        if latent.nrows() != 2 * y.nrows() || latent.ncols() != y.ncols() {
            return Err(Error::invalid("ensemble blocks have inconsistent shapes"));
        }
        if y.ncols() < 2 {
            return Err(Error::invalid("ensemble needs at least two members"));
        }
        Ok(Self { latent, y })
    }

    pub fn j(&self) -> usize {
        self.y.ncols()
    }

    pub fn k(&self) -> usize {
        self.y.nrows()
    }

    pub fn alpha(&self) -> DMatrix<f64> {
        self.latent.rows(0, self.k()).into_owned()
    }

    pub fn beta(&self) -> DMatrix<f64> {
        self.latent.rows(self.k(), self.k()).into_owned()
    }
}

fn symmetrize(p: &mut DMatrix<f64>) {
    let n = p.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let s = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = s;
            p[(j, i)] = s;
        }
    }
}

/// `Σ_j u_j v_jᵀ / J` over column chunks, summed in chunk order.
fn outer_mean(u: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let j = u.ncols();
    let parts = par::map_chunks(j, |_, r| {
        let uc = u.columns(r.start, r.len());
        let vc = v.columns(r.start, r.len());
        uc * vc.transpose()
    });
    let mut acc = DMatrix::zeros(u.nrows(), v.nrows());
    for p in parts {
        acc += p;
    }
    acc / j as f64
}

/// Draws one member from the hierarchical prior. Draws whose covariance
/// cannot be factorized are redrawn a bounded number of times.
fn prior_member<R: Rng + ?Sized>(
    spec: &HyperPriorSpec,
    grid: &InputGrid,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let k = grid.len();
    let mut out = DVector::zeros(2 * k);
    for (b, prior) in [&spec.alpha, &spec.beta].into_iter().enumerate() {
        let mut last_err = None;
        let mut done = false;
        for _ in 0..MAX_PRIOR_RETRIES {
            let params = prior.sample(grid.dim(), rng);
            let factor = se_covariance(grid, grid, &params)
                .and_then(|c| add_noise_diag(c, params.noise_std))
                .and_then(|c| Cholesky::factor(c.matrix(), &JitterSchedule::default()));
            match factor {
                Ok(ch) => {
                    let z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
                    let draw = ch.correlate(&z).add_scalar(params.mean);
                    out.rows_mut(b * k, k).copy_from(&draw);
                    done = true;
                    break;
                }
                Err(e) => last_err = Some(e),
            }
        }
        if !done {
            return Err(last_err.unwrap_or_else(|| Error::invalid("prior draw failed")));
        }
    }
    Ok(out)
}

fn observe<R: Rng + ?Sized>(latent: &DVector<f64>, k: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(k, |i, _| sample_gamma(latent[i], latent[k + i], rng))
}

fn assemble(parts: Vec<Result<(DMatrix<f64>, DMatrix<f64>)>>, k: usize, j: usize) -> Result<Ensemble> {
    let mut latent = DMatrix::zeros(2 * k, j);
    let mut y = DMatrix::zeros(k, j);
    let mut col = 0;
    for p in parts {
        let (l, o) = p?;
        let n = l.ncols();
        latent.columns_mut(col, n).copy_from(&l);
        y.columns_mut(col, n).copy_from(&o);
        col += n;
    }
    Ensemble::new(latent, y)
}

/// `m⁽⁰⁾ = (γ_μα 1, γ_μβ 1)` and the Monte Carlo prior covariance
/// `P̂⁽⁰⁾ = Σ_j (x_j − m⁽⁰⁾)(x_j − m⁽⁰⁾)ᵀ / J` from draws of the hierarchical
/// prior. The returned ensemble also carries one observation draw per member.
pub fn init_prior_moments(
    spec: &HyperPriorSpec,
    grid: &InputGrid,
    j: usize,
    seed: u64,
) -> Result<(MomentState, Ensemble)> {
    spec.validate()?;
    if j < 2 {
        return Err(Error::invalid("ensemble size must be at least 2"));
    }
    let k = grid.len();
    let parts = par::map_chunks(j, |c, r| {
        let mut rng = stream(seed, &[TAG_PRIOR, c as u64]);
        let mut lat = DMatrix::zeros(2 * k, r.len());
        let mut obs = DMatrix::zeros(k, r.len());
        for col in 0..r.len() {
            let x = prior_member(spec, grid, &mut rng)?;
            let y = observe(&x, k, &mut rng);
            lat.set_column(col, &x);
            obs.set_column(col, &y);
        }
        Ok((lat, obs))
    });
    let ens = assemble(parts, k, j)?;
    let mut m0 = DVector::from_element(2 * k, spec.alpha.mean_loc);
    m0.rows_mut(k, k).fill(spec.beta.mean_loc);
    let centered = DMatrix::from_fn(2 * k, j, |r, c| ens.latent[(r, c)] - m0[r]);
    let mut p0 = outer_mean(&centered, &centered);
    symmetrize(&mut p0);
    Ok((MomentState::new(m0, p0, 0)?, ens))
}

/// `J` joint draws from `N(m, P)` followed by one observation per draw.
pub fn simulate_ensemble(moments: &MomentState, j: usize, seed: u64) -> Result<Ensemble> {
    if j < 2 {
        return Err(Error::invalid("ensemble size must be at least 2"));
    }
    let n = moments.dim();
    if n % 2 != 0 {
        return Err(Error::invalid("stacked latent dimension must be even"));
    }
    let k = n / 2;
    let chol = Cholesky::factor(&moments.p, &JitterSchedule::default())?;
    let parts = par::map_chunks(j, |c, r| {
        let mut rng = stream(seed, &[TAG_POSTERIOR, moments.t as u64, c as u64]);
        let mut lat = DMatrix::zeros(n, r.len());
        let mut obs = DMatrix::zeros(k, r.len());
        for col in 0..r.len() {
            let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let x = chol.correlate(&z) + &moments.m;
            let y = observe(&x, k, &mut rng);
            lat.set_column(col, &x);
            obs.set_column(col, &y);
        }
        Ok((lat, obs))
    });
    assemble(parts, k, j)
}

/// Column order that depends only on the member values, so the estimates do
/// not depend on the order in which members are supplied.
fn canonical_order(ens: &Ensemble) -> Vec<usize> {
    let (n, k) = (ens.latent.nrows(), ens.k());
    let lat = ens.latent.as_slice();
    let obs = ens.y.as_slice();
    let member = |c: usize| lat[c * n..(c + 1) * n].iter().chain(&obs[c * k..(c + 1) * k]);
    let mut idx: Vec<usize> = (0..ens.j()).collect();
    idx.sort_by(|&a, &b| {
        for (x, y) in member(a).zip(member(b)) {
            let o = x.total_cmp(&y);
            if o != std::cmp::Ordering::Equal {
                return o;
            }
        }
        std::cmp::Ordering::Equal
    });
    idx
}

/// Monte Carlo estimates with divisor `J`; latent deviations are taken about
/// `m_prev`, observation deviations about the ensemble mean.
pub fn mc_moment_estimates(ens: &Ensemble, m_prev: &DVector<f64>) -> Result<MomentEstimates> {
    if m_prev.len() != ens.latent.nrows() {
        return Err(Error::invalid("m_prev does not match the ensemble dimension"));
    }
    let order = canonical_order(ens);
    let j = ens.j();
    let y = ens.y.select_columns(order.iter());
    let latent = ens.latent.select_columns(order.iter());

    let sums = par::map_chunks(j, |_, r| y.columns(r.start, r.len()).column_sum());
    let mut mu_plus = DVector::zeros(ens.k());
    for s in sums {
        mu_plus += s;
    }
    mu_plus /= j as f64;

    let yc = DMatrix::from_fn(y.nrows(), j, |r, c| y[(r, c)] - mu_plus[r]);
    let xc = DMatrix::from_fn(latent.nrows(), j, |r, c| latent[(r, c)] - m_prev[r]);
    let mut p_yy = outer_mean(&yc, &yc);
    symmetrize(&mut p_yy);
    let p_xy = outer_mean(&xc, &yc);
    Ok(MomentEstimates { mu_plus, p_yy, p_xy })
}

/// `A = P_xyᵀ P⁻¹`, `b = μ⁺ − A m`, `Λ = P_yy − A P Aᵀ` (symmetrized, with
/// negative eigenvalues set to zero).
pub fn slr_from_moments(est: &MomentEstimates, prev: &MomentState) -> Result<SlrParams> {
    let chol = Cholesky::factor(&prev.p, &JitterSchedule::default())?;
    // P⁻¹ P_xy = Aᵀ
    let a = chol.solve_mat(&est.p_xy).transpose();
    let b = &est.mu_plus - &a * &prev.m;
    let mut lambda = &est.p_yy - &a * &prev.p * a.transpose();
    symmetrize(&mut lambda);
    let eig = SymmetricEigen::new(lambda.clone());
    let clamped: f64 = eig.eigenvalues.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
    if clamped > 0.0 {
        let vals = eig.eigenvalues.map(|v| v.max(0.0));
        lambda = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
        symmetrize(&mut lambda);
    }
    Ok(SlrParams {
        a,
        b,
        lambda,
        clamped,
    })
}

/// Gaussian update of the prior moments with the linearized model:
/// `S = A P⁰ Aᵀ + Λ`, `K = P⁰ Aᵀ S⁻¹`, `m = m⁰ + K (y − A m⁰ − b)`,
/// `P = P⁰ − K S Kᵀ`. Returns the new state and the jitter applied to `S`.
pub fn pl_update(prior: &MomentState, slr: &SlrParams, y: &DVector<f64>) -> Result<(MomentState, f64)> {
    let k = slr.b.len();
    if y.len() != k || slr.a.ncols() != prior.dim() {
        return Err(Error::invalid("pl_update: dimensions disagree"));
    }
    let mu = &slr.a * &prior.m + &slr.b;
    let pat = &prior.p * slr.a.transpose();
    let mut s = &slr.a * &pat + &slr.lambda;
    symmetrize(&mut s);
    let chol = Cholesky::factor(&s, &JitterSchedule::default())?;
    // Kᵀ = S⁻¹ A P⁰
    let gain = chol.solve_mat(&pat.transpose()).transpose();
    let m = &prior.m + &gain * (y - mu);
    let mut s_used = s;
    for i in 0..k {
        s_used[(i, i)] += chol.jitter();
    }
    let mut p = &prior.p - &gain * s_used * gain.transpose();
    symmetrize(&mut p);
    Ok((MomentState::new(m, p, prior.t)?, chol.jitter()))
}

/// Source of prior moments and of predicted moments under `N(m, P)`.
pub trait MomentBackend {
    fn prior(&mut self) -> Result<MomentState>;
    /// Moments for iteration `t ≥ 1` with respect to `state`.
    fn predict(&mut self, state: &MomentState, t: usize) -> Result<MomentEstimates>;
}

/// The default backend: ensembles of size `J`, fresh draws every iteration.
/// The first iteration reuses the prior ensemble.
pub struct MonteCarlo {
    spec: HyperPriorSpec,
    grid: InputGrid,
    j: usize,
    seed: u64,
    prior_ensemble: Option<Ensemble>,
}

impl MonteCarlo {
    pub fn new(spec: HyperPriorSpec, grid: InputGrid, j: usize, seed: u64) -> Self {
        Self {
            spec,
            grid,
            j,
            seed,
            prior_ensemble: None,
        }
    }
}

impl MomentBackend for MonteCarlo {
    fn prior(&mut self) -> Result<MomentState> {
        let (state, ens) = init_prior_moments(&self.spec, &self.grid, self.j, self.seed)?;
        self.prior_ensemble = Some(ens);
        Ok(state)
    }

    fn predict(&mut self, state: &MomentState, t: usize) -> Result<MomentEstimates> {
        let ens = match (t, self.prior_ensemble.take()) {
            (1, Some(e)) => e,
            _ => {
                let mut s = state.clone();
                s.t = t;
                simulate_ensemble(&s, self.j, self.seed)?
            }
        };
        mc_moment_estimates(&ens, &state.m)
    }
}

/// Exact moments of `y = H x + c + e`, `e ~ N(0, R)`, under a Gaussian
/// prior `N(m⁰, P⁰)`. Used to check the recursion against closed-form
/// conditioning.
#[derive(Debug, Clone)]
pub struct LinearGaussian {
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
    pub r: DMatrix<f64>,
    pub m0: DVector<f64>,
    pub p0: DMatrix<f64>,
}

impl LinearGaussian {
    /// Closed-form posterior moments given `y`.
    pub fn posterior(&self, y: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let s = &self.h * &self.p0 * self.h.transpose() + &self.r;
        let chol = Cholesky::factor(&s, &JitterSchedule { multipliers: vec![0.0] })?;
        let ph = &self.p0 * self.h.transpose();
        let gain = chol.solve_mat(&ph.transpose()).transpose();
        let m = &self.m0 + &gain * (y - &self.h * &self.m0 - &self.c);
        let p = &self.p0 - &gain * s * gain.transpose();
        Ok((m, p))
    }
}

impl MomentBackend for LinearGaussian {
    fn prior(&mut self) -> Result<MomentState> {
        MomentState::new(self.m0.clone(), self.p0.clone(), 0)
    }

    fn predict(&mut self, state: &MomentState, _t: usize) -> Result<MomentEstimates> {
        let mu_plus = &self.h * &state.m + &self.c;
        let mut p_yy = &self.h * &state.p * self.h.transpose() + &self.r;
        symmetrize(&mut p_yy);
        let p_xy = &state.p * self.h.transpose();
        Ok(MomentEstimates { mu_plus, p_yy, p_xy })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlSettings {
    /// Number of linearization rounds.
    pub t_max: usize,
    /// Stop early once `‖m⁽ᵗ⁾ − m⁽ᵗ⁻¹⁾‖∞` drops below this.
    pub tol: Option<f64>,
}

impl Default for PlSettings {
    fn default() -> Self {
        Self {
            t_max: 5,
            tol: Some(1e-3),
        }
    }
}

/// One row of the audit trail.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub t: usize,
    pub m: DVector<f64>,
    pub diag_p: DVector<f64>,
    pub jitter: f64,
    pub clamped: f64,
}

#[derive(Debug, Clone)]
pub struct PlRun {
    pub prior: MomentState,
    pub state: MomentState,
    pub trace: Vec<TraceEntry>,
}

/// Runs `prior → (predict → regress → update)ᵗ` with the chosen backend.
pub fn iterate_pl<B: MomentBackend + ?Sized>(
    backend: &mut B,
    y: &DVector<f64>,
    settings: PlSettings,
) -> Result<PlRun> {
    if settings.t_max < 1 {
        return Err(Error::invalid("at least one linearization round is required"));
    }
    let prior = backend.prior()?;
    let mut trace = vec![TraceEntry {
        t: 0,
        m: prior.m.clone(),
        diag_p: prior.p.diagonal(),
        jitter: 0.0,
        clamped: 0.0,
    }];
    let mut state = prior.clone();
    for t in 1..=settings.t_max {
        let est = backend.predict(&state, t)?;
        let slr = slr_from_moments(&est, &state)?;
        let (mut next, jitter) = pl_update(&prior, &slr, y)?;
        next.t = t;
        let change = (&next.m - &state.m).amax();
        trace.push(TraceEntry {
            t,
            m: next.m.clone(),
            diag_p: next.p.diagonal(),
            jitter,
            clamped: slr.clamped,
        });
        state = next;
        if settings.tol.is_some_and(|tol| change < tol) {
            break;
        }
    }
    Ok(PlRun {
        prior,
        state,
        trace,
    })
}

/// `(m_α, m_β, P_α, P_β, P_αβ)` where `P_αβ` is the lower-left block.
pub type Blocks = (DVector<f64>, DVector<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>);

pub fn split_blocks(state: &MomentState) -> Result<Blocks> {
    let n = state.dim();
    if n % 2 != 0 {
        return Err(Error::invalid("moment state has odd dimension"));
    }
    let k = n / 2;
    let m_a = state.m.rows(0, k).into_owned();
    let m_b = state.m.rows(k, k).into_owned();
    let mut p_a = state.p.view((0, 0), (k, k)).into_owned();
    let mut p_b = state.p.view((k, k), (k, k)).into_owned();
    symmetrize(&mut p_a);
    symmetrize(&mut p_b);
    let p_ab = state.p.view((k, 0), (k, k)).into_owned();
    Ok((m_a, m_b, p_a, p_b, p_ab))
}

/// Writes `t,index,m,diag_p,jitter,clamped` rows.
pub fn write_trace_csv<W: Write>(trace: &[TraceEntry], mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,index,m,diag_p,jitter,clamped")?;
    for e in trace {
        for i in 0..e.m.len() {
            writeln!(
                out,
                "{},{},{:.17e},{:.17e},{:.17e},{:.17e}",
                e.t, i, e.m[i], e.diag_p[i], e.jitter, e.clamped
            )?;
        }
    }
    Ok(())
}
