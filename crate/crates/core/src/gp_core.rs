//! Squared-exponential Gaussian process primitives: covariance assembly,
//! jittered Cholesky factorization, Gaussian log-densities and the GP
//! predictive (conditional) distribution.
//!
//! All solves go through a Cholesky factor; explicit inverses are only formed
//! where a gradient needs every entry of one.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `ln(2π)`.
pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// K measurement locations in D dimensions, stored row-per-point.
#[derive(Debug, Clone, PartialEq)]
pub struct InputGrid {
    points: DMatrix<f64>,
}

impl InputGrid {
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        if points.ncols() == 0 {
            return Err(Error::invalid("input grid needs at least one dimension"));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("input grid has non-finite coordinates"));
        }
        Ok(Self { points })
    }

    /// A grid that may hold zero points (prediction targets).
    pub fn from_rows(rows: &[Vec<f64>], dim: usize) -> Result<Self> {
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("ragged input grid rows"));
        }
        let points = DMatrix::from_fn(rows.len(), dim, |i, d| rows[i][d]);
        Self::new(points)
    }

    /// `k` evenly spaced points on [0, 1].
    pub fn uniform_1d(k: usize) -> Self {
        let points = if k == 1 {
            DMatrix::from_element(1, 1, 0.0)
        } else {
            DMatrix::from_fn(k, 1, |i, _| i as f64 / (k - 1) as f64)
        };
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn coord(&self, i: usize, d: usize) -> f64 {
        self.points[(i, d)]
    }

    /// Squared coordinate differences per dimension, `out[d][(i, j)]`.
    pub fn squared_differences(&self, other: &InputGrid) -> Vec<DMatrix<f64>> {
        (0..self.dim())
            .map(|d| {
                DMatrix::from_fn(self.len(), other.len(), |i, j| {
                    let diff = self.points[(i, d)] - other.points[(j, d)];
                    diff * diff
                })
            })
            .collect()
    }
}

/// Hyperparameters of one latent GP: constant mean plus θ = (σ_e, σ_s, l_1..l_D).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub mean: f64,
    pub noise_std: f64,
    pub signal_std: f64,
    pub length_scales: Vec<f64>,
}

impl KernelParams {
    pub fn new(mean: f64, noise_std: f64, signal_std: f64, length_scales: Vec<f64>) -> Result<Self> {
        let p = Self {
            mean,
            noise_std,
            signal_std,
            length_scales,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !self.mean.is_finite() {
            return Err(Error::invalid("kernel mean must be finite"));
        }
        if !pos(self.noise_std) || !pos(self.signal_std) {
            return Err(Error::invalid(format!(
                "kernel standard deviations must be positive and finite (noise {}, signal {})",
                self.noise_std, self.signal_std
            )));
        }
        if self.length_scales.is_empty() || !self.length_scales.iter().all(|&l| pos(l)) {
            return Err(Error::invalid(format!(
                "length scales must be positive and finite: {:?}",
                self.length_scales
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }
}

/// Jitter levels tried in order, as multiples of the mean diagonal entry.
#[derive(Debug, Clone, PartialEq)]
pub struct JitterSchedule {
    pub multipliers: Vec<f64>,
}

impl Default for JitterSchedule {
    fn default() -> Self {
        Self {
            multipliers: vec![0.0, 1e-10, 1e-8, 1e-6, 1e-4],
        }
    }
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = A + jitter·I`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
    jitter: f64,
}

/// Column-oriented in-place factorization of the lower triangle. Returns
/// `false` on a non-positive or non-finite pivot.
fn factor_in_place(a: &mut DMatrix<f64>) -> bool {
    let n = a.nrows();
    let data = a.as_mut_slice();
    for j in 0..n {
        let (left, right) = data.split_at_mut(j * n);
        let col_j = &mut right[j..n];
        // col_j -= Σ_k L[j,k] L[j.., k], four columns per pass
        let mut k = 0;
        while k + 4 <= j {
            let c0 = &left[k * n + j..(k + 1) * n];
            let c1 = &left[(k + 1) * n + j..(k + 2) * n];
            let c2 = &left[(k + 2) * n + j..(k + 3) * n];
            let c3 = &left[(k + 3) * n + j..(k + 4) * n];
            let (l0, l1, l2, l3) = (c0[0], c1[0], c2[0], c3[0]);
            for i in 0..col_j.len() {
                col_j[i] -= l0 * c0[i] + l1 * c1[i] + l2 * c2[i] + l3 * c3[i];
            }
            k += 4;
        }
        while k < j {
            let c = &left[k * n + j..(k + 1) * n];
            let l = c[0];
            for (x, &y) in col_j.iter_mut().zip(c) {
                *x -= l * y;
            }
            k += 1;
        }
        let d = col_j[0];
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        col_j[0] = d;
        let inv = 1.0 / d;
        for x in col_j[1..].iter_mut() {
            *x *= inv;
        }
        for x in right[..j].iter_mut() {
            *x = 0.0;
        }
    }
    true
}

impl Cholesky {
    /// Factorizes `a + j·mean(diag(a))·I` for the first `j` in the schedule
    /// that succeeds.
    pub fn factor(a: &DMatrix<f64>, schedule: &JitterSchedule) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::invalid(format!(
                "cannot factor a non-square {}x{} matrix",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        let scale = if n == 0 { 1.0 } else { a.diagonal().mean().abs().max(f64::MIN_POSITIVE) };
        for &m in &schedule.multipliers {
            let jitter = m * scale;
            let mut work = a.clone();
            if jitter > 0.0 {
                for i in 0..n {
                    work[(i, i)] += jitter;
                }
            }
            if factor_in_place(&mut work) {
                return Ok(Self { l: work, jitter });
            }
        }
        let sym = (a + a.transpose()) * 0.5;
        let min_eigenvalue = if sym.iter().all(|v| v.is_finite()) {
            sym.symmetric_eigenvalues().min()
        } else {
            f64::NAN
        };
        Err(Error::Numerical {
            msg: format!("Cholesky failed for a {n}x{n} matrix after jitter escalation"),
            min_eigenvalue,
        })
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// `log det(A + jitter·I)`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Solves `L x = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        let data = self.l.as_slice();
        for i in 0..n {
            let col = &data[i * n..(i + 1) * n];
            let xi = b[i] / col[i];
            b[i] = xi;
            if xi != 0.0 {
                for (bj, &lj) in b[i + 1..].iter_mut().zip(&col[i + 1..]) {
                    *bj -= xi * lj;
                }
            }
        }
    }

    /// Solves `Lᵀ x = b` in place.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        let data = self.l.as_slice();
        for i in (0..n).rev() {
            let col = &data[i * n..(i + 1) * n];
            let s: f64 = col[i + 1..].iter().zip(&b[i + 1..]).map(|(a, x)| a * x).sum();
            b[i] = (b[i] - s) / col[i];
        }
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_lower_in_place(x.as_mut_slice());
        self.solve_upper_in_place(x.as_mut_slice());
        x
    }

    /// Solves `A X = B` column by column.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        let n = self.dim();
        for c in 0..x.ncols() {
            let col = &mut x.as_mut_slice()[c * n..(c + 1) * n];
            self.solve_lower_in_place(col);
            self.solve_upper_in_place(col);
        }
        x
    }

    /// `L⁻¹ B`.
    pub fn solve_lower_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        let n = self.dim();
        for c in 0..x.ncols() {
            self.solve_lower_in_place(&mut x.as_mut_slice()[c * n..(c + 1) * n]);
        }
        x
    }

    /// `L⁻¹`, lower triangular.
    pub fn lower_inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let ld = self.l.as_slice();
        let mut inv = DMatrix::<f64>::zeros(n, n);
        let out = inv.as_mut_slice();
        for j in 0..n {
            let x = &mut out[j * n..(j + 1) * n];
            x[j] = 1.0;
            let mut i = j;
            // Blocks of four: finish the 4×4 triangle, then one fused update
            // of the rows below.
            while i + 4 <= n {
                let c: [&[f64]; 4] = std::array::from_fn(|t| &ld[(i + t) * n..(i + t + 1) * n]);
                let mut xi = [0.0; 4];
                for t in 0..4 {
                    let v = x[i + t] / c[t][i + t];
                    xi[t] = v;
                    x[i + t] = v;
                    for u in (t + 1)..4 {
                        x[i + u] -= v * c[t][i + u];
                    }
                }
                let base = i + 4;
                let (c0, c1, c2, c3) = (&c[0][base..], &c[1][base..], &c[2][base..], &c[3][base..]);
                for (r, xr) in x[base..].iter_mut().enumerate() {
                    *xr -= xi[0] * c0[r] + xi[1] * c1[r] + xi[2] * c2[r] + xi[3] * c3[r];
                }
                i += 4;
            }
            while i < n {
                let col = &ld[i * n..(i + 1) * n];
                let xi = x[i] / col[i];
                x[i] = xi;
                for (xk, &lk) in x[i + 1..].iter_mut().zip(&col[i + 1..]) {
                    *xk -= xi * lk;
                }
                i += 1;
            }
        }
        inv
    }

    /// `(A + jitter·I)⁻¹ = L⁻ᵀ L⁻¹`, symmetric.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let li = self.lower_inverse();
        // Rows of L⁻¹ as contiguous slices: row k is nonzero in columns 0..=k.
        let rows = li.transpose();
        let ld = li.as_slice();
        let rd = rows.as_slice();
        let mut inv = DMatrix::<f64>::zeros(n, n);
        let out = inv.as_mut_slice();
        // Upper triangle, column by column: inv[0..=b, b] = Σ_{k≥b} L⁻¹[k,b] · row_k[0..=b]
        for b in 0..n {
            let col = &mut out[b * n..b * n + b + 1];
            for k in b..n {
                let s = ld[b * n + k];
                for (o, &r) in col.iter_mut().zip(&rd[k * n..k * n + b + 1]) {
                    *o += s * r;
                }
            }
        }
        for b in 0..n {
            for a in 0..b {
                out[a * n + b] = out[b * n + a];
            }
        }
        inv
    }

    /// `L z` for a standard-normal vector `z`, i.e. a zero-mean draw.
    pub fn correlate(&self, z: &[f64]) -> DVector<f64> {
        let n = self.dim();
        let ld = self.l.as_slice();
        let mut out = DVector::<f64>::zeros(n);
        for (k, &zk) in z.iter().enumerate().take(n) {
            if zk != 0.0 {
                let col = &ld[k * n..(k + 1) * n];
                for i in k..n {
                    out[i] += col[i] * zk;
                }
            }
        }
        out
    }
}

/// A dense symmetric covariance with an optional cached factor.
#[derive(Debug, Clone)]
pub struct CovMatrix {
    matrix: DMatrix<f64>,
    factor: Option<Cholesky>,
}

impl CovMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::invalid(format!(
                "covariance must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self {
            matrix,
            factor: None,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn factor(&self) -> Option<&Cholesky> {
        self.factor.as_ref()
    }

    /// Jitter applied by the cached factorization (0 if none yet).
    pub fn jitter(&self) -> f64 {
        self.factor.as_ref().map_or(0.0, |f| f.jitter)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn ensure_factor(&self) -> Result<std::borrow::Cow<'_, Cholesky>> {
        match &self.factor {
            Some(f) => Ok(std::borrow::Cow::Borrowed(f)),
            None => Ok(std::borrow::Cow::Owned(Cholesky::factor(
                &self.matrix,
                &JitterSchedule::default(),
            )?)),
        }
    }
}

/// Squared-exponential cross-covariance in the per-dimension product form:
/// `σ_s² Π_d exp(−(a_id − b_jd)² / (2 l_d²))`. No noise term.
pub fn se_covariance(a: &InputGrid, b: &InputGrid, params: &KernelParams) -> Result<DMatrix<f64>> {
    if a.dim() != b.dim() || a.dim() != params.dim() {
        return Err(Error::invalid(format!(
            "dimension mismatch: grids {} and {}, {} length scales",
            a.dim(),
            b.dim(),
            params.dim()
        )));
    }
    let s2 = params.signal_std * params.signal_std;
    let inv2l2: Vec<f64> = params
        .length_scales
        .iter()
        .map(|l| 0.5 / (l * l))
        .collect();
    let pa = a.points();
    let pb = b.points();
    let same = std::ptr::eq(a, b);
    let mut out = DMatrix::<f64>::zeros(a.len(), b.len());
    for j in 0..b.len() {
        let start = if same { j } else { 0 };
        for i in start..a.len() {
            let mut v = s2;
            for (d, &c) in inv2l2.iter().enumerate() {
                let diff = pa[(i, d)] - pb[(j, d)];
                v *= (-diff * diff * c).exp();
            }
            out[(i, j)] = v;
            if same {
                out[(j, i)] = v;
            }
        }
    }
    Ok(out)
}

/// Same kernel evaluated with the exponent summed first:
/// `σ_s² exp(−½ Σ_d (a_id − b_jd)² / l_d²)`.
pub fn se_covariance_summed(
    a: &InputGrid,
    b: &InputGrid,
    params: &KernelParams,
) -> Result<DMatrix<f64>> {
    if a.dim() != b.dim() || a.dim() != params.dim() {
        return Err(Error::invalid("dimension mismatch"));
    }
    let s2 = params.signal_std * params.signal_std;
    Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| {
        let q: f64 = (0..a.dim())
            .map(|d| {
                let diff = a.coord(i, d) - b.coord(j, d);
                diff * diff / (params.length_scales[d] * params.length_scales[d])
            })
            .sum();
        s2 * (-0.5 * q).exp()
    }))
}

/// `cov + σ_e² I`.
pub fn add_noise_diag(mut cov: DMatrix<f64>, noise_std: f64) -> Result<CovMatrix> {
    if !cov.is_square() {
        return Err(Error::invalid("add_noise_diag needs a square matrix"));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::invalid("noise standard deviation must be >= 0"));
    }
    let v = noise_std * noise_std;
    for i in 0..cov.nrows() {
        cov[(i, i)] += v;
    }
    CovMatrix::new(cov)
}

/// Attaches a Cholesky factor using the jitter schedule.
pub fn chol_factor(mut cov: CovMatrix, schedule: &JitterSchedule) -> Result<CovMatrix> {
    cov.factor = Some(Cholesky::factor(&cov.matrix, schedule)?);
    Ok(cov)
}

/// Multivariate normal log-density through a Cholesky factor.
pub fn logpdf_with_factor(x: &DVector<f64>, mean: &DVector<f64>, chol: &Cholesky) -> Result<f64> {
    let k = x.len();
    if mean.len() != k || chol.dim() != k {
        return Err(Error::invalid(format!(
            "gaussian_logpdf: dimensions x={}, mean={}, cov={}",
            k,
            mean.len(),
            chol.dim()
        )));
    }
    let mut r: Vec<f64> = x.iter().zip(mean.iter()).map(|(a, b)| a - b).collect();
    chol.solve_lower_in_place(&mut r);
    let quad: f64 = r.iter().map(|v| v * v).sum();
    Ok(-0.5 * k as f64 * LN_2PI - 0.5 * chol.log_det() - 0.5 * quad)
}

/// `log N(x; mean, cov)`.
pub fn gaussian_logpdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &CovMatrix) -> Result<f64> {
    let f = cov.ensure_factor()?;
    logpdf_with_factor(x, mean, &f)
}

/// GP conditional for test locations given latent values at the training
/// locations; see [`GpPredictor`] for the reusable form.
pub fn gp_predict(
    train: &InputGrid,
    test: &InputGrid,
    latent: &DVector<f64>,
    params: &KernelParams,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let pred = GpPredictor::new(train, test, params)?;
    let mean = pred.mean(latent)?;
    Ok((mean, pred.cov))
}

/// Predictive GP quantities that depend only on the grids and hyperparameters,
/// so the covariance and gain can be reused for many latent draws.
#[derive(Debug, Clone)]
pub struct GpPredictor {
    /// `Σ(x*, x) (Σ(x,x) + σ_e² I)⁻¹`, K*×K.
    gain: DMatrix<f64>,
    cov: DMatrix<f64>,
    mean: f64,
}

impl GpPredictor {
    pub fn new(train: &InputGrid, test: &InputGrid, params: &KernelParams) -> Result<Self> {
        params.validate()?;
        let k_train = add_noise_diag(se_covariance(train, train, params)?, params.noise_std)?;
        let chol = Cholesky::factor(k_train.matrix(), &JitterSchedule::default())?;
        let k_cross = se_covariance(test, train, params)?; // K*×K
        // gain = k_cross C⁻¹  =>  gainᵀ = C⁻¹ k_crossᵀ
        let gain = chol.solve_mat(&k_cross.transpose()).transpose();
        let mut cov = se_covariance(test, test, params)? - &gain * k_cross.transpose();
        let n = cov.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
            if cov[(i, i)] < 0.0 {
                cov[(i, i)] = 0.0;
            }
        }
        Ok(Self {
            gain,
            cov,
            mean: params.mean,
        })
    }

    pub fn mean(&self, latent: &DVector<f64>) -> Result<DVector<f64>> {
        if latent.len() != self.gain.ncols() {
            return Err(Error::invalid(format!(
                "latent vector has length {}, expected {}",
                latent.len(),
                self.gain.ncols()
            )));
        }
        let centered = latent.add_scalar(-self.mean);
        Ok((&self.gain * centered).add_scalar(self.mean))
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn n_test(&self) -> usize {
        self.cov.nrows()
    }
}

/// Density of a standard normal at `x`, `ln φ(x)`.
pub fn std_normal_ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * (2.0 * PI).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid3() -> InputGrid {
        InputGrid::new(DMatrix::from_column_slice(3, 1, &[0.0, 0.5, 1.0])).unwrap()
    }

    fn params(sigma_s: f64, l: f64) -> KernelParams {
        KernelParams::new(0.0, 0.1, sigma_s, vec![l]).unwrap()
    }

    #[test]
    fn se_same_point_is_signal_variance() {
        let g = InputGrid::new(DMatrix::from_row_slice(1, 2, &[0.3, -1.0])).unwrap();
        let p = KernelParams::new(0.0, 0.1, 1.7, vec![0.2, 3.0]).unwrap();
        let c = se_covariance(&g, &g, &p).unwrap();
        assert_relative_eq!(c[(0, 0)], 1.7 * 1.7, epsilon = 1e-15);
    }

    #[test]
    fn se_one_length_scale_apart() {
        let g = InputGrid::new(DMatrix::from_column_slice(2, 1, &[0.0, 0.4])).unwrap();
        let c = se_covariance(&g, &g, &params(1.0, 0.4)).unwrap();
        assert_relative_eq!(c[(0, 1)], (-0.5f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(c[(0, 1)], 0.606_530_659_712_633_4, epsilon = 1e-12);
    }

    #[test]
    fn se_matches_scalar_loop() {
        let g = grid3();
        let c = se_covariance(&g, &g, &params(1.0, 0.5)).unwrap();
        let xs = [0.0, 0.5, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = xs[i] - xs[j];
                let expect = (-0.5 * d * d / 0.25).exp();
                assert_relative_eq!(c[(i, j)], expect, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn product_and_summed_forms_agree() {
        let rows: Vec<Vec<f64>> = (0..7)
            .map(|i| vec![i as f64 * 0.13, (i as f64 * 0.7).sin(), 0.1 * i as f64])
            .collect();
        let g = InputGrid::from_rows(&rows, 3).unwrap();
        let p = KernelParams::new(0.0, 0.1, 0.8, vec![0.3, 1.1, 0.05]).unwrap();
        let a = se_covariance(&g, &g, &p).unwrap();
        let b = se_covariance_summed(&g, &g, &p).unwrap();
        assert!((a - b).amax() < 1e-14);
    }

    #[test]
    fn se_dimension_mismatch() {
        let g = grid3();
        let p = KernelParams::new(0.0, 0.1, 1.0, vec![0.5, 0.5]).unwrap();
        assert!(matches!(se_covariance(&g, &g, &p), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn noise_diag() {
        let c = add_noise_diag(DMatrix::zeros(2, 2), 1.0).unwrap();
        assert_eq!(c.matrix(), &DMatrix::identity(2, 2));
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        assert_eq!(add_noise_diag(m.clone(), 0.0).unwrap().matrix(), &m);
        let se = se_covariance(&grid3(), &grid3(), &params(1.0, 0.5)).unwrap();
        let noisy = add_noise_diag(se.clone(), 0.1).unwrap();
        let diff = noisy.matrix() - &se;
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 0.01 } else { 0.0 };
                assert_relative_eq!(diff[(i, j)], expect, epsilon = 1e-15);
            }
        }
        assert!(add_noise_diag(DMatrix::zeros(2, 3), 1.0).is_err());
    }

    #[test]
    fn cholesky_identity_and_hand_case() {
        let s = JitterSchedule::default();
        let c = Cholesky::factor(&DMatrix::identity(4, 4), &s).unwrap();
        assert_eq!(c.l(), &DMatrix::identity(4, 4));
        assert_eq!(c.jitter(), 0.0);

        let a = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let c = Cholesky::factor(&a, &s).unwrap();
        assert_relative_eq!(c.l()[(0, 0)], 2.0, epsilon = 1e-15);
        assert_relative_eq!(c.l()[(1, 0)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(c.l()[(1, 1)], 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(c.l()[(0, 1)], 0.0);
    }

    #[test]
    fn cholesky_rank_one_needs_jitter() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let c = Cholesky::factor(&a, &JitterSchedule::default()).unwrap();
        assert!(c.jitter() > 0.0);
        assert_eq!(c.jitter(), 1e-10);
        let rebuilt = c.l() * c.l().transpose();
        let expect = &a + DMatrix::identity(2, 2) * c.jitter();
        assert!((rebuilt - expect).amax() < 1e-14);
    }

    #[test]
    fn cholesky_exhausted_schedule_reports_eigenvalue() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        match Cholesky::factor(&a, &JitterSchedule::default()) {
            Err(Error::Numerical { min_eigenvalue, .. }) => {
                assert_relative_eq!(min_eigenvalue, -1.0, epsilon = 1e-12)
            }
            other => panic!("expected numerical failure, got {other:?}"),
        }
    }

    #[test]
    fn inverse_and_solves() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let c = Cholesky::factor(&a, &JitterSchedule::default()).unwrap();
        let inv = c.inverse();
        assert!((&a * &inv - DMatrix::identity(3, 3)).amax() < 1e-13);
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let x = c.solve_vec(&b);
        assert!((&a * x - b).amax() < 1e-13);
        assert_relative_eq!(c.log_det(), a.determinant().ln(), epsilon = 1e-13);
    }

    #[test]
    fn logpdf_standard_normal() {
        let cov = CovMatrix::new(DMatrix::identity(1, 1)).unwrap();
        let v = gaussian_logpdf(&DVector::zeros(1), &DVector::zeros(1), &cov).unwrap();
        assert_relative_eq!(v, -0.918_938_533_204_672_7, epsilon = 1e-15);
    }

    #[test]
    fn logpdf_at_mean() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let cov = chol_factor(CovMatrix::new(a.clone()).unwrap(), &JitterSchedule::default()).unwrap();
        let m = DVector::from_vec(vec![0.3, -1.0]);
        let v = gaussian_logpdf(&m, &m, &cov).unwrap();
        assert_relative_eq!(v, -LN_2PI - 0.5 * a.determinant().ln(), epsilon = 1e-14);
    }

    #[test]
    fn logpdf_explicit_inverse_oracle() {
        let (a, b, c) = (1.5, -0.4, 0.8);
        let det = a * c - b * b;
        let cov = CovMatrix::new(DMatrix::from_row_slice(2, 2, &[a, b, b, c])).unwrap();
        let x = DVector::from_vec(vec![0.7, -0.2]);
        let m = DVector::from_vec(vec![0.1, 0.3]);
        let (r0, r1) = (x[0] - m[0], x[1] - m[1]);
        // explicit 2×2 inverse
        let quad = (c * r0 * r0 - 2.0 * b * r0 * r1 + a * r1 * r1) / det;
        let expect = -(2.0 * PI).ln() - 0.5 * det.ln() - 0.5 * quad;
        assert_relative_eq!(gaussian_logpdf(&x, &m, &cov).unwrap(), expect, epsilon = 1e-12);
    }

    #[test]
    fn predict_interpolates_without_noise() {
        let g = grid3();
        let p = KernelParams::new(0.5, 1e-7, 1.0, vec![0.3]).unwrap();
        let v = DVector::from_vec(vec![0.1, 0.9, -0.4]);
        let (m, c) = gp_predict(&g, &g, &v, &p).unwrap();
        assert!((m - &v).amax() < 1e-6);
        assert!(c.amax() < 1e-6);
    }

    #[test]
    fn predict_empty_test_grid() {
        let empty = InputGrid::new(DMatrix::zeros(0, 1)).unwrap();
        let p = params(1.0, 0.5);
        let (m, c) = gp_predict(&grid3(), &empty, &DVector::zeros(3), &p).unwrap();
        assert_eq!(m.len(), 0);
        assert_eq!(c.shape(), (0, 0));
    }

    #[test]
    fn predict_scalar_oracle() {
        let train = InputGrid::new(DMatrix::from_element(1, 1, 0.2)).unwrap();
        let test = InputGrid::new(DMatrix::from_element(1, 1, 0.5)).unwrap();
        let p = KernelParams::new(1.0, 0.3, 1.2, vec![0.4]).unwrap();
        let v = DVector::from_element(1, 2.0);
        let (m, c) = gp_predict(&train, &test, &v, &p).unwrap();
        let k_cross = 1.44 * (-0.5 * 0.09 / 0.16f64).exp();
        let k_train = 1.44 + 0.09;
        assert_relative_eq!(m[0], k_cross / k_train * (2.0 - 1.0) + 1.0, epsilon = 1e-13);
        assert_relative_eq!(c[(0, 0)], 1.44 - k_cross * k_cross / k_train, epsilon = 1e-13);
    }
}
