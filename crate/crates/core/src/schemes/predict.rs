use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{InferenceResult, LatentSummary, Mode};
use crate::error::{Error, Result};
use crate::gp_core::{Cholesky, GpPredictor, InputGrid, JitterSchedule};
use crate::model::sample_gamma;
use crate::par;
use crate::rng::stream;

const TAG_LATENT: u64 = 400;
const TAG_DATA: u64 = 401;

/// `n × K*` predictive draws of both latent fields.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDraws {
    pub alpha: DMatrix<f64>,
    pub beta: DMatrix<f64>,
}

struct Conditional {
    pred: GpPredictor,
    chol: Cholesky,
}

impl Conditional {
    fn new(train: &InputGrid, test: &InputGrid, p: &crate::gp_core::KernelParams) -> Result<Self> {
        let pred = GpPredictor::new(train, test, p)?;
        let chol = Cholesky::factor(pred.cov(), &JitterSchedule::default())?;
        Ok(Self { pred, chol })
    }

    fn draw<R: Rng + ?Sized>(&self, latent: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let mean = self.pred.mean(&nalgebra::DVector::from_column_slice(latent))?;
        let z: Vec<f64> = (0..self.pred.n_test()).map(|_| rng.sample(StandardNormal)).collect();
        Ok((mean + self.chol.correlate(&z)).iter().copied().collect())
    }
}

/// Draw `j` conditions on stored latent draw `j mod n`. Approximate mode
/// uses one predictor at the posterior-mean hyperparameters; the other modes
/// use the hyperparameters of the matching draw.
pub fn predict_latent(
    result: &InferenceResult,
    test: &InputGrid,
    n_draws: usize,
    seed: u64,
) -> Result<PredictiveDraws> {
    if test.dim() != result.dim() {
        return Err(Error::invalid("test grid dimension does not match the training grid"));
    }
    let n_stored = result.alpha_draws.nrows();
    if n_stored == 0 && n_draws > 0 {
        return Err(Error::invalid("result holds no latent draws"));
    }
    let ks = test.len();
    let shared = if result.mode == Mode::Pl {
        let (a, b) = result.kernel_params(0);
        Some((
            Conditional::new(&result.grid, test, &a)?,
            Conditional::new(&result.grid, test, &b)?,
        ))
    } else {
        None
    };

    let parts = par::map_chunks(n_draws, |c, r| -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        let mut rng = stream(seed, &[TAG_LATENT, c as u64]);
        let mut out = Vec::with_capacity(r.len());
        for j in r {
            let i = j % n_stored;
            let la: Vec<f64> = result.alpha_draws.row(i).iter().copied().collect();
            let lb: Vec<f64> = result.beta_draws.row(i).iter().copied().collect();
            let pair = match &shared {
                Some((ca, cb)) => (ca.draw(&la, &mut rng)?, cb.draw(&lb, &mut rng)?),
                None => {
                    let (a, b) = result.kernel_params(i);
                    let ca = Conditional::new(&result.grid, test, &a)?;
                    let cb = Conditional::new(&result.grid, test, &b)?;
                    (ca.draw(&la, &mut rng)?, cb.draw(&lb, &mut rng)?)
                }
            };
            out.push(pair);
        }
        Ok(out)
    });

    let mut alpha = DMatrix::zeros(n_draws, ks);
    let mut beta = DMatrix::zeros(n_draws, ks);
    let mut row = 0;
    for p in parts {
        for (a, b) in p? {
            for k in 0..ks {
                alpha[(row, k)] = a[k];
                beta[(row, k)] = b[k];
            }
            row += 1;
        }
    }
    Ok(PredictiveDraws { alpha, beta })
}

/// One observation per predictive draw and location, with per-location
/// mean and 5/50/95% quantiles.
pub fn predict_data(draws: &PredictiveDraws, seed: u64) -> Result<(DMatrix<f64>, LatentSummary)> {
    if draws.alpha.shape() != draws.beta.shape() {
        return Err(Error::invalid("predictive draw matrices differ in shape"));
    }
    let (n, ks) = draws.alpha.shape();
    let parts = par::map_chunks(n, |c, r| {
        let mut rng = stream(seed, &[TAG_DATA, c as u64]);
        r.map(|j| {
            (0..ks)
                .map(|k| sample_gamma(draws.alpha[(j, k)], draws.beta[(j, k)], &mut rng))
                .collect::<Vec<f64>>()
        })
        .collect::<Vec<_>>()
    });
    let mut y = DMatrix::zeros(n, ks);
    for (j, row) in parts.into_iter().flatten().enumerate() {
        for (k, v) in row.into_iter().enumerate() {
            y[(j, k)] = v;
        }
    }
    let summary = LatentSummary::from_draws(&y);
    Ok((y, summary))
}
