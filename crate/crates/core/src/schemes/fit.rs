use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{
    hyper_names, hyper_row, predict_data, predict_latent, ChainDiagnostics, InferenceResult,
    LatentSummary, Mode, PlConfig, PlOutput, TemperSchedule, WallTimes,
};
use crate::error::{Error, Result};
use crate::gp_core::{Cholesky, JitterSchedule};
use crate::linearization::{iterate_pl, split_blocks, MonteCarlo, PlRun};
use crate::model::{
    Dataset, HyperPriorSpec, JointPosterior, LatentState, ParamLayout, SurrogateBlock,
    SurrogatePosterior, TemperedPosterior,
};
use crate::par;
use crate::rng::stream;
use crate::sampler::{run_chain, run_chain_from, summarize, Chain, HmcConfig, Subspace, WarmStart};

const TAG_HMC: u64 = 100;
const TAG_SURROGATE: u64 = 101;
const TAG_TEMPER: u64 = 102;
const TAG_GAUSS: u64 = 103;
const TAG_PREDICT: u64 = 104;

struct Draws {
    alpha: DMatrix<f64>,
    beta: DMatrix<f64>,
    hypers: DMatrix<f64>,
}

/// Converts packed joint draws into latent and constrained hyper draws.
fn joint_draws(chain: &Chain, layout: ParamLayout, spec: &HyperPriorSpec) -> Result<Draws> {
    let n = chain.n_samples();
    let h = 2 * (3 + layout.d);
    let mut d = Draws {
        alpha: DMatrix::zeros(n, layout.k),
        beta: DMatrix::zeros(n, layout.k),
        hypers: DMatrix::zeros(n, h),
    };
    for i in 0..n {
        let u = layout.unpack(chain.draw(i), spec)?;
        for k in 0..layout.k {
            d.alpha[(i, k)] = u.state.alpha[k];
            d.beta[(i, k)] = u.state.beta[k];
        }
        for (j, v) in hyper_row(&u.alpha, &u.beta).into_iter().enumerate() {
            d.hypers[(i, j)] = v;
        }
    }
    Ok(d)
}

fn hyper_summaries(names: &[String], draws: &DMatrix<f64>) -> Vec<crate::sampler::ParamSummary> {
    names
        .iter()
        .enumerate()
        .map(|(j, n)| summarize(n, draws.column(j).as_slice()))
        .collect()
}

/// Fills in the predictive summary at the training locations.
fn attach_prediction(result: &mut InferenceResult, n_draws: usize) -> Result<()> {
    let t = Instant::now();
    let grid = result.grid.clone();
    let pred = predict_latent(result, &grid, n_draws, stream_seed(result.seed, TAG_PREDICT))?;
    let (_, summary) = predict_data(&pred, stream_seed(result.seed, TAG_PREDICT + 1))?;
    result.predictive = Some(summary);
    result.timing.prediction = t.elapsed().as_secs_f64();
    Ok(())
}

fn stream_seed(seed: u64, tag: u64) -> u64 {
    stream(seed, &[tag]).random()
}

/// NUTS on the joint posterior of latents and hyperparameters.
pub fn fit_direct_hmc(dataset: &Dataset, spec: &HyperPriorSpec, hmc: &HmcConfig) -> Result<InferenceResult> {
    let start = Instant::now();
    hmc.validate()?;
    let target = JointPosterior::new(dataset.clone(), spec.clone())?;
    let init = target.default_start()?;
    let mut rng = stream(hmc.seed, &[TAG_HMC]);
    let chain = run_chain(&target, hmc, &init, &mut rng)?;
    let draws = joint_draws(&chain, target.layout(), spec)?;
    let names = hyper_names(dataset.dim());
    let mut result = InferenceResult {
        mode: Mode::Hmc,
        seed: hmc.seed,
        grid: dataset.grid.clone(),
        alpha: LatentSummary::from_draws(&draws.alpha),
        beta: LatentSummary::from_draws(&draws.beta),
        alpha_draws: draws.alpha,
        beta_draws: draws.beta,
        hypers: hyper_summaries(&names, &draws.hypers),
        hyper_names: names,
        hyper_draws: draws.hypers,
        predictive: None,
        diagnostics: vec![("joint".into(), ChainDiagnostics::from_chain(&chain, hmc.max_tree_depth))],
        timing: WallTimes {
            warmup: chain.wall_warmup,
            sampling: chain.wall_sampling,
            ..WallTimes::default()
        },
        pl: None,
    };
    attach_prediction(&mut result, chain.n_samples())?;
    result.timing.total = start.elapsed().as_secs_f64();
    Ok(result)
}

fn run_pl(dataset: &Dataset, spec: &HyperPriorSpec, pl: &PlConfig, seed: u64) -> Result<PlRun> {
    let mut backend = MonteCarlo::new(spec.clone(), dataset.grid.clone(), pl.ensemble_size, seed);
    iterate_pl(&mut backend, &dataset.y, pl.settings)
}

/// `n` independent draws from `N(m, P)` as rows.
fn gaussian_rows(m: &DVector<f64>, p: &DMatrix<f64>, n: usize, seed: u64, tag: u64) -> Result<DMatrix<f64>> {
    let chol = Cholesky::factor(p, &JitterSchedule::default())?;
    let k = m.len();
    let parts = par::map_chunks(n, |c, r| {
        let mut rng = stream(seed, &[TAG_GAUSS, tag, c as u64]);
        r.map(|_| {
            let z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
            chol.correlate(&z) + m
        })
        .collect::<Vec<_>>()
    });
    let mut out = DMatrix::zeros(n, k);
    for (i, v) in parts.into_iter().flatten().enumerate() {
        out.set_row(i, &v.transpose());
    }
    Ok(out)
}

/// Linearization, then NUTS on the two surrogate hyperparameter posteriors;
/// latent uncertainty comes from the Gaussian approximation.
pub fn fit_pl_approx(
    dataset: &Dataset,
    spec: &HyperPriorSpec,
    pl: &PlConfig,
    hmc: &HmcConfig,
) -> Result<InferenceResult> {
    let start = Instant::now();
    hmc.validate()?;
    let run = run_pl(dataset, spec, pl, hmc.seed)?;
    let t_pl = start.elapsed().as_secs_f64();
    let (ma, mb, pa, pb, _) = split_blocks(&run.state)?;
    let grid = &dataset.grid;
    let sa = SurrogatePosterior::new(grid.clone(), SurrogateBlock::new(ma.clone(), pa.clone())?, spec.alpha.clone())?;
    let sb = SurrogatePosterior::new(grid.clone(), SurrogateBlock::new(mb.clone(), pb.clone())?, spec.beta.clone())?;

    let t_hmc = Instant::now();
    let run_one = |s: &SurrogatePosterior, i: u64| -> Result<Chain> {
        let mut rng = stream(hmc.seed, &[TAG_SURROGATE, i]);
        run_chain(s, hmc, &s.default_start()?, &mut rng)
    };
    let (ca, cb) = par::join(|| run_one(&sa, 0), || run_one(&sb, 1));
    let (ca, cb) = (ca?, cb?);
    let wall_hmc = t_hmc.elapsed().as_secs_f64();

    let d = dataset.dim();
    let n = ca.n_samples();
    let mut hypers = DMatrix::zeros(n, 2 * (3 + d));
    for i in 0..n {
        let row = hyper_row(&sa.constrained(ca.draw(i))?, &sb.constrained(cb.draw(i))?);
        for (j, v) in row.into_iter().enumerate() {
            hypers[(i, j)] = v;
        }
    }
    let names = hyper_names(d);
    let alpha_draws = gaussian_rows(&ma, &pa, pl.n_predictive, hmc.seed, 0)?;
    let beta_draws = gaussian_rows(&mb, &pb, pl.n_predictive, hmc.seed, 1)?;

    // The two chains may run concurrently; split their joint wall time by
    // the share each phase took.
    let warm = ca.wall_warmup + cb.wall_warmup;
    let busy = warm + ca.wall_sampling + cb.wall_sampling;
    let frac = if busy > 0.0 { warm / busy } else { 0.5 };
    let mut result = InferenceResult {
        mode: Mode::Pl,
        seed: hmc.seed,
        grid: grid.clone(),
        alpha: LatentSummary::gaussian(&ma, &pa.diagonal()),
        beta: LatentSummary::gaussian(&mb, &pb.diagonal()),
        alpha_draws,
        beta_draws,
        hypers: hyper_summaries(&names, &hypers),
        hyper_names: names,
        hyper_draws: hypers,
        predictive: None,
        diagnostics: vec![
            ("alpha_hypers".into(), ChainDiagnostics::from_chain(&ca, hmc.max_tree_depth)),
            ("beta_hypers".into(), ChainDiagnostics::from_chain(&cb, hmc.max_tree_depth)),
        ],
        timing: WallTimes {
            pl: t_pl,
            warmup: wall_hmc * frac,
            sampling: wall_hmc * (1.0 - frac),
            ..WallTimes::default()
        },
        pl: Some(PlOutput {
            state: run.state,
            trace: run.trace,
        }),
    };
    attach_prediction(&mut result, pl.n_predictive)?;
    result.timing.total = start.elapsed().as_secs_f64();
    Ok(result)
}

/// Linearization, then NUTS along the tempering path from the surrogate
/// (κ = 0) to the exact posterior (κ = 1), each step starting from the last
/// state of the previous one. Only the κ = 1 draws are kept.
///
/// At κ = 0 the target does not depend on the latents, so that step samples
/// the hyperparameters only, with latents held at the linearization mean.
pub fn fit_pl_tempered(
    dataset: &Dataset,
    spec: &HyperPriorSpec,
    pl: &PlConfig,
    schedule: &TemperSchedule,
    hmc: &HmcConfig,
) -> Result<InferenceResult> {
    let start = Instant::now();
    hmc.validate()?;
    schedule.validate()?;
    let run = run_pl(dataset, spec, pl, hmc.seed)?;
    let t_pl = start.elapsed().as_secs_f64();
    let (ma, mb, pa, pb, _) = split_blocks(&run.state)?;
    let blocks = [SurrogateBlock::new(ma.clone(), pa)?, SurrogateBlock::new(mb.clone(), pb)?];
    let layout = ParamLayout::new(dataset.len(), dataset.dim());
    let d = dataset.dim();
    let mut position = layout
        .pack(&LatentState::new(ma, mb), &spec.alpha.median(d), &spec.beta.median(d), spec)?
        .0;

    let mut warm: Option<WarmStart> = None;
    let mut diagnostics = Vec::new();
    let mut pre_final = 0.0;
    let mut last_chain = None;
    for (s, step) in schedule.steps.iter().enumerate() {
        let cfg = HmcConfig {
            n_samples: step.n_samples,
            n_warmup: step.n_warmup,
            ..hmc.clone()
        };
        let target = TemperedPosterior::new(dataset.clone(), spec.clone(), blocks.clone(), step.kappa)?;
        let mut rng = stream(hmc.seed, &[TAG_TEMPER, s as u64]);
        let chain = if step.kappa == 0.0 {
            let sub = Subspace::new(&target, position.clone(), layout.hypers().collect())?;
            let c = run_chain(&sub, &cfg, &sub.restrict(&position), &mut rng)?;
            position = sub.embed(c.last());
            c
        } else {
            let ws = match warm.take() {
                Some(w) => WarmStart { position: position.clone(), ..w },
                None => WarmStart {
                    position: position.clone(),
                    ..WarmStart::default()
                },
            };
            let c = run_chain_from(&target, &cfg, &ws, &mut rng)?;
            position = c.last().to_vec();
            warm = Some(c.warm_start());
            c
        };
        diagnostics.push((format!("kappa_{}", step.kappa), ChainDiagnostics::from_chain(&chain, hmc.max_tree_depth)));
        if s + 1 < schedule.steps.len() {
            pre_final += chain.wall_time();
        } else {
            last_chain = Some(chain);
        }
    }
    let chain = last_chain.ok_or_else(|| Error::invalid("empty tempering schedule"))?;
    let draws = joint_draws(&chain, layout, spec)?;
    let names = hyper_names(d);
    let mut result = InferenceResult {
        mode: Mode::PlTempered,
        seed: hmc.seed,
        grid: dataset.grid.clone(),
        alpha: LatentSummary::from_draws(&draws.alpha),
        beta: LatentSummary::from_draws(&draws.beta),
        alpha_draws: draws.alpha,
        beta_draws: draws.beta,
        hypers: hyper_summaries(&names, &draws.hypers),
        hyper_names: names,
        hyper_draws: draws.hypers,
        predictive: None,
        diagnostics,
        timing: WallTimes {
            pl: t_pl,
            warmup: pre_final + chain.wall_warmup,
            sampling: chain.wall_sampling,
            ..WallTimes::default()
        },
        pl: Some(PlOutput {
            state: run.state,
            trace: run.trace,
        }),
    };
    attach_prediction(&mut result, chain.n_samples())?;
    result.timing.total = start.elapsed().as_secs_f64();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp_core::InputGrid;
    use crate::linearization::PlSettings;
    use crate::sampler::MassMatrixMode;

    fn tiny() -> (Dataset, HyperPriorSpec) {
        let y = DVector::from_vec(vec![2.1, 3.5, 1.2, 4.0, 2.2, 5.1]);
        (Dataset::new(InputGrid::uniform_1d(6), y).unwrap(), HyperPriorSpec::synthetic())
    }

    fn quick(seed: u64) -> HmcConfig {
        HmcConfig {
            n_samples: 30,
            n_warmup: 30,
            target_accept: 0.8,
            max_tree_depth: 6,
            mass_matrix: MassMatrixMode::Diagonal,
            seed,
            initial_step_size: 0.1,
        }
    }

    fn quick_pl() -> PlConfig {
        PlConfig {
            ensemble_size: 400,
            settings: PlSettings { t_max: 2, tol: None },
            n_predictive: 50,
        }
    }

    fn check(r: &InferenceResult, k: usize) {
        for s in [&r.alpha, &r.beta, r.predictive.as_ref().unwrap()] {
            assert_eq!(s.len(), k);
            for i in 0..k {
                assert!(s.mean[i].is_finite());
                assert!(s.q05[i] <= s.q50[i] && s.q50[i] <= s.q95[i]);
            }
        }
        assert_eq!(r.hypers.len(), r.hyper_names.len());
    }

    #[test]
    fn single_location_direct() {
        let (_, spec) = tiny();
        let data = Dataset::new(InputGrid::uniform_1d(1), DVector::from_vec(vec![3.0])).unwrap();
        let r = fit_direct_hmc(&data, &spec, &quick(1)).unwrap();
        check(&r, 1);
    }

    #[test]
    fn all_modes_run_and_repeat() {
        let (data, spec) = tiny();
        let a = fit_direct_hmc(&data, &spec, &quick(2)).unwrap();
        check(&a, 6);
        let b = fit_pl_approx(&data, &spec, &quick_pl(), &quick(2)).unwrap();
        check(&b, 6);
        assert_eq!(b.alpha_draws.nrows(), 50);
        let sched = TemperSchedule::new(&[0.0, 1.0], &[(1, 20), (20, 20)]).unwrap();
        let c = fit_pl_tempered(&data, &spec, &quick_pl(), &sched, &quick(2)).unwrap();
        check(&c, 6);
        assert_eq!(c.alpha_draws.nrows(), 20);
        let c2 = fit_pl_tempered(&data, &spec, &quick_pl(), &sched, &quick(2)).unwrap();
        assert_eq!(c.alpha, c2.alpha);
        assert_eq!(c.hyper_draws, c2.hyper_draws);
        assert_eq!(c.predictive, c2.predictive);
    }
}
