use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use lggp::gp_core::{add_noise_diag, gp_predict, se_covariance, InputGrid, KernelParams};
use lggp::linearization::{
    iterate_pl, mc_moment_estimates, pl_update, slr_from_moments, Ensemble, LinearGaussian,
    MomentState, PlSettings,
};
use lggp::model::{
    gamma_loglik, hyperprior_logpdf, joint_logpost, tempered_logpost, to_constrained,
    to_unconstrained, Dataset, HyperPriorSpec, LatentState, ParamLayout, SurrogateBlock,
};
use lggp::schemes::LatentSummary;

fn distinct_grid(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::btree_set(0u32..10_000, k).prop_map(|s| s.into_iter().map(|v| v as f64 / 10_000.0).collect())
}

fn kernel() -> impl Strategy<Value = KernelParams> {
    (-3.0..3.0f64, 1e-6..1.0f64, 0.1..3.0f64, 0.02..1.0f64)
        .prop_map(|(m, e, s, l)| KernelParams::new(m, e, s, vec![l]).unwrap())
}

fn grid_1d(xs: &[f64]) -> InputGrid {
    let rows: Vec<Vec<f64>> = xs.iter().map(|x| vec![*x]).collect();
    InputGrid::from_rows(&rows, 1).unwrap()
}

fn spd(n: usize, seed: &[f64]) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |i, j| seed[(i * n + j) % seed.len()] + if i == j { 1.0 } else { 0.0 });
    &a * a.transpose() + DMatrix::identity(n, n) * 0.1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn se_covariance_symmetric_and_bounded(xs in distinct_grid(12), p in kernel()) {
        let g = grid_1d(&xs);
        let c = se_covariance(&g, &g, &p).unwrap();
        let s2 = p.signal_std * p.signal_std;
        for i in 0..12 {
            for j in 0..12 {
                prop_assert_eq!(c[(i, j)], c[(j, i)]);
                prop_assert!(c[(i, j)] >= 0.0 && c[(i, j)] <= s2 * (1.0 + 1e-15));
            }
        }
    }

    #[test]
    fn nugget_factorizes_without_jitter(xs in distinct_grid(20), p in kernel()) {
        let g = grid_1d(&xs);
        let cov = add_noise_diag(se_covariance(&g, &g, &p).unwrap(), p.noise_std.max(1e-6)).unwrap();
        prop_assert_eq!(cov.jitter(), 0.0);
    }

    #[test]
    fn prediction_never_inflates_variance(xs in distinct_grid(8), ts in distinct_grid(5), p in kernel()) {
        let (train, test) = (grid_1d(&xs), grid_1d(&ts));
        let latent = DVector::from_fn(8, |i, _| (i as f64).sin());
        let (_, cov) = gp_predict(&train, &test, &latent, &p).unwrap();
        let prior = se_covariance(&test, &test, &p).unwrap();
        for i in 0..5 {
            prop_assert!(cov[(i, i)] <= prior[(i, i)] + 1e-10);
            prop_assert!(cov[(i, i)] >= 0.0);
        }
    }

    #[test]
    fn loglik_concave_in_beta(a in -2.0..3.0f64, b in -2.0..3.0f64, y in 0.01..20.0f64) {
        let data = Dataset::new(grid_1d(&[0.5]), DVector::from_element(1, y)).unwrap();
        let f = |beta: f64| {
            gamma_loglik(&data, &LatentState::new(DVector::from_element(1, a), DVector::from_element(1, beta))).unwrap()
        };
        let h = 1e-3;
        let second = (f(b + h) - 2.0 * f(b) + f(b - h)) / (h * h);
        let exact = -b.exp() * y;
        prop_assert!(second < 0.0);
        prop_assert!((second - exact).abs() <= 1e-4 * exact.abs().max(1.0));
    }

    #[test]
    fn hyperprior_support(l in 0.0..1.0f64, lower in 0.0..0.5f64) {
        let mut spec = HyperPriorSpec::synthetic();
        spec.alpha.length_lower = lower;
        let p = KernelParams::new(2.0, 0.1, 1.0, vec![l]).unwrap();
        let v = hyperprior_logpdf(&spec.alpha, &p);
        if l < lower {
            prop_assert_eq!(v, f64::NEG_INFINITY);
        } else {
            prop_assert!(v.is_finite());
        }
    }

    #[test]
    fn transform_round_trip(p in kernel(), lower in 0.0..0.01f64) {
        let u = to_unconstrained(&p, lower).unwrap();
        let (back, _) = to_constrained(&u, lower).unwrap();
        prop_assert!((back.mean - p.mean).abs() <= 1e-12);
        prop_assert!((back.noise_std - p.noise_std).abs() <= 1e-12 * p.noise_std.max(1.0));
        prop_assert!((back.signal_std - p.signal_std).abs() <= 1e-12 * p.signal_std.max(1.0));
        prop_assert!((back.length_scales[0] - p.length_scales[0]).abs() <= 1e-12);
    }

    #[test]
    fn tempered_endpoint_is_joint(
        z in prop::collection::vec(-1.0..1.0f64, 16),
        pa in kernel(),
        pb in kernel(),
    ) {
        let spec = HyperPriorSpec::synthetic();
        let xs: Vec<f64> = (0..8).map(|i| i as f64 / 7.0).collect();
        let y = DVector::from_fn(8, |i, _| 1.0 + 0.3 * i as f64);
        let data = Dataset::new(grid_1d(&xs), y).unwrap();
        let state = LatentState::new(
            DVector::from_fn(8, |i, _| 2.0 + z[i]),
            DVector::from_fn(8, |i, _| 1.0 + z[8 + i]),
        );
        let mut pa = pa;
        pa.length_scales[0] = pa.length_scales[0].max(spec.alpha.length_lower + 1e-3);
        let mut pb = pb;
        pb.length_scales[0] = pb.length_scales[0].max(spec.beta.length_lower + 1e-3);
        let layout = ParamLayout::new(8, 1);
        let packed = layout.pack(&state, &pa, &pb, &spec).unwrap();
        let block = SurrogateBlock::new(DVector::from_element(8, 1.0), DMatrix::identity(8, 8) * 0.1).unwrap();
        let blocks = [block.clone(), block];
        let t = tempered_logpost(&data, packed.as_slice(), &spec, &blocks, 1.0).unwrap();
        // Compare at the constrained values the packed vector decodes to.
        let u = layout.unpack(packed.as_slice(), &spec).unwrap();
        let j = joint_logpost(&data, &u.state, &u.alpha, &u.beta, &spec).unwrap();
        prop_assert_eq!(t.to_bits(), j.to_bits());
        let direct = joint_logpost(&data, &state, &pa, &pb, &spec).unwrap();
        prop_assert!((t - direct).abs() <= 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn linear_gaussian_posterior_shrinks(seed in prop::collection::vec(-1.0..1.0f64, 40), ys in prop::collection::vec(-2.0..2.0f64, 3)) {
        let n = 4;
        let p0 = spd(n, &seed);
        let h = DMatrix::from_fn(3, n, |i, j| seed[(7 * i + 3 * j) % 40]);
        let mut backend = LinearGaussian {
            h,
            c: DVector::zeros(3),
            r: DMatrix::identity(3, 3) * 0.5,
            m0: DVector::from_fn(n, |i, _| seed[i]),
            p0: p0.clone(),
        };
        let run = iterate_pl(&mut backend, &DVector::from_column_slice(&ys), PlSettings::default()).unwrap();
        let p = &run.state.p;
        for i in 0..n {
            prop_assert!(p[(i, i)] <= p0[(i, i)] + 1e-10);
            for j in 0..n {
                prop_assert!((p[(i, j)] - p[(j, i)]).abs() <= 1e-12 * p0.amax());
            }
        }
    }

    #[test]
    fn moment_estimates_permutation_invariant(
        vals in prop::collection::vec(-3.0..3.0f64, 24),
        shift in 1usize..6,
    ) {
        // K = 1: latent rows (α, β), six members.
        let j = 6;
        let latent = DMatrix::from_fn(2, j, |r, c| vals[2 * c + r]);
        let y = DMatrix::from_fn(1, j, |_, c| vals[12 + c].abs() + 0.1);
        let perm: Vec<usize> = (0..j).map(|c| (c + shift) % j).collect();
        let latent_p = DMatrix::from_fn(2, j, |r, c| latent[(r, perm[c])]);
        let y_p = DMatrix::from_fn(1, j, |_, c| y[(0, perm[c])]);
        let m = DVector::from_column_slice(&vals[20..22]);
        let a = mc_moment_estimates(&Ensemble::new(latent, y).unwrap(), &m).unwrap();
        let b = mc_moment_estimates(&Ensemble::new(latent_p, y_p).unwrap(), &m).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn update_keeps_covariance_symmetric(seed in prop::collection::vec(-1.0..1.0f64, 30)) {
        let n = 4;
        let prior = MomentState::new(DVector::from_fn(n, |i, _| seed[i]), spd(n, &seed), 0).unwrap();
        let h = DMatrix::from_fn(2, n, |i, j| seed[(5 * i + j) % 30]);
        let est = lggp::linearization::MomentEstimates {
            mu_plus: &h * &prior.m,
            p_yy: &h * &prior.p * h.transpose() + DMatrix::identity(2, 2) * 0.3,
            p_xy: &prior.p * h.transpose(),
        };
        let slr = slr_from_moments(&est, &prior).unwrap();
        let (post, _) = pl_update(&prior, &slr, &DVector::from_element(2, 0.5)).unwrap();
        prop_assert_eq!(&post.p, &post.p.transpose());
    }

    #[test]
    fn summary_quantiles_ordered(vals in prop::collection::vec(-10.0..10.0f64, 60)) {
        let draws = DMatrix::from_column_slice(20, 3, &vals);
        let s = LatentSummary::from_draws(&draws);
        for k in 0..3 {
            prop_assert!(s.q05[k] <= s.q50[k] && s.q50[k] <= s.q95[k]);
            prop_assert!(s.mean[k].is_finite());
        }
    }
}
