use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use lggp::gp_core::{gaussian_logpdf, CovMatrix, InputGrid};
use lggp::linearization::{init_prior_moments, iterate_pl, MonteCarlo, PlSettings};
use lggp::model::{sample_gamma, HyperPriorSpec};
use lggp::schemes::{simulate_lggp, GroundTruth};

/// `E_l[exp(−d² / 2l²)]` for `l` from the truncated-normal prior, by
/// trapezoidal quadrature.
fn expected_correlation(d: f64, loc: f64, scale: f64, lower: f64) -> f64 {
    let n = Normal::new(loc, scale).unwrap();
    let z = 1.0 - n.cdf(lower);
    let steps = 200_000;
    let hi = loc + 12.0 * scale;
    let h = (hi - lower) / steps as f64;
    let f = |l: f64| (-d * d / (2.0 * l * l)).exp() * n.pdf(l) / z;
    let mut s = 0.5 * (f(lower) + f(hi));
    for i in 1..steps {
        s += f(lower + i as f64 * h);
    }
    s * h
}

#[test]
fn prior_moments_match_quadrature() {
    let spec = HyperPriorSpec::synthetic();
    let grid = InputGrid::uniform_1d(4);
    let j = 20_000;
    let (state, ens) = init_prior_moments(&spec, &grid, j, 17).unwrap();
    let k = 4;
    for (block, prior) in [(0, &spec.alpha), (1, &spec.beta)] {
        // Var μ + E σ_s² + E σ_e² with half-normal second moments equal to scale².
        let var = prior.mean_scale.powi(2) + prior.signal_scale.powi(2) + prior.noise_scale.powi(2);
        for a in 0..k {
            let r = block * k + a;
            let mean = ens.latent.row(r).sum() / j as f64;
            assert!((mean - prior.mean_loc).abs() < 4.0 * (var / j as f64).sqrt(), "row {r}: {mean}");
            assert!((state.p[(r, r)] / var - 1.0).abs() < 0.06, "var {r}: {}", state.p[(r, r)]);
            for b in 0..a {
                let d = grid.coord(a, 0) - grid.coord(b, 0);
                let cov = prior.mean_scale.powi(2)
                    + prior.signal_scale.powi(2)
                        * expected_correlation(d, prior.length_loc, prior.length_scale, prior.length_lower);
                let got = state.p[(r, block * k + b)];
                assert!((got - cov).abs() < 0.07, "cov ({a},{b}) block {block}: {got} vs {cov}");
            }
        }
    }
    // Independent processes: the cross block is noise around zero.
    for a in 0..k {
        for b in 0..k {
            assert!(state.p[(k + a, b)].abs() < 0.07);
        }
    }
}

#[test]
fn gaussian_density_integrates_to_one() {
    let cov = CovMatrix::new(DMatrix::from_element(1, 1, 0.7)).unwrap();
    let mean = DVector::from_element(1, 0.3);
    let h = 1e-3;
    let total: f64 = (-10_000..=10_000)
        .map(|i| gaussian_logpdf(&DVector::from_element(1, 0.3 + i as f64 * h), &mean, &cov).unwrap().exp() * h)
        .sum();
    assert!((0.99..=1.01).contains(&total), "{total}");
}

#[test]
fn gamma_sample_mean_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (a, b) in [(0.0, 0.0), (2.0, 1.0), (-0.5, 0.7), (3.0, 3.5)] {
        let n = 100_000;
        let ys: Vec<f64> = (0..n).map(|_| sample_gamma(a, b, &mut rng)).collect();
        let m = ys.iter().sum::<f64>() / n as f64;
        let shape = f64::exp(a);
        let rate = f64::exp(b);
        let se = (shape / (rate * rate) / n as f64).sqrt();
        assert!((m - (a - b).exp()).abs() < 3.0 * se, "({a},{b}): {m}");
    }
}

#[test]
fn monte_carlo_linearization_contracts_and_repeats() {
    let grid = InputGrid::uniform_1d(8);
    let (data, _) = simulate_lggp(&grid, &GroundTruth::synthetic(), 2).unwrap();
    let run = |seed| {
        let mut mc = MonteCarlo::new(HyperPriorSpec::synthetic(), grid.clone(), 2000, seed);
        iterate_pl(&mut mc, &data.y, PlSettings::default()).unwrap()
    };
    let a = run(6);
    let b = run(6);
    assert_eq!(a.state, b.state);
    assert_eq!(a.trace, b.trace);
    for i in 0..16 {
        assert!(a.state.p[(i, i)] <= a.prior.p[(i, i)] + 1e-10, "coordinate {i}");
    }
    assert!(a.state.m.iter().all(|v| v.is_finite()));
    let c = run(7);
    assert_ne!(a.state.m, c.state.m);
}
