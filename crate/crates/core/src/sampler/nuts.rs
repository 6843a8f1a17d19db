use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

use super::{HmcConfig, LogDensity, MassMatrixMode};

const MAX_DELTA_H: f64 = 1000.0;

/// Position, momentum and cached log-density/gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub logp: f64,
}

impl PhaseState {
    pub fn new<T: LogDensity + ?Sized>(target: &T, q: Vec<f64>) -> Self {
        let mut grad = vec![0.0; q.len()];
        let logp = target.log_density_grad(&q, &mut grad);
        let p = vec![0.0; q.len()];
        Self { q, p, grad, logp }
    }

    pub fn hamiltonian(&self, inv_mass: &[f64]) -> f64 {
        -self.logp + kinetic_energy(&self.p, inv_mass)
    }

    fn velocity(&self, inv_mass: &[f64]) -> Vec<f64> {
        self.p.iter().zip(inv_mass).map(|(p, m)| p * m).collect()
    }
}

pub fn kinetic_energy(p: &[f64], inv_mass: &[f64]) -> f64 {
    0.5 * p.iter().zip(inv_mass).map(|(p, m)| p * p * m).sum::<f64>()
}

/// One leapfrog step of size `eps` (negative for backward integration).
/// Returns `false` when the new log-density or gradient is not finite.
pub fn leapfrog<T: LogDensity + ?Sized>(
    target: &T,
    z: &mut PhaseState,
    eps: f64,
    inv_mass: &[f64],
) -> bool {
    let half = 0.5 * eps;
    for (p, g) in z.p.iter_mut().zip(&z.grad) {
        *p += half * g;
    }
    for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(inv_mass) {
        *q += eps * m * p;
    }
    z.logp = target.log_density_grad(&z.q, &mut z.grad);
    for (p, g) in z.p.iter_mut().zip(&z.grad) {
        *p += half * g;
    }
    z.logp.is_finite() && z.grad.iter().all(|g| g.is_finite())
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TransitionStats {
    pub accept_stat: f64,
    pub tree_depth: usize,
    pub n_leapfrog: usize,
    pub divergent: bool,
    pub energy: f64,
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn no_u_turn(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

struct Tree<'a, T: LogDensity + ?Sized, R: Rng + ?Sized> {
    target: &'a T,
    inv_mass: &'a [f64],
    eps: f64,
    h0: f64,
    rng: &'a mut R,
    n_leapfrog: usize,
    sum_metro: f64,
    divergent: bool,
}

/// Boundary quantities of a subtree.
struct Edge {
    p_sharp: Vec<f64>,
    p: Vec<f64>,
}

impl<T: LogDensity + ?Sized, R: Rng + ?Sized> Tree<'_, T, R> {
    /// Extends the trajectory held in `z` by `2^depth` steps. Returns `false`
    /// when the subtree diverged or made a U-turn.
    #[allow(clippy::too_many_arguments)]
    fn build(
        &mut self,
        depth: usize,
        z: &mut PhaseState,
        z_propose: &mut PhaseState,
        begin: &mut Edge,
        end: &mut Edge,
        rho: &mut [f64],
        log_sum_weight: &mut f64,
        sign: f64,
    ) -> bool {
        if depth == 0 {
            let ok = leapfrog(self.target, z, sign * self.eps, self.inv_mass);
            self.n_leapfrog += 1;
            let mut h = z.hamiltonian(self.inv_mass);
            if !ok || h.is_nan() {
                h = f64::INFINITY;
            }
            if h - self.h0 > MAX_DELTA_H {
                self.divergent = true;
            }
            let w = self.h0 - h;
            *log_sum_weight = log_sum_exp(*log_sum_weight, w);
            self.sum_metro += if w > 0.0 { 1.0 } else { w.exp() };
            z_propose.clone_from(z);
            let v = z.velocity(self.inv_mass);
            begin.p_sharp.clone_from(&v);
            end.p_sharp = v;
            for (r, p) in rho.iter_mut().zip(&z.p) {
                *r += p;
            }
            begin.p.clone_from(&z.p);
            end.p.clone_from(&z.p);
            return !self.divergent;
        }

        let n = z.q.len();
        let mut init_end = Edge {
            p_sharp: vec![0.0; n],
            p: vec![0.0; n],
        };
        let mut rho_init = vec![0.0; n];
        let mut lsw_init = f64::NEG_INFINITY;
        if !self.build(
            depth - 1,
            z,
            z_propose,
            begin,
            &mut init_end,
            &mut rho_init,
            &mut lsw_init,
            sign,
        ) {
            return false;
        }

        let mut z_propose_final = z.clone();
        let mut final_begin = Edge {
            p_sharp: vec![0.0; n],
            p: vec![0.0; n],
        };
        let mut rho_final = vec![0.0; n];
        let mut lsw_final = f64::NEG_INFINITY;
        if !self.build(
            depth - 1,
            z,
            &mut z_propose_final,
            &mut final_begin,
            end,
            &mut rho_final,
            &mut lsw_final,
            sign,
        ) {
            return false;
        }

        let lsw_subtree = log_sum_exp(lsw_init, lsw_final);
        *log_sum_weight = log_sum_exp(*log_sum_weight, lsw_subtree);
        if lsw_final > lsw_subtree {
            *z_propose = z_propose_final;
        } else {
            let accept = (lsw_final - lsw_subtree).exp();
            if self.rng.random::<f64>() < accept {
                *z_propose = z_propose_final;
            }
        }

        let rho_subtree = add(&rho_init, &rho_final);
        for (r, s) in rho.iter_mut().zip(&rho_subtree) {
            *r += s;
        }
        let mut persist = no_u_turn(&begin.p_sharp, &end.p_sharp, &rho_subtree);
        let rho_ext = add(&rho_init, &final_begin.p);
        persist &= no_u_turn(&begin.p_sharp, &final_begin.p_sharp, &rho_ext);
        let rho_ext = add(&rho_final, &init_end.p);
        persist &= no_u_turn(&init_end.p_sharp, &end.p_sharp, &rho_ext);
        persist
    }
}

/// One multinomial NUTS transition from `current` (whose `logp`/`grad` must
/// be valid). The momentum is resampled internally.
pub fn nuts_draw<T: LogDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    current: &PhaseState,
    eps: f64,
    inv_mass: &[f64],
    max_depth: usize,
    rng: &mut R,
) -> (PhaseState, TransitionStats) {
    let n = current.q.len();
    let mut z = current.clone();
    for (p, m) in z.p.iter_mut().zip(inv_mass) {
        let u: f64 = rng.sample(StandardNormal);
        *p = u / m.sqrt();
    }
    let h0 = z.hamiltonian(inv_mass);

    let mut z_fwd = z.clone();
    let mut z_bck = z.clone();
    let mut z_sample = z.clone();
    let mut z_propose = z.clone();

    let v0 = z.velocity(inv_mass);
    let mut fwd = Edge {
        p_sharp: v0.clone(),
        p: z.p.clone(),
    };
    let mut bck = Edge {
        p_sharp: v0,
        p: z.p.clone(),
    };
    // Innermost edges of the two halves (the ends facing each other).
    let mut fwd_inner = Edge {
        p_sharp: fwd.p_sharp.clone(),
        p: z.p.clone(),
    };
    let mut bck_inner = Edge {
        p_sharp: bck.p_sharp.clone(),
        p: z.p.clone(),
    };
    let mut rho = z.p.clone();
    let mut log_sum_weight = 0.0;

    let mut tree = Tree {
        target,
        inv_mass,
        eps,
        h0,
        rng,
        n_leapfrog: 0,
        sum_metro: 0.0,
        divergent: false,
    };
    let mut depth = 0;
    while depth < max_depth {
        let mut rho_fwd = vec![0.0; n];
        let mut rho_bck = vec![0.0; n];
        let mut lsw_subtree = f64::NEG_INFINITY;
        let valid;
        if tree.rng.random::<f64>() > 0.5 {
            let mut zz = z_fwd.clone();
            rho_bck.clone_from(&rho);
            // The old trajectory becomes the backward half; its inner edge
            // is the old forward end.
            bck_inner = Edge {
                p_sharp: fwd.p_sharp.clone(),
                p: fwd.p.clone(),
            };
            valid = tree.build(
                depth,
                &mut zz,
                &mut z_propose,
                &mut fwd_inner,
                &mut fwd,
                &mut rho_fwd,
                &mut lsw_subtree,
                1.0,
            );
            z_fwd = zz;
        } else {
            let mut zz = z_bck.clone();
            rho_fwd.clone_from(&rho);
            fwd_inner = Edge {
                p_sharp: bck.p_sharp.clone(),
                p: bck.p.clone(),
            };
            valid = tree.build(
                depth,
                &mut zz,
                &mut z_propose,
                &mut bck_inner,
                &mut bck,
                &mut rho_bck,
                &mut lsw_subtree,
                -1.0,
            );
            z_bck = zz;
        }
        if !valid {
            break;
        }
        depth += 1;

        if lsw_subtree > log_sum_weight {
            z_sample.clone_from(&z_propose);
        } else {
            let accept = (lsw_subtree - log_sum_weight).exp();
            if tree.rng.random::<f64>() < accept {
                z_sample.clone_from(&z_propose);
            }
        }
        log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

        rho = add(&rho_bck, &rho_fwd);
        let mut persist = no_u_turn(&bck.p_sharp, &fwd.p_sharp, &rho);
        let rho_ext = add(&rho_bck, &fwd_inner.p);
        persist &= no_u_turn(&bck.p_sharp, &fwd_inner.p_sharp, &rho_ext);
        let rho_ext = add(&rho_fwd, &bck_inner.p);
        persist &= no_u_turn(&bck_inner.p_sharp, &fwd.p_sharp, &rho_ext);
        if !persist {
            break;
        }
    }

    let stats = TransitionStats {
        accept_stat: if tree.n_leapfrog > 0 {
            tree.sum_metro / tree.n_leapfrog as f64
        } else {
            0.0
        },
        tree_depth: depth,
        n_leapfrog: tree.n_leapfrog,
        divergent: tree.divergent,
        energy: z_sample.hamiltonian(inv_mass),
    };
    z_sample.p.iter_mut().for_each(|p| *p = 0.0);
    (z_sample, stats)
}

/// Nesterov dual averaging on `ln ε`.
#[derive(Debug, Clone)]
pub struct DualAveraging {
    pub target: f64,
    pub gamma: f64,
    pub t0: f64,
    pub kappa: f64,
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

impl DualAveraging {
    pub fn new(target: f64, eps0: f64) -> Self {
        Self {
            target,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            mu: (10.0 * eps0).ln(),
            counter: 0.0,
            s_bar: 0.0,
            x_bar: 0.0,
        }
    }

    pub fn restart(&mut self, eps: f64) {
        self.mu = (10.0 * eps).ln();
        self.counter = 0.0;
        self.s_bar = 0.0;
        self.x_bar = 0.0;
    }

    /// Feeds one acceptance statistic; returns the next step size.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        self.counter += 1.0;
        let a = accept_stat.clamp(0.0, 1.0);
        let eta = 1.0 / (self.counter + self.t0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - a);
        let x = self.mu - self.s_bar * self.counter.sqrt() / self.gamma;
        let x_eta = self.counter.powf(-self.kappa);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        x.exp()
    }

    /// The averaged iterate used after warmup.
    pub fn final_step_size(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Starting point, and optionally a step size and metric carried over from
/// an earlier run.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    pub position: Vec<f64>,
    pub step_size: Option<f64>,
    pub inv_mass: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Chain {
    pub dim: usize,
    /// Row-major `n_samples × dim`.
    pub draws: Vec<f64>,
    pub accept_stats: Vec<f64>,
    /// Step size used at every iteration, warmup first.
    pub step_sizes: Vec<f64>,
    pub tree_depths: Vec<usize>,
    pub divergences: usize,
    pub warmup_divergences: usize,
    pub n_grad_evals: usize,
    pub step_size: f64,
    pub inv_mass: Vec<f64>,
    pub wall_warmup: f64,
    pub wall_sampling: f64,
}

impl Chain {
    pub fn n_samples(&self) -> usize {
        self.draws.len() / self.dim.max(1)
    }

    pub fn draw(&self, i: usize) -> &[f64] {
        &self.draws[i * self.dim..(i + 1) * self.dim]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_samples()).map(|i| self.draws[i * self.dim + j]).collect()
    }

    pub fn last(&self) -> &[f64] {
        self.draw(self.n_samples() - 1)
    }

    pub fn wall_time(&self) -> f64 {
        self.wall_warmup + self.wall_sampling
    }

    pub fn warm_start(&self) -> WarmStart {
        WarmStart {
            position: self.last().to_vec(),
            step_size: Some(self.step_size),
            inv_mass: Some(self.inv_mass.clone()),
        }
    }
}

/// Doubles or halves `eps` until the one-step acceptance crosses 0.8.
fn heuristic_step_size<T: LogDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    z0: &PhaseState,
    mut eps: f64,
    inv_mass: &[f64],
    rng: &mut R,
) -> f64 {
    let accept_at = |eps: f64, rng: &mut R| {
        let mut z = z0.clone();
        for (p, m) in z.p.iter_mut().zip(inv_mass) {
            let u: f64 = rng.sample(StandardNormal);
            *p = u / m.sqrt();
        }
        let h0 = z.hamiltonian(inv_mass);
        let ok = leapfrog(target, &mut z, eps, inv_mass);
        let h = z.hamiltonian(inv_mass);
        if !ok || !h.is_finite() {
            f64::NEG_INFINITY
        } else {
            h0 - h
        }
    };
    let log_08 = 0.8f64.ln();
    let first = accept_at(eps, rng);
    let up = first > log_08;
    for _ in 0..60 {
        eps = if up { 2.0 * eps } else { 0.5 * eps };
        let d = accept_at(eps, rng);
        if up && !(d > log_08) {
            return 0.5 * eps;
        }
        if !up && d > log_08 {
            return eps;
        }
    }
    eps
}

/// Regularized diagonal variance estimate, shrunk toward 1e-3.
fn regularized_variance(samples: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let n = samples.len() as f64;
    (0..dim)
        .map(|j| {
            let mean = samples.iter().map(|s| s[j]).sum::<f64>() / n;
            let var = samples.iter().map(|s| (s[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
        })
        .collect()
}

/// Metric adaptation windows as fractions of warmup: an early window for a
/// coarse scale estimate, then the estimate used for sampling.
const MASS_WINDOWS: [(f64, f64); 2] = [(0.15, 0.5), (0.5, 0.8)];
const MIN_WARMUP_FOR_MASS: usize = 100;

pub fn run_chain<T: LogDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    config: &HmcConfig,
    init: &[f64],
    rng: &mut R,
) -> Result<Chain> {
    let start = WarmStart {
        position: init.to_vec(),
        ..WarmStart::default()
    };
    run_chain_from(target, config, &start, rng)
}

pub fn run_chain_from<T: LogDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    config: &HmcConfig,
    start: &WarmStart,
    rng: &mut R,
) -> Result<Chain> {
    config.validate()?;
    let dim = target.dim();
    if start.position.len() != dim {
        return Err(Error::invalid(format!(
            "initial position has length {}, target has dimension {dim}",
            start.position.len()
        )));
    }
    let mut z = PhaseState::new(target, start.position.clone());
    if !z.logp.is_finite() || z.grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::invalid(
            "log-density or gradient is not finite at the initial position",
        ));
    }
    let mut inv_mass = match &start.inv_mass {
        Some(m) if m.len() == dim => m.clone(),
        _ => vec![1.0; dim],
    };
    let mut eps = match start.step_size {
        Some(e) if e > 0.0 && e.is_finite() => e,
        _ => heuristic_step_size(target, &z, config.initial_step_size, &inv_mass, rng),
    };

    let n_warm = config.n_warmup;
    let adapt_mass =
        config.mass_matrix == MassMatrixMode::Diagonal && n_warm >= MIN_WARMUP_FOR_MASS;
    let windows: Vec<(usize, usize)> = MASS_WINDOWS
        .iter()
        .map(|&(a, b)| {
            (
                (a * n_warm as f64).round() as usize,
                (b * n_warm as f64).round() as usize,
            )
        })
        .collect();

    let mut da = DualAveraging::new(config.target_accept, eps);
    let mut window_draws: Vec<Vec<f64>> = Vec::new();
    let mut step_sizes = Vec::with_capacity(n_warm + config.n_samples);
    let mut accept_stats = Vec::with_capacity(config.n_samples);
    let mut tree_depths = Vec::with_capacity(config.n_samples);
    let mut warmup_divergences = 0;
    let mut n_grad_evals = 0;

    let t_warm = Instant::now();
    for it in 0..n_warm {
        step_sizes.push(eps);
        let (next, stats) = nuts_draw(target, &z, eps, &inv_mass, config.max_tree_depth, rng);
        z = next;
        n_grad_evals += stats.n_leapfrog;
        warmup_divergences += stats.divergent as usize;
        eps = da.update(stats.accept_stat);

        if adapt_mass {
            if let Some(&(_, end)) = windows.iter().find(|&&(a, b)| it >= a && it < b) {
                window_draws.push(z.q.clone());
                if it + 1 == end && window_draws.len() >= 10 {
                    inv_mass = regularized_variance(&window_draws, dim);
                    window_draws.clear();
                    eps = heuristic_step_size(target, &z, eps, &inv_mass, rng);
                    da.restart(eps);
                }
            }
        }
    }
    if n_warm > 0 {
        eps = da.final_step_size();
    }
    let wall_warmup = t_warm.elapsed().as_secs_f64();

    let t_samp = Instant::now();
    let mut draws = Vec::with_capacity(config.n_samples * dim);
    let mut divergences = 0;
    for _ in 0..config.n_samples {
        step_sizes.push(eps);
        let (next, stats) = nuts_draw(target, &z, eps, &inv_mass, config.max_tree_depth, rng);
        z = next;
        n_grad_evals += stats.n_leapfrog;
        divergences += stats.divergent as usize;
        accept_stats.push(stats.accept_stat);
        tree_depths.push(stats.tree_depth);
        draws.extend_from_slice(&z.q);
    }
    let wall_sampling = t_samp.elapsed().as_secs_f64();

    Ok(Chain {
        dim,
        draws,
        accept_stats,
        step_sizes,
        tree_depths,
        divergences,
        warmup_divergences,
        n_grad_evals,
        step_size: eps,
        inv_mass,
        wall_warmup,
        wall_sampling,
    })
}
