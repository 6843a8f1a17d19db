//! Chain summaries: moments, quantiles, effective sample size, CSV export.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::Chain;

/// Empirical quantile with linear interpolation between order statistics.
/// `sorted` must be ascending.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Effective sample size from Geyer's initial monotone sequence estimator.
pub fn ess(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean(x);
    let c: Vec<f64> = x.iter().map(|v| v - m).collect();
    let var0 = c.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if var0 <= 0.0 {
        return n as f64;
    }
    let autocorr = |lag: usize| -> f64 {
        c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / (n as f64 * var0)
    };
    let mut sum_pairs = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let mut pair = autocorr(2 * k) + autocorr(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        if pair > prev_pair {
            pair = prev_pair;
        }
        sum_pairs += pair;
        prev_pair = pair;
        k += 1;
    }
    // τ = −1 + 2 Σ_k Γ_k, where Γ_k = ρ_{2k} + ρ_{2k+1} and ρ_0 = 1.
    let tau = (-1.0 + 2.0 * sum_pairs).max(1.0 / (n as f64).log10().max(1.0));
    n as f64 / tau
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub ess: f64,
}

/// Per-column summary of a set of draws given as columns.
pub fn summarize(name: &str, draws: &[f64]) -> ParamSummary {
    let n = draws.len();
    let mu = mean(draws);
    let sd = if n > 1 {
        (draws.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    ParamSummary {
        name: name.to_string(),
        mean: mu,
        sd,
        q05: quantile(&sorted, 0.05),
        q50: quantile(&sorted, 0.5),
        q95: quantile(&sorted, 0.95),
        ess: ess(draws),
    }
}

/// Writes draws plus per-iteration statistics as CSV.
pub fn write_chain_csv<W: Write>(chain: &Chain, names: &[String], mut out: W) -> std::io::Result<()> {
    write!(out, "iteration")?;
    for n in names {
        write!(out, ",{n}")?;
    }
    writeln!(out, ",accept_stat,tree_depth")?;
    for i in 0..chain.n_samples() {
        write!(out, "{i}")?;
        for v in chain.draw(i) {
            write!(out, ",{v:.17e}")?;
        }
        writeln!(out, ",{:.17e},{}", chain.accept_stats[i], chain.tree_depths[i])?;
    }
    Ok(())
}
