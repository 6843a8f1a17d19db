//! Command-line driver: configuration, data files, and result export.

mod config;
mod io;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub use config::{parse_pairs, Preset, RunConfig, RunMode};
pub use io::{
    export_results, load_dataset, load_grid, load_spectrum, load_vector, preprocess_spectrum,
    write_dataset, write_draws, write_ground_truth, write_latent_summary, PosteriorState, Summary,
};

use crate::error::{Error, Result};
use crate::gp_core::InputGrid;
use crate::model::Dataset;
use crate::par;
use crate::schemes::{
    fit_direct_hmc, fit_pl_approx, fit_pl_tempered, predict_data, predict_latent,
    simulate_lggp, simulate_youngs_modulus, GroundTruth, LatentSummary, Mode,
};

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "LGGP_OUTPUT_DIR";

pub fn config_map(cfg: &RunConfig) -> BTreeMap<String, String> {
    parse_pairs(&cfg.to_text())
        .expect("canonical config text parses")
        .into_iter()
        .collect()
}

fn output_dir(cfg: &RunConfig) -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| cfg.output_dir.clone())
}

fn input_dataset(cfg: &RunConfig) -> Result<Dataset> {
    match (&cfg.dataset, &cfg.spectrum) {
        (Some(p), _) => load_dataset(p),
        (None, Some(p)) => {
            let (x, y) = load_spectrum(p)?;
            preprocess_spectrum(&x, &y, cfg.cutoff, cfg.y_max)
        }
        (None, None) => Err(Error::Config("no input data configured".into())),
    }
}

/// Runs one configured job, writing into `dir` and recording every path.
fn execute(cfg: &RunConfig, dir: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let out = |written: &mut Vec<PathBuf>, name: &str| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };
    match cfg.mode {
        RunMode::Simulate => {
            let grid = InputGrid::uniform_1d(cfg.grid_size);
            let (data, truth) = match cfg.preset {
                Preset::YoungsModulus => {
                    let mean = load_vector(cfg.mean_file.as_ref().expect("validated"))?;
                    let grid = InputGrid::uniform_1d(mean.len());
                    simulate_youngs_modulus(&grid, &mean, cfg.seed)?
                }
                _ => simulate_lggp(&grid, &GroundTruth::synthetic(), cfg.seed)?,
            };
            write_dataset(&data, &out(written, "dataset.csv"))?;
            write_ground_truth(&data.grid, &truth, &out(written, "ground_truth.csv"))?;
        }
        RunMode::Predict => {
            let state = PosteriorState::read(&cfg.result_dir.as_ref().expect("validated").join("posterior_state.json"))?;
            let result = state.into_result()?;
            let test = load_grid(cfg.test_grid.as_ref().expect("validated"))?;
            let n = if cfg.n_draws == 0 { result.alpha_draws.nrows() } else { cfg.n_draws };
            let draws = predict_latent(&result, &test, n, cfg.seed)?;
            let (_, y) = predict_data(&draws, cfg.seed.wrapping_add(1))?;
            write_latent_summary(&LatentSummary::from_draws(&draws.alpha), &out(written, "predictive_alpha.csv"))?;
            write_latent_summary(&LatentSummary::from_draws(&draws.beta), &out(written, "predictive_beta.csv"))?;
            write_latent_summary(&y, &out(written, "predictive_y.csv"))?;
        }
        mode => {
            let data = input_dataset(cfg)?;
            let mut result = match mode {
                RunMode::FitHmc | RunMode::FitHmcShort => fit_direct_hmc(&data, &cfg.priors, &cfg.hmc)?,
                RunMode::FitPl => fit_pl_approx(&data, &cfg.priors, &cfg.pl, &cfg.hmc)?,
                RunMode::FitPlTempered => fit_pl_tempered(&data, &cfg.priors, &cfg.pl, &cfg.schedule, &cfg.hmc)?,
                RunMode::Simulate | RunMode::Predict => unreachable!(),
            };
            if mode == RunMode::FitHmcShort {
                result.mode = Mode::HmcShort;
            }
            io::export_tracked(&result, config_map(cfg), dir, written)?;
        }
    }
    let echo = out(written, "config.txt");
    std::fs::write(&echo, cfg.to_text()).map_err(|e| Error::io(&echo, e))
}

/// Validates and runs `cfg`. Exit codes: 0 on success, 1 on a runtime
/// failure, 2 on a configuration error. Files written by a failed run are
/// removed.
pub fn run(cfg: &RunConfig) -> i32 {
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return 2;
    }
    par::set_workers(cfg.workers);
    let dir = output_dir(cfg);
    let existed = dir.exists();
    let mut written = Vec::new();
    match execute(cfg, &dir, &mut written) {
        Ok(()) => {
            eprintln!("wrote {} files to {}", written.len(), dir.display());
            0
        }
        Err(e) => {
            for p in &written {
                let _ = std::fs::remove_file(p);
            }
            if !existed {
                let _ = std::fs::remove_dir(&dir);
            }
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}
