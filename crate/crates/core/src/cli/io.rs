//! CSV and JSON input/output.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp_core::InputGrid;
use crate::linearization::write_trace_csv;
use crate::model::{Dataset, LatentState};
use crate::sampler::ParamSummary;
use crate::schemes::{ChainDiagnostics, InferenceResult, LatentSummary, Mode, WallTimes};

/// Reads a headed CSV into rows of numbers. `what` names the file in errors.
fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("'{f}' is not a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn check_x_header(path: &Path, cols: &[String]) -> Result<()> {
    for (i, c) in cols.iter().enumerate() {
        if *c != format!("x_{}", i + 1) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: format!("expected column 'x_{}', found '{c}'", i + 1),
            });
        }
    }
    Ok(())
}

/// Reads `x_1,…,x_D,y`.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let (header, rows) = read_table(path)?;
    if header.len() < 2 || header.last().map(String::as_str) != Some("y") {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "header must be x_1,...,x_D,y".into(),
        });
    }
    let d = header.len() - 1;
    check_x_header(path, &header[..d])?;
    if rows.is_empty() {
        return Err(Error::Validation(format!("{} holds no observations", path.display())));
    }
    let x: Vec<Vec<f64>> = rows.iter().map(|r| r[..d].to_vec()).collect();
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r[d]));
    let grid = InputGrid::from_rows(&x, d)?;
    Dataset::new(grid, y).map_err(|e| match e {
        Error::Validation(msg) => Error::Validation(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Reads `x_1,…,x_D` test locations.
pub fn load_grid(path: &Path) -> Result<InputGrid> {
    let (header, rows) = read_table(path)?;
    if header.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "empty header".into(),
        });
    }
    check_x_header(path, &header)?;
    InputGrid::from_rows(&rows, header.len())
}

/// Reads a two-column spectrum (shift, intensity) with any header.
pub fn load_spectrum(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let (header, rows) = read_table(path)?;
    if header.len() != 2 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "spectrum must have exactly two columns".into(),
        });
    }
    Ok(rows.iter().map(|r| (r[0], r[1])).unzip())
}

/// Reads a single-column vector with any header.
pub fn load_vector(path: &Path) -> Result<DVector<f64>> {
    let (header, rows) = read_table(path)?;
    if header.len() != 1 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "expected a single column".into(),
        });
    }
    Ok(DVector::from_iterator(rows.len(), rows.iter().map(|r| r[0])))
}

/// Keeps points with `x ≤ cutoff`, scales `y` so its maximum is `y_max`, and
/// maps `x` affinely onto `[0, 1]`.
pub fn preprocess_spectrum(x: &[f64], y: &[f64], cutoff: f64, y_max: f64) -> Result<Dataset> {
    if x.len() != y.len() {
        return Err(Error::invalid("spectrum x and y lengths differ"));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(xv, _)| **xv <= cutoff)
        .map(|(a, b)| (*a, *b))
        .unzip();
    if xs.is_empty() {
        return Err(Error::Validation(format!("no spectrum points at or below the cutoff {cutoff}")));
    }
    let top = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(top > 0.0) {
        return Err(Error::Validation("spectrum has no positive intensity".into()));
    }
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let rows: Vec<Vec<f64>> = xs.iter().map(|v| vec![(v - lo) / span]).collect();
    let yv = DVector::from_iterator(ys.len(), ys.iter().map(|v| v * y_max / top));
    Dataset::new(InputGrid::from_rows(&rows, 1)?, yv)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn x_header(d: usize) -> String {
    (1..=d).map(|i| format!("x_{i}")).collect::<Vec<_>>().join(",")
}

pub fn write_dataset(data: &Dataset, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{},y", x_header(data.dim())).map_err(io)?;
    for k in 0..data.len() {
        let xs: Vec<String> = (0..data.dim()).map(|d| num(data.grid.coord(k, d))).collect();
        writeln!(w, "{},{}", xs.join(","), num(data.y[k])).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_ground_truth(grid: &InputGrid, truth: &LatentState, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "location,{},alpha,beta,mean", x_header(grid.dim())).map_err(io)?;
    for k in 0..grid.len() {
        let xs: Vec<String> = (0..grid.dim()).map(|d| num(grid.coord(k, d))).collect();
        let (a, b) = (truth.alpha[k], truth.beta[k]);
        writeln!(w, "{k},{},{},{},{}", xs.join(","), num(a), num(b), num((a - b).exp())).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// `location,mean,q05,q50,q95`.
pub fn write_latent_summary(s: &LatentSummary, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "location,mean,q05,q50,q95").map_err(io)?;
    for k in 0..s.len() {
        writeln!(w, "{k},{},{},{},{}", num(s.mean[k]), num(s.q05[k]), num(s.q50[k]), num(s.q95[k])).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_draws(names: &[String], draws: &DMatrix<f64>, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "draw,{}", names.join(",")).map_err(io)?;
    for i in 0..draws.nrows() {
        let row: Vec<String> = draws.row(i).iter().map(|v| num(*v)).collect();
        writeln!(w, "{i},{}", row.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mode: Mode,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub hyperparameters: Vec<ParamSummary>,
    pub divergences: usize,
    pub diagnostics: BTreeMap<String, ChainDiagnostics>,
    pub wall_times: WallTimes,
    pub pl_iterations: Option<usize>,
}

impl Summary {
    pub fn new(result: &InferenceResult, config: BTreeMap<String, String>) -> Self {
        Self {
            mode: result.mode,
            seed: result.seed,
            config,
            hyperparameters: result.hypers.clone(),
            divergences: result.total_divergences(),
            diagnostics: result.diagnostics.iter().cloned().collect(),
            wall_times: result.timing.clone(),
            pl_iterations: result.pl.as_ref().map(|p| p.trace.len() - 1),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }
}

/// Draws needed to predict at new locations, as stored in
/// `posterior_state.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorState {
    pub mode: Mode,
    pub seed: u64,
    pub dim: usize,
    pub grid: Vec<Vec<f64>>,
    pub hyper_names: Vec<String>,
    pub alpha_draws: Vec<Vec<f64>>,
    pub beta_draws: Vec<Vec<f64>>,
    pub hyper_draws: Vec<Vec<f64>>,
    pub hyperparameters: Vec<ParamSummary>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(rows: &[Vec<f64>], ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}

impl PosteriorState {
    pub fn from_result(r: &InferenceResult) -> Self {
        Self {
            mode: r.mode,
            seed: r.seed,
            dim: r.dim(),
            grid: rows(r.grid.points()),
            hyper_names: r.hyper_names.clone(),
            alpha_draws: rows(&r.alpha_draws),
            beta_draws: rows(&r.beta_draws),
            hyper_draws: rows(&r.hyper_draws),
            hyperparameters: r.hypers.clone(),
        }
    }

    /// Rebuilds enough of a result to run predictions.
    pub fn into_result(self) -> Result<InferenceResult> {
        let grid = InputGrid::from_rows(&self.grid, self.dim)?;
        let k = grid.len();
        let bad = |what: &str| Error::invalid(format!("posterior state: malformed {what}"));
        if self.alpha_draws.iter().chain(&self.beta_draws).any(|r| r.len() != k) {
            return Err(bad("latent draws"));
        }
        if self.hyper_draws.iter().any(|r| r.len() != self.hyper_names.len()) {
            return Err(bad("hyperparameter draws"));
        }
        let alpha_draws = matrix(&self.alpha_draws, k);
        let beta_draws = matrix(&self.beta_draws, k);
        Ok(InferenceResult {
            mode: self.mode,
            seed: self.seed,
            grid,
            alpha: LatentSummary::from_draws(&alpha_draws),
            beta: LatentSummary::from_draws(&beta_draws),
            alpha_draws,
            beta_draws,
            hyper_draws: matrix(&self.hyper_draws, self.hyper_names.len()),
            hyper_names: self.hyper_names,
            hypers: self.hyperparameters,
            predictive: None,
            diagnostics: vec![],
            timing: WallTimes::default(),
            pl: None,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }
}

/// Writes every output file for a fit and returns the paths written.
pub fn export_results(
    result: &InferenceResult,
    config: BTreeMap<String, String>,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    export_tracked(result, config, dir, &mut written)?;
    Ok(written)
}

/// As [`export_results`], recording each path before it is created.
pub(crate) fn export_tracked(
    result: &InferenceResult,
    config: BTreeMap<String, String>,
    dir: &Path,
    written: &mut Vec<PathBuf>,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = |name: &str| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };
    Summary::new(result, config).write(&out("summary.json"))?;
    write_latent_summary(&result.alpha, &out("latent_alpha.csv"))?;
    write_latent_summary(&result.beta, &out("latent_beta.csv"))?;
    if let Some(p) = &result.predictive {
        write_latent_summary(p, &out("predictive_y.csv"))?;
    }
    write_draws(&result.hyper_names, &result.hyper_draws, &out("hyper_chains.csv"))?;
    {
        let path = out("posterior_state.json");
        let mut w = create(&path)?;
        serde_json::to_writer(&mut w, &PosteriorState::from_result(result))?;
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    if let Some(pl) = &result.pl {
        let path = out("pl_trace.csv");
        let w = create(&path)?;
        write_trace_csv(&pl.trace, w).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
