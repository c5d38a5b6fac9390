//! Experiment drivers: the τ sweep over generated graphs, the shuffle-ratio
//! sweep over a fixed dataset, and the measurement report for a dataset.

use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::time::Instant;

use crate::csbmx::{generate_csbmx, CsbmxParams};
use crate::error::{Error, Result};
use crate::graph::{default_split, remove_self_loops, LabeledGraph, Split};
use crate::metrics::{
    cfh_report, class_homophily, class_stats, feature_distance, BaselineMode, EXACT_BASELINE_LIMIT,
};
use crate::rng::derive_seed;
use crate::sgnn::{evaluate, prepare_graph, train_simplified_gnn, ConvolutionSpec, TrainConfig};
use crate::shuffle::{shuffle_features, ShuffleMode, ShuffleSpec};
use crate::theory::mean_std;

fn default_n() -> usize {
    10_000
}
fn default_total_degree() -> usize {
    20
}
fn default_trials() -> usize {
    5
}
fn default_lr() -> f64 {
    0.01
}
fn default_epochs() -> usize {
    500
}
fn default_patience() -> usize {
    100
}
fn default_true() -> bool {
    true
}

/// Optimizer settings shared by the sweep configs. The seed comes from the
/// trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            lr: default_lr(),
            epochs: default_epochs(),
            patience: default_patience(),
        }
    }
}

impl TrainSettings {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            epochs: self.epochs,
            patience: self.patience,
            seed,
        }
    }
}

/// Grid over class separation, same-class degree and τ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// `|μ₀ - μ₁|` values; classes sit at `∓fd/2` with unit variance.
    pub fd: Vec<f64>,
    /// Same-class out-degrees; the other-class degree is `total_degree - d_plus`.
    pub d_plus: Vec<usize>,
    pub tau: Vec<f64>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_total_degree")]
    pub total_degree: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub convolution: ConvolutionSpec,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Record wall-clock time per cell. Off by default so the CSV is
    /// reproducible byte for byte.
    #[serde(default)]
    pub timing: bool,
}

impl SweepConfig {
    /// The full grid: five separations, `d⁺` from 10 to 19 and τ from -1.5
    /// to 1.5 in steps of 0.1, at 10 000 nodes of degree 20.
    pub fn default_grid(seed: u64) -> Self {
        SweepConfig {
            fd: vec![0.0, 0.125, 0.25, 0.5, 1.0],
            d_plus: (10..20).collect(),
            tau: (-15..=15).map(|t| t as f64 / 10.0).collect(),
            n: default_n(),
            total_degree: default_total_degree(),
            trials: default_trials(),
            convolution: ConvolutionSpec::default(),
            train: TrainSettings::default(),
            seed,
            output: None,
            timing: false,
        }
    }

    pub fn single(fd: f64, d_plus: usize, tau: f64, n: usize, trials: usize, seed: u64) -> Self {
        SweepConfig {
            fd: vec![fd],
            d_plus: vec![d_plus],
            tau: vec![tau],
            n,
            trials,
            ..SweepConfig::default_grid(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.fd.is_empty() || self.d_plus.is_empty() || self.tau.is_empty() {
            return bad("sweep grids must be nonempty".into());
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.convolution.layers == 0 {
            return bad("convolution needs at least one layer".into());
        }
        if let Some(&d) = self.d_plus.iter().find(|&&d| d > self.total_degree) {
            return bad(format!("d_plus {d} exceeds total_degree {}", self.total_degree));
        }
        if self.fd.iter().chain(&self.tau).any(|v| !v.is_finite()) {
            return bad("fd and tau values must be finite".into());
        }
        self.train.with_seed(0).validate()
    }

    pub fn cell_count(&self) -> usize {
        self.fd.len() * self.d_plus.len() * self.tau.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub fd_param: f64,
    pub d_plus: usize,
    pub tau: f64,
    pub graph_cfh: f64,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub trials: usize,
    pub wall_ms: u64,
}

pub const SWEEP_HEADER: &str = "fd_param,d_plus,tau,graph_cfh,acc_mean,acc_std,trials,wall_ms";

struct TrialResult {
    cfh: f64,
    accuracy: f64,
    ms: u64,
}

/// Generates, splits, trains and evaluates every cell of the grid.
///
/// Trial seeds depend on the `(fd, d⁺)` pair and the trial index but not on
/// τ, so cells along the τ axis share labels, features, splits and
/// initial weights and differ only in their edges. Rows come out in grid
/// order (fd, then d⁺, then τ) regardless of scheduling.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let mut jobs = Vec::with_capacity(cfg.cell_count() * cfg.trials);
    for (fi, &fd) in cfg.fd.iter().enumerate() {
        for (di, &d_plus) in cfg.d_plus.iter().enumerate() {
            let family = (fi * cfg.d_plus.len() + di) as u64;
            for &tau in &cfg.tau {
                for t in 0..cfg.trials {
                    jobs.push((fd, d_plus, tau, derive_seed(cfg.seed, family, t as u64)));
                }
            }
        }
    }
    let results = crate::par_map(jobs.len(), |j| {
        let (fd, d_plus, tau, seed) = jobs[j];
        run_trial(cfg, fd, d_plus, tau, seed)
            .map_err(|e| e.context(format!("cell fd={fd} d_plus={d_plus} tau={tau} trial={}", j % cfg.trials)))
    });
    let results: Vec<TrialResult> = results.into_iter().collect::<Result<_>>()?;

    Ok(results
        .chunks(cfg.trials)
        .zip(jobs.chunks(cfg.trials))
        .map(|(res, job)| {
            let (fd, d_plus, tau, _) = job[0];
            let acc: Vec<f64> = res.iter().map(|r| r.accuracy).collect();
            let (acc_mean, acc_std) = mean_std(&acc);
            SweepRow {
                fd_param: fd,
                d_plus,
                tau,
                graph_cfh: res.iter().map(|r| r.cfh).sum::<f64>() / res.len() as f64,
                acc_mean,
                acc_std,
                trials: cfg.trials,
                wall_ms: res.iter().map(|r| r.ms).sum(),
            }
        })
        .collect())
}

fn run_trial(cfg: &SweepConfig, fd: f64, d_plus: usize, tau: f64, seed: u64) -> Result<TrialResult> {
    let start = cfg.timing.then(Instant::now);
    let params = CsbmxParams::symmetric_1d(cfg.n, fd, d_plus, cfg.total_degree - d_plus, tau, seed);
    let g = generate_csbmx(&params)?;
    let g = g.with_split(Some(default_split(g.labels(), g.c(), seed)))?;
    let cfh = cfh_report(&g, BaselineMode::Exact)?.graph_cfh;
    let input = prepare_graph(&g, &cfg.convolution);
    let model = train_simplified_gnn(&input, &cfg.convolution, &cfg.train.with_seed(seed))?;
    let accuracy = evaluate(&model, &input, &cfg.convolution, Split::Test)?;
    Ok(TrialResult {
        cfh,
        accuracy,
        ms: start.map_or(0, |s| s.elapsed().as_millis() as u64),
    })
}

pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.fd_param, r.d_plus, r.tau, r.graph_cfh, r.acc_mean, r.acc_std, r.trials, r.wall_ms
        ));
    }
    out
}

fn parse_field<T: std::str::FromStr>(value: &str, column: &str, line: usize) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::parse("sweep csv", line, format!("bad value {value:?} in column {column}")))
}

/// Parses sweep CSV text. Columns are located by header name; extra
/// columns are ignored.
pub fn rows_from_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse("sweep csv", 1, "missing header row"))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let column = |name: &str| {
        names
            .iter()
            .position(|&c| c == name)
            .ok_or_else(|| Error::parse("sweep csv", 1, format!("missing column {name}")))
    };
    let idx: Vec<usize> = SWEEP_HEADER.split(',').map(column).collect::<Result<_>>()?;
    lines
        .map(|(ln, line)| {
            let line_no = ln + 1;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != names.len() {
                return Err(Error::parse("sweep csv", line_no, "wrong number of fields"));
            }
            let get = |c: usize| fields[idx[c]];
            let cols: Vec<&str> = SWEEP_HEADER.split(',').collect();
            Ok(SweepRow {
                fd_param: parse_field(get(0), cols[0], line_no)?,
                d_plus: parse_field(get(1), cols[1], line_no)?,
                tau: parse_field(get(2), cols[2], line_no)?,
                graph_cfh: parse_field(get(3), cols[3], line_no)?,
                acc_mean: parse_field(get(4), cols[4], line_no)?,
                acc_std: parse_field(get(5), cols[5], line_no)?,
                trials: parse_field(get(6), cols[6], line_no)?,
                wall_ms: parse_field(get(7), cols[7], line_no)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShuffleSweepConfig {
    pub ratios: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_mode")]
    pub mode: ShuffleMode,
    /// Keep shuffled features within their train/val/test split.
    #[serde(default = "default_true")]
    pub respect_split: bool,
    #[serde(default)]
    pub convolution: ConvolutionSpec,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default = "default_baseline")]
    pub baseline: BaselineMode,
    #[serde(default)]
    pub seed: u64,
}

fn default_mode() -> ShuffleMode {
    ShuffleMode::Classwise
}

fn default_baseline() -> BaselineMode {
    BaselineMode::Exact
}

impl ShuffleSweepConfig {
    pub fn new(ratios: Vec<f64>, trials: usize, seed: u64) -> Self {
        ShuffleSweepConfig {
            ratios,
            trials,
            mode: ShuffleMode::Classwise,
            respect_split: true,
            convolution: ConvolutionSpec::default(),
            train: TrainSettings::default(),
            baseline: BaselineMode::Exact,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuffleRow {
    pub ratio: f64,
    pub graph_cfh: f64,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub trials: usize,
}

pub const SHUFFLE_HEADER: &str = "ratio,graph_cfh,acc_mean,acc_std,trials";

/// Shuffles `g` at each ratio, trains a fresh model per shuffled graph and
/// reports test accuracy. A stratified 50/25/25 split is drawn when `g`
/// has none. The trial seed is shared across ratios.
pub fn run_shuffle_sweep(g: &LabeledGraph, cfg: &ShuffleSweepConfig) -> Result<Vec<ShuffleRow>> {
    if cfg.ratios.is_empty() || cfg.trials == 0 {
        return Err(Error::InvalidParameter("need at least one ratio and one trial".into()));
    }
    cfg.train.with_seed(0).validate()?;
    let g = if g.split().is_some() {
        g.clone()
    } else {
        g.with_split(Some(default_split(g.labels(), g.c(), cfg.seed)))?
    };
    let jobs: Vec<(f64, u64)> = cfg
        .ratios
        .iter()
        .flat_map(|&r| (0..cfg.trials).map(move |t| (r, derive_seed(cfg.seed, 0, t as u64))))
        .collect();
    let results = crate::par_map(jobs.len(), |j| -> Result<(f64, f64)> {
        let (ratio, seed) = jobs[j];
        let spec = ShuffleSpec {
            ratio,
            mode: cfg.mode,
            respect_split: cfg.respect_split,
            seed,
        };
        let shuffled = shuffle_features(&g, &spec)?;
        let cfh = cfh_report(&remove_self_loops(&shuffled), cfg.baseline)?.graph_cfh;
        let input = prepare_graph(&shuffled, &cfg.convolution);
        let model = train_simplified_gnn(&input, &cfg.convolution, &cfg.train.with_seed(seed))?;
        let acc = evaluate(&model, &input, &cfg.convolution, Split::Test)?;
        Ok((cfh, acc))
    });
    let results: Vec<(f64, f64)> = results.into_iter().collect::<Result<_>>()?;
    Ok(results
        .chunks(cfg.trials)
        .zip(&cfg.ratios)
        .map(|(res, &ratio)| {
            let acc: Vec<f64> = res.iter().map(|r| r.1).collect();
            let (acc_mean, acc_std) = mean_std(&acc);
            ShuffleRow {
                ratio,
                graph_cfh: res.iter().map(|r| r.0).sum::<f64>() / res.len() as f64,
                acc_mean,
                acc_std,
                trials: cfg.trials,
            }
        })
        .collect())
}

pub fn shuffle_rows_to_csv(rows: &[ShuffleRow]) -> String {
    let mut out = format!("{SHUFFLE_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.ratio, r.graph_cfh, r.acc_mean, r.acc_std, r.trials
        ));
    }
    out
}

/// Summary of a dataset's homophily.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub graph_cfh: f64,
    pub graph_cfh_raw: f64,
    pub class_homophily: f64,
    pub node_cfh: Vec<f64>,
    pub baseline_mode: BaselineMode,
    pub baseline_is_estimate: bool,
    pub skipped_isolated: Vec<usize>,
    /// Sample feature distance between the two largest classes; absent when
    /// their averaged covariance is singular.
    pub feature_distance: Option<f64>,
    pub feature_distance_classes: [usize; 2],
}

/// CFH (self-loops ignored), class homophily and feature distance of `g`.
///
/// Exact baselines are refused above [`EXACT_BASELINE_LIMIT`] nodes.
pub fn measure(g: &LabeledGraph, mode: BaselineMode) -> Result<MeasureReport> {
    if mode == BaselineMode::Exact && g.n() > EXACT_BASELINE_LIMIT {
        return Err(Error::InvalidParameter(format!(
            "exact baselines are limited to {EXACT_BASELINE_LIMIT} nodes (graph has {}); use a sampled baseline",
            g.n()
        )));
    }
    let report = cfh_report(&remove_self_loops(g), mode)?;
    let stats = class_stats(g)?;
    let mut by_size: Vec<(usize, usize)> = crate::graph::class_partition(g)
        .sizes()
        .into_iter()
        .enumerate()
        .map(|(c, s)| (s, c))
        .collect();
    by_size.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let pair = [by_size[0].1, by_size[1].1];
    let fd = match feature_distance(&stats[pair[0]], &stats[pair[1]]) {
        Ok(v) => Some(v),
        Err(Error::SingularCovariance) => None,
        Err(e) => return Err(e),
    };
    Ok(MeasureReport {
        graph_cfh: report.graph_cfh,
        graph_cfh_raw: report.graph_cfh_raw,
        class_homophily: class_homophily(g),
        node_cfh: report.node_cfh,
        baseline_mode: mode,
        baseline_is_estimate: mode.is_estimate(),
        skipped_isolated: report.skipped_isolated,
        feature_distance: fd,
        feature_distance_classes: pair,
    })
}
