use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cfh_core::csbmx::{generate_csbmx, generate_csbmx2, Csbmx2Params, CsbmxParams, Provenance};
use cfh_core::experiment::{
    measure, rows_from_csv, rows_to_csv, run_shuffle_sweep, run_sweep, shuffle_rows_to_csv, ShuffleSweepConfig,
    SweepConfig, TrainSettings,
};
use cfh_core::graph::{default_split, load_graph, save_graph, LabeledGraph, Split};
use cfh_core::metrics::BaselineMode;
use cfh_core::plot::{emit_plots, PlotSpec};
use cfh_core::sgnn::{evaluate, prepare_graph, train_simplified_gnn, ConvolutionKind, ConvolutionSpec};
use cfh_core::shuffle::{shuffle_features, ShuffleMode, ShuffleSpec};
use cfh_core::theory::{ber_csv, ber_curve, expectation_csv, expectation_grid};

/// Class-controlled feature homophily toolkit.
#[derive(Parser, Debug)]
#[command(name = "cfh", version, about)]
struct Cli {
    /// Seed for every random choice; overrides seeds in parameter files.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file or directory. Results go to stdout when omitted, where
    /// the command allows it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Report CFH, class homophily and feature distance of a dataset.
    Measure {
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = Baseline::Exact)]
        baseline: Baseline,
        /// Nodes averaged per baseline in sampled mode.
        #[arg(long, default_value_t = 1000)]
        sample_size: usize,
    },
    /// Generate a CSBM-X graph from a JSON parameter file.
    Generate { params: PathBuf },
    /// Generate a multi-class CSBM-X2 graph from a JSON parameter file.
    Generate2 { params: PathBuf },
    /// Shuffle node features among nodes of the same group.
    Shuffle {
        dataset: PathBuf,
        #[arg(long)]
        ratio: f64,
        #[arg(long, value_enum, default_value_t = Mode::Classwise)]
        mode: Mode,
        /// Only exchange features between nodes of the same split.
        #[arg(long)]
        respect_split: bool,
    },
    /// Train the simplified GNN and report accuracy.
    Train {
        dataset: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Evaluate the closed-form oracles.
    Theory {
        #[command(subcommand)]
        which: TheoryCommand,
    },
    /// Run a τ sweep described by a JSON config.
    Sweep { config: PathBuf },
    /// Accuracy and CFH of a dataset as more features are shuffled.
    ShuffleSweep {
        dataset: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
        ratios: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, value_enum, default_value_t = Mode::Classwise)]
        mode: Mode,
        /// Allow features to move across train/val/test.
        #[arg(long)]
        across_splits: bool,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Draw accuracy-versus-τ charts from a sweep CSV.
    Plot { csv: PathBuf },
}

#[derive(Subcommand, Debug)]
enum TheoryCommand {
    /// Expected neighbor feature by closed form, quadrature and Monte Carlo.
    Expectation {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-3,-2,-1,0,1,2,3")]
        x: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-2,-1,-0.5,0,0.5,1,2")]
        tau: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Limiting Bayes error rate of the threshold classifier.
    Ber {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-1.5,-1,-0.5,0,0.5,1,1.5")]
        tau: Vec<f64>,
        #[arg(long, default_value_t = 0.5)]
        mu: f64,
        #[arg(long, default_value_t = 0.15)]
        p_plus: f64,
        #[arg(long, default_value_t = 0.05)]
        p_minus: f64,
    },
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long, value_enum, default_value_t = Conv::Row)]
    conv: Conv,
    #[arg(long, default_value_t = 1)]
    layers: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 100)]
    patience: usize,
}

impl ModelArgs {
    fn spec(&self) -> ConvolutionSpec {
        let kind = match self.conv {
            Conv::Row => ConvolutionKind::RowNormalized,
            Conv::Sym => ConvolutionKind::SymmetricSelfloop,
        };
        ConvolutionSpec {
            kind,
            layers: self.layers,
        }
    }

    fn settings(&self) -> TrainSettings {
        TrainSettings {
            lr: self.lr,
            epochs: self.epochs,
            patience: self.patience,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Baseline {
    Exact,
    Sampled,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Mode {
    Classwise,
    Nonclasswise,
}

impl From<Mode> for ShuffleMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Classwise => ShuffleMode::Classwise,
            Mode::Nonclasswise => ShuffleMode::Nonclasswise,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Conv {
    /// D⁻¹A
    Row,
    /// Symmetric normalization with self-loops (graph is symmetrized first)
    Sym,
}

#[derive(Serialize)]
struct TrainReport {
    test_accuracy: f64,
    val_accuracy: f64,
    epochs_run: usize,
    best_epoch: usize,
    seed: u64,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
            }
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn require_out(out: Option<&Path>, what: &str) -> Result<PathBuf> {
    out.map(Path::to_path_buf)
        .ok_or_else(|| anyhow!(Invalid(format!("{what} needs --out <DIR>"))))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn with_split(g: LabeledGraph, seed: u64) -> Result<LabeledGraph> {
    if g.split().is_some() {
        return Ok(g);
    }
    Ok(g.with_split(Some(default_split(g.labels(), g.c(), seed)))?)
}

/// Marks a usage problem found after argument parsing.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            bail!(Invalid("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let out = cli.out.as_deref();
    let seed = cli.seed.unwrap_or(0);

    match cli.command {
        Command::Measure {
            dataset,
            baseline,
            sample_size,
        } => {
            let g = load_graph(&dataset)?;
            let mode = match baseline {
                Baseline::Exact => BaselineMode::Exact,
                Baseline::Sampled => BaselineMode::Sampled { m: sample_size, seed },
            };
            let report = measure(&g, mode)?;
            emit(out, &(serde_json::to_string_pretty(&report)? + "\n"))
        }
        Command::Generate { params } => {
            let mut p: CsbmxParams = read_json(&params)?;
            if let Some(s) = cli.seed {
                p.seed = s;
            }
            let dir = require_out(out, "generate")?;
            let g = generate_csbmx(&p)?;
            save_graph(&g, &dir)?;
            let prov = Provenance::new("csbmx", p.seed, &p)?;
            fs::write(dir.join("provenance.json"), serde_json::to_string_pretty(&prov)? + "\n")?;
            Ok(())
        }
        Command::Generate2 { params } => {
            let mut p: Csbmx2Params = read_json(&params)?;
            if let Some(s) = cli.seed {
                p.seed = s;
            }
            let dir = require_out(out, "generate2")?;
            let g = generate_csbmx2(&p)?;
            save_graph(&g, &dir)?;
            let prov = Provenance::new("csbmx2", p.seed, &p)?;
            fs::write(dir.join("provenance.json"), serde_json::to_string_pretty(&prov)? + "\n")?;
            Ok(())
        }
        Command::Shuffle {
            dataset,
            ratio,
            mode,
            respect_split,
        } => {
            let dir = require_out(out, "shuffle")?;
            let g = load_graph(&dataset)?;
            let spec = ShuffleSpec {
                ratio,
                mode: mode.into(),
                respect_split,
                seed,
            };
            save_graph(&shuffle_features(&g, &spec)?, &dir)?;
            Ok(())
        }
        Command::Train { dataset, model } => {
            let g = with_split(load_graph(&dataset)?, seed)?;
            let spec = model.spec();
            let g = prepare_graph(&g, &spec);
            let trained = train_simplified_gnn(&g, &spec, &model.settings().with_seed(seed))?;
            let report = TrainReport {
                test_accuracy: evaluate(&trained, &g, &spec, Split::Test)?,
                val_accuracy: evaluate(&trained, &g, &spec, Split::Val)?,
                epochs_run: trained.log.len(),
                best_epoch: trained.best_epoch,
                seed,
            };
            emit(out, &(serde_json::to_string_pretty(&report)? + "\n"))
        }
        Command::Theory { which } => match which {
            TheoryCommand::Expectation { x, tau, samples } => {
                let rows = expectation_grid(&x, &tau, samples, seed)?;
                emit(out, &expectation_csv(&rows))
            }
            TheoryCommand::Ber {
                tau,
                mu,
                p_plus,
                p_minus,
            } => emit(out, &ber_csv(&ber_curve(&tau, mu, p_plus, p_minus)?)),
        },
        Command::Sweep { config } => {
            let mut cfg: SweepConfig = read_json(&config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let rows = run_sweep(&cfg)?;
            let target = out.map(Path::to_path_buf).or_else(|| cfg.output.clone());
            emit(target.as_deref(), &rows_to_csv(&rows))
        }
        Command::ShuffleSweep {
            dataset,
            ratios,
            trials,
            mode,
            across_splits,
            model,
        } => {
            let g = load_graph(&dataset)?;
            let cfg = ShuffleSweepConfig {
                mode: mode.into(),
                respect_split: !across_splits,
                convolution: model.spec(),
                train: model.settings(),
                ..ShuffleSweepConfig::new(ratios, trials, seed)
            };
            emit(out, &shuffle_rows_to_csv(&run_shuffle_sweep(&g, &cfg)?))
        }
        Command::Plot { csv } => {
            let dir = require_out(out, "plot")?;
            let text = fs::read_to_string(&csv).with_context(|| format!("reading {}", csv.display()))?;
            let rows = rows_from_csv(&text)?;
            for path in emit_plots(&rows, &dir, &PlotSpec::default())? {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

/// 1 for bad input (arguments, parameters, dataset contents), 2 for
/// everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Invalid>() || cause.is::<serde_json::Error>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<cfh_core::Error>() {
            return if e.is_validation() { 1 } else { 2 };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
