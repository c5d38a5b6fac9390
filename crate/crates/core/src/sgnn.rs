//! Graph convolution operators and the linear classifier trained on
//! convolved features.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{add_self_loops, to_undirected, LabeledGraph, Split};
use crate::matrix::Matrix;
use crate::rng::{stream, substream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvolutionKind {
    /// `D⁻¹A`: average of out-neighbor rows.
    RowNormalized,
    /// `(D+I)^-1/2 (A+I) (D+I)^-1/2` on an undirected graph.
    SymmetricSelfloop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvolutionSpec {
    pub kind: ConvolutionKind,
    pub layers: usize,
}

impl ConvolutionSpec {
    pub fn row_normalized(layers: usize) -> Self {
        ConvolutionSpec {
            kind: ConvolutionKind::RowNormalized,
            layers,
        }
    }
}

impl Default for ConvolutionSpec {
    fn default() -> Self {
        ConvolutionSpec::row_normalized(1)
    }
}

/// The graph a convolution should run on: unchanged for the row-normalized
/// operator, symmetrized with self-loops for the symmetric one.
pub fn prepare_graph(g: &LabeledGraph, spec: &ConvolutionSpec) -> LabeledGraph {
    match spec.kind {
        ConvolutionKind::RowNormalized => g.clone(),
        ConvolutionKind::SymmetricSelfloop => add_self_loops(&to_undirected(g)),
    }
}

/// Applies the operator `spec.layers` times to `x`.
///
/// The symmetric operator treats existing self-loops as the `+I` term
/// rather than adding a second one.
pub fn convolve(g: &LabeledGraph, x: &Matrix, spec: &ConvolutionSpec) -> Result<Matrix> {
    if spec.layers == 0 {
        return Err(Error::InvalidParameter("convolution needs at least one layer".into()));
    }
    if x.rows() != g.n() {
        return Err(Error::InvalidParameter("feature rows do not match node count".into()));
    }
    let k = x.cols();
    match spec.kind {
        ConvolutionKind::RowNormalized => {
            if let Some(i) = (0..g.n()).find(|&i| g.degree(i) == 0) {
                return Err(Error::ZeroDegree(i));
            }
            let mut cur = x.clone();
            for _ in 0..spec.layers {
                let mut next = Matrix::zeros(g.n(), k);
                for i in 0..g.n() {
                    let nbrs = g.neighbors(i);
                    let row = next.row_mut(i);
                    for &j in nbrs {
                        for (o, v) in row.iter_mut().zip(cur.row(j)) {
                            *o += v;
                        }
                    }
                    let inv = 1.0 / nbrs.len() as f64;
                    row.iter_mut().for_each(|o| *o *= inv);
                }
                cur = next;
            }
            Ok(cur)
        }
        ConvolutionKind::SymmetricSelfloop => {
            let loop_free: Vec<Vec<usize>> = (0..g.n())
                .map(|i| g.neighbors(i).iter().copied().filter(|&j| j != i).collect())
                .collect();
            for (i, list) in loop_free.iter().enumerate() {
                for &j in list {
                    if !g.neighbors(j).contains(&i) {
                        return Err(Error::NotUndirected(i, j));
                    }
                }
            }
            let scale: Vec<f64> = loop_free
                .iter()
                .map(|l| 1.0 / ((l.len() + 1) as f64).sqrt())
                .collect();
            let mut cur = x.clone();
            for _ in 0..spec.layers {
                let mut next = Matrix::zeros(g.n(), k);
                for i in 0..g.n() {
                    let row = next.row_mut(i);
                    for (o, v) in row.iter_mut().zip(cur.row(i)) {
                        *o = scale[i] * v;
                    }
                    for &j in &loop_free[i] {
                        for (o, v) in row.iter_mut().zip(cur.row(j)) {
                            *o += scale[j] * v;
                        }
                    }
                    row.iter_mut().for_each(|o| *o *= scale[i]);
                }
                cur = next;
            }
            Ok(cur)
        }
    }
}

/// Class 1 for `x >= 0`, class 0 otherwise.
pub fn threshold_classifier(x: f64) -> usize {
    usize::from(x >= 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            epochs: 500,
            patience: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidParameter(format!("learning rate {} must be positive", self.lr)));
        }
        if self.epochs == 0 || self.patience > self.epochs {
            return Err(Error::InvalidParameter(format!(
                "need 0 < patience ({}) <= epochs ({})",
                self.patience, self.epochs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

/// Linear classifier on convolved features.
///
/// With two classes this is a single weight column without bias, scored by
/// [`threshold_classifier`]. With more classes it is a `k×c` weight matrix
/// plus bias under softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub classes: usize,
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl LinearModel {
    fn init(k: usize, classes: usize, seed: u64) -> Self {
        let outputs = if classes == 2 { 1 } else { classes };
        let bound = 1.0 / (k as f64).sqrt();
        let mut rng = substream(seed, stream::INIT);
        let weights = Matrix::from_vec(
            k,
            outputs,
            (0..k * outputs).map(|_| rng.random_range(-bound..bound)).collect(),
        );
        let bias = if classes == 2 { Vec::new() } else { vec![0.0; classes] };
        LinearModel {
            classes,
            weights,
            bias,
            log: Vec::new(),
            best_epoch: 0,
            best_val_accuracy: 0.0,
        }
    }

    pub fn is_binary(&self) -> bool {
        self.classes == 2
    }

    fn scores(&self, row: &[f64], out: &mut [f64]) {
        for (o, s) in out.iter_mut().enumerate() {
            *s = self.bias.get(o).copied().unwrap_or(0.0)
                + row
                    .iter()
                    .enumerate()
                    .map(|(f, v)| v * self.weights.get(f, o))
                    .sum::<f64>();
        }
    }

    pub fn predict_one(&self, row: &[f64]) -> usize {
        let mut s = vec![0.0; self.weights.cols()];
        self.scores(row, &mut s);
        if self.is_binary() {
            threshold_classifier(s[0])
        } else {
            s.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(c, _)| c)
                .expect("non-empty scores")
        }
    }

    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        x.iter_rows().map(|r| self.predict_one(r)).collect()
    }

    /// Class probabilities, one row per node.
    pub fn predict_proba(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), self.classes);
        let mut s = vec![0.0; self.weights.cols()];
        for (i, row) in x.iter_rows().enumerate() {
            self.scores(row, &mut s);
            let dst = out.row_mut(i);
            if self.is_binary() {
                let p = sigmoid(s[0]);
                dst[0] = 1.0 - p;
                dst[1] = p;
            } else {
                dst.copy_from_slice(&crate::sampling::softmax(&s));
            }
        }
        out
    }

    /// Mean loss and its gradient (weights then bias) over `nodes`.
    fn loss_and_grad(&self, x: &Matrix, labels: &[usize], nodes: &[usize]) -> (f64, Vec<f64>) {
        let k = self.weights.rows();
        let outputs = self.weights.cols();
        let mut grad = vec![0.0; k * outputs + self.bias.len()];
        let mut loss = 0.0;
        let mut s = vec![0.0; outputs];
        for &i in nodes {
            let row = x.row(i);
            self.scores(row, &mut s);
            let y = labels[i];
            if self.is_binary() {
                let z = s[0];
                let target = y as f64;
                loss += softplus(z) - target * z;
                let err = sigmoid(z) - target;
                for (f, v) in row.iter().enumerate() {
                    grad[f] += err * v;
                }
            } else {
                let p = crate::sampling::softmax(&s);
                loss -= p[y].max(f64::MIN_POSITIVE).ln();
                for o in 0..outputs {
                    let err = p[o] - if o == y { 1.0 } else { 0.0 };
                    for (f, v) in row.iter().enumerate() {
                        grad[f * outputs + o] += err * v;
                    }
                    grad[k * outputs + o] += err;
                }
            }
        }
        let inv = 1.0 / nodes.len() as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        (loss * inv, grad)
    }

    fn apply_update(&mut self, delta: &[f64]) {
        let wlen = self.weights.rows() * self.weights.cols();
        let mut w = self.weights.as_slice().to_vec();
        for (p, d) in w.iter_mut().zip(&delta[..wlen]) {
            *p -= d;
        }
        self.weights = Matrix::from_vec(self.weights.rows(), self.weights.cols(), w);
        for (p, d) in self.bias.iter_mut().zip(&delta[wlen..]) {
            *p -= d;
        }
    }
}

/// Fraction of `nodes` whose prediction matches its label.
pub fn accuracy(model: &LinearModel, x: &Matrix, labels: &[usize], nodes: &[usize]) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::InvalidParameter("accuracy over an empty node set".into()));
    }
    let correct = nodes
        .iter()
        .filter(|&&i| model.predict_one(x.row(i)) == labels[i])
        .count();
    Ok(correct as f64 / nodes.len() as f64)
}

/// Full-batch Adam on the train nodes with early stopping on validation
/// accuracy. Returns the checkpoint with the best validation accuracy
/// (earliest on ties); the starting parameters count as epoch 0. When the
/// validation set is empty, train accuracy drives model selection.
pub fn train_on_features(
    x: &Matrix,
    labels: &[usize],
    classes: usize,
    train: &[usize],
    val: &[usize],
    cfg: &TrainConfig,
    start: Option<&LinearModel>,
) -> Result<LinearModel> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::MissingSplit("train"));
    }
    let select = if val.is_empty() { train } else { val };
    let mut model = match start {
        Some(m) => LinearModel {
            log: Vec::new(),
            ..m.clone()
        },
        None => LinearModel::init(x.cols(), classes, cfg.seed),
    };
    if model.weights.rows() != x.cols() || model.classes != classes {
        return Err(Error::InvalidParameter("model shape does not match features".into()));
    }

    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let nparams = model.weights.rows() * model.weights.cols() + model.bias.len();
    let mut m = vec![0.0; nparams];
    let mut v = vec![0.0; nparams];
    let mut best = model.clone();
    best.best_epoch = 0;
    best.best_val_accuracy = accuracy(&model, x, labels, select)?;
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let (loss, grad) = model.loss_and_grad(x, labels, train);
        let t = epoch as i32;
        let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
        let delta: Vec<f64> = (0..nparams)
            .map(|p| {
                m[p] = beta1 * m[p] + (1.0 - beta1) * grad[p];
                v[p] = beta2 * v[p] + (1.0 - beta2) * grad[p] * grad[p];
                cfg.lr * (m[p] / c1) / ((v[p] / c2).sqrt() + eps)
            })
            .collect();
        model.apply_update(&delta);
        let val_accuracy = accuracy(&model, x, labels, select)?;
        log.push(EpochLog {
            epoch,
            train_loss: loss,
            val_accuracy,
        });
        if val_accuracy > best.best_val_accuracy {
            best = LinearModel {
                best_epoch: epoch,
                best_val_accuracy: val_accuracy,
                ..model.clone()
            };
        } else if epoch - best.best_epoch >= cfg.patience {
            break;
        }
    }
    best.log = log;
    Ok(best)
}

fn split_sets(g: &LabeledGraph) -> Result<(Vec<usize>, Vec<usize>)> {
    Ok((g.split_nodes(Split::Train)?, g.split_nodes(Split::Val)?))
}

pub fn train_simplified_gnn(g: &LabeledGraph, spec: &ConvolutionSpec, cfg: &TrainConfig) -> Result<LinearModel> {
    let (train, val) = split_sets(g)?;
    let x = convolve(g, g.features(), spec)?;
    train_on_features(&x, g.labels(), g.c(), &train, &val, cfg, None)
}

/// Resumes training from `model` (fresh optimizer state) on `g`.
pub fn continue_training(
    g: &LabeledGraph,
    spec: &ConvolutionSpec,
    cfg: &TrainConfig,
    model: &LinearModel,
) -> Result<LinearModel> {
    let (train, val) = split_sets(g)?;
    let x = convolve(g, g.features(), spec)?;
    train_on_features(&x, g.labels(), g.c(), &train, &val, cfg, Some(model))
}

pub fn evaluate(model: &LinearModel, g: &LabeledGraph, spec: &ConvolutionSpec, split: Split) -> Result<f64> {
    let nodes = g.split_nodes(split)?;
    if nodes.is_empty() {
        return Err(Error::MissingSplit(split.name()));
    }
    let x = convolve(g, g.features(), spec)?;
    accuracy(model, &x, g.labels(), &nodes)
}
