//! Feature shuffles: permute feature rows among chosen nodes of a group
//! while leaving topology, labels, and splits untouched.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{LabeledGraph, Split};
use crate::matrix::Matrix;
use crate::rng::{stream, substream};
use crate::sgnn::{
    continue_training, convolve, train_simplified_gnn, ConvolutionSpec, LinearModel, TrainConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShuffleMode {
    /// Rows move only between nodes of the same class.
    Classwise,
    /// Rows move irrespective of class.
    Nonclasswise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShuffleSpec {
    /// Fraction of each group whose rows are permuted.
    pub ratio: f64,
    pub mode: ShuffleMode,
    /// Keep rows inside their train/val/test split.
    pub respect_split: bool,
    pub seed: u64,
}

impl ShuffleSpec {
    pub fn classwise(ratio: f64, seed: u64) -> Self {
        ShuffleSpec {
            ratio,
            mode: ShuffleMode::Classwise,
            respect_split: false,
            seed,
        }
    }
}

/// Permutes the rows of `⌊ratio·|group|⌋` uniformly chosen members of each
/// group. Chosen nodes that the permutation fixes still count as shuffled.
pub fn shuffle_within_groups(x: &Matrix, groups: &[Vec<usize>], ratio: f64, seed: u64) -> Result<Matrix> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidParameter(format!("shuffle ratio {ratio} outside [0, 1]")));
    }
    let mut out = x.clone();
    for (g, members) in groups.iter().enumerate() {
        let count = (ratio * members.len() as f64 + 1e-9).floor() as usize;
        if count < 2 {
            continue;
        }
        let mut rng = substream(seed, stream::GROUP_BASE + g as u64);
        let mut chosen: Vec<usize> = index::sample(&mut rng, members.len(), count)
            .into_iter()
            .map(|t| members[t])
            .collect();
        chosen.sort_unstable();
        let mut source = chosen.clone();
        source.shuffle(&mut rng);
        for (&dst, &src) in chosen.iter().zip(&source) {
            out.row_mut(dst).copy_from_slice(x.row(src));
        }
    }
    Ok(out)
}

/// Node groups for a shuffle, in (class, split) order.
pub fn shuffle_groups(g: &LabeledGraph, mode: ShuffleMode, respect_split: bool) -> Result<Vec<Vec<usize>>> {
    let split = match (respect_split, g.split()) {
        (true, None) => return Err(Error::MissingSplit("train/val/test")),
        (true, Some(s)) => Some(s),
        (false, _) => None,
    };
    let mut groups: BTreeMap<(usize, Option<Split>), Vec<usize>> = BTreeMap::new();
    for i in 0..g.n() {
        let class = match mode {
            ShuffleMode::Classwise => g.labels()[i],
            ShuffleMode::Nonclasswise => 0,
        };
        groups.entry((class, split.map(|s| s[i]))).or_default().push(i);
    }
    Ok(groups.into_values().collect())
}

pub fn shuffle_features(g: &LabeledGraph, spec: &ShuffleSpec) -> Result<LabeledGraph> {
    let groups = shuffle_groups(g, spec.mode, spec.respect_split)?;
    let x = shuffle_within_groups(g.features(), &groups, spec.ratio, spec.seed)?;
    g.with_features(x)
}

/// Pseudo-label shuffle outcome.
#[derive(Debug, Clone)]
pub struct PseudoLabelShuffle {
    pub graph: LabeledGraph,
    pub initial_model: LinearModel,
    pub fine_tuned: LinearModel,
    /// Nodes outside train/val whose confidence passed the gate.
    pub gated_nodes: usize,
    /// Set when no node at all passed the confidence gate; the shuffle then
    /// covers train/val nodes only.
    pub gate_empty: bool,
}

/// Confidence gate: nodes with `o_l ≤ max prob ≤ o_u` get their argmax as
/// pseudo-label; train/val nodes keep their true label.
pub fn pseudo_labels(
    probabilities: &Matrix,
    labels: &[usize],
    split: &[Split],
    o_l: f64,
    o_u: f64,
) -> (Vec<Option<usize>>, usize, bool) {
    let mut gated = 0;
    let mut any_passed = false;
    let assigned = (0..labels.len())
        .map(|i| {
            let row = probabilities.row(i);
            let (arg, &best) = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .expect("at least two classes");
            let passes = o_l <= best && best <= o_u;
            any_passed |= passes;
            match split[i] {
                Split::Train | Split::Val => Some(labels[i]),
                Split::Test if passes => {
                    gated += 1;
                    Some(arg)
                }
                Split::Test => None,
            }
        })
        .collect();
    (assigned, gated, !any_passed)
}

/// Train, pseudo-label, shuffle among equal pseudo-labels across splits,
/// then fine-tune the trained model on the shuffled features.
pub fn pseudo_label_shuffle(
    g: &LabeledGraph,
    conv: &ConvolutionSpec,
    cfg: &TrainConfig,
    o_l: f64,
    o_u: f64,
    seed: u64,
) -> Result<PseudoLabelShuffle> {
    if !(0.0 <= o_l && o_l <= o_u && o_u <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "confidence range [{o_l}, {o_u}] must satisfy 0 <= o_l <= o_u <= 1"
        )));
    }
    let split = g.split().ok_or(Error::MissingSplit("train/val"))?;
    let initial_model = train_simplified_gnn(g, conv, cfg)?;
    let convolved = convolve(g, g.features(), conv)?;
    let probabilities = initial_model.predict_proba(&convolved);
    let (assigned, gated_nodes, gate_empty) = pseudo_labels(&probabilities, g.labels(), split, o_l, o_u);

    let mut groups = vec![Vec::new(); g.c()];
    for (i, a) in assigned.iter().enumerate() {
        if let Some(l) = a {
            groups[*l].push(i);
        }
    }
    let x = shuffle_within_groups(g.features(), &groups, 1.0, seed)?;
    let graph = g.with_features(x)?;
    let fine_tuned = continue_training(&graph, conv, cfg, &initial_model)?;
    Ok(PseudoLabelShuffle {
        graph,
        initial_model,
        fine_tuned,
        gated_nodes,
        gate_empty,
    })
}
