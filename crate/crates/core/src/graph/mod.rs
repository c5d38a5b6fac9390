//! Labeled directed graphs and the topology preprocessing shared by the
//! measures, generators, and classifiers.

mod io;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{stream, substream};

pub use io::{load_graph, save_graph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn code(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Split> {
        match code {
            0 => Some(Split::Train),
            1 => Some(Split::Val),
            2 => Some(Split::Test),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// A directed graph with one feature row, one class label, and an optional
/// split tag per node.
///
/// Values are immutable once built; every transform returns a new graph.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGraph {
    classes: usize,
    out_neighbors: Vec<Vec<usize>>,
    features: Matrix,
    labels: Vec<usize>,
    split: Option<Vec<Split>>,
    directed: bool,
}

impl LabeledGraph {
    /// Validates every structural invariant. Neighbor lists are kept in the
    /// order given.
    pub fn new(
        classes: usize,
        out_neighbors: Vec<Vec<usize>>,
        features: Matrix,
        labels: Vec<usize>,
        split: Option<Vec<Split>>,
        directed: bool,
    ) -> Result<Self> {
        let n = out_neighbors.len();
        if n == 0 {
            return Err(Error::InvalidGraph("graph must have at least one node".into()));
        }
        if classes < 2 {
            return Err(Error::InvalidGraph(format!("class count {classes} < 2")));
        }
        if features.rows() != n || features.cols() == 0 {
            return Err(Error::InvalidGraph(format!(
                "feature matrix is {}x{}, expected {n} rows and at least one column",
                features.rows(),
                features.cols()
            )));
        }
        if !features.all_finite() {
            return Err(Error::InvalidGraph("non-finite feature entry".into()));
        }
        if labels.len() != n {
            return Err(Error::InvalidGraph(format!("{} labels for {n} nodes", labels.len())));
        }
        if let Some(bad) = labels.iter().position(|&y| y >= classes) {
            return Err(Error::InvalidGraph(format!(
                "node {bad} has label {} >= {classes}",
                labels[bad]
            )));
        }
        if let Some(s) = &split {
            if s.len() != n {
                return Err(Error::InvalidGraph(format!("{} split tags for {n} nodes", s.len())));
            }
        }
        let mut seen = vec![usize::MAX; n];
        for (i, list) in out_neighbors.iter().enumerate() {
            for &j in list {
                if j >= n {
                    return Err(Error::InvalidGraph(format!("edge {i}->{j} out of range")));
                }
                if seen[j] == i {
                    return Err(Error::InvalidGraph(format!("duplicate edge {i}->{j}")));
                }
                seen[j] = i;
            }
        }
        Ok(LabeledGraph {
            classes,
            out_neighbors,
            features,
            labels,
            split,
            directed,
        })
    }

    pub fn n(&self) -> usize {
        self.out_neighbors.len()
    }

    pub fn k(&self) -> usize {
        self.features.cols()
    }

    pub fn c(&self) -> usize {
        self.classes
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.out_neighbors[i]
    }

    pub fn out_neighbors(&self) -> &[Vec<usize>] {
        &self.out_neighbors
    }

    pub fn degree(&self, i: usize) -> usize {
        self.out_neighbors[i].len()
    }

    pub fn edge_count(&self) -> usize {
        self.out_neighbors.iter().map(Vec::len).sum()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn split(&self) -> Option<&[Split]> {
        self.split.as_deref()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Number of out-neighbors of `i` sharing its class.
    pub fn same_class_degree(&self, i: usize) -> usize {
        let y = self.labels[i];
        self.out_neighbors[i]
            .iter()
            .filter(|&&j| self.labels[j] == y)
            .count()
    }

    pub fn with_features(&self, features: Matrix) -> Result<Self> {
        LabeledGraph::new(
            self.classes,
            self.out_neighbors.clone(),
            features,
            self.labels.clone(),
            self.split.clone(),
            self.directed,
        )
    }

    pub fn with_split(&self, split: Option<Vec<Split>>) -> Result<Self> {
        LabeledGraph::new(
            self.classes,
            self.out_neighbors.clone(),
            self.features.clone(),
            self.labels.clone(),
            split,
            self.directed,
        )
    }

    /// Neighbor lists sorted ascending.
    pub fn sorted(mut self) -> Self {
        for list in &mut self.out_neighbors {
            list.sort_unstable();
        }
        self
    }

    /// Nodes carrying the given split tag, in index order.
    pub fn split_nodes(&self, which: Split) -> Result<Vec<usize>> {
        let split = self.split.as_ref().ok_or(Error::MissingSplit(which.name()))?;
        Ok(split
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == which)
            .map(|(i, _)| i)
            .collect())
    }

    fn with_neighbors(&self, out_neighbors: Vec<Vec<usize>>, directed: bool) -> Self {
        LabeledGraph {
            classes: self.classes,
            out_neighbors,
            features: self.features.clone(),
            labels: self.labels.clone(),
            split: self.split.clone(),
            directed,
        }
    }
}

/// Symmetrizes the edge relation: every edge gains its reverse.
/// Neighbor lists of the result are sorted.
pub fn to_undirected(g: &LabeledGraph) -> LabeledGraph {
    let mut sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); g.n()];
    for (i, list) in g.out_neighbors.iter().enumerate() {
        for &j in list {
            sets[i].insert(j);
            sets[j].insert(i);
        }
    }
    let lists = sets.into_iter().map(|s| s.into_iter().collect()).collect();
    g.with_neighbors(lists, false)
}

/// Ensures `i ∈ N_i` for every node. Idempotent.
pub fn add_self_loops(g: &LabeledGraph) -> LabeledGraph {
    let lists = g
        .out_neighbors
        .iter()
        .enumerate()
        .map(|(i, list)| {
            let mut list = list.clone();
            if !list.contains(&i) {
                let at = list.partition_point(|&j| j < i);
                // keep sorted lists sorted; unsorted lists just gain the loop
                if list.windows(2).all(|w| w[0] < w[1]) {
                    list.insert(at, i);
                } else {
                    list.push(i);
                }
            }
            list
        })
        .collect();
    g.with_neighbors(lists, g.directed)
}

pub fn remove_self_loops(g: &LabeledGraph) -> LabeledGraph {
    let lists = g
        .out_neighbors
        .iter()
        .enumerate()
        .map(|(i, list)| list.iter().copied().filter(|&j| j != i).collect())
        .collect();
    g.with_neighbors(lists, g.directed)
}

/// Per-class node lists `C⁺_ℓ`; complements are derived on demand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPartition {
    n: usize,
    members: Vec<Vec<usize>>,
}

impl ClassPartition {
    pub fn members(&self, class: usize) -> &[usize] {
        &self.members[class]
    }

    /// `C⁻_ℓ`: every node outside class `class`, ascending.
    pub fn complement(&self, class: usize) -> Vec<usize> {
        let inside = &self.members[class];
        let mut out = Vec::with_capacity(self.n - inside.len());
        let mut it = inside.iter().peekable();
        for v in 0..self.n {
            if it.peek() == Some(&&v) {
                it.next();
            } else {
                out.push(v);
            }
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    pub fn classes(&self) -> usize {
        self.members.len()
    }
}

pub fn class_partition(g: &LabeledGraph) -> ClassPartition {
    partition_labels(g.labels(), g.c())
}

pub(crate) fn partition_labels(labels: &[usize], classes: usize) -> ClassPartition {
    let mut members = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        members[y].push(i);
    }
    ClassPartition {
        n: labels.len(),
        members,
    }
}

/// Per-class random split with the given train and validation fractions;
/// the remainder of each class becomes test. Counts are floored.
pub fn stratified_split(
    labels: &[usize],
    classes: usize,
    train_frac: f64,
    val_frac: f64,
    seed: u64,
) -> Result<Vec<Split>> {
    if !(0.0..=1.0).contains(&train_frac)
        || !(0.0..=1.0).contains(&val_frac)
        || train_frac + val_frac > 1.0
    {
        return Err(Error::InvalidParameter(format!(
            "split fractions {train_frac}/{val_frac} out of range"
        )));
    }
    let mut rng = substream(seed, stream::SPLIT);
    let mut split = vec![Split::Test; labels.len()];
    for mut members in partition_labels(labels, classes).members {
        members.shuffle(&mut rng);
        let m = members.len() as f64;
        let n_train = (train_frac * m + 1e-9).floor() as usize;
        let n_val = (val_frac * m + 1e-9).floor() as usize;
        for (t, &v) in members.iter().enumerate() {
            split[v] = if t < n_train {
                Split::Train
            } else if t < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    Ok(split)
}

/// The 50/25/25 per-class split used throughout the experiments.
pub fn default_split(labels: &[usize], classes: usize, seed: u64) -> Vec<Split> {
    stratified_split(labels, classes, 0.5, 0.25, seed).expect("fixed fractions are valid")
}
