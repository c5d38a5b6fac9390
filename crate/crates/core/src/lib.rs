//! Class-controlled feature homophily (CFH): measures, synthetic graph
//! generators, feature shuffles, a simplified graph-convolution classifier
//! and closed-form oracles for the convolved feature distribution.

pub mod csbmx;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod matrix;
pub mod metrics;
pub mod plot;
pub mod quadrature;
pub mod rng;
pub mod sampling;
pub mod sgnn;
pub mod shuffle;
pub mod special;
pub mod theory;

pub use error::{Error, Result};
pub use graph::{LabeledGraph, Split};
pub use matrix::Matrix;

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is on.
/// Output order is always index order.
#[cfg(feature = "parallel")]
pub(crate) fn par_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).map(f).collect()
}
