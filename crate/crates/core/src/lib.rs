//! Stability of spectral clustering for weighted undirected graphs.
//!
//! The spectral gap `λ_{k+1} − λ_k` of the graph Laplacian, scaled by `1/√2`, is the
//! distance to the nearest symmetric matrix with a coalesced `k`th pair. The
//! structured distance `δ_k(W)` restricts that search to Laplacians of nonnegative
//! weights on the pattern of `W`; [`compute_sda`] computes it with a
//! norm-constrained gradient flow inside a Newton–bisection on the perturbation size.

pub mod cluster;
pub mod eigen;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod inner;
pub mod io;
pub mod outer;
pub mod polish;
mod tridiag;

pub use cluster::{kmeans, spectral_cluster, spectral_embed, ClusterAssignment, ClusterOptions, Embedding, KMeansConfig};
pub use eigen::{
    connected_components_via_kernel, eig_symmetric, spectral_gap, unstructured_minimizer, EigenSystem, GapReport,
};
pub use error::{Error, Result};
pub use experiments::{
    chain_sweep, frequency_experiment, gaussian_similarity, reduced_chain_model, sample_centers, sample_sbm,
    sbm_sweep, CentersSpec, FrequencyTable, SbmSpec, SweepPoint,
};
pub use graph::{laplacian, DenseSymmetric, OnPattern, PatternMatrix, SparsityPattern, WeightMatrix};
pub use inner::{inner_minimize, InnerConfig, InnerState, InnerStatus, StepRule};
pub use outer::{certificate, compute_sda, k_opt_sweep, OuterConfig, SdaReport, SdaResult, SweepRow, SweepTable};
