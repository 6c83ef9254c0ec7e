//! Structure learning for k-spin tensor Ising models.
//!
//! The signed hyperedges of a k-tensor Ising model are recovered by running,
//! at every vertex, an l1-penalized logistic regression of that spin on all
//! (k-1)-fold products of the other spins (a node-wise pseudolikelihood fit),
//! then combining the per-vertex neighborhoods into one signed hypergraph.
//!
//! Modules:
//! - [`tensor`]: the model, Hamiltonian, conditionals, exact enumeration;
//! - [`sampler`]: Gibbs and exact samplers, sample matrices;
//! - [`regression`]: the node-wise penalized pseudolikelihood and its solver;
//! - [`recovery`]: aggregation into a signed hypergraph and recovery metrics;
//! - [`diagnostics`]: Fisher blocks, dependency and incoherence constants,
//!   score norms, uniqueness certificates;
//! - [`generators`]: synthetic hypergraphs, sample-size scaling, ingestion.

pub mod combinatorics;
pub mod diagnostics;
pub mod error;
pub mod generators;
pub mod linalg;
pub mod recovery;
pub mod regression;
pub mod sampler;
pub mod tensor;

pub use diagnostics::{diagnose, DiagnosticsReport, FisherBlocks};
pub use error::{Error, ErrorKind, Result};
pub use generators::{assign_coefficients, regular_hypergraph, scaling_n, CoefficientScheme, HypergraphSupport, SignMode};
pub use recovery::{
    run_pipeline, AggregationMode, AggregationRule, LambdaMode, Metrics, PipelineOptions, RecoveryReport,
    SignedSupport,
};
pub use regression::{solve_l1, SelectionRule, SolveOptions, SparseCoefVector};
pub use sampler::{draw_samples, exact_sample, GibbsConfig, SampleMatrix, Scan, Spacing};
pub use tensor::{ExactDistribution, InteractionTensor, SpinConfiguration, Subset};
