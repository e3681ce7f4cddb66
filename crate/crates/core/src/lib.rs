//! Reactive-power control for smart inverters on radial distribution feeders.
//!
//! The crate covers the full loop: an exact branch-flow simulator
//! ([`powerflow`]), a convex-relaxation optimal baseline ([`opf`]), a
//! neural truncated-Gaussian policy ([`policy`]) trained with score-function
//! policy gradients ([`trainer`]), and data/CLI plumbing ([`dataset`], [`cli`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundled;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod network;
pub mod opf;
pub mod policy;
pub mod powerflow;
pub mod stats;
pub mod trainer;

pub use error::{Error, Result};
pub use policy::{PolicyGradientRecord, PolicyModel, TruncatedGaussian};
pub use opf::{exactness_check, grid_search_oracle, solve_baseline, OpfSolution, SolverOptions};
pub use network::{load_network, reactive_capability, BusId, GridState, InverterSpec, Line, NetworkModel};
pub use trainer::{infer, train, InferenceMode, LossTrace, TrainConfig};
pub use dataset::{load_timeseries, synthesize_timeseries, ProfileConfig, TimeSeriesDataset};
pub use powerflow::{
    evaluate_loss, evaluate_loss_with, injection_vectors, solve_power_flow, EvalConfig, LossEvaluation,
    PowerFlowSolution,
};
