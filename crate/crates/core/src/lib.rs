//! Streaming topic models with knowledge-graph priors.
//!
//! [`gctm`] combines per-minibatch topic parameters with a graph
//! convolutional network over a word graph. [`baselines`] holds the
//! Dirichlet streaming learners SVB, SVB-PP and PVB. [`eval`] scores topics
//! with held-out log predictive probability and NPMI coherence, and
//! [`harness`] drives whole streaming experiments.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar type.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod gcn;
pub mod gctm;
pub mod graph;
pub mod harness;
pub mod inference;
pub mod scalar;
pub mod special;
pub mod synthetic;

pub use crate::baselines::{BaselineConfig, BaselineKind, BaselineModel, DirichletGlobal};
pub use crate::checkpoint::Checkpoint;
pub use crate::corpus::{Document, Minibatch, Vocabulary};
pub use crate::error::{Error, Result};
pub use crate::eval::{EvalReport, HeldOutSet, LppConfig, NpmiConfig};
pub use crate::gcn::{Activation, GcnParams};
pub use crate::gctm::{AdamState, GctmConfig, GctmState, RhoMode, TrainOptions};
pub use crate::graph::{FeatureMatrix, KnowledgeGraph, NormalizedAdjacency};
pub use crate::inference::{LocalPosterior, LogTopicMatrix, SufficientStats, VbOptions};
pub use crate::scalar::Scalar;

pub type GctmState64 = GctmState<f64>;
pub type GctmState32 = GctmState<f32>;
pub type BaselineModel64 = BaselineModel<f64>;
pub type BaselineModel32 = BaselineModel<f32>;
pub type Adjacency64 = NormalizedAdjacency<f64>;
pub type Adjacency32 = NormalizedAdjacency<f32>;
pub type Features64 = FeatureMatrix<f64>;
pub type Features32 = FeatureMatrix<f32>;
pub type Checkpoint64 = Checkpoint<f64>;
pub type Checkpoint32 = Checkpoint<f32>;
