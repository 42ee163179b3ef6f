//! Recycling Gibbs samplers and the benchmark harness built on them.
//!
//! The samplers draw `M` inner samples per full-conditional and per sweep.
//! Standard Gibbs (SG) keeps the last one; multiple recycling Gibbs (MRG)
//! keeps them all and averages over every assembled vector.

pub mod config;
pub mod density;
pub mod depgraph;
pub mod estimators;
pub mod error;
pub mod gibbs;
pub mod harness;
pub mod kernels;
pub mod linalg;
pub mod report;
pub mod rng;
pub mod targets;

pub use config::{BackbonePolicy, GibbsConfig};
pub use density::{assemble, project, FullConditionalView, TargetDensity};
pub use error::{Error, Result};
pub use gibbs::{run_chain_rule, run_mrg, run_sg, run_streaming, run_trg, Chain, ChainRuleOutput, SampleStore};
pub use rng::{Lane, RunStreams, SeedTree};
