//! Experiment configuration, replicated runs and report files.

mod run;
mod spec;

pub use run::{
    default_workers, gp_dataset, method_labels, oracle, oracle_bounds, reference_mean, run_experiment, write_csv,
    write_outputs, DepgraphOutput, ExperimentResult, Failure, RunOptions, CHAIN_RULE,
};
pub use spec::{parse_spec, Experiment, ExperimentSpec, Method, Point, Sampler, Scheme, Sweep, SweepVar};
