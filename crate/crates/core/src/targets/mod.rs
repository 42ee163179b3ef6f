//! Target densities used by the experiments.

mod gp;
mod toy;

pub use gp::{ard_kernel, generate_gp_dataset, GpDataset, GpPosterior, DEFAULT_PRIOR_EXPONENT};
pub use toy::{Bimodal, Donut, GaussianChain};
