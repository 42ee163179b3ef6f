use crate::error::{Error, Result};

/// How the backbone advances after a block of `M` inner samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BackbonePolicy {
    /// `z_d = x_{d,M}`.
    #[default]
    LastSample,
    /// `z_d = x_{d,j}` with `j` uniform on `1..=M`.
    UniformIndex,
}

/// Default cap on materialized recycled scalars (`T * D * M`).
pub const DEFAULT_STORAGE_CAP: usize = 100_000_000;

/// Settings shared by every Gibbs driver. The scan order is always ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsConfig {
    /// Number of sweeps `T`.
    pub sweeps: usize,
    /// Inner samples per full conditional per sweep, `M`.
    pub inner_steps: usize,
    /// Sweeps dropped by standard estimators only.
    pub burn_in: usize,
    /// Starting point `x^(0)`.
    pub initial: Vec<f64>,
    pub backbone: BackbonePolicy,
    pub storage_cap: usize,
}

impl GibbsConfig {
    pub fn new(sweeps: usize, inner_steps: usize, initial: Vec<f64>) -> Self {
        GibbsConfig {
            sweeps,
            inner_steps,
            burn_in: 0,
            initial,
            backbone: BackbonePolicy::LastSample,
            storage_cap: DEFAULT_STORAGE_CAP,
        }
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_backbone(mut self, policy: BackbonePolicy) -> Self {
        self.backbone = policy;
        self
    }

    pub fn dim(&self) -> usize {
        self.initial.len()
    }

    /// Checks `T >= 1`, `M >= 1`, `0 <= t_b < T` and that `x^(0)` matches `dim`.
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.sweeps == 0 {
            return Err(Error::Config("sweeps T must be at least 1".into()));
        }
        if self.inner_steps == 0 {
            return Err(Error::Config("inner steps M must be at least 1".into()));
        }
        if self.burn_in >= self.sweeps {
            return Err(Error::Config(format!(
                "burn-in {} must be smaller than T = {}",
                self.burn_in, self.sweeps
            )));
        }
        if self.initial.len() != dim {
            return Err(Error::Config(format!(
                "initial point has length {}, target dimension is {dim}",
                self.initial.len()
            )));
        }
        if self.initial.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("initial point must be finite".into()));
        }
        Ok(())
    }

    /// Number of recycled vectors, `T * D * M`.
    pub fn recycled_len(&self) -> usize {
        self.sweeps * self.dim() * self.inner_steps
    }
}
