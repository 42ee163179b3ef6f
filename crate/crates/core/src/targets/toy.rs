use rand::Rng;
use rand_distr::StandardNormal;

use crate::density::TargetDensity;
use crate::error::Result;
use crate::rng::StreamRng;

/// Bivariate Gaussian defined through its two conditionals
/// `x_1 | x_2 ~ N(x_2 / 2, delta^2)` and `x_2 | x_1 ~ N(x_1 / 2, delta^2)`.
///
/// The joint is `N(0, delta^2 [[4/3, 2/3], [2/3, 4/3]])`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianChain {
    pub delta: f64,
}

impl Default for GaussianChain {
    fn default() -> Self {
        GaussianChain { delta: 1.0 }
    }
}

impl GaussianChain {
    pub fn mean(&self) -> [f64; 2] {
        [0.0, 0.0]
    }

    /// Stationary covariance: the marginal variance solves `v = v / 4 + delta^2`.
    pub fn covariance(&self) -> [[f64; 2]; 2] {
        let v = 4.0 / 3.0 * self.delta * self.delta;
        [[v, v / 2.0], [v / 2.0, v]]
    }

    /// Draws from `N(x_other / 2, delta^2)`.
    pub fn conditional_sample(&self, x_other: f64, rng: &mut StreamRng) -> f64 {
        let n: f64 = rng.sample(StandardNormal);
        0.5 * x_other + self.delta * n
    }

    /// Draws from the marginal of either coordinate, `N(0, 4 delta^2 / 3)`.
    pub fn marginal_sample(&self, rng: &mut StreamRng) -> f64 {
        let n: f64 = rng.sample(StandardNormal);
        self.covariance()[0][0].sqrt() * n
    }
}

impl TargetDensity for GaussianChain {
    fn dim(&self) -> usize {
        2
    }

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        let (a, b) = (x[0], x[1]);
        Ok(-(a * a - a * b + b * b) / (2.0 * self.delta * self.delta))
    }

    fn exact_conditional(&self, d: usize, x: &[f64], rng: &mut StreamRng) -> Option<f64> {
        Some(self.conditional_sample(x[1 - d], rng))
    }

    fn has_exact_conditionals(&self) -> bool {
        true
    }
}

/// `exp(-(x_1^2 - mu_1)^2 / (2 delta_1^2) - (x_2 - mu_2)^2 / (2 delta_2^2))`,
/// with modes at `(+-sqrt(mu_1), mu_2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bimodal {
    pub mu1: f64,
    pub mu2: f64,
    pub delta1: f64,
    pub delta2: f64,
}

impl Default for Bimodal {
    fn default() -> Self {
        Bimodal {
            mu1: 4.0,
            mu2: 1.0,
            delta1: 2.5f64.sqrt(),
            delta2: 1.0,
        }
    }
}

impl TargetDensity for Bimodal {
    fn dim(&self) -> usize {
        2
    }

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        let r = x[0] * x[0] - self.mu1;
        let s = x[1] - self.mu2;
        Ok(-r * r / (2.0 * self.delta1 * self.delta1) - s * s / (2.0 * self.delta2 * self.delta2))
    }
}

/// Ring-shaped target `exp(-(x_1^2 + B x_2^2 - A)^2 / 4)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Donut {
    pub a: f64,
    pub b: f64,
}

impl Default for Donut {
    fn default() -> Self {
        Donut { a: 10.0, b: 0.1 }
    }
}

impl TargetDensity for Donut {
    fn dim(&self) -> usize {
        2
    }

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        let r = x[0] * x[0] + self.b * x[1] * x[1] - self.a;
        Ok(-r * r / 4.0)
    }
}
