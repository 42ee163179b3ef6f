//! Recycled and standard Monte Carlo estimators, the MSE protocol, and a
//! midpoint-quadrature oracle for 2-D targets.

use crate::density::TargetDensity;
use crate::error::{Error, Result};
use crate::gibbs::{Chain, SampleStore};

/// Estimated quantities from one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub values: Vec<f64>,
    pub labels: Vec<String>,
    /// Target evaluations consumed by the run.
    pub evaluations: u64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthSource {
    Analytic,
    Quadrature,
    ReferenceRun,
    Published,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub values: Vec<f64>,
    pub labels: Vec<String>,
    pub source: TruthSource,
}

fn labels_of(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("f_{i}")).collect()
}

/// Mean of `f` (with `k` outputs) over all `T * D * M` assembled vectors.
pub fn recycled_estimate<F>(store: &SampleStore, k: usize, f: F) -> Result<Estimate>
where
    F: Fn(&[f64], &mut [f64]),
{
    if store.is_empty() {
        return Err(Error::Usage("recycled estimate of an empty store".into()));
    }
    let mut sum = vec![0.0; k];
    let mut buf = vec![0.0; k];
    store.for_each_assembled(|_, _, _, x| {
        f(x, &mut buf);
        for (s, v) in sum.iter_mut().zip(&buf) {
            *s += v;
        }
    });
    let n = store.len() as f64;
    Ok(Estimate {
        values: sum.into_iter().map(|s| s / n).collect(),
        labels: labels_of(k),
        evaluations: store.stats().evaluations,
        wall_time: 0.0,
    })
}

/// Mean of `f` over the chain points after the first `burn_in`.
pub fn standard_estimate<F>(chain: &Chain, k: usize, f: F, burn_in: usize) -> Result<Estimate>
where
    F: Fn(&[f64], &mut [f64]),
{
    if burn_in >= chain.len() {
        return Err(Error::Usage(format!(
            "burn-in {burn_in} discards all {} samples",
            chain.len()
        )));
    }
    let mut sum = vec![0.0; k];
    let mut buf = vec![0.0; k];
    for x in chain.iter().skip(burn_in) {
        f(x, &mut buf);
        for (s, v) in sum.iter_mut().zip(&buf) {
            *s += v;
        }
    }
    let n = (chain.len() - burn_in) as f64;
    Ok(Estimate {
        values: sum.into_iter().map(|s| s / n).collect(),
        labels: labels_of(k),
        evaluations: chain.stats().evaluations,
        wall_time: 0.0,
    })
}

/// Mean over runs of the mean squared error over quantities.
pub fn mse_over_runs(estimates: &[Estimate], truth: &GroundTruth) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::Usage("MSE over zero runs".into()));
    }
    let mut total = 0.0;
    for e in estimates {
        if e.labels != truth.labels {
            return Err(Error::Usage(format!(
                "estimate labels {:?} do not match truth labels {:?}",
                e.labels, truth.labels
            )));
        }
        let se: f64 = e
            .values
            .iter()
            .zip(&truth.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        total += se / truth.values.len() as f64;
    }
    Ok(total / estimates.len() as f64)
}

/// Which summary of the samples an experiment estimates.
///
/// Estimators average raw moments; [`Quantities::finalize`] turns them into the
/// reported values, so covariances are plug-in (`1/N`) for both samplers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantities {
    /// `mu_1, mu_2, Sigma_11, Sigma_12, Sigma_22` of a 2-D target.
    MeanCov,
    /// `mu_1, mu_2, std_1, std_2` of a 2-D target.
    MeanStd,
    /// Every coordinate mean of a `D`-dimensional target.
    Mean(usize),
}

impl Quantities {
    pub fn labels(&self) -> Vec<String> {
        match self {
            Quantities::MeanCov => ["mu_1", "mu_2", "cov_11", "cov_12", "cov_22"]
                .map(String::from)
                .to_vec(),
            Quantities::MeanStd => ["mu_1", "mu_2", "std_1", "std_2"].map(String::from).to_vec(),
            Quantities::Mean(d) => (1..=*d).map(|i| format!("mu_{i}")).collect(),
        }
    }

    /// Length of the raw moment vector.
    pub fn raw_len(&self) -> usize {
        match self {
            Quantities::MeanCov | Quantities::MeanStd => 5,
            Quantities::Mean(d) => *d,
        }
    }

    pub fn raw(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Quantities::MeanCov | Quantities::MeanStd => {
                out[0] = x[0];
                out[1] = x[1];
                out[2] = x[0] * x[0];
                out[3] = x[0] * x[1];
                out[4] = x[1] * x[1];
            }
            Quantities::Mean(_) => out.copy_from_slice(x),
        }
    }

    pub fn finalize(&self, raw: &[f64]) -> Vec<f64> {
        match self {
            Quantities::MeanCov => {
                let (m1, m2) = (raw[0], raw[1]);
                vec![m1, m2, raw[2] - m1 * m1, raw[3] - m1 * m2, raw[4] - m2 * m2]
            }
            Quantities::MeanStd => {
                let (m1, m2) = (raw[0], raw[1]);
                vec![
                    m1,
                    m2,
                    (raw[2] - m1 * m1).max(0.0).sqrt(),
                    (raw[4] - m2 * m2).max(0.0).sqrt(),
                ]
            }
            Quantities::Mean(_) => raw.to_vec(),
        }
    }

    /// Converts a raw-moment estimate into the reported quantities.
    pub fn apply(&self, raw: Estimate) -> Estimate {
        Estimate {
            values: self.finalize(&raw.values),
            labels: self.labels(),
            ..raw
        }
    }

    pub fn truth(&self, moments: &Moments2, source: TruthSource) -> GroundTruth {
        let values = match self {
            Quantities::MeanCov => vec![
                moments.mean[0],
                moments.mean[1],
                moments.cov[0][0],
                moments.cov[0][1],
                moments.cov[1][1],
            ],
            Quantities::MeanStd => {
                let s = moments.std();
                vec![moments.mean[0], moments.mean[1], s[0], s[1]]
            }
            Quantities::Mean(_) => moments.mean.to_vec(),
        };
        GroundTruth {
            values,
            labels: self.labels(),
            source,
        }
    }
}

/// First and second moments of a bivariate distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments2 {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

impl Moments2 {
    pub fn std(&self) -> [f64; 2] {
        [self.cov[0][0].sqrt(), self.cov[1][1].sqrt()]
    }
}

/// Axis-aligned integration rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

/// Largest density on the edge cells relative to the peak that still counts as
/// negligible mass outside the rectangle.
const BOUNDARY_TOLERANCE: f64 = 1e-6;

/// Normalized moments of a 2-D target by an `n x n` midpoint rule.
pub fn quadrature_moments<T: TargetDensity + ?Sized>(target: &T, bounds: Rect, n: usize) -> Result<Moments2> {
    if target.dim() != 2 {
        return Err(Error::Usage(format!(
            "quadrature needs a 2-D target, got D = {}",
            target.dim()
        )));
    }
    if n < 3 || !(bounds.x.1 > bounds.x.0) || !(bounds.y.1 > bounds.y.0) {
        return Err(Error::Usage("quadrature needs n >= 3 and a nonempty rectangle".into()));
    }
    let hx = (bounds.x.1 - bounds.x.0) / n as f64;
    let hy = (bounds.y.1 - bounds.y.0) / n as f64;
    let xs: Vec<f64> = (0..n).map(|i| bounds.x.0 + (i as f64 + 0.5) * hx).collect();
    let ys: Vec<f64> = (0..n).map(|j| bounds.y.0 + (j as f64 + 0.5) * hy).collect();
    let mut logs = vec![0.0; n * n];
    let mut peak = f64::NEG_INFINITY;
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in ys.iter().enumerate() {
            let l = target.log_density(&[x, y])?;
            logs[i * n + j] = l;
            peak = peak.max(l);
        }
    }
    if !peak.is_finite() {
        return Err(Error::BoundsTooSmall("no mass found inside the rectangle".into()));
    }
    let mut edge = f64::NEG_INFINITY;
    for k in 0..n {
        for l in [logs[k], logs[(n - 1) * n + k], logs[k * n], logs[k * n + n - 1]] {
            edge = edge.max(l);
        }
    }
    let ratio = (edge - peak).exp();
    if ratio > BOUNDARY_TOLERANCE {
        return Err(Error::BoundsTooSmall(format!(
            "edge density is {ratio:e} of the peak; widen the rectangle"
        )));
    }
    let mut acc = [0.0f64; 6];
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in ys.iter().enumerate() {
            let w = (logs[i * n + j] - peak).exp();
            acc[0] += w;
            acc[1] += w * x;
            acc[2] += w * y;
            acc[3] += w * x * x;
            acc[4] += w * x * y;
            acc[5] += w * y * y;
        }
    }
    let z = acc[0];
    let (m1, m2) = (acc[1] / z, acc[2] / z);
    let c12 = acc[4] / z - m1 * m2;
    Ok(Moments2 {
        mean: [m1, m2],
        cov: [[acc[3] / z - m1 * m1, c12], [c12, acc[5] / z - m2 * m2]],
    })
}

/// Sample mean and standard error of a correlated series from `batches`
/// non-overlapping batch means. A trailing remainder shorter than a batch is dropped.
pub fn batch_means(series: &[f64], batches: usize) -> Result<(f64, f64)> {
    if batches < 2 || series.len() < batches {
        return Err(Error::Usage(format!(
            "batch means needs at least 2 batches and one sample per batch, got {} samples in {batches}",
            series.len()
        )));
    }
    let size = series.len() / batches;
    let means: Vec<f64> = series
        .chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (batches - 1) as f64;
    Ok((grand, (var / batches as f64).sqrt()))
}
