//! Gaussian-process regression with an ARD squared-exponential kernel, and the
//! marginal posterior of its hyperparameters `theta = [delta_1..delta_L, sigma]`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::density::TargetDensity;
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, JitterSchedule};
use crate::report::fmt_f64;
use crate::rng::StreamRng;

/// Exponent `beta` of the improper prior `prod_l theta_l^{-beta}`.
pub const DEFAULT_PRIOR_EXPONENT: f64 = 1.3;

/// `exp(-sum_l (z_l - r_l)^2 / (2 delta_l^2))`.
pub fn ard_kernel(z: &[f64], r: &[f64], lengthscales: &[f64]) -> Result<f64> {
    if z.len() != r.len() || z.len() != lengthscales.len() {
        return Err(Error::Config(format!(
            "ARD kernel inputs have lengths {}, {}, {}",
            z.len(),
            r.len(),
            lengthscales.len()
        )));
    }
    if let Some(bad) = lengthscales.iter().find(|d| !(**d > 0.0)) {
        return Err(Error::Config(format!("ARD length-scale must be positive, got {bad}")));
    }
    let s: f64 = z
        .iter()
        .zip(r)
        .zip(lengthscales)
        .map(|((a, b), d)| (a - b) * (a - b) / (2.0 * d * d))
        .sum();
    Ok((-s).exp())
}

/// Observed pairs `(z_j, y_j)`, `j = 1..P`, with `z_j` in `R^L`.
#[derive(Debug, Clone, PartialEq)]
pub struct GpDataset {
    input_dim: usize,
    /// Point-major: `inputs[j * L + l] = z_{j,l}`.
    inputs: Vec<f64>,
    outputs: Vec<f64>,
    /// Hyperparameters used to generate the data, when known.
    truth: Option<Vec<f64>>,
}

impl GpDataset {
    /// `inputs` is point-major (`P` rows of length `L`).
    pub fn new(input_dim: usize, inputs: Vec<f64>, outputs: Vec<f64>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Data("input dimension must be positive".into()));
        }
        if inputs.len() != input_dim * outputs.len() {
            return Err(Error::Data(format!(
                "{} input values do not form {} points of dimension {input_dim}",
                inputs.len(),
                outputs.len()
            )));
        }
        if outputs.is_empty() {
            return Err(Error::Data("dataset is empty".into()));
        }
        Ok(GpDataset {
            input_dim,
            inputs,
            outputs,
            truth: None,
        })
    }

    pub fn with_truth(mut self, theta: Vec<f64>) -> Self {
        self.truth = Some(theta);
        self
    }

    pub fn truth(&self) -> Option<&[f64]> {
        self.truth.as_deref()
    }

    /// `L`.
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// `P`.
    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.inputs[j * self.input_dim..(j + 1) * self.input_dim]
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    /// The `L x P` input matrix `Z`.
    pub fn input_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.input_dim, self.len(), &self.inputs)
    }

    /// Same inputs, outputs replaced (used for surrogate data).
    pub fn with_outputs(&self, outputs: Vec<f64>) -> Result<Self> {
        let mut out = GpDataset::new(self.input_dim, self.inputs.clone(), outputs)?;
        out.truth = self.truth.clone();
        Ok(out)
    }

    /// Reorders the pairs: new pair `j` is old pair `order[j]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let mut inputs = Vec::with_capacity(self.inputs.len());
        let mut outputs = Vec::with_capacity(self.len());
        for &j in order {
            inputs.extend_from_slice(self.point(j));
            outputs.push(self.outputs[j]);
        }
        GpDataset::new(self.input_dim, inputs, outputs)
    }

    /// CSV text with header `z_1,...,z_L,y`, one row per pair.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::new();
        for l in 1..=self.input_dim {
            let _ = write!(s, "z_{l},");
        }
        s.push_str("y\n");
        for j in 0..self.len() {
            for v in self.point(j) {
                s.push_str(&fmt_f64(*v));
                s.push(',');
            }
            s.push_str(&fmt_f64(self.outputs[j]));
            s.push('\n');
        }
        s
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::Parse(format!("dataset header: {e}")))?
            .clone();
        let cols = headers.len();
        if cols < 2 || &headers[cols - 1] != "y" {
            return Err(Error::Parse("dataset header must be z_1,...,z_L,y".into()));
        }
        for (l, h) in headers.iter().take(cols - 1).enumerate() {
            if h != format!("z_{}", l + 1) {
                return Err(Error::Parse(format!("unexpected dataset column {h:?}")));
            }
        }
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Parse(format!("dataset row {}: {e}", row + 1)))?;
            if record.len() != cols {
                return Err(Error::Parse(format!("dataset row {} has {} fields", row + 1, record.len())));
            }
            for (c, field) in record.iter().enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("dataset row {}: bad number {field:?}", row + 1)))?;
                if c + 1 == cols {
                    outputs.push(v);
                } else {
                    inputs.push(v);
                }
            }
        }
        GpDataset::new(cols - 1, inputs, outputs)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }

    /// Hex SHA-256 of the CSV serialization; used as a cache key.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_csv_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Draws `P` inputs uniformly on `[0, 10]^L`, a latent `f` from the zero-mean
/// GP prior at those inputs, and `y = f + N(0, noise_std^2)`.
pub fn generate_gp_dataset(
    input_dim: usize,
    len: usize,
    lengthscales: &[f64],
    noise_std: f64,
    rng: &mut StreamRng,
) -> Result<GpDataset> {
    if len == 0 || input_dim == 0 {
        return Err(Error::Config("dataset needs P >= 1 and L >= 1".into()));
    }
    if lengthscales.len() != input_dim {
        return Err(Error::Config(format!(
            "{} length-scales given for L = {input_dim}",
            lengthscales.len()
        )));
    }
    if lengthscales.iter().any(|d| !(*d > 0.0)) || !(noise_std >= 0.0) {
        return Err(Error::Config("generation hyperparameters must be positive".into()));
    }
    let inputs: Vec<f64> = (0..len * input_dim)
        .map(|_| rng.random_range(0.0..10.0))
        .collect();
    let dataset = GpDataset::new(input_dim, inputs, vec![0.0; len])?;
    let gram = PairDistances::new(&dataset);
    let mut truth = lengthscales.to_vec();
    truth.push(noise_std);
    let chol = Cholesky::factor_with(len, &JitterSchedule::always(), |buf| {
        gram.fill_kernel(lengthscales, 0.0, buf)
    })
    .ok_or_else(|| Error::Numerical {
        theta: truth.clone(),
        message: "GP prior covariance is not positive definite".into(),
    })?;
    let normals: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
    let latent = chol.lower_mul(&normals);
    let outputs = latent
        .into_iter()
        .map(|f| {
            let e: f64 = rng.sample(StandardNormal);
            f + noise_std * e
        })
        .collect();
    Ok(dataset.with_outputs(outputs)?.with_truth(truth))
}

/// Kernel entries below `exp(-100)` are stored as zero. Keeping them would
/// push the factorization into subnormal arithmetic, which is very slow.
const KERNEL_CUTOFF: f64 = 100.0;
const KERNEL_FLOOR: f64 = 3.7e-44;

fn kernel_value(e: f64) -> f64 {
    if e > KERNEL_CUTOFF {
        0.0
    } else {
        (-e).exp()
    }
}

/// Squared coordinate differences for every pair `i >= j`, in the order the
/// column-major lower triangle is traversed.
#[derive(Debug, Clone)]
struct PairDistances {
    n: usize,
    input_dim: usize,
    /// `sq[pair * L + l]`.
    sq: Vec<f64>,
    /// Per-dimension distinct squared differences and the index of each pair's
    /// value, kept only when inputs repeat enough that exponentiating the
    /// distinct values is much cheaper than exponentiating every pair.
    levels: Option<Vec<DistanceLevels>>,
}

#[derive(Debug, Clone)]
struct DistanceLevels {
    values: Vec<f64>,
    index: Vec<u32>,
}

impl PairDistances {
    fn new(data: &GpDataset) -> Self {
        let n = data.len();
        let input_dim = data.input_dim();
        let mut sq = Vec::with_capacity(n * (n + 1) / 2 * input_dim);
        for j in 0..n {
            let zj = data.point(j);
            for i in j..n {
                let zi = data.point(i);
                sq.extend(zi.iter().zip(zj).map(|(a, b)| (a - b) * (a - b)));
            }
        }
        let levels = Self::levels(&sq, input_dim);
        PairDistances {
            n,
            input_dim,
            sq,
            levels,
        }
    }

    fn levels(sq: &[f64], input_dim: usize) -> Option<Vec<DistanceLevels>> {
        let pairs = sq.len() / input_dim.max(1);
        let budget = pairs / 8;
        let mut out = Vec::with_capacity(input_dim);
        let mut total = 0;
        for l in 0..input_dim {
            let mut seen: HashMap<u64, u32> = HashMap::new();
            let mut values = Vec::new();
            let mut index = Vec::with_capacity(pairs);
            for p in 0..pairs {
                let v = sq[p * input_dim + l];
                let k = *seen.entry(v.to_bits()).or_insert_with(|| {
                    values.push(v);
                    (values.len() - 1) as u32
                });
                index.push(k);
                if values.len() + total > budget {
                    return None;
                }
            }
            total += values.len();
            out.push(DistanceLevels { values, index });
        }
        Some(out)
    }

    /// Writes the lower triangle of `K + diag * I` into a column-major buffer.
    fn fill_kernel(&self, lengthscales: &[f64], diag: f64, buf: &mut [f64]) {
        let n = self.n;
        let l = self.input_dim;
        let weights: Vec<f64> = lengthscales.iter().map(|d| 0.5 / (d * d)).collect();
        if let Some(levels) = &self.levels {
            self.fill_from_levels(levels, &weights, diag, buf);
            return;
        }
        let mut pair = 0;
        for j in 0..n {
            buf[j * n + j] = 1.0 + diag;
            pair += 1;
            let col = &mut buf[j * n + j + 1..(j + 1) * n];
            if l == 1 {
                let w = weights[0];
                for (dst, s) in col.iter_mut().zip(&self.sq[pair..pair + n - j - 1]) {
                    *dst = kernel_value(w * s);
                }
            } else {
                for (k, dst) in col.iter_mut().enumerate() {
                    let s = &self.sq[(pair + k) * l..(pair + k + 1) * l];
                    let e: f64 = s.iter().zip(weights.iter()).map(|(a, w)| a * w).sum();
                    *dst = kernel_value(e);
                }
            }
            pair += n - j - 1;
        }
    }

    fn fill_from_levels(&self, levels: &[DistanceLevels], weights: &[f64], diag: f64, buf: &mut [f64]) {
        let n = self.n;
        let tables: Vec<Vec<f64>> = levels
            .iter()
            .zip(weights)
            .map(|(lv, w)| lv.values.iter().map(|s| kernel_value(w * s)).collect())
            .collect();
        let mut pair = 0;
        for j in 0..n {
            buf[j * n + j] = 1.0 + diag;
            pair += 1;
            let col = &mut buf[j * n + j + 1..(j + 1) * n];
            for (k, dst) in col.iter_mut().enumerate() {
                let p = pair + k;
                let mut v = 1.0;
                for (lv, t) in levels.iter().zip(&tables) {
                    v *= t[lv.index[p] as usize];
                }
                *dst = if v < KERNEL_FLOOR { 0.0 } else { v };
            }
            pair += n - j - 1;
        }
    }
}

/// Unnormalized log posterior of `theta = [delta_1..delta_L, sigma]`:
///
/// `-1/2 y^T (K + sigma^2 I)^{-1} y - 1/2 log det(K + sigma^2 I) - beta sum_l log theta_l`,
/// and `-inf` whenever some `theta_l <= 0`.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    dataset: GpDataset,
    beta: f64,
    jitter: JitterSchedule,
    pairs: PairDistances,
}

impl GpPosterior {
    pub fn new(dataset: GpDataset) -> Self {
        Self::with_prior(dataset, DEFAULT_PRIOR_EXPONENT)
    }

    pub fn with_prior(dataset: GpDataset, beta: f64) -> Self {
        let pairs = PairDistances::new(&dataset);
        GpPosterior {
            dataset,
            beta,
            jitter: JitterSchedule::default(),
            pairs,
        }
    }

    pub fn with_jitter(mut self, jitter: JitterSchedule) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn dataset(&self) -> &GpDataset {
        &self.dataset
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn jitter(&self) -> &JitterSchedule {
        &self.jitter
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        let want = self.dataset.input_dim() + 1;
        if theta.len() != want {
            return Err(Error::Config(format!(
                "theta has length {}, expected L + 1 = {want}",
                theta.len()
            )));
        }
        Ok(())
    }

    fn factor(&self, theta: &[f64]) -> Result<Cholesky> {
        let (lengthscales, sigma) = theta.split_at(theta.len() - 1);
        let noise = sigma[0] * sigma[0];
        Cholesky::factor_with(self.dataset.len(), &self.jitter, |buf| {
            self.pairs.fill_kernel(lengthscales, noise, buf)
        })
        .ok_or_else(|| Error::Numerical {
            theta: theta.to_vec(),
            message: "K + sigma^2 I could not be factored after jitter escalation".into(),
        })
    }

    pub fn log_posterior(&self, theta: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        if theta.iter().any(|t| !(*t > 0.0)) {
            return Ok(f64::NEG_INFINITY);
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Ok(f64::NEG_INFINITY);
        }
        let chol = self.factor(theta)?;
        let quad = chol.quad_form(self.dataset.outputs());
        let log_prior: f64 = theta.iter().map(|t| t.ln()).sum();
        Ok(-0.5 * quad - 0.5 * chol.log_det() - self.beta * log_prior)
    }

    /// Gram matrix `K` at the given length-scales (full, symmetric).
    pub fn kernel_matrix(&self, lengthscales: &[f64]) -> DMatrix<f64> {
        let n = self.dataset.len();
        let mut buf = vec![0.0; n * n];
        self.pairs.fill_kernel(lengthscales, 0.0, &mut buf);
        let mut k = DMatrix::from_column_slice(n, n, &buf);
        k.fill_upper_triangle_with_lower_triangle();
        k
    }

    /// Posterior of the latent values `f` at the training inputs given `theta`:
    /// mean `K (K + sigma^2 I)^{-1} y` and covariance `K - K (K + sigma^2 I)^{-1} K`.
    pub fn posterior_f(&self, theta: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.check_theta(theta)?;
        if theta.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::Config(format!("theta outside the prior support: {theta:?}")));
        }
        let n = self.dataset.len();
        let (lengthscales, _) = theta.split_at(theta.len() - 1);
        let chol = self.factor(theta)?;
        let k = self.kernel_matrix(lengthscales);
        let y = self.dataset.outputs();
        // alpha = A^{-1} y via L^{-T} L^{-1} y
        let mut z = y.to_vec();
        chol.forward_solve(&mut z);
        let mut lower = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                lower[(i, j)] = chol.entry(i, j);
            }
        }
        let alpha = lower
            .transpose()
            .solve_upper_triangular(&DVector::from_vec(z))
            .expect("Cholesky factor has a positive diagonal");
        let mean = &k * alpha;
        // V = L^{-1} K, Sigma = K - V^T V
        let v = lower
            .solve_lower_triangular(&k)
            .expect("Cholesky factor has a positive diagonal");
        let mut cov = &k - v.transpose() * &v;
        cov = (&cov + cov.transpose()) * 0.5;
        Ok((mean, cov))
    }
}

impl TargetDensity for GpPosterior {
    fn dim(&self) -> usize {
        self.dataset.input_dim() + 1
    }

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.log_posterior(x)
    }
}
