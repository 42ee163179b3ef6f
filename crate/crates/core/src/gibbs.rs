//! Gibbs drivers: standard (SG), trivial recycling (TRG), multiple recycling
//! (MRG), and the two chain-rule samplers they are compared against.
//!
//! All drivers share one scan loop. SG keeps only the backbone, MRG keeps every
//! inner sample, so under the same streams the MRG backbone is the SG chain.

use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::config::{BackbonePolicy, GibbsConfig};
use crate::density::{FullConditionalView, TargetDensity};
use crate::error::{Error, Result};
use crate::kernels::InnerKernel;
use crate::report::fmt_f64;
use crate::rng::{RunStreams, StreamRng};

/// Counters collected over one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunStats {
    /// Proposed-point evaluations (or exact draws), summed over all blocks.
    pub evaluations: u64,
    /// Evaluations of block starting points that were not cached.
    pub anchor_evaluations: u64,
    pub accepted: u64,
}

/// Receives every block as it is produced.
pub(crate) trait BlockSink {
    /// `backbone` holds `z_{1:d-1}^(t)` and `z_{d:D}^(t-1)`; `inner` the `M` samples.
    fn block(&mut self, t: usize, d: usize, backbone: &[f64], inner: &[f64]);

    fn sweep_end(&mut self, _t: usize, _backbone: &[f64]) {}
}

fn locate(err: Error, t: usize, d: usize) -> Error {
    match err {
        Error::KernelState { message, .. } => Error::KernelState {
            sweep: t,
            coord: d,
            message,
        },
        other => other,
    }
}

pub(crate) fn drive<T, K, S>(
    target: &T,
    kernel: &mut K,
    config: &GibbsConfig,
    streams: RunStreams,
    sink: &mut S,
) -> Result<RunStats>
where
    T: TargetDensity + ?Sized,
    K: InnerKernel<T> + ?Sized,
    S: BlockSink,
{
    let dim = target.dim();
    config.validate(dim)?;
    kernel.start_run(dim);
    let m = config.inner_steps;
    let mut z = config.initial.clone();
    let mut z_log: Option<f64> = None;
    let mut inner = vec![0.0; m];
    let mut stats = RunStats::default();
    for t in 1..=config.sweeps {
        for d in 0..dim {
            let mut rng = streams.block(t, d);
            let mut view = FullConditionalView::from_point(target, d, &z)?;
            let report = kernel
                .draw_block(&mut view, z[d], z_log, &mut rng, &mut inner)
                .map_err(|e| locate(e, t, d))?;
            sink.block(t, d, &z, &inner);
            let chosen = match config.backbone {
                BackbonePolicy::LastSample => m - 1,
                BackbonePolicy::UniformIndex => rng.random_range(0..m),
            };
            z[d] = inner[chosen];
            z_log = if chosen == m - 1 {
                report.last_log_density
            } else {
                None
            };
            stats.evaluations += report.evaluations;
            stats.anchor_evaluations += report.anchor_evaluations;
            stats.accepted += report.accepted;
        }
        sink.sweep_end(t, &z);
    }
    Ok(stats)
}

/// Output of a standard Gibbs run: `x^(1), ..., x^(T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    dim: usize,
    points: Vec<f64>,
    stats: RunStats,
}

impl Chain {
    pub fn from_points(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || !points.len().is_multiple_of(dim) {
            return Err(Error::Usage(format!(
                "{} values do not form points of dimension {dim}",
                points.len()
            )));
        }
        Ok(Chain {
            dim,
            points,
            stats: RunStats::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Point `x^(t+1)` (0-based index).
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.points
    }

    pub fn stats(&self) -> RunStats {
        self.stats
    }
}

struct ChainSink {
    points: Vec<f64>,
}

impl BlockSink for ChainSink {
    fn block(&mut self, _t: usize, _d: usize, _backbone: &[f64], _inner: &[f64]) {}

    fn sweep_end(&mut self, _t: usize, backbone: &[f64]) {
        self.points.extend_from_slice(backbone);
    }
}

/// Standard Gibbs (ideal or MCMC-within): each coordinate keeps the last of its
/// `M` inner samples and only the `T` sweep-end points are returned.
pub fn run_sg<T, K>(target: &T, kernel: &mut K, config: &GibbsConfig, streams: RunStreams) -> Result<Chain>
where
    T: TargetDensity + ?Sized,
    K: InnerKernel<T> + ?Sized,
{
    let dim = target.dim();
    let mut sink = ChainSink {
        points: Vec::with_capacity(config.sweeps * dim),
    };
    let stats = drive(target, kernel, config, streams, &mut sink)?;
    Ok(Chain {
        dim,
        points: sink.points,
        stats,
    })
}

/// Every inner sample of an MRG run plus the backbone `z`-chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStore {
    dim: usize,
    sweeps: usize,
    inner_steps: usize,
    initial: Vec<f64>,
    /// `backbone[(t - 1) * D + d] = z_d^(t)`.
    backbone: Vec<f64>,
    /// `inner[((t - 1) * D + d) * M + m] = x_{d,m+1}^(t)`.
    inner: Vec<f64>,
    stats: RunStats,
}

struct StoreSink {
    inner: Vec<f64>,
    backbone: Vec<f64>,
}

impl BlockSink for StoreSink {
    fn block(&mut self, _t: usize, _d: usize, _backbone: &[f64], inner: &[f64]) {
        self.inner.extend_from_slice(inner);
    }

    fn sweep_end(&mut self, _t: usize, backbone: &[f64]) {
        self.backbone.extend_from_slice(backbone);
    }
}

impl SampleStore {
    /// Builds a store from raw inner samples, advancing the backbone with the
    /// last sample of each block.
    pub fn from_blocks(initial: Vec<f64>, inner_steps: usize, inner: Vec<f64>) -> Result<Self> {
        let dim = initial.len();
        if dim == 0 || inner_steps == 0 || inner.is_empty() || !inner.len().is_multiple_of(dim * inner_steps) {
            return Err(Error::Usage(format!(
                "{} inner samples do not fill blocks of D = {dim}, M = {inner_steps}",
                inner.len()
            )));
        }
        let sweeps = inner.len() / (dim * inner_steps);
        let mut z = initial.clone();
        let mut backbone = Vec::with_capacity(sweeps * dim);
        for t in 0..sweeps {
            for (d, zd) in z.iter_mut().enumerate() {
                *zd = inner[(t * dim + d) * inner_steps + inner_steps - 1];
            }
            backbone.extend_from_slice(&z);
        }
        Ok(SampleStore {
            dim,
            sweeps,
            inner_steps,
            initial,
            backbone,
            inner,
            stats: RunStats::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn inner_steps(&self) -> usize {
        self.inner_steps
    }

    /// Number of recycled vectors, `T * D * M`.
    pub fn len(&self) -> usize {
        self.inner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.is_empty()
    }

    pub fn stats(&self) -> RunStats {
        self.stats
    }

    /// `z^(t)` for `t = 0..=T` (`t = 0` is the starting point).
    pub fn backbone(&self, t: usize) -> &[f64] {
        if t == 0 {
            &self.initial
        } else {
            &self.backbone[(t - 1) * self.dim..t * self.dim]
        }
    }

    /// The backbone `z^(1..=T)` as a chain; equals the SG output under coupled streams.
    pub fn backbone_chain(&self) -> Chain {
        Chain {
            dim: self.dim,
            points: self.backbone.clone(),
            stats: self.stats,
        }
    }

    /// Inner sample `x_{d,m}^(t)` with 1-based `t`, 0-based `d` and `m`.
    pub fn inner(&self, t: usize, d: usize, m: usize) -> f64 {
        self.inner[((t - 1) * self.dim + d) * self.inner_steps + m]
    }

    /// The assembled vector `[z_{1:d-1}^(t), x_{d,m}^(t), z_{d+1:D}^(t-1)]`.
    pub fn assembled(&self, t: usize, d: usize, m: usize) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim);
        x.extend_from_slice(&self.backbone(t)[..d]);
        x.push(self.inner(t, d, m));
        x.extend_from_slice(&self.backbone(t - 1)[d + 1..]);
        x
    }

    /// TRG intermediate vector `x_d^(t)` (first inner sample of each block).
    pub fn intermediate(&self, t: usize, d: usize) -> Vec<f64> {
        self.assembled(t, d, 0)
    }

    /// Visits every assembled vector in `(t, d, m)` order without allocating per vector.
    pub fn for_each_assembled<F: FnMut(usize, usize, usize, &[f64])>(&self, mut f: F) {
        let mut x = self.initial.clone();
        for t in 1..=self.sweeps {
            for d in 0..self.dim {
                for m in 0..self.inner_steps {
                    x[d] = self.inner(t, d, m);
                    f(t, d, m, &x);
                }
                x[d] = self.backbone(t)[d];
            }
        }
    }

    /// Writes `t,d,m,x_1,...,x_D` (1-based indices), gzip-compressed when `gzip` is set.
    pub fn write_csv(&self, path: &Path, gzip: bool) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let result = if gzip {
            let mut enc = flate2::write::GzEncoder::new(file, flate2::Compression::default());
            self.write_rows(&mut enc).and_then(|_| enc.finish().map(|_| ()))
        } else {
            let mut w = std::io::BufWriter::new(file);
            self.write_rows(&mut w).and_then(|_| w.flush())
        };
        result.map_err(|e| Error::io(path, e))
    }

    fn write_rows<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        write!(w, "t,d,m")?;
        for i in 1..=self.dim {
            write!(w, ",x_{i}")?;
        }
        writeln!(w)?;
        let mut res = Ok(());
        self.for_each_assembled(|t, d, m, x| {
            if res.is_err() {
                return;
            }
            res = (|| {
                write!(w, "{},{},{}", t, d + 1, m + 1)?;
                for v in x {
                    write!(w, ",{}", fmt_f64(*v))?;
                }
                writeln!(w)
            })();
        });
        res
    }
}

/// Multiple recycling Gibbs: keeps all `T * D * M` inner samples.
///
/// Fails with a configuration error when the store would exceed
/// `config.storage_cap` scalars; use [`run_streaming`] then.
pub fn run_mrg<T, K>(target: &T, kernel: &mut K, config: &GibbsConfig, streams: RunStreams) -> Result<SampleStore>
where
    T: TargetDensity + ?Sized,
    K: InnerKernel<T> + ?Sized,
{
    let dim = target.dim();
    config.validate(dim)?;
    let total = config.sweeps * dim * config.inner_steps;
    if total > config.storage_cap {
        return Err(Error::Config(format!(
            "T*D*M = {total} exceeds the storage cap of {}; use the streaming accumulator",
            config.storage_cap
        )));
    }
    let mut sink = StoreSink {
        inner: Vec::with_capacity(total),
        backbone: Vec::with_capacity(config.sweeps * dim),
    };
    let stats = drive(target, kernel, config, streams, &mut sink)?;
    Ok(SampleStore {
        dim,
        sweeps: config.sweeps,
        inner_steps: config.inner_steps,
        initial: config.initial.clone(),
        backbone: sink.backbone,
        inner: sink.inner,
        stats,
    })
}

/// Trivial recycling Gibbs: MRG with `M = 1`, exposing the `D * T` intermediate vectors.
pub fn run_trg<T, K>(target: &T, kernel: &mut K, config: &GibbsConfig, streams: RunStreams) -> Result<SampleStore>
where
    T: TargetDensity + ?Sized,
    K: InnerKernel<T> + ?Sized,
{
    if config.inner_steps != 1 {
        return Err(Error::Config(format!(
            "TRG needs M = 1, got M = {}",
            config.inner_steps
        )));
    }
    run_mrg(target, kernel, config, streams)
}

/// Running sums of a vector-valued `f` over both the recycled set and the
/// post-burn-in backbone.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamingSums {
    pub recycled: Vec<f64>,
    pub recycled_count: u64,
    pub standard: Vec<f64>,
    pub standard_count: u64,
    pub stats: RunStats,
}

impl StreamingSums {
    pub fn recycled_mean(&self) -> Vec<f64> {
        self.recycled.iter().map(|s| s / self.recycled_count as f64).collect()
    }

    pub fn standard_mean(&self) -> Vec<f64> {
        self.standard.iter().map(|s| s / self.standard_count as f64).collect()
    }
}

struct SumSink<'f, F> {
    f: &'f F,
    burn_in: usize,
    scratch: Vec<f64>,
    point: Vec<f64>,
    sums: StreamingSums,
}

impl<F: Fn(&[f64], &mut [f64])> BlockSink for SumSink<'_, F> {
    fn block(&mut self, _t: usize, d: usize, backbone: &[f64], inner: &[f64]) {
        self.point.copy_from_slice(backbone);
        for &v in inner {
            self.point[d] = v;
            (self.f)(&self.point, &mut self.scratch);
            for (s, v) in self.sums.recycled.iter_mut().zip(&self.scratch) {
                *s += v;
            }
        }
        self.sums.recycled_count += inner.len() as u64;
    }

    fn sweep_end(&mut self, t: usize, backbone: &[f64]) {
        if t > self.burn_in {
            (self.f)(backbone, &mut self.scratch);
            for (s, v) in self.sums.standard.iter_mut().zip(&self.scratch) {
                *s += v;
            }
            self.sums.standard_count += 1;
        }
    }
}

/// Runs the sampler once and accumulates both estimators of `f` (with `k`
/// outputs) without materializing the samples.
pub fn run_streaming<T, K, F>(
    target: &T,
    kernel: &mut K,
    config: &GibbsConfig,
    streams: RunStreams,
    k: usize,
    f: &F,
) -> Result<StreamingSums>
where
    T: TargetDensity + ?Sized,
    K: InnerKernel<T> + ?Sized,
    F: Fn(&[f64], &mut [f64]),
{
    let dim = target.dim();
    let mut sink = SumSink {
        f,
        burn_in: config.burn_in,
        scratch: vec![0.0; k],
        point: vec![0.0; dim],
        sums: StreamingSums {
            recycled: vec![0.0; k],
            recycled_count: 0,
            standard: vec![0.0; k],
            standard_count: 0,
            stats: RunStats::default(),
        },
    };
    let stats = drive(target, kernel, config, streams, &mut sink)?;
    sink.sums.stats = stats;
    Ok(sink.sums)
}

/// `T * M` bivariate vectors `[x_1^(t), x_{2,m}^(t)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRuleOutput {
    sweeps: usize,
    inner_steps: usize,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl ChainRuleOutput {
    pub fn len(&self) -> usize {
        self.second.len()
    }

    pub fn is_empty(&self) -> bool {
        self.second.is_empty()
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn inner_steps(&self) -> usize {
        self.inner_steps
    }

    /// Vector `(t, m)`, both 0-based.
    pub fn vector(&self, t: usize, m: usize) -> [f64; 2] {
        [self.first[t], self.second[t * self.inner_steps + m]]
    }

    pub fn iter(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        (0..self.sweeps).flat_map(move |t| (0..self.inner_steps).map(move |m| self.vector(t, m)))
    }
}

/// Chain-rule sampling: `x_1 ~ p_1`, then `M` draws `x_2 ~ p(x_2 | x_1)` per
/// sweep. With `M = 1` this is the plain chain rule.
pub fn run_chain_rule<F, G>(
    mut marginal: F,
    mut conditional: G,
    sweeps: usize,
    inner_steps: usize,
    streams: RunStreams,
) -> Result<ChainRuleOutput>
where
    F: FnMut(&mut StreamRng) -> f64,
    G: FnMut(f64, &mut StreamRng) -> f64,
{
    if sweeps == 0 || inner_steps == 0 {
        return Err(Error::Config("chain rule needs T >= 1 and M >= 1".into()));
    }
    let mut first = Vec::with_capacity(sweeps);
    let mut second = Vec::with_capacity(sweeps * inner_steps);
    for t in 1..=sweeps {
        let mut rng = streams.block(t, 0);
        let x1 = marginal(&mut rng);
        first.push(x1);
        for _ in 0..inner_steps {
            second.push(conditional(x1, &mut rng));
        }
    }
    Ok(ChainRuleOutput {
        sweeps,
        inner_steps,
        first,
        second,
    })
}
