use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::config::GibbsConfig;
use crate::density::TargetDensity;
use crate::depgraph::{self, DataTable, FitSettings, PairResult};
use crate::error::{Error, Result};
use crate::estimators::{mse_over_runs, quadrature_moments, Estimate, GroundTruth, Moments2, Quantities, Rect, TruthSource};
use crate::gibbs::{run_chain_rule, run_sg, run_streaming};
use crate::kernels::{AdaptiveKernel, AnyKernel, IdealKernel, MhKernel};
use crate::report::{mse_csv_string, write_text, MseRow};
use crate::rng::{Lane, SeedTree, StreamId};
use crate::targets::{generate_gp_dataset, Bimodal, Donut, GaussianChain, GpDataset, GpPosterior};

use super::spec::{Experiment, ExperimentSpec, Method, Point, Sampler, Scheme};

/// Method label of the chain-rule rows in `chainrule-check`.
pub const CHAIN_RULE: &str = "chain-rule";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` reads `RG_WORKERS` and falls back to the core count.
    pub workers: Option<usize>,
    /// Where exp4 reference runs are cached. No caching when `None`.
    pub cache_dir: Option<PathBuf>,
}

/// Worker count from `RG_WORKERS`, else the number of available cores.
pub fn default_workers() -> usize {
    std::env::var("RG_WORKERS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// A sweep point or run that could not be completed.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub method: String,
    pub point: Point,
    pub message: String,
    pub numerical: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepgraphOutput {
    pub results: Vec<PairResult>,
    pub dot: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub experiment: Experiment,
    /// One row per sweep point and method, in sweep order.
    pub rows: Vec<MseRow>,
    pub failures: Vec<Failure>,
    pub depgraph: Option<DepgraphOutput>,
}

impl ExperimentResult {
    pub fn has_numerical_failure(&self) -> bool {
        self.failures.iter().any(|f| f.numerical)
    }

    pub fn to_csv(&self) -> String {
        mse_csv_string(&self.rows)
    }
}

/// Integration rectangles and grid sizes of the quadrature oracle.
pub fn oracle_bounds(target: &str) -> Option<(Rect, usize)> {
    match target {
        "gauss" => Some((Rect { x: (-8.0, 8.0), y: (-8.0, 8.0) }, 800)),
        "bimodal" => Some((Rect { x: (-5.0, 5.0), y: (-6.0, 8.0) }, 800)),
        "donut" => Some((Rect { x: (-6.0, 6.0), y: (-14.0, 14.0) }, 1200)),
        _ => None,
    }
}

/// Quadrature moments of a named 2-D toy target (`gauss`, `bimodal` or `donut`).
pub fn oracle(target: &str, n: Option<usize>) -> Result<Moments2> {
    let (rect, default_n) = oracle_bounds(target)
        .ok_or_else(|| Error::Usage(format!("unknown oracle target {target:?}; expected gauss, bimodal or donut")))?;
    let n = n.unwrap_or(default_n);
    if n == 0 {
        return Err(Error::Usage("grid size must be positive".into()));
    }
    match target {
        "gauss" => quadrature_moments(&GaussianChain::default(), rect, n),
        "bimodal" => quadrature_moments(&Bimodal::default(), rect, n),
        _ => quadrature_moments(&Donut::default(), rect, n),
    }
}

fn make_kernel(sampler: Sampler, sigma: f64) -> Result<AnyKernel> {
    Ok(match sampler {
        Sampler::Ideal => AnyKernel::Ideal(IdealKernel),
        Sampler::Mh => AnyKernel::Mh(MhKernel::new(sigma)?),
        Sampler::Amh => AnyKernel::Adaptive(AdaptiveKernel::amh(sigma)?),
        Sampler::Scam => AnyKernel::Adaptive(AdaptiveKernel::scam(sigma)?),
    })
}

/// Both estimators from one run. SG and MRG with the same kernel share the
/// backbone chain, so a single run serves both.
struct RunOutcome {
    recycled: Estimate,
    standard: Estimate,
}

fn one_run<T: TargetDensity + ?Sized>(
    target: &T,
    spec: &ExperimentSpec,
    point: &Point,
    sampler: Sampler,
    q: Quantities,
    initial: &[f64],
    run: u64,
) -> Result<RunOutcome> {
    let streams = SeedTree::new(spec.seed).run(run);
    let mut start = initial.to_vec();
    if spec.warmup > 0 {
        let mut kernel = make_kernel(sampler, point.sigma)?;
        let warm = GibbsConfig::new(spec.warmup, point.inner_steps, start.clone());
        let chain = run_sg(target, &mut kernel, &warm, streams.in_lane(Lane::Warmup))?;
        start = chain.point(chain.len() - 1).to_vec();
    }
    let config = GibbsConfig::new(point.sweeps, point.inner_steps, start)
        .with_burn_in(spec.burn_in)
        .with_backbone(spec.backbone);
    let mut kernel = make_kernel(sampler, point.sigma)?;
    let k = q.raw_len();
    let clock = Instant::now();
    let sums = run_streaming(target, &mut kernel, &config, streams, k, &|x: &[f64], out: &mut [f64]| q.raw(x, out))?;
    let elapsed = if spec.timing { clock.elapsed().as_secs_f64() } else { 0.0 };
    let estimate = |values: Vec<f64>| {
        q.apply(Estimate {
            values,
            labels: Vec::new(),
            evaluations: sums.stats.evaluations,
            wall_time: elapsed,
        })
    };
    Ok(RunOutcome {
        recycled: estimate(sums.recycled_mean()),
        standard: estimate(sums.standard_mean()),
    })
}

fn chain_rule_run(spec: &ExperimentSpec, point: &Point, run: u64) -> Result<Estimate> {
    let target = GaussianChain::default();
    let streams = SeedTree::new(spec.seed).run(run).in_lane(Lane::Auxiliary);
    let clock = Instant::now();
    let out = run_chain_rule(
        |rng| target.marginal_sample(rng),
        |x1, rng| target.conditional_sample(x1, rng),
        point.sweeps,
        point.inner_steps,
        streams,
    )?;
    let elapsed = if spec.timing { clock.elapsed().as_secs_f64() } else { 0.0 };
    let q = Quantities::MeanCov;
    let mut sum = vec![0.0; q.raw_len()];
    let mut buf = vec![0.0; q.raw_len()];
    for v in out.iter() {
        q.raw(&v, &mut buf);
        for (s, b) in sum.iter_mut().zip(&buf) {
            *s += b;
        }
    }
    let n = out.len() as f64;
    Ok(q.apply(Estimate {
        values: sum.into_iter().map(|s| s / n).collect(),
        labels: Vec::new(),
        // one conditional draw per recycled vector plus one marginal draw per sweep
        evaluations: (out.len() + point.sweeps) as u64,
        wall_time: elapsed,
    }))
}

#[derive(Clone)]
enum Setup {
    Gauss(GaussianChain),
    Bimodal(Bimodal),
    Donut(Donut),
    Gp(Box<GpPosterior>),
}

impl Setup {
    fn target(&self) -> &dyn TargetDensity {
        match self {
            Setup::Gauss(t) => t,
            Setup::Bimodal(t) => t,
            Setup::Donut(t) => t,
            Setup::Gp(t) => t.as_ref(),
        }
    }
}

/// Target, quantities and truth for one sweep point.
#[derive(Clone)]
struct Prepared {
    setup: Setup,
    quantities: Quantities,
    truth: GroundTruth,
    initial: Vec<f64>,
}

/// Dataset of the GP experiment for input dimension `input_dim`.
pub fn gp_dataset(spec: &ExperimentSpec, input_dim: usize) -> Result<GpDataset> {
    let mut rng = SeedTree::new(spec.seed).stream(
        Lane::Dataset,
        StreamId {
            run: input_dim as u64,
            t: 0,
            d: 0,
        },
    );
    generate_gp_dataset(
        input_dim,
        spec.points,
        &vec![spec.true_lengthscale; input_dim],
        spec.true_noise,
        &mut rng,
    )
}

/// Posterior mean of `theta` from one long SCAM-within-MRG run, cached under
/// `cache_dir` by dataset hash and run settings.
pub fn reference_mean(spec: &ExperimentSpec, posterior: &GpPosterior, cache_dir: Option<&Path>) -> Result<Vec<f64>> {
    let dim = posterior.dim();
    let hash = posterior.dataset().content_hash();
    let name = format!(
        "ref-{}-beta{}-T{}-M{}-sigma{}-seed{}.txt",
        &hash[..16],
        posterior.beta(),
        spec.reference_sweeps,
        spec.reference_inner_steps,
        spec.sigma,
        spec.seed
    );
    let cached = cache_dir.map(|d| d.join(name));
    if let Some(path) = &cached {
        if let Ok(text) = std::fs::read_to_string(path) {
            let values: Vec<f64> = text.lines().filter_map(|l| l.trim().parse().ok()).collect();
            if values.len() == dim {
                return Ok(values);
            }
        }
    }
    let config = GibbsConfig::new(spec.reference_sweeps, spec.reference_inner_steps, vec![1.0; dim]);
    let mut kernel = AdaptiveKernel::scam(spec.sigma)?;
    let streams = SeedTree::new(spec.seed).run(dim as u64).in_lane(Lane::Reference);
    let sums = run_streaming(posterior, &mut kernel, &config, streams, dim, &|x: &[f64], out: &mut [f64]| {
        out.copy_from_slice(x)
    })?;
    let mean = sums.recycled_mean();
    if let Some(path) = &cached {
        let text: String = mean.iter().map(|v| format!("{v}\n")).collect();
        write_text(path, &text)?;
    }
    Ok(mean)
}

fn prepare(spec: &ExperimentSpec, point: &Point, cache_dir: Option<&Path>) -> Result<Prepared> {
    let quad = |name: &str, target: &dyn TargetDensity| -> Result<Moments2> {
        let (rect, n) = oracle_bounds(name).expect("known oracle target");
        quadrature_moments(target, rect, n)
    };
    Ok(match spec.experiment {
        Experiment::Exp1Gauss | Experiment::ChainruleCheck => {
            let t = GaussianChain::default();
            let m = Moments2 {
                mean: t.mean(),
                cov: t.covariance(),
            };
            Prepared {
                quantities: Quantities::MeanCov,
                truth: Quantities::MeanCov.truth(&m, TruthSource::Analytic),
                setup: Setup::Gauss(t),
                initial: vec![0.0; 2],
            }
        }
        Experiment::Exp2Bimodal => {
            let t = Bimodal::default();
            let q = Quantities::Mean(2);
            Prepared {
                quantities: q,
                truth: q.truth(&quad("bimodal", &t)?, TruthSource::Quadrature),
                setup: Setup::Bimodal(t),
                initial: vec![0.0; 2],
            }
        }
        Experiment::Exp3Donut => {
            let t = Donut::default();
            let q = Quantities::MeanStd;
            Prepared {
                quantities: q,
                truth: q.truth(&quad("donut", &t)?, TruthSource::Quadrature),
                setup: Setup::Donut(t),
                initial: vec![0.0; 2],
            }
        }
        Experiment::Exp4GpArd => {
            let posterior = GpPosterior::with_prior(gp_dataset(spec, point.input_dim)?, spec.beta);
            let dim = posterior.dim();
            let q = Quantities::Mean(dim);
            let values = reference_mean(spec, &posterior, cache_dir)?;
            Prepared {
                quantities: q,
                truth: GroundTruth {
                    values,
                    labels: q.labels(),
                    source: TruthSource::ReferenceRun,
                },
                setup: Setup::Gp(Box::new(posterior)),
                initial: vec![1.0; dim],
            }
        }
        Experiment::Exp5Depgraph => unreachable!("dependence experiment has no MSE sweep"),
    })
}

/// Unit of parallel work: one run of one kernel family (or the chain rule) at
/// one sweep point.
#[derive(Clone, Copy)]
struct Task {
    point: usize,
    group: Group,
    run: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Group {
    Kernel(Sampler),
    ChainRule,
}

enum TaskOutput {
    Kernel(RunOutcome),
    ChainRule(Estimate),
}

fn build_pool(options: &RunOptions) -> Result<rayon::ThreadPool> {
    let workers = options.workers.unwrap_or_else(default_workers);
    if workers == 0 {
        return Err(Error::Config("workers: must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("workers: {e}")))
}

/// Executes every sweep point of `spec`.
pub fn run_experiment(spec: &ExperimentSpec, options: &RunOptions) -> Result<ExperimentResult> {
    spec.validate()?;
    let pool = build_pool(options)?;
    if spec.experiment == Experiment::Exp5Depgraph {
        return pool.install(|| run_depgraph(spec));
    }
    let points = spec.points();
    let mut groups: Vec<Group> = Vec::new();
    for m in &spec.methods {
        if !groups.contains(&Group::Kernel(m.sampler)) {
            groups.push(Group::Kernel(m.sampler));
        }
    }
    if spec.experiment == Experiment::ChainruleCheck {
        groups.push(Group::ChainRule);
    }

    // Ground truths are computed once per distinct dataset.
    let mut prepared: Vec<std::result::Result<Prepared, Error>> = Vec::with_capacity(points.len());
    let mut by_dim: HashMap<usize, usize> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        let reuse = match spec.experiment {
            Experiment::Exp4GpArd => by_dim.get(&p.input_dim).copied(),
            _ => (i > 0).then_some(0),
        };
        let entry = match reuse.map(|j| &prepared[j]) {
            Some(Ok(prev)) => Ok(prev.clone()),
            _ => pool.install(|| prepare(spec, p, options.cache_dir.as_deref())),
        };
        by_dim.entry(p.input_dim).or_insert(i);
        if matches!(&entry, Err(e) if !recoverable(e)) {
            return Err(entry.err().expect("checked"));
        }
        prepared.push(entry);
    }

    let tasks: Vec<Task> = (0..points.len())
        .filter(|&p| prepared[p].is_ok())
        .flat_map(|point| {
            groups
                .iter()
                .flat_map(move |&group| (0..spec.runs as u64).map(move |run| Task { point, group, run }))
        })
        .collect();
    let outputs: Vec<Result<TaskOutput>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|task| {
                let point = &points[task.point];
                let prep = prepared[task.point].as_ref().expect("filtered above");
                match task.group {
                    Group::Kernel(s) => one_run(
                        prep.setup.target(),
                        spec,
                        point,
                        s,
                        prep.quantities,
                        &prep.initial,
                        task.run,
                    )
                    .map(TaskOutput::Kernel),
                    Group::ChainRule => chain_rule_run(spec, point, task.run).map(TaskOutput::ChainRule),
                }
            })
            .collect()
    });

    let fatal = |r: &Result<TaskOutput>| matches!(r, Err(e) if !recoverable(e));
    if let Some(i) = outputs.iter().position(fatal) {
        return Err(outputs.into_iter().nth(i).and_then(|r| r.err()).expect("fatal error"));
    }

    let mut slots: HashMap<(usize, Group), Vec<&Result<TaskOutput>>> = HashMap::new();
    for (task, out) in tasks.iter().zip(&outputs) {
        slots.entry((task.point, task.group)).or_default().push(out);
    }

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (pi, point) in points.iter().enumerate() {
        let dim = match &prepared[pi] {
            Ok(p) => p.setup.target().dim(),
            Err(_) => point.input_dim + 1,
        };
        let mut labels: Vec<(String, Group, Option<Scheme>)> = spec
            .methods
            .iter()
            .map(|m| (m.to_string(), Group::Kernel(m.sampler), Some(m.scheme)))
            .collect();
        if spec.experiment == Experiment::ChainruleCheck {
            labels.push((CHAIN_RULE.to_string(), Group::ChainRule, None));
        }
        for (label, group, scheme) in labels {
            let row_for = |estimates: &[Estimate], mse: f64| MseRow {
                experiment: spec.experiment.id().to_string(),
                method: label.clone(),
                kernel: kernel_name(group),
                sweeps: point.sweeps,
                inner_steps: point.inner_steps,
                sigma: point.sigma,
                evaluations: if estimates.is_empty() {
                    f64::NAN
                } else {
                    estimates.iter().map(|e| e.evaluations as f64).sum::<f64>() / (estimates.len() * dim) as f64
                },
                runs: estimates.len(),
                mse,
                wall_time_s: if estimates.is_empty() {
                    0.0
                } else {
                    estimates.iter().map(|e| e.wall_time).sum::<f64>() / estimates.len() as f64
                },
            };
            let prep = match &prepared[pi] {
                Ok(p) => p,
                Err(e) => {
                    failures.push(failure(&label, point, e));
                    rows.push(row_for(&[], f64::NAN));
                    continue;
                }
            };
            let outs = &slots[&(pi, group)];
            let mut estimates = Vec::with_capacity(outs.len());
            let mut error = None;
            for out in outs {
                match out {
                    Ok(TaskOutput::Kernel(o)) => estimates.push(match scheme {
                        Some(Scheme::Mrg) => o.recycled.clone(),
                        _ => o.standard.clone(),
                    }),
                    Ok(TaskOutput::ChainRule(e)) => estimates.push(e.clone()),
                    Err(e) => {
                        error.get_or_insert(e);
                    }
                }
            }
            if let Some(e) = error {
                failures.push(failure(&label, point, e));
                rows.push(row_for(&[], f64::NAN));
                continue;
            }
            let mse = mse_over_runs(&estimates, &prep.truth)?;
            rows.push(row_for(&estimates, mse));
        }
    }
    Ok(ExperimentResult {
        experiment: spec.experiment,
        rows,
        failures,
        depgraph: None,
    })
}

fn kernel_name(group: Group) -> String {
    match group {
        Group::Kernel(s) => s.name().to_string(),
        Group::ChainRule => "exact".to_string(),
    }
}

fn failure(method: &str, point: &Point, e: &Error) -> Failure {
    Failure {
        method: method.to_string(),
        point: *point,
        message: e.to_string(),
        numerical: recoverable(e),
    }
}

/// Errors that abort one sweep point and leave a failure row, rather than the
/// whole experiment.
fn recoverable(e: &Error) -> bool {
    e.is_numerical()
}

fn run_depgraph(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    let table = match &spec.data {
        Some(path) => DataTable::read_csv(path)?,
        None => depgraph::synthetic_fixture(spec.n, spec.seed).table,
    };
    let settings = FitSettings {
        sweeps: spec.sweeps,
        inner_steps: spec.inner_steps,
        sigma0: spec.sigma,
    };
    let pairs = depgraph::all_pairs(table.names.len());
    let results = depgraph::analyze(&table, &pairs, spec.surrogates, &settings, spec.seed)?;
    let dot = depgraph::emit_graph(&results, spec.alpha, spec.statistic)?;
    Ok(ExperimentResult {
        experiment: spec.experiment,
        rows: Vec::new(),
        failures: Vec::new(),
        depgraph: Some(DepgraphOutput { results, dot }),
    })
}

/// Writes the result files into `dir` and returns their paths.
///
/// MSE sweeps produce `<experiment>.csv`; the dependence experiment produces
/// `<experiment>_results.csv` and `<experiment>.dot`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    let id = result.experiment.id();
    let mut written = Vec::new();
    if let Some(dep) = &result.depgraph {
        let csv = dir.join(format!("{id}_results.csv"));
        write_text(&csv, &depgraph::results_csv(&dep.results))?;
        let dot = dir.join(format!("{id}.dot"));
        write_text(&dot, &dep.dot)?;
        written.extend([csv, dot]);
    } else {
        let csv = dir.join(format!("{id}.csv"));
        write_csv(result, &csv)?;
        written.push(csv);
    }
    Ok(written)
}

/// Writes the MSE report of `result` to `path`.
pub fn write_csv(result: &ExperimentResult, path: &Path) -> Result<()> {
    write_text(path, &result.to_csv())
}

/// Method labels of `spec` in report order.
pub fn method_labels(spec: &ExperimentSpec) -> Vec<String> {
    let mut v: Vec<String> = spec.methods.iter().map(Method::to_string).collect();
    if spec.experiment == Experiment::ChainruleCheck {
        v.push(CHAIN_RULE.to_string());
    }
    v
}
