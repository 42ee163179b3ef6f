//! Pairwise dependence tests from GP length-scale posteriors.
//!
//! For a pair `(in, out)` an `L = 1` GP model is fitted by SCAM-within-MRG and
//! summarized by the mean, median and std of every recycled length-scale
//! sample. Short length-scales mean the output varies with the input, so each
//! statistic is compared against a null built by permuting the outputs and
//! the p-value is taken in the left tail.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::config::GibbsConfig;
use crate::error::{Error, Result};
use crate::gibbs::run_mrg;
use crate::kernels::AdaptiveKernel;
use crate::report::fmt_f64;
use crate::rng::{Lane, SeedTree, StreamId};
use crate::targets::{GpDataset, GpPosterior};

/// Sampler settings for one pair fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSettings {
    pub sweeps: usize,
    pub inner_steps: usize,
    /// Initial SCAM proposal std for both coordinates.
    pub sigma0: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            sweeps: 200,
            inner_steps: 10,
            sigma0: 1.0,
        }
    }
}

/// Smallest sample accepted by [`fit_pair`].
pub const MIN_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Statistic {
    Mean,
    Median,
    Std,
}

impl Statistic {
    pub const ALL: [Statistic; 3] = [Statistic::Mean, Statistic::Median, Statistic::Std];

    pub fn name(&self) -> &'static str {
        match self {
            Statistic::Mean => "mean",
            Statistic::Median => "median",
            Statistic::Std => "std",
        }
    }

    fn index(&self) -> usize {
        *self as usize
    }
}

/// Summary of the recycled length-scale samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaStats {
    pub mean: f64,
    pub median: f64,
    pub std: f64,
}

impl DeltaStats {
    pub fn of(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let k = sorted.len();
        let median = if k % 2 == 1 {
            sorted[k / 2]
        } else {
            0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
        };
        DeltaStats {
            mean,
            median,
            std: var.sqrt(),
        }
    }

    pub fn get(&self, stat: Statistic) -> f64 {
        match stat {
            Statistic::Mean => self.mean,
            Statistic::Median => self.median,
            Statistic::Std => self.std,
        }
    }
}

/// Zero mean, unit (population) variance.
pub fn standardize(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::Data("variable has zero or non-finite variance".into()));
    }
    let s = var.sqrt();
    Ok(x.iter().map(|v| (v - mean) / s).collect())
}

/// Length-scale samples of one fit.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFit {
    /// Coordinate 0 of every recycled vector (`T * 2 * M` values).
    pub deltas: Vec<f64>,
    pub stats: DeltaStats,
}

/// Fits `x_out ~ GP(x_in)` with SCAM-within-MRG from `theta = (1, 1)`.
pub fn fit_pair(x_in: &[f64], x_out: &[f64], settings: &FitSettings, seed: SeedTree) -> Result<PairFit> {
    if x_in.len() != x_out.len() {
        return Err(Error::Data(format!(
            "input has {} values but output has {}",
            x_in.len(),
            x_out.len()
        )));
    }
    if x_in.len() < MIN_POINTS {
        return Err(Error::Data(format!(
            "need at least {MIN_POINTS} points, got {}",
            x_in.len()
        )));
    }
    let data = GpDataset::new(1, standardize(x_in)?, standardize(x_out)?)?;
    let target = GpPosterior::new(data);
    let config = GibbsConfig::new(settings.sweeps, settings.inner_steps, vec![1.0, 1.0]);
    let mut kernel = AdaptiveKernel::scam(settings.sigma0)?;
    let store = run_mrg(&target, &mut kernel, &config, seed.run(0))?;
    let mut deltas = Vec::with_capacity(store.len());
    store.for_each_assembled(|_, _, _, x| deltas.push(x[0]));
    let stats = DeltaStats::of(&deltas);
    Ok(PairFit { deltas, stats })
}

/// Null statistics from output-permuted refits, in surrogate order.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateNull {
    pub stats: Vec<DeltaStats>,
}

impl SurrogateNull {
    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    pub fn values(&self, stat: Statistic) -> Vec<f64> {
        self.stats.iter().map(|s| s.get(stat)).collect()
    }
}

/// Permutation used by surrogate `i` (0-based) under `seed`.
pub fn surrogate_permutation(seed: SeedTree, i: usize, n: usize) -> Vec<usize> {
    let mut rng = seed.stream(
        Lane::Surrogate,
        StreamId {
            run: i as u64 + 1,
            t: 0,
            d: 0,
        },
    );
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Surrogate `i` is fitted under its own run index, so the set of results
/// does not depend on scheduling.
pub fn surrogate_null(
    x_in: &[f64],
    x_out: &[f64],
    n_surrogates: usize,
    settings: &FitSettings,
    seed: SeedTree,
) -> Result<SurrogateNull> {
    if n_surrogates == 0 {
        return Err(Error::Usage("need at least one surrogate".into()));
    }
    let stats = (0..n_surrogates)
        .into_par_iter()
        .map(|i| {
            let order = surrogate_permutation(seed, i, x_out.len());
            let permuted: Vec<f64> = order.iter().map(|&j| x_out[j]).collect();
            let sub = SeedTree::new(sub_seed(seed, Lane::Surrogate, i as u64 + 1));
            fit_pair(x_in, &permuted, settings, sub).map(|f| f.stats)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SurrogateNull { stats })
}

fn sub_seed(seed: SeedTree, lane: Lane, run: u64) -> u64 {
    seed.stream(lane, StreamId { run, t: 1, d: 0 }).random()
}

/// Left-tail p-value with the add-one correction, `(1 + #{null <= obs}) / (1 + n)`.
pub fn p_value(observed: f64, null: &[f64]) -> Result<f64> {
    if null.is_empty() {
        return Err(Error::Usage("p-value against an empty null".into()));
    }
    let below = null.iter().filter(|&&v| v <= observed).count();
    Ok((1 + below) as f64 / (1 + null.len()) as f64)
}

/// Test of one ordered pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairResult {
    pub input: String,
    pub output: String,
    pub observed: DeltaStats,
    /// Indexed like [`Statistic::ALL`].
    pub p_values: [f64; 3],
}

impl PairResult {
    pub fn p(&self, stat: Statistic) -> f64 {
        self.p_values[stat.index()]
    }
}

/// Fits the observed pair and its surrogates and returns the p-values.
pub fn test_pair(
    input: &str,
    output: &str,
    x_in: &[f64],
    x_out: &[f64],
    n_surrogates: usize,
    settings: &FitSettings,
    seed: SeedTree,
) -> Result<PairResult> {
    let observed = fit_pair(x_in, x_out, settings, SeedTree::new(sub_seed(seed, Lane::Sampler, 0)))?;
    let null = surrogate_null(x_in, x_out, n_surrogates, settings, seed)?;
    let mut p_values = [0.0; 3];
    for stat in Statistic::ALL {
        p_values[stat.index()] = p_value(observed.stats.get(stat), &null.values(stat))?;
    }
    Ok(PairResult {
        input: input.to_string(),
        output: output.to_string(),
        observed: observed.stats,
        p_values,
    })
}

/// `in,out,stat,observed,p_value` rows, three per ordered pair.
pub fn results_csv(results: &[PairResult]) -> String {
    let mut s = String::from("in,out,stat,observed,p_value\n");
    for r in results {
        for stat in Statistic::ALL {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.input,
                r.output,
                stat.name(),
                fmt_f64(r.observed.get(stat)),
                fmt_f64(r.p(stat))
            );
        }
    }
    s
}

fn dot_id(name: &str) -> String {
    format!("\"{}\"", name.replace('\\', "\\\\").replace('"', "\\\""))
}

/// One undirected edge per variable pair, solid when both directions have
/// p-value `<= alpha` for `stat`, dashed otherwise, weighted `1 - max(p)`.
///
/// Edges follow the order in which pairs first appear in `results`.
pub fn emit_graph(results: &[PairResult], alpha: f64, stat: Statistic) -> Result<String> {
    let mut nodes: Vec<&str> = Vec::new();
    let mut pairs: Vec<(&str, &str)> = Vec::new();
    for r in results {
        for v in [r.input.as_str(), r.output.as_str()] {
            if !nodes.contains(&v) {
                nodes.push(v);
            }
        }
        let key = (r.input.as_str(), r.output.as_str());
        if !pairs.iter().any(|&(a, b)| (a, b) == key || (b, a) == key) {
            pairs.push(key);
        }
    }
    let find = |a: &str, b: &str| results.iter().find(|r| r.input == a && r.output == b);
    let mut s = String::from("graph dependence {\n");
    for n in &nodes {
        let _ = writeln!(s, "  {};", dot_id(n));
    }
    for (a, b) in pairs {
        let (fwd, bwd) = match (find(a, b), find(b, a)) {
            (Some(f), Some(r)) => (f.p(stat), r.p(stat)),
            _ => {
                return Err(Error::Usage(format!(
                    "pair {a} - {b} is missing one direction"
                )))
            }
        };
        let worst = fwd.max(bwd);
        let style = if worst <= alpha { "solid" } else { "dashed" };
        let _ = writeln!(
            s,
            "  {} -- {} [style={style}, weight={}, label=\"{}/{}\"];",
            dot_id(a),
            dot_id(b),
            fmt_f64(1.0 - worst),
            fmt_f64(fwd),
            fmt_f64(bwd)
        );
    }
    s.push_str("}\n");
    Ok(s)
}

/// Named columns of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl DataTable {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() || names.is_empty() {
            return Err(Error::Data("one column per name required".into()));
        }
        let n = columns[0].len();
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::Data("columns have different lengths".into()));
        }
        Ok(DataTable { names, columns })
    }

    pub fn rows(&self) -> usize {
        self.columns[0].len()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.columns[i].as_slice())
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let names: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Parse(e.to_string()))?
            .iter()
            .map(String::from)
            .collect();
        let mut columns = vec![Vec::new(); names.len()];
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            for (c, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Parse(format!("row {}: {field:?} is not a number", line + 2))
                })?;
                columns[c].push(v);
            }
        }
        DataTable::new(names, columns)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = self.names.join(",");
        s.push('\n');
        for i in 0..self.rows() {
            let row: Vec<String> = self.columns.iter().map(|c| fmt_f64(c[i])).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// Tests both directions of every unordered pair of columns.
///
/// Pair `k` (in column order) uses its own seed subtree, so results do not
/// depend on which other pairs are tested.
pub fn analyze(
    table: &DataTable,
    pairs: &[(usize, usize)],
    n_surrogates: usize,
    settings: &FitSettings,
    seed: u64,
) -> Result<Vec<PairResult>> {
    let tree = SeedTree::new(seed);
    let k = table.names.len();
    let mut out = Vec::with_capacity(2 * pairs.len());
    for &(a, b) in pairs {
        if a >= k || b >= k || a == b {
            return Err(Error::Usage(format!("bad column pair ({a}, {b})")));
        }
        for (i, o) in [(a, b), (b, a)] {
            let sub = SeedTree::new(sub_seed(tree, Lane::Auxiliary, (i * k + o) as u64));
            out.push(test_pair(
                &table.names[i],
                &table.names[o],
                &table.columns[i],
                &table.columns[o],
                n_surrogates,
                settings,
                sub,
            )?);
        }
    }
    Ok(out)
}

/// All unordered column pairs `(i, j)` with `i < j`.
pub fn all_pairs(k: usize) -> Vec<(usize, usize)> {
    (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect()
}

/// Synthetic four-variable data: `b` is a smooth monotone function of `a`,
/// `d` a noisy function of `c`, and `a`, `c` are independent.
///
/// `a` and `c` are recorded on a 0.25 grid, as a coarse instrument would. Tied
/// inputs keep the length-scale posterior away from its degenerate `delta -> 0`
/// end, which otherwise swallows a share of the surrogate fits.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub table: DataTable,
    pub dependent: (usize, usize),
    pub noisy: (usize, usize),
    pub independent: (usize, usize),
}

pub const FIXTURE_RESOLUTION: f64 = 0.25;

pub fn synthetic_fixture(n: usize, seed: u64) -> Fixture {
    let mut rng = SeedTree::new(seed).stream(Lane::Dataset, StreamId { run: 0, t: 0, d: 0 });
    let noise = Normal::new(0.0, 0.3).expect("valid normal");
    let grid = |v: f64| (v / FIXTURE_RESOLUTION).round() * FIXTURE_RESOLUTION;
    let mut cols = vec![Vec::new(); 4];
    for _ in 0..n {
        let a = grid(rng.random_range(-3.0..3.0));
        let c = grid(rng.random_range(-3.0..3.0));
        cols[0].push(a);
        cols[1].push((1.5 * a).tanh());
        cols[2].push(c);
        cols[3].push(c.cos() + noise.sample(&mut rng));
    }
    let names = ["a", "b", "c", "d"].map(String::from).to_vec();
    Fixture {
        table: DataTable::new(names, cols).expect("consistent fixture"),
        dependent: (0, 1),
        noisy: (2, 3),
        independent: (0, 2),
    }
}
