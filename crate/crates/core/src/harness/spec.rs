//! Experiment configuration files.
//!
//! The format is one `key = value` per line. `#` starts a comment, blank lines
//! are ignored and keys may appear once. Lists are comma separated and a sweep
//! is written `sweep = <var>: v1, v2, ...` with `<var>` one of `M`, `T`,
//! `sigma`, `E` (`= M * T`, varying `T`) or `D` (GP dimension, `L = D - 1`).

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::config::BackbonePolicy;
use crate::depgraph::Statistic;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    Exp1Gauss,
    Exp2Bimodal,
    Exp3Donut,
    Exp4GpArd,
    Exp5Depgraph,
    ChainruleCheck,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Exp1Gauss,
        Experiment::Exp2Bimodal,
        Experiment::Exp3Donut,
        Experiment::Exp4GpArd,
        Experiment::Exp5Depgraph,
        Experiment::ChainruleCheck,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Experiment::Exp1Gauss => "exp1-gauss",
            Experiment::Exp2Bimodal => "exp2-bimodal",
            Experiment::Exp3Donut => "exp3-donut",
            Experiment::Exp4GpArd => "exp4-gp-ard",
            Experiment::Exp5Depgraph => "exp5-depgraph",
            Experiment::ChainruleCheck => "chainrule-check",
        }
    }

    /// Whether the experiment's target has exact full conditionals.
    pub fn has_exact_conditionals(&self) -> bool {
        matches!(self, Experiment::Exp1Gauss | Experiment::ChainruleCheck)
    }

    fn default_methods(&self) -> Vec<Method> {
        let pick = |s: Sampler| vec![Method::new(s, Scheme::Sg), Method::new(s, Scheme::Mrg)];
        match self {
            Experiment::Exp1Gauss => pick(Sampler::Ideal),
            Experiment::Exp2Bimodal | Experiment::Exp3Donut | Experiment::Exp4GpArd => pick(Sampler::Mh),
            Experiment::Exp5Depgraph => vec![Method::new(Sampler::Scam, Scheme::Mrg)],
            Experiment::ChainruleCheck => vec![Method::new(Sampler::Ideal, Scheme::Mrg)],
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.id() == s)
            .ok_or_else(|| Error::Config(format!("experiment: unknown experiment {s:?}")))
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// Inner kernel family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sampler {
    Ideal,
    Mh,
    Amh,
    Scam,
}

impl Sampler {
    pub fn name(&self) -> &'static str {
        match self {
            Sampler::Ideal => "ideal",
            Sampler::Mh => "mh",
            Sampler::Amh => "amh",
            Sampler::Scam => "scam",
        }
    }
}

/// Which samples the estimator averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Standard Gibbs: the sweep-end points.
    Sg,
    /// Multiple recycling Gibbs: every inner sample.
    Mrg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Method {
    pub sampler: Sampler,
    pub scheme: Scheme,
}

impl Method {
    pub fn new(sampler: Sampler, scheme: Scheme) -> Self {
        Method { sampler, scheme }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let scheme = match self.scheme {
            Scheme::Sg => "sg",
            Scheme::Mrg => "mrg",
        };
        write!(f, "{}-{scheme}", self.sampler.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("method: unknown method {s:?}"));
        let (sampler, scheme) = s.split_once('-').ok_or_else(bad)?;
        let sampler = match sampler {
            "ideal" => Sampler::Ideal,
            "mh" => Sampler::Mh,
            "amh" => Sampler::Amh,
            "scam" => Sampler::Scam,
            _ => return Err(bad()),
        };
        let scheme = match scheme {
            "sg" => Scheme::Sg,
            "mrg" => Scheme::Mrg,
            _ => return Err(bad()),
        };
        Ok(Method { sampler, scheme })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepVar {
    M,
    T,
    Sigma,
    E,
    D,
}

impl SweepVar {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "M" => Ok(SweepVar::M),
            "T" => Ok(SweepVar::T),
            "sigma" => Ok(SweepVar::Sigma),
            "E" => Ok(SweepVar::E),
            "D" => Ok(SweepVar::D),
            _ => Err(Error::Config(format!("sweep: unknown sweep variable {s:?}"))),
        }
    }

    fn integral(&self) -> bool {
        !matches!(self, SweepVar::Sigma)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub var: SweepVar,
    pub values: Vec<f64>,
}

/// Fixed sampler parameters at one sweep point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub sweeps: usize,
    pub inner_steps: usize,
    pub sigma: f64,
    /// GP input dimension `L`.
    pub input_dim: usize,
}

/// Validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub methods: Vec<Method>,
    pub sweep: Option<Sweep>,
    pub sweeps: usize,
    pub inner_steps: usize,
    pub sigma: f64,
    pub burn_in: usize,
    pub backbone: BackbonePolicy,
    pub runs: usize,
    pub seed: u64,
    /// Record sampler wall time. Off makes reports byte-reproducible.
    pub timing: bool,
    /// Sweeps of a discarded SG chain used to pick each run's start point.
    pub warmup: usize,
    /// GP prior exponent.
    pub beta: f64,
    /// GP input dimension `L`.
    pub input_dim: usize,
    /// GP data size `P`.
    pub points: usize,
    pub true_lengthscale: f64,
    pub true_noise: f64,
    pub reference_sweeps: usize,
    pub reference_inner_steps: usize,
    /// Observations for the dependence experiment; synthetic when absent.
    pub data: Option<PathBuf>,
    /// Synthetic sample size for the dependence experiment.
    pub n: usize,
    pub surrogates: usize,
    pub alpha: f64,
    pub statistic: Statistic,
}

impl ExperimentSpec {
    /// Defaults for `experiment` before any key is applied.
    pub fn defaults(experiment: Experiment) -> Self {
        let dep = experiment == Experiment::Exp5Depgraph;
        ExperimentSpec {
            experiment,
            methods: experiment.default_methods(),
            sweep: None,
            sweeps: if dep { 200 } else { 1000 },
            inner_steps: if dep { 10 } else { 1 },
            sigma: 1.0,
            burn_in: 0,
            backbone: BackbonePolicy::LastSample,
            runs: 200,
            seed: 1,
            timing: true,
            warmup: if experiment == Experiment::ChainruleCheck { 100 } else { 0 },
            beta: crate::targets::DEFAULT_PRIOR_EXPONENT,
            input_dim: 5,
            points: 100,
            true_lengthscale: 2.0,
            true_noise: 0.5,
            reference_sweeps: 20_000,
            reference_inner_steps: 10,
            data: None,
            n: 100,
            surrogates: 99,
            alpha: 0.1,
            statistic: Statistic::Std,
        }
    }

    /// Parameters at every sweep point, in sweep order.
    pub fn points(&self) -> Vec<Point> {
        let base = Point {
            sweeps: self.sweeps,
            inner_steps: self.inner_steps,
            sigma: self.sigma,
            input_dim: self.input_dim,
        };
        let Some(sweep) = &self.sweep else {
            return vec![base];
        };
        sweep
            .values
            .iter()
            .map(|&v| {
                let mut p = base;
                match sweep.var {
                    SweepVar::M => p.inner_steps = v as usize,
                    SweepVar::T => p.sweeps = v as usize,
                    SweepVar::Sigma => p.sigma = v,
                    SweepVar::E => p.sweeps = v as usize / p.inner_steps,
                    SweepVar::D => p.input_dim = v as usize - 1,
                }
                p
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.experiment;
        let fail = |key: &str, msg: String| Err(Error::Config(format!("{key}: {msg}")));
        if self.methods.is_empty() {
            return fail("method", "at least one method is required".into());
        }
        for m in &self.methods {
            if m.sampler == Sampler::Ideal && !e.has_exact_conditionals() {
                return fail("method", format!("{m} needs exact conditionals, which {e} does not have"));
            }
            if e == Experiment::Exp5Depgraph && *m != Method::new(Sampler::Scam, Scheme::Mrg) {
                return fail("method", format!("{e} always uses scam-mrg, got {m}"));
            }
            if e == Experiment::ChainruleCheck && *m != Method::new(Sampler::Ideal, Scheme::Mrg) {
                return fail("method", format!("{e} compares ideal-mrg with the chain rule, got {m}"));
            }
        }
        if self.runs == 0 {
            return fail("runs", "must be positive".into());
        }
        if self.sweeps == 0 {
            return fail("T", "must be positive".into());
        }
        if self.inner_steps == 0 {
            return fail("M", "must be positive".into());
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return fail("sigma", "must be positive".into());
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return fail("beta", "must be nonnegative".into());
        }
        if self.input_dim == 0 {
            return fail("L", "must be positive".into());
        }
        if self.points == 0 {
            return fail("P", "must be positive".into());
        }
        if !(self.true_lengthscale > 0.0 && self.true_lengthscale.is_finite()) {
            return fail("true_lengthscale", "must be positive".into());
        }
        if !(self.true_noise >= 0.0 && self.true_noise.is_finite()) {
            return fail("true_noise", "must be nonnegative".into());
        }
        if self.reference_sweeps == 0 {
            return fail("ref_T", "must be positive".into());
        }
        if self.reference_inner_steps == 0 {
            return fail("ref_M", "must be positive".into());
        }
        if self.surrogates == 0 {
            return fail("surrogates", "must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail("alpha", "must lie in (0, 1)".into());
        }
        if self.n < crate::depgraph::MIN_POINTS {
            return fail("n", format!("must be at least {}", crate::depgraph::MIN_POINTS));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return fail("sweep", "needs at least one value".into());
            }
            for &v in &sweep.values {
                if !(v > 0.0 && v.is_finite()) {
                    return fail("sweep", format!("value {v} is not positive"));
                }
                if sweep.var.integral() && v.fract() != 0.0 {
                    return fail("sweep", format!("value {v} must be an integer"));
                }
            }
            match sweep.var {
                SweepVar::E => {
                    if let Some(v) = sweep.values.iter().find(|v| !(**v as usize).is_multiple_of(self.inner_steps)) {
                        return fail("sweep", format!("E = {v} is not a multiple of M = {}", self.inner_steps));
                    }
                }
                SweepVar::D => {
                    if e != Experiment::Exp4GpArd {
                        return fail("sweep", format!("D can only be swept in {}", Experiment::Exp4GpArd));
                    }
                    if sweep.values.iter().any(|&v| v < 2.0) {
                        return fail("sweep", "D must be at least 2".into());
                    }
                }
                _ => {}
            }
        }
        for p in self.points() {
            if self.burn_in >= p.sweeps {
                return fail("burn_in", format!("must be smaller than T = {}", p.sweeps));
            }
        }
        Ok(())
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

/// Parses and validates a configuration text.
pub fn parse_spec(text: &str) -> Result<ExperimentSpec> {
    let mut entries: Vec<(String, String)> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
        let k = k.trim().to_string();
        if let Some(prev) = seen.insert(k.clone(), no + 1) {
            return Err(Error::Config(format!("{k}: repeated on lines {prev} and {}", no + 1)));
        }
        entries.push((k, v.trim().to_string()));
    }
    let experiment: Experiment = entries
        .iter()
        .find(|(k, _)| k == "experiment")
        .ok_or_else(|| Error::Config("experiment: missing".into()))?
        .1
        .parse()?;
    let mut spec = ExperimentSpec::defaults(experiment);
    for (k, v) in &entries {
        let v = v.as_str();
        match k.as_str() {
            "experiment" => {}
            "method" => {
                spec.methods = parse_list(v).map(str::parse).collect::<Result<_>>()?;
            }
            "T" => spec.sweeps = parse_num(k, v)?,
            "M" => spec.inner_steps = parse_num(k, v)?,
            "sigma" => spec.sigma = parse_num(k, v)?,
            "burn_in" => spec.burn_in = parse_num(k, v)?,
            "backbone" => {
                spec.backbone = match v {
                    "last" => BackbonePolicy::LastSample,
                    "uniform" => BackbonePolicy::UniformIndex,
                    _ => return Err(Error::Config(format!("backbone: expected last or uniform, got {v:?}"))),
                }
            }
            "runs" => spec.runs = parse_num(k, v)?,
            "seed" => spec.seed = parse_num(k, v)?,
            "timing" => {
                spec.timing = match v {
                    "on" => true,
                    "off" => false,
                    _ => return Err(Error::Config(format!("timing: expected on or off, got {v:?}"))),
                }
            }
            "warmup" => spec.warmup = parse_num(k, v)?,
            "beta" => spec.beta = parse_num(k, v)?,
            "L" => spec.input_dim = parse_num(k, v)?,
            "P" => spec.points = parse_num(k, v)?,
            "true_lengthscale" => spec.true_lengthscale = parse_num(k, v)?,
            "true_noise" => spec.true_noise = parse_num(k, v)?,
            "ref_T" => spec.reference_sweeps = parse_num(k, v)?,
            "ref_M" => spec.reference_inner_steps = parse_num(k, v)?,
            "data" => spec.data = Some(PathBuf::from(v)),
            "n" => spec.n = parse_num(k, v)?,
            "surrogates" => spec.surrogates = parse_num(k, v)?,
            "alpha" => spec.alpha = parse_num(k, v)?,
            "statistic" => {
                spec.statistic = Statistic::ALL
                    .into_iter()
                    .find(|s| s.name() == v)
                    .ok_or_else(|| Error::Config(format!("statistic: expected mean, median or std, got {v:?}")))?
            }
            "sweep" => {
                let (var, values) = v
                    .split_once(':')
                    .ok_or_else(|| Error::Config("sweep: expected <var>: v1, v2, ...".into()))?;
                spec.sweep = Some(Sweep {
                    var: SweepVar::parse(var.trim())?,
                    values: parse_list(values).map(|s| parse_num(k, s)).collect::<Result<_>>()?,
                });
            }
            _ => return Err(Error::Config(format!("{k}: unknown key"))),
        }
    }
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_spec_gets_defaults() {
        let s = parse_spec("experiment = exp1-gauss\n").unwrap();
        assert_eq!((s.sweeps, s.inner_steps, s.sigma, s.runs, s.seed), (1000, 1, 1.0, 200, 1));
        assert_eq!(s.burn_in, 0);
        assert_eq!(s.methods.len(), 2);
    }

    #[test]
    fn ideal_rejected_for_bimodal() {
        let err = parse_spec("experiment = exp2-bimodal\nmethod = ideal-sg\n").unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("method"));
    }

    #[test]
    fn zero_runs_rejected() {
        let err = parse_spec("experiment = exp1-gauss\nruns = 0\n").unwrap_err();
        assert!(err.to_string().contains("runs"));
    }

    #[test]
    fn diagnostics_name_the_key() {
        for (text, key) in [
            ("experiment = exp9\n", "experiment"),
            ("experiment = exp1-gauss\nbogus = 1\n", "bogus"),
            ("experiment = exp1-gauss\nT = ten\n", "T"),
            ("experiment = exp1-gauss\nsigma = -1\n", "sigma"),
            ("experiment = exp1-gauss\nsweep = M: 1, 0\n", "sweep"),
            ("experiment = exp1-gauss\nsweep = D: 2, 3\n", "sweep"),
            ("experiment = exp1-gauss\nM = 3\nsweep = E: 10, 12\n", "sweep"),
            ("experiment = exp1-gauss\nT = 5\nT = 6\n", "T"),
            ("T = 5\n", "experiment"),
        ] {
            let err = parse_spec(text).unwrap_err();
            assert!(err.to_string().contains(key), "{text:?}: {err}");
        }
    }

    #[test]
    fn full_spec() {
        let s = parse_spec(
            "# sigma sweep\nexperiment = exp2-bimodal   # bimodal\nmethod = mh-sg, mh-mrg\nsweep = sigma: 0.5, 1, 2\nM = 1\nT = 500\nruns = 20\nseed = 7\ntiming = off\n",
        )
        .unwrap();
        assert_eq!(s.methods, vec!["mh-sg".parse().unwrap(), "mh-mrg".parse().unwrap()]);
        let pts = s.points();
        assert_eq!(pts.len(), 3);
        assert_eq!(pts[2].sigma, 2.0);
        assert!(!s.timing);
    }

    #[test]
    fn e_and_d_sweeps() {
        let s = parse_spec("experiment = exp4-gp-ard\nM = 5\nsweep = E: 10, 50\n").unwrap();
        assert_eq!(s.points().iter().map(|p| p.sweeps).collect::<Vec<_>>(), vec![2, 10]);
        let s = parse_spec("experiment = exp4-gp-ard\nsweep = D: 2, 6\n").unwrap();
        assert_eq!(s.points().iter().map(|p| p.input_dim).collect::<Vec<_>>(), vec![1, 5]);
    }

    #[test]
    fn method_names_round_trip() {
        for s in ["ideal-sg", "ideal-mrg", "mh-sg", "mh-mrg", "amh-sg", "amh-mrg", "scam-sg", "scam-mrg"] {
            assert_eq!(s.parse::<Method>().unwrap().to_string(), s);
        }
        assert!("mh-trg".parse::<Method>().is_err());
    }
}
