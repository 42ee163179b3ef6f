//! One-dimensional transition kernels used inside the Gibbs scan.
//!
//! Every kernel works on a [`FullConditionalView`] and produces `M` inner
//! samples per block. MH-type kernels evaluate the target exactly once per
//! inner step, at the proposed point; the log density of the current point is
//! carried along.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::density::{FullConditionalView, TargetDensity};
use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Haario scaling for one dimension.
pub const HAARIO_SCALE_1D: f64 = 2.4 * 2.4;
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-6;

/// Symmetric Gaussian random-walk proposal `v' = v + sigma * N(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RwProposal {
    sigma: f64,
}

impl RwProposal {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("proposal scale must be positive, got {sigma}")));
        }
        Ok(RwProposal { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// A chain value together with its cached unnormalized log density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainState {
    pub value: f64,
    pub log_density: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MhOutcome {
    pub state: ChainState,
    pub accepted: bool,
}

fn state_error(coord: usize, message: String) -> Error {
    Error::KernelState {
        sweep: 0,
        coord,
        message,
    }
}

/// One Metropolis-Hastings step with a random-walk proposal.
pub fn mh_step<T: TargetDensity + ?Sized>(
    view: &mut FullConditionalView<'_, T>,
    current: ChainState,
    proposal: RwProposal,
    rng: &mut StreamRng,
) -> Result<MhOutcome> {
    if !current.log_density.is_finite() {
        return Err(state_error(
            view.coord(),
            format!(
                "current value {} has log density {}",
                current.value, current.log_density
            ),
        ));
    }
    let step: f64 = rng.sample(StandardNormal);
    let candidate = current.value + proposal.sigma * step;
    let candidate_log = view.log_eval(candidate)?;
    let log_ratio = candidate_log - current.log_density;
    // NaN compares false on both branches and is rejected.
    let accepted = if log_ratio >= 0.0 {
        true
    } else {
        let u: f64 = rng.random();
        u.ln() < log_ratio
    };
    let state = if accepted {
        ChainState {
            value: candidate,
            log_density: candidate_log,
        }
    } else {
        current
    };
    Ok(MhOutcome { state, accepted })
}

/// Running moments of one coordinate and the adaptive proposal they imply.
///
/// Proposal variance is `s * var + floor` once two samples have been seen,
/// and `sigma0^2` before that.
#[derive(Debug, Clone, PartialEq)]
pub struct AmhState {
    count: u64,
    mean: f64,
    m2: f64,
    pub sigma0: f64,
    pub floor: f64,
    pub scale: f64,
    pub adapt: bool,
}

impl AmhState {
    pub fn new(sigma0: f64) -> Self {
        AmhState {
            count: 0,
            mean: 0.0,
            m2: 0.0,
            sigma0,
            floor: DEFAULT_VARIANCE_FLOOR,
            scale: HAARIO_SCALE_1D,
            adapt: true,
        }
    }

    /// A state whose proposal stays at `sigma0` whatever it sees.
    pub fn frozen(sigma0: f64) -> Self {
        AmhState {
            adapt: false,
            ..Self::new(sigma0)
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance, once at least two samples were seen.
    pub fn sample_variance(&self) -> Option<f64> {
        (self.count >= 2).then(|| self.m2 / (self.count - 1) as f64)
    }

    /// Welford update with one more sample.
    pub fn update(&mut self, sample: f64) {
        self.count += 1;
        let delta = sample - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (sample - self.mean);
    }

    pub fn reset(&mut self) {
        self.count = 0;
        self.mean = 0.0;
        self.m2 = 0.0;
    }

    pub fn proposal_variance(&self) -> f64 {
        match (self.adapt, self.sample_variance()) {
            (true, Some(var)) => self.scale * var + self.floor,
            _ => self.sigma0 * self.sigma0,
        }
    }

    pub fn proposal(&self) -> RwProposal {
        RwProposal {
            sigma: self.proposal_variance().sqrt(),
        }
    }
}

/// Single-component adaptive Metropolis: one [`AmhState`] per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct ScamState {
    coords: Vec<AmhState>,
}

impl ScamState {
    pub fn new(dim: usize, template: AmhState) -> Self {
        ScamState {
            coords: vec![template; dim],
        }
    }

    pub fn coord(&self, d: usize) -> &AmhState {
        &self.coords[d]
    }

    pub fn coord_mut(&mut self, d: usize) -> &mut AmhState {
        &mut self.coords[d]
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// MH step with coordinate `d`'s adaptive scale, then updates only that
    /// coordinate's moments with the resulting chain value.
    pub fn scam_step<T: TargetDensity + ?Sized>(
        &mut self,
        d: usize,
        view: &mut FullConditionalView<'_, T>,
        current: ChainState,
        rng: &mut StreamRng,
    ) -> Result<MhOutcome> {
        let out = mh_step(view, current, self.coords[d].proposal(), rng)?;
        self.coords[d].update(out.state.value);
        Ok(out)
    }
}

/// What a kernel reports back after producing one block of inner samples.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BlockReport {
    /// Log density at the last inner sample, if the kernel knows it.
    pub last_log_density: Option<f64>,
    /// Target evaluations at proposed points, or exact draws for the ideal kernel.
    pub evaluations: u64,
    /// Extra evaluations of the block's starting point (cache misses).
    pub anchor_evaluations: u64,
    pub accepted: u64,
}

/// Produces `out.len()` samples from the full conditional behind `view`,
/// starting from `start`.
pub trait InnerKernel<T: TargetDensity + ?Sized> {
    /// Called once before the first sweep of every run.
    fn start_run(&mut self, _dim: usize) {}

    fn draw_block(
        &mut self,
        view: &mut FullConditionalView<'_, T>,
        start: f64,
        start_log: Option<f64>,
        rng: &mut StreamRng,
        out: &mut [f64],
    ) -> Result<BlockReport>;
}

/// Direct sampling from the analytic full conditional ("ideal" Gibbs).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IdealKernel;

impl<T: TargetDensity + ?Sized> InnerKernel<T> for IdealKernel {
    fn draw_block(
        &mut self,
        view: &mut FullConditionalView<'_, T>,
        _start: f64,
        _start_log: Option<f64>,
        rng: &mut StreamRng,
        out: &mut [f64],
    ) -> Result<BlockReport> {
        let d = view.coord();
        let target = view.target();
        let point = view.point().to_vec();
        for slot in out.iter_mut() {
            *slot = target.exact_conditional(d, &point, rng).ok_or_else(|| {
                Error::Config("target has no exact full-conditional sampler".into())
            })?;
        }
        Ok(BlockReport {
            last_log_density: None,
            evaluations: out.len() as u64,
            anchor_evaluations: 0,
            accepted: out.len() as u64,
        })
    }
}

fn anchor<T: TargetDensity + ?Sized>(
    view: &mut FullConditionalView<'_, T>,
    start: f64,
    start_log: Option<f64>,
    report: &mut BlockReport,
) -> Result<ChainState> {
    let log_density = match start_log {
        Some(l) => l,
        None => {
            report.anchor_evaluations += 1;
            view.log_eval(start)?
        }
    };
    Ok(ChainState {
        value: start,
        log_density,
    })
}

/// Random-walk MH with a fixed scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MhKernel {
    pub proposal: RwProposal,
}

impl MhKernel {
    pub fn new(sigma: f64) -> Result<Self> {
        Ok(MhKernel {
            proposal: RwProposal::new(sigma)?,
        })
    }
}

impl<T: TargetDensity + ?Sized> InnerKernel<T> for MhKernel {
    fn draw_block(
        &mut self,
        view: &mut FullConditionalView<'_, T>,
        start: f64,
        start_log: Option<f64>,
        rng: &mut StreamRng,
        out: &mut [f64],
    ) -> Result<BlockReport> {
        let mut report = BlockReport::default();
        let mut state = anchor(view, start, start_log, &mut report)?;
        for slot in out.iter_mut() {
            let step = mh_step(view, state, self.proposal, rng)?;
            report.evaluations += 1;
            report.accepted += step.accepted as u64;
            state = step.state;
            *slot = state.value;
        }
        report.last_log_density = Some(state.log_density);
        Ok(report)
    }
}

/// When adaptive moments are cleared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Persistence {
    /// Cleared at the start of every `(t, d)` block; adaptation runs across the
    /// `M` inner steps only.
    PerBlock,
    /// Kept per coordinate for the whole run.
    AcrossSweeps,
}

/// Adaptive MH within Gibbs. `PerBlock` gives the AMH variant, `AcrossSweeps`
/// gives SCAM.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveKernel {
    template: AmhState,
    persistence: Persistence,
    state: ScamState,
}

impl AdaptiveKernel {
    pub fn new(template: AmhState, persistence: Persistence) -> Result<Self> {
        RwProposal::new(template.sigma0)?;
        if !(template.floor > 0.0) {
            return Err(Error::Config("adaptive variance floor must be positive".into()));
        }
        Ok(AdaptiveKernel {
            template,
            persistence,
            state: ScamState::new(0, AmhState::new(1.0)),
        })
    }

    pub fn amh(sigma0: f64) -> Result<Self> {
        Self::new(AmhState::new(sigma0), Persistence::PerBlock)
    }

    pub fn scam(sigma0: f64) -> Result<Self> {
        Self::new(AmhState::new(sigma0), Persistence::AcrossSweeps)
    }

    pub fn state(&self) -> &ScamState {
        &self.state
    }

    pub fn persistence(&self) -> Persistence {
        self.persistence
    }
}

impl<T: TargetDensity + ?Sized> InnerKernel<T> for AdaptiveKernel {
    fn start_run(&mut self, dim: usize) {
        self.state = ScamState::new(dim, self.template.clone());
    }

    fn draw_block(
        &mut self,
        view: &mut FullConditionalView<'_, T>,
        start: f64,
        start_log: Option<f64>,
        rng: &mut StreamRng,
        out: &mut [f64],
    ) -> Result<BlockReport> {
        let d = view.coord();
        if d >= self.state.dim() {
            self.state = ScamState::new(view.target().dim(), self.template.clone());
        }
        if self.persistence == Persistence::PerBlock {
            self.state.coord_mut(d).reset();
        }
        let mut report = BlockReport::default();
        let mut state = anchor(view, start, start_log, &mut report)?;
        for slot in out.iter_mut() {
            let step = self.state.scam_step(d, view, state, rng)?;
            report.evaluations += 1;
            report.accepted += step.accepted as u64;
            state = step.state;
            *slot = state.value;
        }
        report.last_log_density = Some(state.log_density);
        Ok(report)
    }
}

/// Closed set of kernels the harness can instantiate for any target.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyKernel {
    Ideal(IdealKernel),
    Mh(MhKernel),
    Adaptive(AdaptiveKernel),
}

impl<T: TargetDensity + ?Sized> InnerKernel<T> for AnyKernel {
    fn start_run(&mut self, dim: usize) {
        match self {
            AnyKernel::Ideal(k) => InnerKernel::<T>::start_run(k, dim),
            AnyKernel::Mh(k) => InnerKernel::<T>::start_run(k, dim),
            AnyKernel::Adaptive(k) => InnerKernel::<T>::start_run(k, dim),
        }
    }

    fn draw_block(
        &mut self,
        view: &mut FullConditionalView<'_, T>,
        start: f64,
        start_log: Option<f64>,
        rng: &mut StreamRng,
        out: &mut [f64],
    ) -> Result<BlockReport> {
        match self {
            AnyKernel::Ideal(k) => k.draw_block(view, start, start_log, rng, out),
            AnyKernel::Mh(k) => k.draw_block(view, start, start_log, rng, out),
            AnyKernel::Adaptive(k) => k.draw_block(view, start, start_log, rng, out),
        }
    }
}
