//! Target densities and their one-dimensional full conditionals.

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// An unnormalized log-density over `R^D`.
///
/// Points outside the support evaluate to `f64::NEG_INFINITY`. Evaluation must
/// be pure. The only error a target may raise is a numerical failure it could
/// not recover from.
pub trait TargetDensity: Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, x: &[f64]) -> Result<f64>;

    /// Exact draw of coordinate `d` from its full conditional given the other
    /// coordinates of `x` (the value stored at `x[d]` is ignored).
    ///
    /// `None` when the target has no analytic conditional sampler.
    fn exact_conditional(&self, _d: usize, _x: &[f64], _rng: &mut StreamRng) -> Option<f64> {
        None
    }

    fn has_exact_conditionals(&self) -> bool {
        false
    }
}

impl<T: TargetDensity + ?Sized> TargetDensity for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        (**self).log_density(x)
    }

    fn exact_conditional(&self, d: usize, x: &[f64], rng: &mut StreamRng) -> Option<f64> {
        (**self).exact_conditional(d, x, rng)
    }

    fn has_exact_conditionals(&self) -> bool {
        (**self).has_exact_conditionals()
    }
}

/// Inserts `v` at position `d` of `complement`, producing a full point.
pub fn assemble(complement: &[f64], d: usize, v: f64) -> Result<Vec<f64>> {
    if d > complement.len() {
        return Err(Error::Config(format!(
            "coordinate {d} out of range for dimension {}",
            complement.len() + 1
        )));
    }
    let mut x = Vec::with_capacity(complement.len() + 1);
    x.extend_from_slice(&complement[..d]);
    x.push(v);
    x.extend_from_slice(&complement[d..]);
    Ok(x)
}

/// Splits `x` into `(x without coordinate d, x[d])`.
pub fn project(x: &[f64], d: usize) -> Result<(Vec<f64>, f64)> {
    if d >= x.len() {
        return Err(Error::Config(format!(
            "coordinate {d} out of range for dimension {}",
            x.len()
        )));
    }
    let mut complement = Vec::with_capacity(x.len() - 1);
    complement.extend_from_slice(&x[..d]);
    complement.extend_from_slice(&x[d + 1..]);
    Ok((complement, x[d]))
}

/// The full conditional of coordinate `d` with all other coordinates frozen.
///
/// The view keeps an assembled point internally and overwrites slot `d` on
/// each evaluation, so `log_eval` takes `&mut self`. It also counts how many
/// times the parent density was evaluated.
#[derive(Debug, Clone)]
pub struct FullConditionalView<'a, T: ?Sized> {
    target: &'a T,
    coord: usize,
    point: Vec<f64>,
    evaluations: u64,
}

impl<'a, T: TargetDensity + ?Sized> FullConditionalView<'a, T> {
    /// Builds the view from the complement `x_{-d}` (length `D - 1`).
    pub fn new(target: &'a T, coord: usize, complement: &[f64]) -> Result<Self> {
        let dim = target.dim();
        if coord >= dim {
            return Err(Error::Config(format!(
                "coordinate {coord} out of range for dimension {dim}"
            )));
        }
        if complement.len() + 1 != dim {
            return Err(Error::Config(format!(
                "complement has length {}, expected {}",
                complement.len(),
                dim - 1
            )));
        }
        let point = assemble(complement, coord, 0.0)?;
        Ok(FullConditionalView {
            target,
            coord,
            point,
            evaluations: 0,
        })
    }

    /// Builds the view from a full point; `point[coord]` is ignored.
    pub fn from_point(target: &'a T, coord: usize, point: &[f64]) -> Result<Self> {
        let (complement, _) = project(point, coord)?;
        Self::new(target, coord, &complement)
    }

    pub fn coord(&self) -> usize {
        self.coord
    }

    pub fn target(&self) -> &'a T {
        self.target
    }

    pub fn complement(&self) -> Vec<f64> {
        project(&self.point, self.coord)
            .expect("view coordinate is always in range")
            .0
    }

    /// Unnormalized log full-conditional at `v`: the joint at the assembled point.
    pub fn log_eval(&mut self, v: f64) -> Result<f64> {
        self.point[self.coord] = v;
        self.evaluations += 1;
        self.target.log_density(&self.point)
    }

    /// The assembled point from the last call to `log_eval`.
    pub fn point(&self) -> &[f64] {
        &self.point
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }
}
