//! Equal-weight empirical measures, moment functionals, the positive-part
//! brackets `[X]_p`, and Wasserstein distances between particle clouds.

use crate::assignment;
use crate::numeric::pairwise_mean;
use crate::time::TimeGrid;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use thiserror::Error;

/// Largest cloud handed to the exact assignment solver by default.
pub const DEFAULT_EXACT_CAP: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("empty sample or cloud")]
    Empty,
    #[error("dimension must be positive")]
    ZeroDim,
    #[error("{len} coordinates do not split into points of dimension {dim}")]
    Ragged { len: usize, dim: usize },
    #[error("non-finite coordinate at index {0}")]
    NonFinite(usize),
    #[error("order must be at least 1, got {0}")]
    Order(f64),
    #[error("particle counts differ: {0} vs {1}")]
    CountMismatch(usize, usize),
    #[error("dimensions differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("sorted matching needs dimension 1, got {0}")]
    NotScalar(usize),
    #[error("{n} particles exceed the exact assignment cap of {cap}")]
    OverCap { n: usize, cap: usize },
    #[error("flow has {clouds} clouds for a grid of {points} points")]
    FlowLength { clouds: usize, points: usize },
}

/// The empirical measure `(1/N) Σ δ_{x_i}` on `ℝ^dim`, stored as a flat
/// row-major array of `N·dim` coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl ParticleCloud {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self, MeasureError> {
        if dim == 0 {
            return Err(MeasureError::ZeroDim);
        }
        if coords.is_empty() {
            return Err(MeasureError::Empty);
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(MeasureError::Ragged { len: coords.len(), dim });
        }
        if let Some(i) = coords.iter().position(|x| !x.is_finite()) {
            return Err(MeasureError::NonFinite(i));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_scalars(values: Vec<f64>) -> Result<Self, MeasureError> {
        Self::new(1, values)
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self, MeasureError> {
        let dim = points.first().map(Vec::len).ok_or(MeasureError::Empty)?;
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(MeasureError::Ragged { len: p.len(), dim });
            }
            coords.extend_from_slice(p);
        }
        Self::new(dim, coords)
    }

    /// `n` particles at the origin.
    pub fn dirac_zero(dim: usize, n: usize) -> Result<Self, MeasureError> {
        Self::new(dim, vec![0.0; dim * n])
    }

    /// Construction for engine internals that already guarantee finiteness.
    pub(crate) fn from_raw(dim: usize, coords: Vec<f64>) -> Self {
        debug_assert!(dim > 0 && !coords.is_empty() && coords.len().is_multiple_of(dim));
        Self { dim, coords }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Componentwise mean, reduced in fixed index order.
    pub fn mean(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|c| {
                let col: Vec<f64> = self.points().map(|p| p[c]).collect();
                pairwise_mean(&col)
            })
            .collect()
    }

    /// The cloud `x_i - y_i` of particle-wise differences.
    pub fn difference(&self, other: &Self) -> Result<Self, MeasureError> {
        self.check_pair(other)?;
        let coords = self.coords.iter().zip(&other.coords).map(|(a, b)| a - b).collect();
        Ok(Self::from_raw(self.dim, coords))
    }

    fn check_pair(&self, other: &Self) -> Result<(), MeasureError> {
        if self.dim != other.dim {
            return Err(MeasureError::DimMismatch(self.dim, other.dim));
        }
        if self.len() != other.len() {
            return Err(MeasureError::CountMismatch(self.len(), other.len()));
        }
        Ok(())
    }
}

/// I.i.d. draws of a scalar random variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    values: Vec<f64>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self, MeasureError> {
        if values.is_empty() {
            return Err(MeasureError::Empty);
        }
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(MeasureError::NonFinite(i));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `[X]_p = E[(X⁺)^p]^{1/p}` for finite `p`, `esssup X` for `p = ∞`.
pub fn essential_bracket(sample: &Sample, order: f64) -> Result<f64, MeasureError> {
    if order.is_nan() || order < 1.0 {
        return Err(MeasureError::Order(order));
    }
    let v = &sample.values;
    if order == f64::INFINITY {
        return Ok(v.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    let scale = v.iter().copied().fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(0.0);
    }
    // Factor out the largest value so high orders do not overflow.
    let terms: Vec<f64> = v.iter().map(|x| (x.max(0.0) / scale).powf(order)).collect();
    Ok(scale * pairwise_mean(&terms).powf(1.0 / order))
}

fn check_order(p: f64) -> Result<(), MeasureError> {
    if p.is_nan() || p < 1.0 || p.is_infinite() {
        return Err(MeasureError::Order(p));
    }
    Ok(())
}

fn norm(x: &[f64]) -> f64 {
    if x.len() == 1 {
        return x[0].abs();
    }
    x.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    if x.len() == 1 {
        return (x[0] - y[0]).abs();
    }
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// `(1/N) Σ |x_i|^p`, the `p`-th power of the distance to `δ_0`.
pub fn moment(cloud: &ParticleCloud, p: f64) -> Result<f64, MeasureError> {
    check_order(p)?;
    let terms: Vec<f64> = cloud.points().map(|x| powp(norm(x), p)).collect();
    Ok(pairwise_mean(&terms))
}

fn powp(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        x * x
    } else if p == 1.0 {
        x
    } else {
        x.powf(p)
    }
}

/// Wasserstein-`p` distance of two scalar clouds via sorted matching.
pub fn wasserstein_1d(a: &ParticleCloud, b: &ParticleCloud, p: f64) -> Result<f64, MeasureError> {
    check_order(p)?;
    a.check_pair(b)?;
    if a.dim != 1 {
        return Err(MeasureError::NotScalar(a.dim));
    }
    let mut xs = a.coords.clone();
    let mut ys = b.coords.clone();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let terms: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| powp((x - y).abs(), p)).collect();
    Ok(pairwise_mean(&terms).powf(1.0 / p))
}

/// Exact Wasserstein-`p` distance by optimal assignment, any dimension,
/// for clouds of at most `max_n` particles.
pub fn wasserstein_exact(a: &ParticleCloud, b: &ParticleCloud, p: f64, max_n: usize) -> Result<f64, MeasureError> {
    check_order(p)?;
    a.check_pair(b)?;
    let n = a.len();
    if n > max_n {
        return Err(MeasureError::OverCap { n, cap: max_n });
    }
    let mut cost = Vec::with_capacity(n * n);
    for x in a.points() {
        for y in b.points() {
            cost.push(powp(dist(x, y), p));
        }
    }
    let perm = assignment::solve(&cost, n);
    let terms: Vec<f64> = perm.iter().enumerate().map(|(i, &j)| cost[i * n + j]).collect();
    Ok(pairwise_mean(&terms).powf(1.0 / p))
}

/// How a distance between clouds was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMethod {
    SortedMatching,
    ExactAssignment,
    /// `|ϑ_p(μ, δ_0) − ϑ_p(ν, δ_0)|`, only a lower bound on `ϑ_p(μ, ν)`.
    MomentProxy,
}

impl DistanceMethod {
    pub fn is_lower_bound(self) -> bool {
        matches!(self, Self::MomentProxy)
    }
}

/// Picks sorted matching for scalars, exact assignment up to `cap`
/// particles, and the moment proxy beyond.
pub fn wasserstein_auto(a: &ParticleCloud, b: &ParticleCloud, p: f64, cap: usize) -> Result<(f64, DistanceMethod), MeasureError> {
    a.check_pair(b)?;
    if a.dim == 1 {
        return Ok((wasserstein_1d(a, b, p)?, DistanceMethod::SortedMatching));
    }
    if a.len() <= cap {
        return Ok((wasserstein_exact(a, b, p, cap)?, DistanceMethod::ExactAssignment));
    }
    let ma = moment(a, p)?.powf(1.0 / p);
    let mb = moment(b, p)?.powf(1.0 / p);
    Ok(((ma - mb).abs(), DistanceMethod::MomentProxy))
}

/// A grid-indexed sequence of clouds standing in for `t ↦ μ_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureFlow {
    grid: TimeGrid,
    clouds: Vec<ParticleCloud>,
}

impl MeasureFlow {
    pub fn new(grid: TimeGrid, clouds: Vec<ParticleCloud>) -> Result<Self, MeasureError> {
        if clouds.len() != grid.len() {
            return Err(MeasureError::FlowLength {
                clouds: clouds.len(),
                points: grid.len(),
            });
        }
        let first = &clouds[0];
        for c in &clouds[1..] {
            first.check_pair(c)?;
        }
        Ok(Self { grid, clouds })
    }

    /// The flow that is `cloud` at every grid time.
    pub fn constant(grid: TimeGrid, cloud: ParticleCloud) -> Self {
        let clouds = vec![cloud; grid.len()];
        Self { grid, clouds }
    }

    pub(crate) fn from_parts(grid: TimeGrid, clouds: Vec<ParticleCloud>) -> Self {
        debug_assert_eq!(grid.len(), clouds.len());
        Self { grid, clouds }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn clouds(&self) -> &[ParticleCloud] {
        &self.clouds
    }

    pub fn cloud(&self, k: usize) -> &ParticleCloud {
        &self.clouds[k]
    }

    pub fn dim(&self) -> usize {
        self.clouds[0].dim
    }

    pub fn n_particles(&self) -> usize {
        self.clouds[0].len()
    }

    pub fn moment_curve(&self, p: f64) -> Result<Vec<f64>, MeasureError> {
        self.clouds.iter().map(|c| moment(c, p)).collect()
    }

    /// Pointwise distances `d(self_t, other_t)` and the method used (the
    /// weakest one if several were needed).
    pub fn distance_curve(&self, other: &Self, p: f64, cap: usize) -> Result<(Vec<f64>, DistanceMethod), MeasureError> {
        if self.clouds.len() != other.clouds.len() {
            return Err(MeasureError::FlowLength {
                clouds: other.clouds.len(),
                points: self.clouds.len(),
            });
        }
        let mut method = DistanceMethod::SortedMatching;
        let mut out = Vec::with_capacity(self.clouds.len());
        for (a, b) in self.clouds.iter().zip(&other.clouds) {
            let (d, m) = wasserstein_auto(a, b, p, cap)?;
            if m != DistanceMethod::SortedMatching && method != DistanceMethod::MomentProxy {
                method = m;
            }
            out.push(d);
        }
        Ok((out, method))
    }

    /// `sup_t d(self_t, other_t)` over the grid.
    pub fn sup_distance(&self, other: &Self, p: f64, cap: usize) -> Result<(f64, DistanceMethod), MeasureError> {
        let (curve, method) = self.distance_curve(other, p, cap)?;
        let sup = curve
            .into_iter()
            .max_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal))
            .unwrap_or(0.0);
        Ok((sup, method))
    }
}
