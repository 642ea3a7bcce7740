//! Euler-Maruyama simulation of the `N`-particle system, synchronous
//! coupling, and moment/pathwise estimators over the resulting ensembles.
//!
//! Every particle owns a ChaCha8 stream selected by `(seed, particle)`, so
//! the noise a particle sees does not depend on how the particle loop is
//! scheduled across threads. Empirical means use pairwise summation in
//! particle order, which keeps parallel and serial runs bitwise equal.

use crate::measures::{moment, MeasureError, MeasureFlow, ParticleCloud};
use crate::models::{ModelError, ModelSpec};
use crate::numeric::pairwise_mean;
use crate::time::{GridError, TimeGrid};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("state became non-finite at step {step} (t = {t})")]
    BlowUp { step: usize, t: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("frozen flow must live on the simulation grid with dimension {dim}")]
    FrozenFlow { dim: usize },
    #[error("interacting models need at least 2 particles")]
    TooFewParticles,
    #[error("initial law has dimension {got}, model expects {expected}")]
    InitDim { expected: usize, got: usize },
    #[error("invalid initial law: {0}")]
    InitLaw(String),
    #[error("coupled models differ in dimensions")]
    CoupledDims,
    #[error("the estimation window contains no grid point with t > 0")]
    EmptyWindow,
    #[error("ensembles have different shapes")]
    Shape,
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    EulerMaruyama,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub grid: TimeGrid,
    pub n_particles: usize,
    pub seed: u64,
    #[serde(default)]
    pub scheme: Scheme,
    /// Keep every `record_every`-th cloud; must divide the step count.
    #[serde(default = "one")]
    pub record_every: usize,
}

fn one() -> usize {
    1
}

impl SimConfig {
    pub fn new(grid: TimeGrid, n_particles: usize, seed: u64) -> Self {
        Self {
            grid,
            n_particles,
            seed,
            scheme: Scheme::EulerMaruyama,
            record_every: 1,
        }
    }

    pub fn recording_every(mut self, stride: usize) -> Self {
        self.record_every = stride;
        self
    }

    /// The grid the ensemble is recorded on.
    pub fn record_grid(&self) -> Result<TimeGrid, GridError> {
        self.grid.thinned(self.record_every)
    }
}

/// Law of the initial condition `ξ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialLaw {
    Constant {
        value: Vec<f64>,
    },
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
    },
    /// `a` with probability `weight`, `b` otherwise.
    TwoPoint {
        a: Vec<f64>,
        b: Vec<f64>,
        weight: f64,
    },
}

impl InitialLaw {
    pub fn scalar(x: f64) -> Self {
        Self::Constant { value: vec![x] }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Constant { value } => value.len(),
            Self::Gaussian { mean, .. } => mean.len(),
            Self::TwoPoint { a, .. } => a.len(),
        }
    }

    /// `E|ξ|^p` in closed form where available.
    pub fn moment(&self, p: f64) -> Option<f64> {
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        match self {
            Self::Constant { value } => Some(norm(value).powf(p)),
            Self::TwoPoint { a, b, weight } => Some(weight * norm(a).powf(p) + (1.0 - weight) * norm(b).powf(p)),
            Self::Gaussian { mean, cov } if p == 2.0 => {
                Some(mean.iter().map(|m| m * m).sum::<f64>() + (0..cov.len()).map(|i| cov[i][i]).sum::<f64>())
            }
            Self::Gaussian { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |s: &str| Err(EngineError::InitLaw(s.to_string()));
        match self {
            Self::Constant { value } if value.is_empty() => bad("empty constant"),
            Self::Constant { value } if value.iter().any(|v| !v.is_finite()) => bad("non-finite constant"),
            Self::Gaussian { mean, cov } => {
                if mean.is_empty() || cov.len() != mean.len() || cov.iter().any(|r| r.len() != mean.len()) {
                    return bad("covariance must be a square matrix matching the mean");
                }
                self.cholesky().map(|_| ())
            }
            Self::TwoPoint { a, b, weight } => {
                if a.is_empty() || a.len() != b.len() {
                    bad("two-point atoms must share a positive dimension")
                } else if !(0.0..=1.0).contains(weight) {
                    bad("two-point weight must lie in [0, 1]")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    fn cholesky(&self) -> Result<DMatrix<f64>, EngineError> {
        let Self::Gaussian { mean, cov } = self else { unreachable!() };
        let n = mean.len();
        let m = DMatrix::from_fn(n, n, |i, j| cov[i][j]);
        if (0..n).all(|i| (0..n).all(|j| m[(i, j)] == 0.0)) {
            return Ok(m);
        }
        if (0..n).any(|i| (0..n).any(|j| m[(i, j)] != m[(j, i)])) {
            return Err(EngineError::InitLaw("covariance must be symmetric".into()));
        }
        nalgebra::Cholesky::new(m)
            .map(|c| c.l())
            .ok_or_else(|| EngineError::InitLaw("covariance must be positive definite".into()))
    }

    /// One draw per particle, particle `i` using its own initial-condition
    /// stream.
    pub fn sample(&self, n: usize, seed: u64) -> Result<ParticleCloud, EngineError> {
        self.validate()?;
        let dim = self.dim();
        let mut coords = vec![0.0; n * dim];
        match self {
            Self::Constant { value } => coords.chunks_exact_mut(dim).for_each(|c| c.copy_from_slice(value)),
            Self::TwoPoint { a, b, weight } => {
                for (i, c) in coords.chunks_exact_mut(dim).enumerate() {
                    let u: f64 = init_rng(seed, i).random();
                    c.copy_from_slice(if u < *weight { a } else { b });
                }
            }
            Self::Gaussian { mean, .. } => {
                let l = self.cholesky()?;
                let mu = DVector::from_column_slice(mean);
                for (i, c) in coords.chunks_exact_mut(dim).enumerate() {
                    let mut rng = init_rng(seed, i);
                    let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let x = &mu + &l * z;
                    c.copy_from_slice(x.as_slice());
                }
            }
        }
        Ok(ParticleCloud::new(dim, coords)?)
    }
}

fn noise_rng(seed: u64, particle: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * particle as u64);
    rng
}

fn init_rng(seed: u64, particle: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * particle as u64 + 1);
    rng
}

/// Recorded clouds of one run; particle `i` keeps its index in every cloud,
/// so the clouds double as the per-particle paths.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    flow: MeasureFlow,
    sim_grid: TimeGrid,
}

impl PathEnsemble {
    pub fn flow(&self) -> &MeasureFlow {
        &self.flow
    }

    pub fn into_flow(self) -> MeasureFlow {
        self.flow
    }

    /// The grid the clouds are recorded on.
    pub fn grid(&self) -> &TimeGrid {
        self.flow.grid()
    }

    /// The grid the scheme stepped on.
    pub fn sim_grid(&self) -> &TimeGrid {
        &self.sim_grid
    }

    pub fn n_particles(&self) -> usize {
        self.flow.n_particles()
    }

    /// Recorded path of particle `i`, one state per recorded time.
    pub fn path(&self, i: usize) -> Vec<&[f64]> {
        self.flow.clouds().iter().map(|c| c.point(i)).collect()
    }

    pub fn moment_curve(&self, p: f64) -> Result<Vec<f64>, EngineError> {
        moment_curve(&self.flow, p)
    }

    /// `X − X̃` particle by particle, for ensembles from [`simulate_coupled`].
    pub fn difference(&self, other: &Self) -> Result<MeasureFlow, EngineError> {
        difference_flow(&self.flow, &other.flow)
    }
}

struct Scratch {
    drift: Vec<f64>,
    diffusion: Vec<f64>,
    z: Vec<f64>,
}

/// Runs the scheme `X_{k+1} = X_k + b(t_k, X_k, μ_k) dt + σ(t_k, X_k, μ_k) √dt Z_k`.
///
/// With `frozen_flow`, `μ_k` is its cloud at `t_k` and the flow must be given
/// on the full simulation grid; otherwise `μ_k` is the ensemble's own
/// empirical cloud.
pub fn simulate(
    model: &ModelSpec,
    init: &InitialLaw,
    cfg: &SimConfig,
    frozen_flow: Option<&MeasureFlow>,
) -> Result<PathEnsemble, EngineError> {
    let (m, d, n) = (model.dim_state, model.dim_noise, cfg.n_particles);
    if init.dim() != m {
        return Err(EngineError::InitDim {
            expected: m,
            got: init.dim(),
        });
    }
    let interacting = frozen_flow.is_none() && !model.is_measure_free();
    if n == 0 || (interacting && n < 2) {
        return Err(EngineError::TooFewParticles);
    }
    if let Some(f) = frozen_flow {
        if f.grid() != &cfg.grid || f.dim() != m {
            return Err(EngineError::FrozenFlow { dim: m });
        }
    }
    let record_grid = cfg.record_grid()?;
    let grid = cfg.grid;
    let sqrt_dt = grid.dt.sqrt();

    let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|i| noise_rng(cfg.seed, i)).collect();
    let mut current = init.sample(n, cfg.seed)?;
    let mut clouds = Vec::with_capacity(record_grid.len());
    clouds.push(current.clone());

    for k in 0..grid.steps {
        let t = grid.time(k);
        let law = frozen_flow.map_or(&current, |f| f.cloud(k));
        let snap = model.snapshot(t, law)?;
        let mut next = vec![0.0; n * m];
        next.par_chunks_mut(m)
            .zip(rngs.par_iter_mut())
            .enumerate()
            .with_min_len(256)
            .for_each_init(
                || Scratch {
                    drift: vec![0.0; m],
                    diffusion: vec![0.0; m * d],
                    z: vec![0.0; d],
                },
                |s, (i, (out, rng))| {
                    let x = current.point(i);
                    model.drift_into(&snap, x, &mut s.drift);
                    model.diffusion_into(&snap, x, &mut s.diffusion);
                    for z in s.z.iter_mut() {
                        *z = rng.sample::<f64, _>(StandardNormal) * sqrt_dt;
                    }
                    for j in 0..m {
                        let row = &s.diffusion[j * d..(j + 1) * d];
                        let noise: f64 = row.iter().zip(&s.z).map(|(a, b)| a * b).sum();
                        out[j] = x[j] + s.drift[j] * grid.dt + noise;
                    }
                },
            );
        if next.iter().any(|v| !v.is_finite()) {
            return Err(EngineError::BlowUp {
                step: k + 1,
                t: grid.time(k + 1),
            });
        }
        drop(snap);
        current = ParticleCloud::from_raw(m, next);
        if (k + 1) % cfg.record_every == 0 {
            clouds.push(current.clone());
        }
    }
    Ok(PathEnsemble {
        flow: MeasureFlow::from_parts(record_grid, clouds),
        sim_grid: grid,
    })
}

/// Two self-interacting ensembles driven by identical noise increments.
pub fn simulate_coupled(
    model_a: &ModelSpec,
    model_b: &ModelSpec,
    init_a: &InitialLaw,
    init_b: &InitialLaw,
    cfg: &SimConfig,
) -> Result<(PathEnsemble, PathEnsemble), EngineError> {
    if model_a.dim_state != model_b.dim_state || model_a.dim_noise != model_b.dim_noise {
        return Err(EngineError::CoupledDims);
    }
    let a = simulate(model_a, init_a, cfg, None)?;
    let b = simulate(model_b, init_b, cfg, None)?;
    Ok((a, b))
}

pub fn difference_flow(a: &MeasureFlow, b: &MeasureFlow) -> Result<MeasureFlow, EngineError> {
    if a.grid() != b.grid() {
        return Err(EngineError::Shape);
    }
    let clouds = a
        .clouds()
        .iter()
        .zip(b.clouds())
        .map(|(x, y)| x.difference(y))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MeasureFlow::from_parts(*a.grid(), clouds))
}

/// `E|X_t|^p` at every recorded time.
pub fn moment_curve(flow: &MeasureFlow, p: f64) -> Result<Vec<f64>, EngineError> {
    Ok(flow.moment_curve(p)?)
}

/// Moment curve together with its Monte Carlo standard error
/// `sd(|X|^p)/√N` per time.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentStats {
    pub value: Vec<f64>,
    pub mc_sigma: Vec<f64>,
}

pub fn moment_stats(flow: &MeasureFlow, p: f64) -> Result<MomentStats, EngineError> {
    let mut value = Vec::with_capacity(flow.clouds().len());
    let mut mc_sigma = Vec::with_capacity(flow.clouds().len());
    for c in flow.clouds() {
        let v = moment(c, p)?;
        let n = c.len();
        let sigma = if n < 2 {
            0.0
        } else {
            let dev: Vec<f64> = c.points().map(|x| (norm(x).powf(p) - v).powi(2)).collect();
            (pairwise_mean(&dev) * n as f64 / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        };
        value.push(v);
        mc_sigma.push(sigma);
    }
    Ok(MomentStats { value, mc_sigma })
}

/// Mean curve of a scalar flow with its standard error.
pub fn mean_stats(flow: &MeasureFlow) -> Result<MomentStats, EngineError> {
    if flow.dim() != 1 {
        return Err(EngineError::Measure(MeasureError::NotScalar(flow.dim())));
    }
    let mut value = Vec::new();
    let mut mc_sigma = Vec::new();
    for c in flow.clouds() {
        let m = pairwise_mean(c.coords());
        let n = c.len() as f64;
        let dev: Vec<f64> = c.coords().iter().map(|x| (x - m).powi(2)).collect();
        let var = if c.len() < 2 { 0.0 } else { pairwise_mean(&dev) * n / (n - 1.0) };
        value.push(m);
        mc_sigma.push((var / n).sqrt());
    }
    Ok(MomentStats { value, mc_sigma })
}

fn norm(x: &[f64]) -> f64 {
    if x.len() == 1 {
        x[0].abs()
    } else {
        x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Window estimates of `limsup t^{−α} log|Y_t|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathwiseEstimate {
    pub per_path: Vec<f64>,
    pub max: f64,
    pub mean: f64,
    /// Paths touching exactly zero inside the window.
    pub excluded: usize,
}

/// Per path, the maximum of `t^{−α} log|Y_t|` over the latter half of
/// `window`. `paths[i][k]` is `|Y_{t_k}|` of path `i`.
pub fn pathwise_exponent(times: &[f64], paths: &[Vec<f64>], alpha: f64, window: (f64, f64)) -> Result<PathwiseEstimate, EngineError> {
    let (lo, hi) = window;
    let mid = 0.5 * (lo + hi);
    let in_window: Vec<usize> = (0..times.len())
        .filter(|&k| times[k] >= lo && times[k] <= hi && times[k] > 0.0)
        .collect();
    let tail: Vec<usize> = in_window.iter().copied().filter(|&k| times[k] >= mid).collect();
    if tail.is_empty() {
        return Err(EngineError::EmptyWindow);
    }
    let mut per_path = Vec::with_capacity(paths.len());
    let mut excluded = 0;
    for path in paths {
        if in_window.iter().any(|&k| path[k] == 0.0) {
            excluded += 1;
            continue;
        }
        let best = tail
            .iter()
            .map(|&k| path[k].ln() / times[k].powf(alpha))
            .fold(f64::NEG_INFINITY, f64::max);
        per_path.push(best);
    }
    let max = per_path.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = if per_path.is_empty() { f64::NAN } else { pairwise_mean(&per_path) };
    Ok(PathwiseEstimate {
        per_path,
        max,
        mean,
        excluded,
    })
}

/// [`pathwise_exponent`] on a difference flow, using `|Y|` per particle.
pub fn pathwise_exponent_flow(diff: &MeasureFlow, alpha: f64, window: (f64, f64)) -> Result<PathwiseEstimate, EngineError> {
    let times = diff.grid().times();
    let n = diff.n_particles();
    let paths: Vec<Vec<f64>> = (0..n).map(|i| diff.clouds().iter().map(|c| norm(c.point(i))).collect()).collect();
    pathwise_exponent(&times, &paths, alpha, window)
}

/// Shortest decimal text that reads back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Ensemble CSV: `t, particle_id, x_1..x_m`.
pub fn write_ensemble_csv<W: Write>(flow: &MeasureFlow, out: W) -> Result<(), EngineError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "particle_id".to_string()];
    header.extend((1..=flow.dim()).map(|j| format!("x_{j}")));
    w.write_record(&header)?;
    for (k, c) in flow.clouds().iter().enumerate() {
        let t = fmt_f64(flow.grid().time(k));
        for (i, x) in c.points().enumerate() {
            let mut row = vec![t.clone(), i.to_string()];
            row.extend(x.iter().map(|v| fmt_f64(*v)));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Curve CSV: `t` followed by one column per named series.
pub fn write_curves_csv<W: Write>(times: &[f64], columns: &[(&str, &[f64])], out: W) -> Result<(), EngineError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t"];
    header.extend(columns.iter().map(|c| c.0));
    w.write_record(&header)?;
    for (k, t) in times.iter().enumerate() {
        let mut row = vec![fmt_f64(*t)];
        row.extend(columns.iter().map(|c| fmt_f64(c.1[k])));
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
