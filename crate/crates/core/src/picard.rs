//! Picard iteration `μ_n := Law(X^{ξ, μ_{n−1}})` on measure flows, the
//! a-priori error estimate for the iterates, and the growth-invariant set
//! test.

use crate::coefficients::{error_coefficients, growth_coeffs, sample_curve, CoefficientError, GrowthProfile, LipschitzProfile};
use crate::engine::{moment_stats, simulate, EngineError, InitialLaw, SimConfig};
use crate::measures::{DistanceMethod, MeasureError, MeasureFlow, DEFAULT_EXACT_CAP};
use crate::models::ModelSpec;
use crate::time::linear_comparison_bound;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PicardError {
    #[error("iterate {iteration}: {source}")]
    Iterate { iteration: usize, source: EngineError },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Coefficient(#[from] CoefficientError),
    #[error("Picard iteration needs record_every = 1 so iterates can be fed back")]
    Thinned,
    #[error("initial flow must live on the simulation grid")]
    InitialFlow,
    #[error("n_max must be at least 1")]
    NoIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardOptions {
    pub n_max: usize,
    /// Stop once `sup_t ϑ_p(μ_{n−1}(t), μ_n(t)) ≤ tol`.
    pub tol: f64,
    pub p: f64,
    /// Largest particle count solved by exact assignment when `m > 1`.
    pub exact_cap: usize,
    /// The error estimate is evaluated when a profile is supplied.
    pub profile: Option<LipschitzProfile>,
}

impl PicardOptions {
    pub fn new(n_max: usize, tol: f64, p: f64) -> Self {
        Self {
            n_max,
            tol,
            p,
            exact_cap: DEFAULT_EXACT_CAP,
            profile: None,
        }
    }

    pub fn with_profile(mut self, profile: LipschitzProfile) -> Self {
        self.profile = Some(profile);
        self
    }
}

#[derive(Debug, Clone)]
pub struct PicardState {
    /// `μ_0, μ_1, …`.
    pub iterates: Vec<MeasureFlow>,
    /// `distances[n] = sup_t ϑ_p(μ_n(t), μ_{n+1}(t))`.
    pub distances: Vec<f64>,
    /// Error estimate at the horizon for each `n` with a recorded distance.
    pub bound_curve: Vec<f64>,
    pub converged: bool,
    /// Weakest distance method used; proxies only bound the distance below.
    pub method: DistanceMethod,
    /// `Δ(T) = sup_{s≤T} ϑ_p(Law(X^{ξ,μ_0}_s), μ_0(s))`, divided by `c`.
    pub delta_t: f64,
    pub mc_noise_floor: f64,
}

impl PicardState {
    pub fn last(&self) -> &MeasureFlow {
        self.iterates.last().expect("state holds at least the initial flow")
    }

    pub fn iterations(&self) -> usize {
        self.iterates.len() - 1
    }

    pub fn summary(&self) -> PicardSummary {
        PicardSummary {
            iterations: self.iterations(),
            converged: self.converged,
            distances: self.distances.clone(),
            bounds: self.bound_curve.clone(),
            distance_method: self.method,
            distance_is_lower_bound: self.method.is_lower_bound(),
            delta_t: self.delta_t,
            mc_noise_floor: self.mc_noise_floor,
        }
    }
}

/// Serializable digest of a [`PicardState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardSummary {
    pub iterations: usize,
    pub converged: bool,
    pub distances: Vec<f64>,
    pub bounds: Vec<f64>,
    pub distance_method: DistanceMethod,
    pub distance_is_lower_bound: bool,
    pub delta_t: f64,
    pub mc_noise_floor: f64,
}

/// Iterates the law map from `mu0` (default: the constant flow of the
/// sampled initial cloud). Every iterate reuses `cfg.seed`, so successive
/// flows differ only through the flow they were frozen against.
pub fn picard_solve(
    model: &ModelSpec,
    init: &InitialLaw,
    cfg: &SimConfig,
    mu0: Option<MeasureFlow>,
    opts: &PicardOptions,
) -> Result<PicardState, PicardError> {
    if cfg.record_every != 1 {
        return Err(PicardError::Thinned);
    }
    if opts.n_max == 0 {
        return Err(PicardError::NoIterations);
    }
    let mu0 = match mu0 {
        Some(f) if f.grid() != &cfg.grid => return Err(PicardError::InitialFlow),
        Some(f) => f,
        None => MeasureFlow::constant(cfg.grid, init.sample(cfg.n_particles, cfg.seed)?),
    };
    let mut iterates = vec![mu0];
    let mut distances = Vec::new();
    let mut method = DistanceMethod::SortedMatching;
    let mut first_curve = Vec::new();
    let mut converged = false;
    for n in 1..=opts.n_max {
        let prev = iterates.last().expect("nonempty");
        let next = simulate(model, init, cfg, Some(prev))
            .map_err(|source| PicardError::Iterate { iteration: n, source })?
            .into_flow();
        let (curve, m) = prev.distance_curve(&next, opts.p, opts.exact_cap)?;
        method = weakest(method, m);
        let sup = curve.iter().copied().fold(0.0, f64::max);
        if n == 1 {
            first_curve = curve;
        }
        distances.push(sup);
        iterates.push(next);
        if sup <= opts.tol {
            converged = true;
            break;
        }
    }
    let c = opts.profile.as_ref().map_or(1.0, |p| p.c_pp);
    let delta_t = first_curve.iter().copied().fold(0.0, f64::max) / c;
    let bound_curve = match &opts.profile {
        Some(profile) => {
            let inner = inner_integral_curve(profile, cfg)?;
            let at_t = *inner.last().expect("grid has points");
            (0..distances.len())
                .map(|n| error_bound(at_t, delta_t, profile.c_pp, profile.p, n))
                .collect()
        }
        None => Vec::new(),
    };
    let mc_noise_floor = mc_noise_floor(iterates.last().expect("nonempty"), opts.p)?;
    Ok(PicardState {
        iterates,
        distances,
        bound_curve,
        converged,
        method,
        delta_t,
        mc_noise_floor,
    })
}

fn weakest(a: DistanceMethod, b: DistanceMethod) -> DistanceMethod {
    let rank = |m| match m {
        DistanceMethod::SortedMatching => 0,
        DistanceMethod::ExactAssignment => 1,
        DistanceMethod::MomentProxy => 2,
    };
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

/// `t ↦ ∫_{t0}^t e^{∫_s^t γ_p^+} δ(s) ds` on the simulation grid, from the
/// error coefficients of `profile`.
pub fn inner_integral_curve(profile: &LipschitzProfile, cfg: &SimConfig) -> Result<Vec<f64>, CoefficientError> {
    let gamma = sample_curve(&cfg.grid, |t| error_coefficients(profile, t).map(|g| g.0.max(0.0)))?;
    let delta = sample_curve(&cfg.grid, |t| error_coefficients(profile, t).map(|g| g.1))?;
    Ok(linear_comparison_bound(&gamma, &delta, cfg.grid.dt, 0.0))
}

/// `Δ(t) Σ_{i≥n} (c^i/i!)^{1/p} I(t)^{i/p}` where `I(t)` is the inner
/// integral. The series is cut once a term past the peak falls below
/// `1e-15` of the partial sum.
pub fn error_bound(inner: f64, delta_t: f64, c: f64, p: f64, n: usize) -> f64 {
    if delta_t == 0.0 {
        return 0.0;
    }
    let x = c * inner;
    if x <= 0.0 {
        return if n == 0 { delta_t } else { 0.0 };
    }
    let lnx = x.ln();
    let mut ln_fact: f64 = (1..=n).map(|k| (k as f64).ln()).sum();
    let mut sum = 0.0;
    let mut i = n;
    loop {
        let term = ((i as f64 * lnx - ln_fact) / p).exp();
        sum += term;
        let decreasing = x < (i + 1) as f64;
        if decreasing && term <= 1e-15 * sum {
            break;
        }
        i += 1;
        ln_fact += (i as f64).ln();
        if i > n + 10_000_000 {
            break;
        }
    }
    delta_t * sum
}

/// Distance-scale Monte Carlo floor: `sup_t (sd(|X_t|^p)/√N)^{1/p}`.
pub fn mc_noise_floor(flow: &MeasureFlow, p: f64) -> Result<f64, PicardError> {
    let stats = moment_stats(flow, p)?;
    Ok(stats.mc_sigma.iter().copied().fold(0.0, f64::max).powf(1.0 / p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum GrowthCheck {
    Member,
    Violated { t: f64, moment: f64, bound: f64 },
}

/// `e^{∫_{t0}^t f} E|ξ|^p + ∫_{t0}^t e^{∫_s^t f} g(s) ds` on the flow's grid.
pub fn growth_bound_curve(flow: &MeasureFlow, growth: &GrowthProfile, xi_moment: f64) -> Result<Vec<f64>, CoefficientError> {
    let grid = flow.grid();
    let f = sample_curve(grid, |t| growth_coeffs(growth, t).map(|c| c.0))?;
    let g = sample_curve(grid, |t| growth_coeffs(growth, t).map(|c| c.1))?;
    Ok(linear_comparison_bound(&f, &g, grid.dt, xi_moment))
}

/// Verifies `ϑ_p(μ(t), δ_0)^p ≤` [`growth_bound_curve`] at every grid point,
/// with relative slack `rel_slack` (0 for a strict test; rounding slack of
/// `1e-12` is always granted).
pub fn growth_invariant_check(
    flow: &MeasureFlow,
    growth: &GrowthProfile,
    xi_moment: f64,
    rel_slack: f64,
) -> Result<GrowthCheck, PicardError> {
    let bound = growth_bound_curve(flow, growth, xi_moment)?;
    let moments = flow.moment_curve(growth.p)?;
    for (k, (m, b)) in moments.iter().zip(&bound).enumerate() {
        if !(*m <= b * (1.0 + rel_slack.max(1e-12)) + 1e-300) {
            return Ok(GrowthCheck::Violated {
                t: flow.grid().time(k),
                moment: *m,
                bound: *b,
            });
        }
    }
    Ok(GrowthCheck::Member)
}
