//! Bound reports: certified curves next to empirical ones, with a verdict.
//!
//! A point passes when
//! `empirical ≤ bound + tolerance·|bound| + 3·mc_sigma + allowance`,
//! where `allowance` is an optional per-point discretisation term (see
//! [`euler_allowance`]).

use crate::coefficients::{
    check_envelope, gamma_delta_hoelder, gamma_lipschitz, gamma_pq, lyapunov_from_envelope, sample_curve, CoefficientError, EnvelopeCheck,
    GrowthProfile, HoelderProfile, LipschitzProfile, PowerEnvelope,
};
use crate::engine::{difference_flow, moment_stats, pathwise_exponent_flow, EngineError, PathEnsemble};
use crate::measures::MeasureFlow;
use crate::numeric::pairwise_mean;
use crate::picard::growth_bound_curve;
use crate::time::{linear_comparison_bound, TimeGrid};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Coefficient(#[from] CoefficientError),
    #[error("ensembles are recorded on different grids")]
    GridMismatch,
    #[error("profile order p = {profile} differs from the requested p = {requested}")]
    Order { profile: f64, requested: f64 },
    #[error("stability exponent must be negative, got {0}")]
    Exponent(f64),
    #[error("stability order and constant must be positive, got alpha = {alpha}, c = {c}")]
    StabilityShape { alpha: f64, c: f64 },
    #[error("certificate refused: gamma = {gamma} exceeds envelope {envelope} at t = {t}")]
    Refused { t: f64, gamma: f64, envelope: f64 },
    #[error("allowance has {got} points, grid has {expected}")]
    Allowance { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub verdict: Verdict,
    /// First grid time where the rule fails.
    pub t_star: Option<f64>,
    pub grid: TimeGrid,
    pub tolerance: f64,
    pub t: Vec<f64>,
    pub bound: Vec<f64>,
    pub empirical: Vec<f64>,
    pub mc_sigma: Vec<f64>,
    pub allowance: Vec<f64>,
    /// Scalar by-products (fitted slope, exponents, counts) by name.
    pub details: BTreeMap<String, f64>,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// Stable JSON rendering; non-finite numbers become `null`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOptions {
    /// Relative slack on the bound.
    pub tolerance: f64,
    /// Multiple of the Monte Carlo standard error granted.
    pub sigma_mult: f64,
    pub allowance: Option<Vec<f64>>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            tolerance: 0.02,
            sigma_mult: 3.0,
            allowance: None,
        }
    }
}

impl CheckOptions {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self {
            tolerance,
            ..Self::default()
        }
    }
}

/// Assembles a report and applies the pointwise verdict rule.
pub fn build_report(
    name: &str,
    grid: TimeGrid,
    bound: Vec<f64>,
    empirical: Vec<f64>,
    mc_sigma: Vec<f64>,
    opts: &CheckOptions,
) -> Result<BoundReport, VerifyError> {
    let n = grid.len();
    let allowance = match &opts.allowance {
        Some(a) if a.len() != n => return Err(VerifyError::Allowance { expected: n, got: a.len() }),
        Some(a) => a.clone(),
        None => vec![0.0; n],
    };
    let t = grid.times();
    let mut t_star = None;
    for k in 0..n {
        let limit = bound[k] + opts.tolerance * bound[k].abs() + opts.sigma_mult * mc_sigma[k] + allowance[k];
        if !(empirical[k] <= limit) {
            t_star = Some(t[k]);
            break;
        }
    }
    Ok(BoundReport {
        name: name.to_string(),
        verdict: if t_star.is_some() { Verdict::Fail } else { Verdict::Pass },
        t_star,
        grid,
        tolerance: opts.tolerance,
        t,
        bound,
        empirical,
        mc_sigma,
        allowance,
        details: BTreeMap::new(),
    })
}

/// Discretisation allowance `2|e(dt) − e(dt/2)|` for an estimator whose
/// bias is linear in the step, from two runs recorded on the same grid.
pub fn euler_allowance(coarse: &[f64], fine: &[f64]) -> Vec<f64> {
    coarse.iter().zip(fine).map(|(a, b)| 2.0 * (a - b).abs()).collect()
}

/// Regularity data for a moment comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ComparisonProfile {
    Lipschitz(LipschitzProfile),
    Hoelder(HoelderProfile),
}

impl ComparisonProfile {
    pub fn p(&self) -> f64 {
        match self {
            Self::Lipschitz(l) => l.p,
            Self::Hoelder(h) => h.p,
        }
    }

    /// `(γ_{p,𝒫}(t), δ_{p,𝒫}(t))`.
    pub fn coefficients(&self, t: f64) -> Result<(f64, f64), CoefficientError> {
        match self {
            Self::Lipschitz(l) => Ok((gamma_lipschitz(l, t)?, 0.0)),
            Self::Hoelder(h) => gamma_delta_hoelder(h, t),
        }
    }
}

fn coupled_difference(a: &PathEnsemble, b: &PathEnsemble) -> Result<MeasureFlow, VerifyError> {
    if a.grid() != b.grid() {
        return Err(VerifyError::GridMismatch);
    }
    Ok(difference_flow(a.flow(), b.flow())?)
}

/// `e^{∫γ} E|Y_{t0}|^p + ∫ e^{∫_s^t γ} δ(s) ds` against the moment of the
/// coupled difference.
pub fn check_moment_comparison(
    a: &PathEnsemble,
    b: &PathEnsemble,
    profile: &ComparisonProfile,
    p: f64,
    opts: &CheckOptions,
) -> Result<BoundReport, VerifyError> {
    if profile.p() != p {
        return Err(VerifyError::Order {
            profile: profile.p(),
            requested: p,
        });
    }
    let diff = coupled_difference(a, b)?;
    let grid = *diff.grid();
    let gamma = sample_curve(&grid, |t| profile.coefficients(t).map(|c| c.0))?;
    let delta = sample_curve(&grid, |t| profile.coefficients(t).map(|c| c.1))?;
    let stats = moment_stats(&diff, p)?;
    let bound = linear_comparison_bound(&gamma, &delta, grid.dt, stats.value[0]);
    build_report("moment_comparison", grid, bound, stats.value, stats.mc_sigma, opts)
}

/// `c e^{λ (t − t0)^α} E|Y_{t0}|^p` against the coupled difference, with the
/// least-squares slope of `log E|Y_t|^p` on `(t − t0)^α`.
#[allow(clippy::too_many_arguments)]
pub fn check_exponential_stability(
    a: &PathEnsemble,
    b: &PathEnsemble,
    lambda: f64,
    alpha: f64,
    c: f64,
    p: f64,
    opts: &CheckOptions,
) -> Result<BoundReport, VerifyError> {
    if !(lambda < 0.0) {
        return Err(VerifyError::Exponent(lambda));
    }
    if !(alpha > 0.0 && c > 0.0) {
        return Err(VerifyError::StabilityShape { alpha, c });
    }
    let diff = coupled_difference(a, b)?;
    let grid = *diff.grid();
    let stats = moment_stats(&diff, p)?;
    let y0 = stats.value[0];
    let s: Vec<f64> = grid.times().iter().map(|t| (t - grid.t0).powf(alpha)).collect();
    let bound: Vec<f64> = s.iter().map(|s| c * (lambda * s).exp() * y0).collect();
    let slope = log_slope(&s, &stats.value);
    let mut report = build_report("exponential_stability", grid, bound, stats.value, stats.mc_sigma, opts)?;
    report.details.insert("slope".into(), slope);
    report.details.insert("lambda".into(), lambda);
    report.details.insert("alpha".into(), alpha);
    report.details.insert("c".into(), c);
    Ok(report)
}

/// Ordinary least-squares slope of `ln y` against `x` over points with
/// `y > 0`; NaN with fewer than two such points.
pub fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(_, y)| **y > 0.0).map(|(x, y)| (*x, y.ln())).collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (mx, my) = (pairwise_mean(&xs), pairwise_mean(&ys));
    let sxy: Vec<f64> = pts.iter().map(|(x, y)| (x - mx) * (y - my)).collect();
    let sxx: Vec<f64> = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).collect();
    pairwise_mean(&sxy) / pairwise_mean(&sxx)
}

/// The growth bound from `f_{p,𝒫}`, `g_{p,𝒫}` started at the empirical
/// `E|X_{t0}|^p`, against the ensemble's moment curve.
pub fn check_growth(ensemble: &PathEnsemble, growth: &GrowthProfile, p: f64, opts: &CheckOptions) -> Result<BoundReport, VerifyError> {
    if growth.p != p {
        return Err(VerifyError::Order {
            profile: growth.p,
            requested: p,
        });
    }
    let flow = ensemble.flow();
    let stats = moment_stats(flow, p)?;
    let bound = growth_bound_curve(flow, growth, stats.value[0])?;
    build_report("growth", *flow.grid(), bound, stats.value, stats.mc_sigma, opts)
}

/// Pathwise estimation window; `None` uses `[T/2, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PathwiseOptions {
    pub window: Option<(f64, f64)>,
}

/// Certifies the pathwise exponent `λ̂_l/(pq)` at order `α_l` from an
/// envelope on `γ_{pq,𝒫}`, then compares the mean window estimate against
/// it: pass when `empirical ≤ certified + 0.1·|certified|`.
///
/// The bound curve holds the certified exponent; the empirical curve holds
/// the sample mean of `t^{−α} log|Y_t|` per time.
pub fn certify_pathwise(
    a: &PathEnsemble,
    b: &PathEnsemble,
    profile: &LipschitzProfile,
    p: f64,
    q: f64,
    envelope: &PowerEnvelope,
    opts: &PathwiseOptions,
) -> Result<BoundReport, VerifyError> {
    if profile.p != p {
        return Err(VerifyError::Order {
            profile: profile.p,
            requested: p,
        });
    }
    let diff = coupled_difference(a, b)?;
    let grid = *diff.grid();
    let gamma = sample_curve(&grid, |t| gamma_pq(profile, q, t))?;
    if let EnvelopeCheck::Violated { t, gamma, envelope } = check_envelope(&gamma, &grid, envelope)? {
        return Err(VerifyError::Refused { t, gamma, envelope });
    }
    let (certified, order) = lyapunov_from_envelope(envelope, p * q)?;
    let window = opts.window.unwrap_or((grid.t0 + 0.5 * grid.horizon(), grid.end()));
    let est = pathwise_exponent_flow(&diff, order, window)?;

    let n = diff.n_particles();
    let mut empirical = Vec::with_capacity(grid.len());
    let mut sigma = Vec::with_capacity(grid.len());
    for (k, c) in diff.clouds().iter().enumerate() {
        let t = grid.time(k);
        let vals: Vec<f64> = c
            .points()
            .map(|y| y.iter().map(|v| v * v).sum::<f64>().sqrt())
            .filter(|r| *r > 0.0)
            .map(|r| r.ln() / t.powf(order))
            .collect();
        if t <= 0.0 || vals.is_empty() {
            empirical.push(f64::NAN);
            sigma.push(f64::NAN);
            continue;
        }
        let m = pairwise_mean(&vals);
        let dev: Vec<f64> = vals.iter().map(|v| (v - m) * (v - m)).collect();
        let len = vals.len() as f64;
        let var = if vals.len() > 1 {
            pairwise_mean(&dev) * len / (len - 1.0)
        } else {
            0.0
        };
        empirical.push(m);
        sigma.push((var / len).sqrt());
    }
    let tolerance = 0.1;
    let pass = est.mean <= certified + tolerance * certified.abs();
    let mut details = BTreeMap::new();
    details.insert("certified_exponent".into(), certified);
    details.insert("order".into(), order);
    details.insert("empirical_exponent".into(), est.mean);
    details.insert("empirical_exponent_max".into(), est.max);
    details.insert("excluded_paths".into(), est.excluded as f64);
    details.insert("paths".into(), n as f64);
    details.insert("window_lo".into(), window.0);
    details.insert("window_hi".into(), window.1);
    details.insert("pq".into(), p * q);
    Ok(BoundReport {
        name: "pathwise".into(),
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        t_star: if pass { None } else { Some(window.1) },
        grid,
        tolerance,
        t: grid.times(),
        bound: vec![certified; grid.len()],
        empirical,
        mc_sigma: sigma,
        allowance: vec![0.0; grid.len()],
        details,
    })
}
