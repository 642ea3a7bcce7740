//! Regularity profiles and the explicit coefficient calculus: stability
//! coefficients `γ_p`, `δ_p` under mixed Hölder conditions, the Lipschitz
//! reduction, the higher-order coefficient `γ_{pq}`, growth coefficients
//! `f_p`, `g_p`, and power envelopes with their Lyapunov exponents.
//!
//! Coefficients are deterministic time functions, so a bracket `[x]_q`
//! evaluates to `x⁺` for `q < ∞` and to `x` for `q = ∞`.

use crate::measures::{essential_bracket, MeasureError, Sample};
use crate::time::{TimeFunction, TimeGrid};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoefficientError {
    #[error("profile vectors disagree in length: {0}")]
    Shape(String),
    #[error("profile needs at least one term")]
    Empty,
    #[error("term {k}: exponents α = {alpha}, β = {beta} must satisfy α, β, α+β ∈ [0, 1]")]
    Exponents { k: usize, alpha: f64, beta: f64 },
    #[error("term {k}: α+β = 1 forces the weight {name} to be 1, found {value} at t = {t}")]
    ForcedWeight { k: usize, name: &'static str, value: f64, t: f64 },
    #[error("{name} must be nonnegative, found {value} at t = {t}")]
    Negative { name: String, value: f64, t: f64 },
    #[error("moment order must be at least 2, got {0}")]
    Order(f64),
    #[error("domination constant must be finite and nonnegative, got {0}")]
    Domination(f64),
    #[error("second order q must be at least 2, got {0}")]
    SecondOrder(f64),
    #[error("envelope needs λ̂_l < 0, got {0}")]
    NonNegativeRate(f64),
    #[error("envelope exponents must be positive and strictly increasing")]
    EnvelopeExponents,
    #[error("envelope needs max s_k ≤ t1")]
    EnvelopeShift,
    #[error("moment order for the exponent must be positive, got {0}")]
    MomentOrder(f64),
    #[error("non-finite coefficient value at t = {0}")]
    NonFinite(f64),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// `c_p = (p − 1)/2`.
pub fn c_p(p: f64) -> f64 {
    (p - 1.0) / 2.0
}

fn check_order(p: f64) -> Result<(), CoefficientError> {
    if !(p >= 2.0 && p.is_finite()) {
        return Err(CoefficientError::Order(p));
    }
    Ok(())
}

fn check_domination(c: f64) -> Result<(), CoefficientError> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(CoefficientError::Domination(c));
    }
    Ok(())
}

/// Mixed Hölder data: `α, β`, weights `ζ, ζ̂`, drift coefficients `η_k`
/// (signed) and diffusion coefficients `η̂_k` (nonnegative).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoelderProfile {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub zeta: Vec<TimeFunction>,
    pub zeta_hat: Vec<TimeFunction>,
    pub eta: Vec<TimeFunction>,
    pub eta_hat: Vec<TimeFunction>,
    pub p: f64,
    pub c_pp: f64,
}

/// Growth data with the same shape: `υ_k`, `υ̂_k` and weights `κ, κ̂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthProfile {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub kappa: Vec<TimeFunction>,
    pub kappa_hat: Vec<TimeFunction>,
    pub upsilon: Vec<TimeFunction>,
    pub upsilon_hat: Vec<TimeFunction>,
    pub p: f64,
    pub c_pp: f64,
}

/// Partial Lipschitz data for the drift and complete Lipschitz data for the
/// diffusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzProfile {
    pub eta1: TimeFunction,
    pub eta2: TimeFunction,
    pub etahat1: TimeFunction,
    pub etahat2: TimeFunction,
    pub p: f64,
    pub c_pp: f64,
}

struct TermData<'a> {
    alpha: &'a [f64],
    beta: &'a [f64],
    drift: Vec<f64>,
    diffusion: Vec<f64>,
    weight: Vec<f64>,
    weight_hat: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn gather<'a>(
    alpha: &'a [f64],
    beta: &'a [f64],
    weight: &[TimeFunction],
    weight_hat: &[TimeFunction],
    drift: &[TimeFunction],
    diffusion: &[TimeFunction],
    names: [&'static str; 4],
    t: f64,
) -> Result<TermData<'a>, CoefficientError> {
    let l = alpha.len();
    if l == 0 {
        return Err(CoefficientError::Empty);
    }
    for (name, n) in [
        ("beta", beta.len()),
        (names[0], weight.len()),
        (names[1], weight_hat.len()),
        (names[2], drift.len()),
        (names[3], diffusion.len()),
    ] {
        if n != l {
            return Err(CoefficientError::Shape(format!("{name} has {n} entries, alpha has {l}")));
        }
    }
    let eval = |fs: &[TimeFunction]| -> Result<Vec<f64>, CoefficientError> {
        fs.iter()
            .map(|f| {
                let v = f.eval(t);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(CoefficientError::NonFinite(t))
                }
            })
            .collect()
    };
    let data = TermData {
        alpha,
        beta,
        drift: eval(drift)?,
        diffusion: eval(diffusion)?,
        weight: eval(weight)?,
        weight_hat: eval(weight_hat)?,
    };
    for k in 0..l {
        let (a, b) = (alpha[k], beta[k]);
        if !((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b) && a + b <= 1.0) {
            return Err(CoefficientError::Exponents { k, alpha: a, beta: b });
        }
        for (name, vals) in [(names[0], &data.weight), (names[1], &data.weight_hat), (names[3], &data.diffusion)] {
            if vals[k] < 0.0 {
                return Err(CoefficientError::Negative {
                    name: format!("{name}[{k}]"),
                    value: vals[k],
                    t,
                });
            }
        }
        if a + b == 1.0 {
            for (name, vals) in [(names[0], &data.weight), (names[1], &data.weight_hat)] {
                if vals[k] != 1.0 {
                    return Err(CoefficientError::ForcedWeight {
                        k,
                        name,
                        value: vals[k],
                        t,
                    });
                }
            }
        }
    }
    Ok(data)
}

/// Shared by the stability and growth calculus: the rate
/// `Σ_k (p−1+α_k+β_k) c^{β_k} [η_k] + c_p Σ_{j,k} (p−2+α_j+α_k+β_j+β_k) c^{β_j+β_k} η̂_j η̂_k`
/// and the additive term
/// `Σ_k (1−α_k−β_k) c^{β_k} ζ_k^{p/(1−α_k−β_k)} [η_k] + c_p Σ_{j,k} (2−…) c^{β_j+β_k} (ζ̂_j ζ̂_k)^{p/(2−…)} η̂_j η̂_k`.
/// A term whose prefactor vanishes contributes exactly zero.
fn hoelder_core(d: &TermData<'_>, p: f64, c: f64) -> (f64, f64) {
    let l = d.alpha.len();
    let cp = c_p(p);
    let bracket = |k: usize| if d.alpha[k] == 1.0 { d.drift[k] } else { d.drift[k].max(0.0) };
    let mut rate_drift = 0.0;
    let mut add_drift = 0.0;
    for k in 0..l {
        let (a, b) = (d.alpha[k], d.beta[k]);
        let cb = c.powf(b);
        rate_drift += (p - 1.0 + a + b) * cb * bracket(k);
        let gap = 1.0 - a - b;
        if gap > 0.0 {
            add_drift += gap * cb * d.weight[k].powf(p / gap) * bracket(k);
        }
    }
    let mut rate_diff = 0.0;
    let mut add_diff = 0.0;
    for j in 0..l {
        for k in 0..l {
            let s = d.alpha[j] + d.alpha[k] + d.beta[j] + d.beta[k];
            let cb = c.powf(d.beta[j] + d.beta[k]);
            let prod = d.diffusion[j] * d.diffusion[k];
            rate_diff += (p - 2.0 + s) * cb * prod;
            let gap = 2.0 - s;
            if gap > 0.0 {
                add_diff += gap * cb * (d.weight_hat[j] * d.weight_hat[k]).powf(p / gap) * prod;
            }
        }
    }
    (rate_drift + cp * rate_diff, add_drift + cp * add_diff)
}

/// `(γ_p(t), δ_p(t))` for a mixed Hölder profile.
pub fn gamma_delta_hoelder(profile: &HoelderProfile, t: f64) -> Result<(f64, f64), CoefficientError> {
    check_order(profile.p)?;
    check_domination(profile.c_pp)?;
    let d = gather(
        &profile.alpha,
        &profile.beta,
        &profile.zeta,
        &profile.zeta_hat,
        &profile.eta,
        &profile.eta_hat,
        ["zeta", "zeta_hat", "eta", "eta_hat"],
        t,
    )?;
    Ok(hoelder_core(&d, profile.p, profile.c_pp))
}

/// `(f_p(t), g_p(t))` for a growth profile.
pub fn growth_coeffs(profile: &GrowthProfile, t: f64) -> Result<(f64, f64), CoefficientError> {
    check_order(profile.p)?;
    check_domination(profile.c_pp)?;
    let d = gather(
        &profile.alpha,
        &profile.beta,
        &profile.kappa,
        &profile.kappa_hat,
        &profile.upsilon,
        &profile.upsilon_hat,
        ["kappa", "kappa_hat", "upsilon", "upsilon_hat"],
        t,
    )?;
    Ok(hoelder_core(&d, profile.p, profile.c_pp))
}

impl LipschitzProfile {
    pub fn validate_at(&self, t: f64) -> Result<[f64; 4], CoefficientError> {
        check_order(self.p)?;
        check_domination(self.c_pp)?;
        let vals = [self.eta1.eval(t), self.eta2.eval(t), self.etahat1.eval(t), self.etahat2.eval(t)];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(CoefficientError::NonFinite(t));
        }
        for (name, v) in ["eta2", "etahat1", "etahat2"].iter().zip(&vals[1..]) {
            if *v < 0.0 {
                return Err(CoefficientError::Negative {
                    name: (*name).into(),
                    value: *v,
                    t,
                });
            }
        }
        Ok(vals)
    }

    /// The equivalent Hölder profile with `l = 2`, `α = (1, 0)`, `β = (0, 1)`.
    pub fn to_hoelder(&self) -> HoelderProfile {
        let one = TimeFunction::constant(1.0);
        HoelderProfile {
            alpha: vec![1.0, 0.0],
            beta: vec![0.0, 1.0],
            zeta: vec![one.clone(), one.clone()],
            zeta_hat: vec![one.clone(), one],
            eta: vec![self.eta1.clone(), self.eta2.clone()],
            eta_hat: vec![self.etahat1.clone(), self.etahat2.clone()],
            p: self.p,
            c_pp: self.c_pp,
        }
    }
}

fn lipschitz_rate(vals: [f64; 4], p: f64, c: f64) -> f64 {
    let [e1, e2, h1, h2] = vals;
    p * (e1 + c * e2 + c_p(p) * (h1 * h1 + 2.0 * c * h1 * h2 + c * c * h2 * h2))
}

/// `γ_p(t) = p(η1 + c[η2] + c_p([η̂1]² + 2c[η̂1 η̂2] + c²[η̂2]²))`.
pub fn gamma_lipschitz(profile: &LipschitzProfile, t: f64) -> Result<f64, CoefficientError> {
    let vals = profile.validate_at(t)?;
    Ok(lipschitz_rate(vals, profile.p, profile.c_pp))
}

/// The same rate at moment order `pq`, with `c_pp` read as the domination
/// constant at that order.
pub fn gamma_pq(profile: &LipschitzProfile, q: f64, t: f64) -> Result<f64, CoefficientError> {
    if !(q >= 2.0 && q.is_finite()) {
        return Err(CoefficientError::SecondOrder(q));
    }
    gamma_at_order(profile, profile.p * q, t)
}

/// The Lipschitz rate evaluated at an arbitrary moment order `r ≥ 2`;
/// [`gamma_lipschitz`] is the case `r = p` and [`gamma_pq`] the case `r = pq`.
pub fn gamma_at_order(profile: &LipschitzProfile, order: f64, t: f64) -> Result<f64, CoefficientError> {
    check_order(order)?;
    let vals = profile.validate_at(t)?;
    Ok(lipschitz_rate(vals, order, profile.c_pp))
}

/// Rate and additive coefficients for the Picard error estimate:
/// `γ_p = pη1 + (p−1)η2 + c_p(pη̂1² + 2(p−1)η̂1η̂2 + (p−2)η̂2²)` and
/// `δ = η2 + 2c_p(η̂1η̂2 + η̂2²)`.
pub fn error_coefficients(profile: &LipschitzProfile, t: f64) -> Result<(f64, f64), CoefficientError> {
    let [e1, e2, h1, h2] = profile.validate_at(t)?;
    let p = profile.p;
    let cp = c_p(p);
    let gamma = p * e1 + (p - 1.0) * e2 + cp * (p * h1 * h1 + 2.0 * (p - 1.0) * h1 * h2 + (p - 2.0) * h2 * h2);
    let delta = e2 + 2.0 * cp * (h1 * h2 + h2 * h2);
    Ok((gamma, delta))
}

/// A coefficient function sampled on a grid.
pub fn sample_curve<F>(grid: &TimeGrid, mut f: F) -> Result<Vec<f64>, CoefficientError>
where
    F: FnMut(f64) -> Result<f64, CoefficientError>,
{
    (0..grid.len()).map(|k| f(grid.time(k))).collect()
}

/// `[X Y]_{p/(2−α_j−α_k)}` from joint draws of two nonnegative coefficients.
pub fn product_bracket(x: &Sample, y: &Sample, p: f64, alpha_j: f64, alpha_k: f64) -> Result<f64, CoefficientError> {
    if x.values().len() != y.values().len() {
        return Err(MeasureError::CountMismatch(x.values().len(), y.values().len()).into());
    }
    let prod = Sample::new(x.values().iter().zip(y.values()).map(|(a, b)| a * b).collect())?;
    Ok(essential_bracket(&prod, bracket_order(p, 2.0 - alpha_j - alpha_k))?)
}

/// The Hölder upper bound `[X]_{p/(1−α_j)} [Y]_{p/(1−α_k)}` on
/// [`product_bracket`], usable when only marginal draws are available.
pub fn product_bracket_upper(x: &Sample, y: &Sample, p: f64, alpha_j: f64, alpha_k: f64) -> Result<f64, CoefficientError> {
    let bx = essential_bracket(x, bracket_order(p, 1.0 - alpha_j))?;
    let by = essential_bracket(y, bracket_order(p, 1.0 - alpha_k))?;
    Ok(bx * by)
}

fn bracket_order(p: f64, gap: f64) -> f64 {
    if gap <= 0.0 {
        f64::INFINITY
    } else {
        p / gap
    }
}

/// `Σ_k λ̂_k α_k (s − s_k)^{α_k − 1}` on `[t1, ∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerEnvelope {
    pub alpha: Vec<f64>,
    pub lambda_hat: Vec<f64>,
    pub s: Vec<f64>,
    pub t1: f64,
}

impl PowerEnvelope {
    pub fn validate(&self) -> Result<(), CoefficientError> {
        let l = self.alpha.len();
        if l == 0 {
            return Err(CoefficientError::Empty);
        }
        if self.lambda_hat.len() != l || self.s.len() != l {
            return Err(CoefficientError::Shape(format!(
                "alpha has {l} entries, lambda_hat {}, s {}",
                self.lambda_hat.len(),
                self.s.len()
            )));
        }
        if !(self.alpha[0] > 0.0) || self.alpha.windows(2).any(|w| !(w[0] < w[1])) || self.alpha.iter().any(|a| !a.is_finite()) {
            return Err(CoefficientError::EnvelopeExponents);
        }
        let last = self.lambda_hat[l - 1];
        if !(last < 0.0) {
            return Err(CoefficientError::NonNegativeRate(last));
        }
        if self.s.iter().any(|s| !(*s <= self.t1)) {
            return Err(CoefficientError::EnvelopeShift);
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.alpha
            .iter()
            .zip(&self.lambda_hat)
            .zip(&self.s)
            .map(|((a, lam), s)| if *a == 1.0 { lam * a } else { lam * a * (t - s).powf(a - 1.0) })
            .sum()
    }
}

/// Certified exponent `λ̂_l / moment_order` and its time order `α_l`.
pub fn lyapunov_from_envelope(env: &PowerEnvelope, moment_order: f64) -> Result<(f64, f64), CoefficientError> {
    env.validate()?;
    if !(moment_order > 0.0 && moment_order.is_finite()) {
        return Err(CoefficientError::MomentOrder(moment_order));
    }
    let l = env.alpha.len() - 1;
    Ok((env.lambda_hat[l] / moment_order, env.alpha[l]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EnvelopeCheck {
    Holds,
    Violated { t: f64, gamma: f64, envelope: f64 },
}

/// Checks `γ(t) ≤ envelope(t)` at every grid point `t ≥ t1`. Equality is
/// accepted up to a relative rounding slack of `1e-12`.
pub fn check_envelope(gamma_curve: &[f64], grid: &TimeGrid, env: &PowerEnvelope) -> Result<EnvelopeCheck, CoefficientError> {
    env.validate()?;
    if gamma_curve.len() != grid.len() {
        return Err(CoefficientError::Shape(format!(
            "curve has {} points, grid {}",
            gamma_curve.len(),
            grid.len()
        )));
    }
    for (k, g) in gamma_curve.iter().enumerate() {
        let t = grid.time(k);
        if t < env.t1 {
            continue;
        }
        let e = env.eval(t);
        let slack = 1e-12 * e.abs().max(1.0);
        if !(*g <= e + slack) {
            return Ok(EnvelopeCheck::Violated { t, gamma: *g, envelope: e });
        }
    }
    Ok(EnvelopeCheck::Holds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(v: f64) -> TimeFunction {
        TimeFunction::constant(v)
    }

    fn single(alpha: f64, beta: f64, eta: f64, eta_hat: f64, p: f64) -> HoelderProfile {
        HoelderProfile {
            alpha: vec![alpha],
            beta: vec![beta],
            zeta: vec![c(1.0)],
            zeta_hat: vec![c(1.0)],
            eta: vec![c(eta)],
            eta_hat: vec![c(eta_hat)],
            p,
            c_pp: 1.0,
        }
    }

    fn lip(e1: f64, e2: f64, h1: f64, h2: f64, p: f64) -> LipschitzProfile {
        LipschitzProfile {
            eta1: c(e1),
            eta2: c(e2),
            etahat1: c(h1),
            etahat2: c(h2),
            p,
            c_pp: 1.0,
        }
    }

    #[test]
    fn hoelder_examples() {
        assert_eq!(gamma_delta_hoelder(&single(1.0, 0.0, -1.0, 0.0, 2.0), 0.0).unwrap(), (-2.0, 0.0));
        assert_eq!(gamma_delta_hoelder(&single(0.0, 1.0, 0.5, 0.0, 2.0), 0.0).unwrap(), (1.0, 0.0));
        assert_eq!(gamma_delta_hoelder(&single(1.0, 0.0, 0.0, 1.0, 2.0), 0.0).unwrap(), (1.0, 0.0));
    }

    #[test]
    fn hoelder_errors() {
        let mut bad = single(0.7, 0.5, 1.0, 0.0, 2.0);
        assert!(matches!(gamma_delta_hoelder(&bad, 0.0), Err(CoefficientError::Exponents { .. })));
        bad = single(0.5, 0.5, 1.0, 0.0, 2.0);
        bad.zeta = vec![c(2.0)];
        assert!(matches!(gamma_delta_hoelder(&bad, 0.0), Err(CoefficientError::ForcedWeight { .. })));
        bad = single(0.5, 0.0, 1.0, 0.0, 1.5);
        assert!(matches!(gamma_delta_hoelder(&bad, 0.0), Err(CoefficientError::Order(_))));
        bad = single(0.5, 0.0, 1.0, 0.0, 2.0);
        bad.eta.push(c(0.0));
        assert!(matches!(gamma_delta_hoelder(&bad, 0.0), Err(CoefficientError::Shape(_))));
    }

    #[test]
    fn hoelder_error_term_produces_delta() {
        // α = β = 0: an error term. δ = ζ^p [η] + c_p·2·(ζ̂²)^{p/2} η̂².
        let mut prof = single(0.0, 0.0, 0.3, 0.4, 2.0);
        prof.zeta = vec![c(2.0)];
        prof.zeta_hat = vec![c(0.5)];
        let (g, d) = gamma_delta_hoelder(&prof, 0.0).unwrap();
        assert!((g - (0.3 + 0.0)).abs() < 1e-15, "{g}");
        let expect = 4.0 * 0.3 + 0.5 * 2.0 * 0.25 * 0.16;
        assert!((d - expect).abs() < 1e-15, "{d}");
    }

    #[test]
    fn lipschitz_examples() {
        assert_eq!(gamma_lipschitz(&lip(-1.0, 0.0, 0.0, 0.0, 2.0), 0.0).unwrap(), -2.0);
        assert_eq!(gamma_lipschitz(&lip(-1.0, 0.5, 0.0, 0.0, 2.0), 0.0).unwrap(), -1.0);
        assert_eq!(gamma_lipschitz(&lip(0.0, 0.0, 1.0, 0.0, 4.0), 0.0).unwrap(), 6.0);
        assert!(gamma_lipschitz(&lip(0.0, -1.0, 0.0, 0.0, 2.0), 0.0).is_err());
    }

    #[test]
    fn gamma_pq_examples() {
        assert_eq!(gamma_pq(&lip(-1.0, 0.0, 0.0, 0.0, 2.0), 2.0, 0.0).unwrap(), -4.0);
        let (a, s) = (1.0, 0.5);
        let g = gamma_pq(&lip(-a, 0.0, s, 0.0, 2.0), 2.0, 0.0).unwrap();
        assert!((g - 4.0 * (-a + 1.5 * s * s)).abs() < 1e-15);
        assert_eq!(gamma_pq(&lip(0.0, 0.0, 0.0, 0.0, 2.0), 2.0, 0.0).unwrap(), 0.0);
        assert!(gamma_pq(&lip(0.0, 0.0, 0.0, 0.0, 2.0), 1.5, 0.0).is_err());
    }

    fn growth_single(alpha: f64, beta: f64, u: f64, uh: f64) -> GrowthProfile {
        GrowthProfile {
            alpha: vec![alpha],
            beta: vec![beta],
            kappa: vec![c(1.0)],
            kappa_hat: vec![c(1.0)],
            upsilon: vec![c(u)],
            upsilon_hat: vec![c(uh)],
            p: 2.0,
            c_pp: 1.0,
        }
    }

    #[test]
    fn growth_examples() {
        let a = 0.7;
        assert_eq!(growth_coeffs(&growth_single(1.0, 0.0, -a, 0.0), 0.0).unwrap(), (-2.0 * a, 0.0));
        assert_eq!(growth_coeffs(&growth_single(0.0, 0.0, 1.0, 0.0), 0.0).unwrap(), (1.0, 1.0));
        assert_eq!(growth_coeffs(&growth_single(0.0, 0.0, 0.0, 0.0), 0.0).unwrap(), (0.0, 0.0));
        // A negative υ with α < 1 enters through its positive part.
        assert_eq!(growth_coeffs(&growth_single(0.5, 0.0, -3.0, 0.0), 0.0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn error_coefficients_match_the_hoelder_form() {
        let prof = lip(-0.4, 0.3, 0.2, 0.6, 3.0);
        let (g, d) = error_coefficients(&prof, 0.0).unwrap();
        let h = HoelderProfile {
            alpha: vec![1.0, 0.0],
            beta: vec![0.0, 0.0],
            zeta: vec![c(1.0), c(1.0)],
            zeta_hat: vec![c(1.0), c(1.0)],
            eta: vec![c(-0.4), c(0.3)],
            eta_hat: vec![c(0.2), c(0.6)],
            p: 3.0,
            c_pp: 1.0,
        };
        let (gh, dh) = gamma_delta_hoelder(&h, 0.0).unwrap();
        assert!((g - gh).abs() < 1e-14 && (d - dh).abs() < 1e-14, "{g} {gh} {d} {dh}");
    }

    #[test]
    fn envelope_exponents() {
        let env = PowerEnvelope {
            alpha: vec![2.0],
            lambda_hat: vec![-0.5],
            s: vec![0.0],
            t1: 0.0,
        };
        assert_eq!(lyapunov_from_envelope(&env, 4.0).unwrap(), (-0.125, 2.0));
        let env = PowerEnvelope {
            alpha: vec![1.0],
            lambda_hat: vec![-1.0],
            s: vec![0.0],
            t1: 0.0,
        };
        assert_eq!(lyapunov_from_envelope(&env, 1.0).unwrap(), (-1.0, 1.0));
        let env = PowerEnvelope {
            alpha: vec![1.0],
            lambda_hat: vec![0.1],
            s: vec![0.0],
            t1: 0.0,
        };
        assert!(matches!(
            lyapunov_from_envelope(&env, 1.0),
            Err(CoefficientError::NonNegativeRate(_))
        ));
        let env = PowerEnvelope {
            alpha: vec![2.0, 1.0],
            lambda_hat: vec![0.0, -1.0],
            s: vec![0.0, 0.0],
            t1: 0.0,
        };
        assert!(matches!(
            lyapunov_from_envelope(&env, 1.0),
            Err(CoefficientError::EnvelopeExponents)
        ));
    }

    #[test]
    fn envelope_checks() {
        let g = TimeGrid::new(0.0, 0.1, 30).unwrap();
        let env = PowerEnvelope {
            alpha: vec![1.0],
            lambda_hat: vec![-1.0],
            s: vec![0.0],
            t1: 0.0,
        };
        assert_eq!(check_envelope(&vec![-2.0; g.len()], &g, &env).unwrap(), EnvelopeCheck::Holds);
        match check_envelope(&vec![0.0; g.len()], &g, &env).unwrap() {
            EnvelopeCheck::Violated { t, .. } => assert_eq!(t, 0.0),
            other => panic!("{other:?}"),
        }
        let env2 = PowerEnvelope {
            alpha: vec![2.0],
            lambda_hat: vec![-1.0],
            s: vec![0.0],
            t1: 0.0,
        };
        let curve: Vec<f64> = g.times().iter().map(|t| -2.0 * t).collect();
        assert_eq!(check_envelope(&curve, &g, &env2).unwrap(), EnvelopeCheck::Holds);
    }

    #[test]
    fn product_brackets() {
        let x = Sample::new(vec![1.0, 2.0]).unwrap();
        let y = Sample::new(vec![3.0, 1.0]).unwrap();
        // α_j = α_k = 1: esssup of the product vs product of esssups.
        assert_eq!(product_bracket(&x, &y, 2.0, 1.0, 1.0).unwrap(), 3.0);
        assert_eq!(product_bracket_upper(&x, &y, 2.0, 1.0, 1.0).unwrap(), 6.0);
        let exact = product_bracket(&x, &y, 2.0, 0.0, 0.0).unwrap();
        let upper = product_bracket_upper(&x, &y, 2.0, 0.0, 0.0).unwrap();
        assert!(exact <= upper);
    }
}
