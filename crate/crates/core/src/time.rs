//! Uniform time grids, deterministic time functions and the trapezoid
//! integrals every bound curve is built from.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("time step must be positive and finite, got {0}")]
    Step(f64),
    #[error("grid needs at least one step")]
    NoSteps,
    #[error("start time must be finite, got {0}")]
    Start(f64),
    #[error("recording stride {stride} does not divide {steps} steps")]
    Stride { stride: usize, steps: usize },
    #[error("horizon {horizon} is not an integer multiple of dt = {dt}")]
    Horizon { horizon: f64, dt: f64 },
}

/// Uniform grid `t_k = t0 + k·dt`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, steps: usize) -> Result<Self, GridError> {
        if !t0.is_finite() {
            return Err(GridError::Start(t0));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(GridError::Step(dt));
        }
        if steps == 0 {
            return Err(GridError::NoSteps);
        }
        Ok(Self { t0, dt, steps })
    }

    /// Grid covering `[t0, t0 + horizon]`; the horizon must be a whole number of steps.
    pub fn with_horizon(t0: f64, dt: f64, horizon: f64) -> Result<Self, GridError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(GridError::Step(dt));
        }
        let ratio = horizon / dt;
        let steps = ratio.round();
        if !(steps >= 1.0) || (ratio - steps).abs() > 1e-6 * steps.max(1.0) {
            return Err(GridError::Horizon { horizon, dt });
        }
        Self::new(t0, dt, steps as usize)
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps as f64
    }

    pub fn end(&self) -> f64 {
        self.time(self.steps)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }

    /// The sub-grid keeping every `stride`-th point.
    pub fn thinned(&self, stride: usize) -> Result<Self, GridError> {
        if stride == 0 || !self.steps.is_multiple_of(stride) {
            return Err(GridError::Stride { stride, steps: self.steps });
        }
        Ok(Self {
            t0: self.t0,
            dt: self.dt * stride as f64,
            steps: self.steps / stride,
        })
    }
}

/// Deterministic time function `s ↦ h(s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeFunction {
    Constant {
        value: f64,
    },
    /// `coef · s^exponent`
    Power {
        coef: f64,
        exponent: f64,
    },
    /// `coef · e^{rate·s}`
    Exponential {
        coef: f64,
        rate: f64,
    },
    /// Linear interpolation of samples on a uniform grid, clamped at the ends.
    Sampled {
        t0: f64,
        dt: f64,
        values: Vec<f64>,
    },
}

impl TimeFunction {
    pub const ZERO: TimeFunction = TimeFunction::Constant { value: 0.0 };

    pub fn constant(value: f64) -> Self {
        Self::Constant { value }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Power { coef, exponent } => coef * t.powf(*exponent),
            Self::Exponential { coef, rate } => coef * (rate * t).exp(),
            Self::Sampled { t0, dt, values } => {
                if values.is_empty() {
                    return f64::NAN;
                }
                let x = (t - t0) / dt;
                if x <= 0.0 {
                    return values[0];
                }
                let last = values.len() - 1;
                let i = x.floor() as usize;
                if i >= last {
                    return values[last];
                }
                let w = x - i as f64;
                values[i] * (1.0 - w) + values[i + 1] * w
            }
        }
    }

    pub fn sample(&self, grid: &TimeGrid) -> Vec<f64> {
        (0..=grid.steps).map(|k| self.eval(grid.time(k))).collect()
    }

    /// Whether the function is identically zero (only decidable for closed forms).
    pub fn is_zero(&self) -> bool {
        match self {
            Self::Constant { value } => *value == 0.0,
            Self::Power { coef, .. } | Self::Exponential { coef, .. } => *coef == 0.0,
            Self::Sampled { values, .. } => values.iter().all(|v| *v == 0.0),
        }
    }
}

impl Default for TimeFunction {
    fn default() -> Self {
        Self::ZERO
    }
}

/// Cumulative trapezoid integral `∫_{t0}^{t_k} h` on the grid.
pub fn cumulative_trapezoid(values: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * dt * (w[0] + w[1]);
        out.push(acc);
    }
    out.truncate(values.len());
    out
}

/// The linear comparison bound
/// `e^{∫_{t0}^t γ} y0 + ∫_{t0}^t e^{∫_s^t γ} δ(s) ds`
/// evaluated at every grid point with trapezoid rules.
///
/// The recursion over grid intervals reproduces the full trapezoid sum of the
/// inner integral exactly, so the cost is linear in the grid size.
pub fn linear_comparison_bound(gamma: &[f64], delta: &[f64], dt: f64, y0: f64) -> Vec<f64> {
    assert_eq!(gamma.len(), delta.len(), "gamma and delta must share the grid");
    let mut out = Vec::with_capacity(gamma.len());
    if gamma.is_empty() {
        return out;
    }
    let mut g = 0.0;
    let mut inner = 0.0;
    out.push(y0);
    for k in 1..gamma.len() {
        let step = 0.5 * dt * (gamma[k - 1] + gamma[k]);
        let growth = step.exp();
        g += step;
        inner = growth * inner + 0.5 * dt * (growth * delta[k - 1] + delta[k]);
        out.push(g.exp() * y0 + inner);
    }
    out
}
