//! Coefficient definitions `b(t, x, μ)`, `σ(t, x, μ)`: generic callables,
//! integral maps `∫ b0(t, x, y) μ(dy)`, the power-drift kernel family and
//! the scalar linear mean-field family with closed moment equations.

use crate::coefficients::{GrowthProfile, LipschitzProfile};
use crate::measures::ParticleCloud;
use crate::numeric::pairwise_mean;
use crate::time::{TimeFunction, TimeGrid};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("state has {got} coordinates, model expects {expected}")]
    StateDim { expected: usize, got: usize },
    #[error("cloud lives in dimension {got}, model expects {expected}")]
    CloudDim { expected: usize, got: usize },
    #[error("{what} returned a non-finite value")]
    NonFinite { what: &'static str },
    #[error("dimensions must be positive")]
    ZeroDim,
    #[error("no regularity profile is known for {0} models; supply one explicitly")]
    NoProfile(&'static str),
    #[error("invalid power drift: {0}")]
    PowerDrift(String),
}

/// `(t, x, y, out)`: kernel value written into `out`.
pub type KernelFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// `(t, x, μ, out)`: coefficient value written into `out`.
pub type CoefficientFn = Arc<dyn Fn(f64, &[f64], &ParticleCloud, &mut [f64]) + Send + Sync>;

/// `b(t,x,μ) = a·x + b_mf·E[μ]`, `σ(t,x,μ) = c0 + c1·x + c2·E[μ]` on `ℝ`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearMeanField {
    pub a: f64,
    #[serde(default)]
    pub b_mf: f64,
    #[serde(default)]
    pub c0: f64,
    #[serde(default)]
    pub c1: f64,
    #[serde(default)]
    pub c2: f64,
}

/// Lipschitz interaction `f(x, y) = ax·x + ay·y + shift` applied per coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineInteraction {
    #[serde(default)]
    pub ax: f64,
    #[serde(default)]
    pub ay: f64,
    #[serde(default)]
    pub shift: f64,
}

/// `b0(x, y) = −x Σ_j b̂_j |x|^{α̂_j − 1} + Σ_j ĉ_j f_j(x, y)` with
/// `b0(0, y) = Σ_j ĉ_j f_j(0, y)`, and constant diffusion `σ·I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerDrift {
    pub b_hat: Vec<f64>,
    pub alpha_hat: Vec<f64>,
    #[serde(default)]
    pub c_hat: Vec<f64>,
    #[serde(default)]
    pub interactions: Vec<AffineInteraction>,
    #[serde(default)]
    pub sigma: f64,
}

impl PowerDrift {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.b_hat.len() != self.alpha_hat.len() {
            return Err(ModelError::PowerDrift("b_hat and alpha_hat differ in length".into()));
        }
        if self.c_hat.len() != self.interactions.len() {
            return Err(ModelError::PowerDrift("c_hat and interactions differ in length".into()));
        }
        if self.b_hat.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
            return Err(ModelError::PowerDrift("b_hat must be finite and nonnegative".into()));
        }
        if self.alpha_hat.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(ModelError::PowerDrift("alpha_hat must be finite and positive".into()));
        }
        if !self.sigma.is_finite() || self.c_hat.iter().any(|c| !c.is_finite()) {
            return Err(ModelError::PowerDrift("coefficients must be finite".into()));
        }
        Ok(())
    }

    /// The dissipative part `−x Σ b̂_j |x|^{α̂_j − 1}`, zero at the origin.
    pub fn power_part(&self, x: &[f64], out: &mut [f64]) {
        if x.len() == 1 {
            // −sgn(x) Σ b̂|x|^α̂ is a sum of monotone roundings, so the
            // one-sided inequality survives floating point.
            let r = x[0].abs();
            let w: f64 = self.b_hat.iter().zip(&self.alpha_hat).map(|(b, a)| b * r.powf(*a)).sum();
            out[0] = if x[0] > 0.0 {
                -w
            } else if x[0] < 0.0 {
                w
            } else {
                0.0
            };
            return;
        }
        let r = norm(x);
        if r == 0.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let w: f64 = self.b_hat.iter().zip(&self.alpha_hat).map(|(b, a)| b * r.powf(a - 1.0)).sum();
        for (o, xi) in out.iter_mut().zip(x) {
            *o = -xi * w;
        }
    }

    fn kernel(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        self.power_part(x, out);
        for (c, f) in self.c_hat.iter().zip(&self.interactions) {
            for i in 0..out.len() {
                out[i] += c * (f.ax * x[i] + f.ay * y[i] + f.shift);
            }
        }
    }

    fn has_interaction(&self) -> bool {
        self.c_hat.iter().zip(&self.interactions).any(|(c, f)| *c != 0.0 && f.ay != 0.0)
    }
}

fn norm(x: &[f64]) -> f64 {
    if x.len() == 1 {
        x[0].abs()
    } else {
        x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Kernel pair for an integral-map model.
#[derive(Clone)]
pub struct IntegralKernel {
    pub b0: KernelFn,
    pub sigma0: KernelFn,
    /// Kernels ignoring `y` skip the average over the cloud.
    pub drift_measure_free: bool,
    pub diffusion_measure_free: bool,
    /// Kernels affine in `y` are evaluated at the cloud mean, which is the
    /// same integral at O(1) cost per particle.
    pub affine_in_y: bool,
    pub power: Option<PowerDrift>,
}

impl fmt::Debug for IntegralKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IntegralKernel")
            .field("drift_measure_free", &self.drift_measure_free)
            .field("diffusion_measure_free", &self.diffusion_measure_free)
            .field("affine_in_y", &self.affine_in_y)
            .field("power", &self.power)
            .finish_non_exhaustive()
    }
}

impl IntegralKernel {
    /// General kernels; the integral is the plain average over the cloud.
    pub fn new(b0: KernelFn, sigma0: KernelFn) -> Self {
        Self {
            b0,
            sigma0,
            drift_measure_free: false,
            diffusion_measure_free: false,
            affine_in_y: false,
            power: None,
        }
    }

    pub fn power_drift(params: PowerDrift, dim: usize) -> Result<Self, ModelError> {
        params.validate()?;
        let free = !params.has_interaction();
        let sigma = params.sigma;
        let kernel_params = params.clone();
        let b0: KernelFn = Arc::new(move |_t, x, y, out| kernel_params.kernel(x, y, out));
        let sigma0: KernelFn = Arc::new(move |_t, _x, _y, out| {
            out.iter_mut().for_each(|o| *o = 0.0);
            for i in 0..dim {
                out[i * dim + i] = sigma;
            }
        });
        Ok(Self {
            b0,
            sigma0,
            drift_measure_free: free,
            diffusion_measure_free: true,
            affine_in_y: true,
            power: Some(params),
        })
    }
}

#[derive(Clone)]
pub enum ModelKind {
    IntegralMap(IntegralKernel),
    LinearMeanField(LinearMeanField),
    Custom {
        drift: CoefficientFn,
        diffusion: CoefficientFn,
        measure_free: bool,
    },
}

impl fmt::Debug for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::IntegralMap(k) => f.debug_tuple("IntegralMap").field(k).finish(),
            Self::LinearMeanField(l) => f.debug_tuple("LinearMeanField").field(l).finish(),
            Self::Custom { measure_free, .. } => f.debug_struct("Custom").field("measure_free", measure_free).finish_non_exhaustive(),
        }
    }
}

/// Drift and diffusion of an SDE on `ℝ^m` driven by `d` Brownian motions.
/// Diffusion values are `m × d`, row-major.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub dim_state: usize,
    pub dim_noise: usize,
    pub kind: ModelKind,
}

/// The measure-dependent part of a model frozen at one time step, computed
/// once and shared by every particle.
#[derive(Debug, Clone)]
pub struct Snapshot<'a> {
    pub t: f64,
    cloud: &'a ParticleCloud,
    mean: Vec<f64>,
}

impl<'a> Snapshot<'a> {
    pub fn cloud(&self) -> &'a ParticleCloud {
        self.cloud
    }
}

impl ModelSpec {
    pub fn linear(params: LinearMeanField) -> Self {
        Self {
            dim_state: 1,
            dim_noise: 1,
            kind: ModelKind::LinearMeanField(params),
        }
    }

    pub fn power_drift(params: PowerDrift, dim: usize) -> Result<Self, ModelError> {
        if dim == 0 {
            return Err(ModelError::ZeroDim);
        }
        Ok(Self {
            dim_state: dim,
            dim_noise: dim,
            kind: ModelKind::IntegralMap(IntegralKernel::power_drift(params, dim)?),
        })
    }

    pub fn integral_map(dim_state: usize, dim_noise: usize, kernel: IntegralKernel) -> Result<Self, ModelError> {
        if dim_state == 0 || dim_noise == 0 {
            return Err(ModelError::ZeroDim);
        }
        Ok(Self {
            dim_state,
            dim_noise,
            kind: ModelKind::IntegralMap(kernel),
        })
    }

    pub fn custom(
        dim_state: usize,
        dim_noise: usize,
        drift: CoefficientFn,
        diffusion: CoefficientFn,
        measure_free: bool,
    ) -> Result<Self, ModelError> {
        if dim_state == 0 || dim_noise == 0 {
            return Err(ModelError::ZeroDim);
        }
        Ok(Self {
            dim_state,
            dim_noise,
            kind: ModelKind::Custom {
                drift,
                diffusion,
                measure_free,
            },
        })
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ModelKind::IntegralMap(_) => "integral_map",
            ModelKind::LinearMeanField(_) => "linear_meanfield",
            ModelKind::Custom { .. } => "custom",
        }
    }

    /// Whether the coefficients ignore the measure argument entirely.
    pub fn is_measure_free(&self) -> bool {
        match &self.kind {
            ModelKind::IntegralMap(k) => k.drift_measure_free && k.diffusion_measure_free,
            ModelKind::LinearMeanField(l) => l.b_mf == 0.0 && l.c2 == 0.0,
            ModelKind::Custom { measure_free, .. } => *measure_free,
        }
    }

    fn needs_mean(&self) -> bool {
        match &self.kind {
            ModelKind::IntegralMap(k) => k.affine_in_y && !(k.drift_measure_free && k.diffusion_measure_free),
            ModelKind::LinearMeanField(l) => l.b_mf != 0.0 || l.c2 != 0.0,
            ModelKind::Custom { .. } => false,
        }
    }

    pub fn snapshot<'a>(&self, t: f64, cloud: &'a ParticleCloud) -> Result<Snapshot<'a>, ModelError> {
        if cloud.dim() != self.dim_state {
            return Err(ModelError::CloudDim {
                expected: self.dim_state,
                got: cloud.dim(),
            });
        }
        let mean = if self.needs_mean() {
            cloud.mean()
        } else {
            vec![0.0; self.dim_state]
        };
        Ok(Snapshot { t, cloud, mean })
    }

    /// Drift at `x` against a snapshot; `out` has `m` entries.
    pub fn drift_into(&self, snap: &Snapshot<'_>, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            ModelKind::LinearMeanField(l) => out[0] = l.a * x[0] + l.b_mf * snap.mean[0],
            ModelKind::IntegralMap(k) => {
                if k.drift_measure_free || k.affine_in_y {
                    (k.b0)(snap.t, x, &snap.mean, out)
                } else {
                    average_kernel(&k.b0, snap, x, out)
                }
            }
            ModelKind::Custom { drift, .. } => drift(snap.t, x, snap.cloud, out),
        }
    }

    /// Diffusion at `x` against a snapshot; `out` has `m·d` entries.
    pub fn diffusion_into(&self, snap: &Snapshot<'_>, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            ModelKind::LinearMeanField(l) => out[0] = l.c0 + l.c1 * x[0] + l.c2 * snap.mean[0],
            ModelKind::IntegralMap(k) => {
                if k.diffusion_measure_free || k.affine_in_y {
                    (k.sigma0)(snap.t, x, &snap.mean, out)
                } else {
                    average_kernel(&k.sigma0, snap, x, out)
                }
            }
            ModelKind::Custom { diffusion, .. } => diffusion(snap.t, x, snap.cloud, out),
        }
    }

    /// `b(t, x, μ)` with dimension and finiteness checks.
    pub fn eval_drift(&self, t: f64, x: &[f64], cloud: &ParticleCloud) -> Result<Vec<f64>, ModelError> {
        self.check_state(x)?;
        let snap = self.snapshot(t, cloud)?;
        let mut out = vec![0.0; self.dim_state];
        self.drift_into(&snap, x, &mut out);
        finite(out, "drift")
    }

    /// `σ(t, x, μ)` as a row-major `m × d` array.
    pub fn eval_diffusion(&self, t: f64, x: &[f64], cloud: &ParticleCloud) -> Result<Vec<f64>, ModelError> {
        self.check_state(x)?;
        let snap = self.snapshot(t, cloud)?;
        let mut out = vec![0.0; self.dim_state * self.dim_noise];
        self.diffusion_into(&snap, x, &mut out);
        finite(out, "diffusion")
    }

    fn check_state(&self, x: &[f64]) -> Result<(), ModelError> {
        if x.len() != self.dim_state {
            return Err(ModelError::StateDim {
                expected: self.dim_state,
                got: x.len(),
            });
        }
        Ok(())
    }
}

fn finite(v: Vec<f64>, what: &'static str) -> Result<Vec<f64>, ModelError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(ModelError::NonFinite { what })
    }
}

fn average_kernel(kernel: &KernelFn, snap: &Snapshot<'_>, x: &[f64], out: &mut [f64]) {
    let n = snap.cloud.len();
    let width = out.len();
    let mut vals = vec![0.0; n * width];
    for (i, y) in snap.cloud.points().enumerate() {
        kernel(snap.t, x, y, &mut vals[i * width..(i + 1) * width]);
    }
    let mut column = vec![0.0; n];
    for (c, o) in out.iter_mut().enumerate() {
        for i in 0..n {
            column[i] = vals[i * width + c];
        }
        *o = pairwise_mean(&column);
    }
}

/// `E[X_t]` and `E[X_t²]` of the linear mean-field family from the closed
/// moment equations
/// `m' = (a + b_mf) m`,
/// `v' = 2a v + 2b_mf m² + c0² + c1² v + c2² m² + 2c0c1 m + 2c0c2 m + 2c1c2 m²`,
/// integrated with the classical fourth-order Runge-Kutta method at one tenth
/// of the grid step.
pub fn linear_moment_oracle(model: &LinearMeanField, x0_mean: f64, x0_second_moment: f64, grid: &TimeGrid) -> (Vec<f64>, Vec<f64>) {
    let LinearMeanField { a, b_mf, c0, c1, c2 } = *model;
    let rhs = |m: f64, v: f64| {
        let dm = (a + b_mf) * m;
        let dv = 2.0 * a * v
            + 2.0 * b_mf * m * m
            + c0 * c0
            + c1 * c1 * v
            + c2 * c2 * m * m
            + 2.0 * c0 * c1 * m
            + 2.0 * c0 * c2 * m
            + 2.0 * c1 * c2 * m * m;
        (dm, dv)
    };
    let h = grid.dt / 10.0;
    let (mut m, mut v) = (x0_mean, x0_second_moment);
    let mut means = Vec::with_capacity(grid.len());
    let mut seconds = Vec::with_capacity(grid.len());
    means.push(m);
    seconds.push(v);
    for _ in 0..grid.steps {
        for _ in 0..10 {
            let (k1m, k1v) = rhs(m, v);
            let (k2m, k2v) = rhs(m + 0.5 * h * k1m, v + 0.5 * h * k1v);
            let (k3m, k3v) = rhs(m + 0.5 * h * k2m, v + 0.5 * h * k2v);
            let (k4m, k4v) = rhs(m + h * k3m, v + h * k3v);
            m += h / 6.0 * (k1m + 2.0 * k2m + 2.0 * k3m + k4m);
            v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        }
        means.push(m);
        seconds.push(v);
    }
    (means, seconds)
}

/// Lipschitz data derived for the closed-form families at moment order `p`
/// with domination constant 1 (the Wasserstein-`p` metric).
pub fn lipschitz_profile_of(model: &ModelSpec, p: f64) -> Result<LipschitzProfile, ModelError> {
    let c = TimeFunction::constant;
    match &model.kind {
        ModelKind::LinearMeanField(l) => Ok(LipschitzProfile {
            eta1: c(l.a),
            eta2: c(l.b_mf.abs()),
            etahat1: c(l.c1.abs()),
            etahat2: c(l.c2.abs()),
            p,
            c_pp: 1.0,
        }),
        ModelKind::IntegralMap(IntegralKernel { power: Some(pd), .. }) => {
            // The power part is monotone decreasing and contributes at most 0.
            let eta1: f64 = pd.c_hat.iter().zip(&pd.interactions).map(|(c, f)| c * f.ax).sum();
            let eta2: f64 = pd.c_hat.iter().zip(&pd.interactions).map(|(c, f)| (c * f.ay).abs()).sum();
            Ok(LipschitzProfile {
                eta1: c(eta1),
                eta2: c(eta2),
                etahat1: c(0.0),
                etahat2: c(0.0),
                p,
                c_pp: 1.0,
            })
        }
        ModelKind::IntegralMap(_) => Err(ModelError::NoProfile("general integral-map")),
        ModelKind::Custom { .. } => Err(ModelError::NoProfile("custom")),
    }
}

/// Growth data for the closed-form families with three terms:
/// `(α, β) = (1, 0)` for the state, `(0, 1)` for the measure and `(0, 0)`
/// for constants, all weights 1.
pub fn growth_profile_of(model: &ModelSpec, p: f64) -> Result<GrowthProfile, ModelError> {
    let c = TimeFunction::constant;
    let (ups, ups_hat) = match &model.kind {
        ModelKind::LinearMeanField(l) => ([l.a, l.b_mf.abs(), 0.0], [l.c1.abs(), l.c2.abs(), l.c0.abs()]),
        ModelKind::IntegralMap(IntegralKernel { power: Some(pd), .. }) => {
            let m = (model.dim_state as f64).sqrt();
            let pairs = || pd.c_hat.iter().zip(&pd.interactions);
            let u1: f64 = pairs().map(|(c, f)| c * f.ax).sum();
            let u2: f64 = pairs().map(|(c, f)| (c * f.ay).abs()).sum();
            let u3: f64 = pairs().map(|(c, f)| (c * f.shift).abs() * m).sum();
            ([u1, u2, u3], [0.0, 0.0, pd.sigma.abs() * m])
        }
        ModelKind::IntegralMap(_) => return Err(ModelError::NoProfile("general integral-map")),
        ModelKind::Custom { .. } => return Err(ModelError::NoProfile("custom")),
    };
    Ok(GrowthProfile {
        alpha: vec![1.0, 0.0, 0.0],
        beta: vec![0.0, 1.0, 0.0],
        kappa: vec![c(1.0); 3],
        kappa_hat: vec![c(1.0); 3],
        upsilon: ups.iter().map(|v| c(*v)).collect(),
        upsilon_hat: ups_hat.iter().map(|v| c(*v)).collect(),
        p,
        c_pp: 1.0,
    })
}
