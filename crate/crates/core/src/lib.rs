//! Mean-field (McKean-Vlasov) SDE laboratory.
//!
//! The crate simulates interacting-particle approximations of
//! measure-dependent SDEs, builds solution laws by Picard iteration on
//! measure flows, evaluates Bihari-type and linear moment bounds from
//! explicit regularity coefficients, and confronts those certified bounds
//! with empirical curves.
//!
//! Module map:
//!
//! - [`measures`]: particle clouds, moment functionals, Wasserstein distances.
//! - [`bihari`]: Osgood/Bihari machinery (`Φ_ρ`, `Ψ_ρ`, divergence tests).
//! - [`coefficients`]: stability and growth coefficient calculus.
//! - [`models`]: drift/diffusion definitions and the linear oracle family.
//! - [`engine`]: Euler-Maruyama particle simulation and estimators.
//! - [`picard`]: fixed-point iteration on measure flows.
//! - [`verify`]: bound reports pairing certified and empirical curves.

// `!(x > 0.0)` is how NaN inputs are rejected alongside out-of-range ones.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bihari;
pub mod coefficients;
pub mod engine;
pub mod measures;
pub mod models;
pub mod numeric;
pub mod picard;
pub mod time;
pub mod verify;

mod assignment;

pub use engine::{InitialLaw, PathEnsemble, SimConfig};
pub use measures::{MeasureFlow, ParticleCloud, Sample};
pub use models::ModelSpec;
pub use time::{TimeFunction, TimeGrid};
