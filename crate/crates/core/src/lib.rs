//! Slow-fast stochastic reaction-diffusion systems on an interval.
//!
//! The crate simulates the coupled system, its averaged and
//! averaged-plus-deviation approximations, evaluates and minimizes the
//! large-deviation action, and integrates the amplitude equations on the
//! stochastic superslow manifold near the pitchfork bifurcation.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix `f64`, which is what the experiment runner uses. Amplitude
//! equation coefficients are kept as exact rationals.

pub mod action;
pub mod averaging;
pub mod deviation;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod path;
pub mod scalar;
pub mod slowfast;
pub mod spectral;
pub mod stats;
pub mod stochastic;
pub mod superslow;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Basis = spectral::BasisSpec<f64>;
pub type Field = spectral::SpectralField<f64>;
pub type Grid = path::TimeGrid<f64>;
pub type Path = path::PathH<f64>;
pub type Control = path::ControlPath<f64>;
pub type Spec = slowfast::SystemSpec<f64>;
pub type Cov = deviation::CovOperator<f64>;
pub type Mat = linalg::Matrix<f64>;
pub type Noise = stochastic::QSpec<f64>;
