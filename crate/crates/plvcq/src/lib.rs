//! Quantile regression for longitudinal data in partially linear varying
//! coefficient models.
//!
//! The model for a response observed at irregular times is
//! `Q_tau(y | x, z, t) = x' alpha(t) + z' beta`, with the time-varying
//! coefficients `alpha` approximated by B-splines. The crate provides the
//! fitter ([`fit::fit`]), knot selection by an information criterion
//! ([`fit::select_knots`]), rank score and Wald tests for the constant
//! coefficients and for constancy of the varying ones ([`inference`]), an
//! L1 shrinkage alternative to the constancy test ([`shrink`]), and a
//! Monte Carlo harness ([`sim`]).
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below pin the common double-precision instantiations.

pub mod cli;
pub mod data;
pub mod density;
pub mod dist;
pub mod error;
pub mod fit;
pub mod inference;
pub mod linalg;
pub mod qr;
pub mod scalar;
pub mod shrink;
pub mod sim;
pub mod spline;
pub mod testutil;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision longitudinal dataset.
pub type Dataset = data::LongitudinalDataset<f64>;
/// Double-precision spline specification.
pub type Basis = spline::SplineSpec<f64>;
/// Double-precision single-quantile fit.
pub type Fit = fit::QuantileFit<f64>;
/// Double-precision fit along a quantile grid.
pub type Process = fit::QuantileProcess<f64>;
