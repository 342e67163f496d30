//! Scalar-on-function regression with kernel-embedding dimension reduction.
//!
//! An input function observed at discrete points is first mapped into an RKHS
//! by the integral transform `L_K f = ∫ K(·,t) f(t) dt` (estimated by a
//! quadrature rule over the observation points), then reduced to a
//! `d₁`-dimensional coefficient vector by projecting onto the leading
//! eigenfunctions of the kernel's integral operator, and finally fed to a
//! fully-connected ReLU network trained with Adam. The crate also ships the
//! comparison dimension reducers (raw grid values, B-spline coefficients,
//! FPCA scores), simulated two-stage data generators, and sweep drivers.
//!
//! Modules follow the processing order:
//!
//! * [`kernels`] — kernel definitions and Mercer eigensystems (analytic
//!   Gauss–Hermite and numerical Nyström),
//! * [`embedding`] — quadrature estimates of the embedded function,
//! * [`projection`] — eigenbasis coefficient extraction,
//! * [`deepnet`] — the ReLU network, backprop, Adam, training loop,
//! * [`baselines`] — raw / B-spline / FPCA feature extractors,
//! * [`simgen`] — simulated two-stage datasets (cases 1–4),
//! * [`pipeline`] — the end-to-end estimator, cross-validation and sweeps.

pub mod baselines;
pub mod deepnet;
pub mod embedding;
mod error;
pub mod kernels;
pub mod pipeline;
pub mod projection;
pub mod quadrature;
pub mod simgen;

pub use error::{Error, Result};
