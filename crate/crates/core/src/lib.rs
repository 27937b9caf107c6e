//! Floquet multipliers of linear coupled renewal/delay differential equations.
//!
//! The library discretizes the monodromy (evolution) operator of a linear
//! ω-periodic coupled equation by piecewise pseudospectral collocation and
//! computes its eigenvalues, the Floquet multipliers. On top of the raw
//! spectra it provides stability tests, bifurcation location by scalar
//! root-finding, stability charts and convergence studies.
//!
//! The supported equation couples a renewal component `x` (the equation
//! prescribes the current value) with a delay-differential component `y`
//! (the equation prescribes the derivative), both driven by current-time
//! terms `A`, discrete-delay terms `B` and distributed-delay kernels `C`.
//!
//! Typical use: build a [`model::DelaySystem`] (or pick one from
//! [`model::builtin`]), choose [`discretize::MethodOptions`], call
//! [`discretize::assemble`] and hand the result to
//! [`spectra::multipliers_standard`].

pub mod analysis;
pub mod basis;
pub mod discretize;
pub mod exprlang;
pub mod mesh;
pub mod model;
pub mod report;
pub mod spectra;

mod error;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

pub use num_complex::Complex64;
