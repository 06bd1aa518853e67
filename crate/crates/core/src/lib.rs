//! Decoherence of a composite particle by its own internal degree of freedom.
//!
//! Two equal-mass constituents bound by a harmonic spring scatter off a square
//! well. The crate evolves the joint center-of-mass/internal wavefunction with
//! a split-step spectral method, propagates the internal oscillator under a
//! parametric drive through the normal-ordered Riccati solution, and measures
//! entanglement (impurity of the reduced internal state), interference and
//! the compositeness measure `M_C`.
//!
//! The numeric core is generic over [`Real`] (`f32`/`f64`); the aliases below
//! fix it to `f64`, which every tolerance in the test suites assumes.

// Parameter checks are written `!(x > 0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod fft;

pub mod error;
pub mod evolve;
pub mod experiments;
pub mod observables;
pub mod parametric;
pub mod potentials;
pub mod qgrid;
pub mod scalar;

pub use error::{Error, Result};
pub use qgrid::{Axis, Space};
pub use scalar::Real;

pub type Grid1D = qgrid::Grid1<f64>;
pub type Wavefunction1D = qgrid::Wavefunction1<f64>;
pub type Wavefunction2D = qgrid::Wavefunction2<f64>;
pub type SquareWell = potentials::SquareWell<f64>;
pub type SmoothedWell = potentials::SmoothedWell<f64>;
pub type HarmonicInternal = potentials::HarmonicInternal<f64>;
pub type QuadraticExternal = potentials::QuadraticExternal<f64>;
pub type ExternalPotential = potentials::ExternalPotential<f64>;
pub type DrivingProfile = parametric::DrivingProfile<f64>;
pub type PropagatorCoeffs = parametric::PropagatorCoeffs<f64>;
pub type PathSample = parametric::PathSample<f64>;
pub type ReducedDensityMatrix = observables::ReducedDensityMatrix<f64>;
pub type QProfile = observables::QProfile<f64>;
