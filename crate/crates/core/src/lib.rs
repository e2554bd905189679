//! Numerical laboratory for convex Sobolev inequalities on the real line.
//!
//! For a probability measure `dμ = e^{-V} dx` the crate estimates the
//! Poincaré constant `C₂(μ)` from a discrete spectral gap, lower bounds on
//! the Beckner constants `C_p(μ)` and the log-Sobolev constant `C₁(μ)` by
//! variational ascent, and the perturbative upper bound that combines a
//! spectral gap of `μ` with a reference measure `ν = e^{-W}` and local
//! conditions on `Z = (V − W)/2`.

pub mod beckner;
pub mod cli;
pub mod error;
pub mod functionals;
pub mod measure;
pub mod moments;
pub mod perturbation;
pub mod potential;
pub mod report;
pub mod spectral;

pub use error::{Error, Result};
pub use measure::{build_measure, Domain, GridFunction, GridMeasure};
pub use potential::PotentialSpec;
pub use spectral::{ConstantEstimate, EstimateKind, Method};
mod tridiag;
