//! Bosonic state tomography by optimized excitation-number sampling.
//!
//! The crate covers the full chain from measurement design to state
//! estimation:
//!
//! - [`fockspace`]: truncated Fock-space operators, benchmark states and
//!   phase-space quasi-probabilities.
//! - [`measurement`]: displaced observables, the measurement matrix, the
//!   real parameterization of density matrices and finite-shot sampling.
//! - [`optimizer`]: condition-number minimization over displacement sets.
//! - [`noise`]: closed-form coherent and incoherent error channels.
//! - [`dynamics`]: qubit–cavity master-equation simulator used as the
//!   reference for the closed forms.
//! - [`estimator`]: least-squares, maximum-likelihood and Bayesian-mean
//!   estimators plus Uhlmann fidelity.
//! - [`pipeline`]: glue that simulates an experiment end to end.

pub mod consts;
pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod fockspace;
pub mod linalg;
pub mod measurement;
pub mod noise;
pub mod optimizer;
pub mod pipeline;

pub use error::{OrensError, Result};
pub use fockspace::{DensityMatrix, PhaseSpaceGrid, StateSpec};
pub use measurement::{MeasurementPlan, ObservableKind, OutcomeRecord};
pub use noise::NoiseModel;

pub use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64;

/// Dense complex operator on a truncated Fock space.
pub type ComplexMatrix = DMatrix<Complex64>;
