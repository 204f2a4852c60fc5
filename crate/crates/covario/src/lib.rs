//! Nonparametric covariogram and semivariogram estimation for stationary
//! random fields, with positive-definiteness corrections, Gaussian random
//! field simulation, kriging-based cross-validation, and a reproducible
//! estimator-comparison harness.

pub mod basis;
pub mod classical;
pub mod covariogram;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod robust;
pub mod special;
pub mod tapered;
pub mod spatial;

pub use classical::{CenterMode, PdCheck};
pub use covariogram::{CovKind, CovariogramLookup, EmpiricalCovariogram};
pub use error::{CovarioError, Result};
pub use spatial::{DirectionSpec, LagBinning, PairSet, SpatialSample};
