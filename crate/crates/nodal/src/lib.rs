//! A desk-scale laboratory for the nodal geometry of smooth Gaussian random
//! fields: sampling on compact 2-D/3-D domains, nodal-volume measurement,
//! variational formulas, Kac-Rice moment quadratures, Morse-level asymptotics
//! and the atom-plus-density structure of the nodal-volume law.

pub mod error;
pub mod fields;
pub mod gaussian;
pub mod geometry;
pub mod nodal;
pub mod num;
pub mod variation;

pub use error::{Error, Result};

/// Concrete scalar used by the statistical pipelines. The numeric kernels in
/// [`num`] stay generic over [`num::Scalar`].
pub type Real = f64;
