//! Dyadic cubical complexes, Federer-Fleming projections and Grassmannian
//! estimators for sampled sets, with a small direct-method driver.

pub mod complex;
pub mod driver;
pub mod dyadic;
pub mod error;
pub mod ff;
pub mod grassmannian;
pub mod lipschitz;
pub mod measure;
pub mod rng;

pub use error::{Error, Result};
