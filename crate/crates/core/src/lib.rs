//! Fiber Fabry-Perot cavity with stimulated Brillouin scattering coupled to a
//! movable input mirror.

pub mod cavity;
pub mod config;
pub mod drive;
pub mod constants;
pub mod error;
pub mod linear;
pub mod noise;
pub mod optim;
pub mod propagator;
pub mod report;
pub mod spectroscopy;

pub use error::{Error, Result};
