pub mod analysis;
pub mod config;
pub mod correlators;
pub mod error;
pub mod interp;
pub mod kernels;
pub mod model;
pub mod photon_stats;
pub mod quadrature;
pub mod regime;
pub mod special;
pub mod units;

pub use error::{Error, Result};
