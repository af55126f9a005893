#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod model;
pub mod perturbation;
pub mod spectral;

pub use error::{Error, Result};

/// Crate version, recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
