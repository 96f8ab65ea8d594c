//! Rank reduction autoencoders.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod eval;
pub mod io;
pub mod linalg;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod train;

pub use error::{Error, Result};
