mod matrix;
mod svd;

pub use matrix::Matrix;
pub use svd::{singular_values, svd, truncate, Svd};
