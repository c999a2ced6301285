#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod analysis;
pub mod geodesic;
pub mod grid;
pub mod quadrature;
pub mod solver;

pub use error::{Error, Result};
