//! Matrix-pencil direction-of-arrival estimation for fully-digital and
//! hybrid analog/digital uniform linear arrays, with Cramer-Rao bounds and a
//! seeded Monte-Carlo harness.

pub mod array_model;
pub mod combiners;
pub mod crlb;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod pencil;

pub use error::{DoaError, Result, Warning};

pub type CMatrix = nalgebra::DMatrix<num_complex::Complex64>;
