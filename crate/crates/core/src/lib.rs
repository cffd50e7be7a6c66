//! Numerical laboratory for homogenization of time-dependent, space-time
//! periodic convex Hamilton-Jacobi equations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod model;
pub mod action;
pub mod burago;
pub mod constructions;
pub mod effective;
pub mod pde;
pub mod harness;

pub use error::{Error, Result};
