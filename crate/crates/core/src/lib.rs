#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convex;
pub mod dynamics;
pub mod error;
pub mod lab;
pub mod linear;
pub mod numerics;
pub mod scalar;

pub use error::{Error, Result};

#[cfg(test)]
extern crate self as reslab;

#[cfg(test)]
mod example_smoke;
