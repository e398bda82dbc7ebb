//! Numerical core for small-time large deviation experiments on locally
//! monotone stochastic evolution equations `dX = A(t, X) dt + B(X) dW`.
//!
//! Everything here is `no_std` with `alloc`; IO, configuration and the
//! command line live in the companion `stldp` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod audit;
pub mod error;
pub mod framework;
pub mod ldp;
pub mod linalg;
pub mod models;
pub mod noise;
pub mod oracles;
pub mod path;
pub mod solver;
pub mod space;

pub use error::{Error, Result};
