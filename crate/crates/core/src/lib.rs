//! Simulation and stability analysis of planar hybrid dynamical systems with
//! a single impact surface.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod guard;
pub mod hybrid;
pub mod limits;
pub mod models;
pub mod ode;
pub mod poincare;
pub mod sweep;
pub mod verify;

pub use error::{Error, Result};
