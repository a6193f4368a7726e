//! Decoupled control of a thruster-assisted quadruped.
//!
//! A Raibert-type position controller walks the legs while a box-constrained
//! linear MPC drives four knee-mounted thrusters to hold attitude. A learned
//! contact residual model predicts the angular acceleration caused by
//! leg-ground contact and shifts the MPC reference accordingly.
//!
//! The crate also contains the rigid-body plant used both as the closed-loop
//! test bed and as the source of training data, the offline training
//! pipeline, and the experiment runner behind the `thrustwalk` CLI.

// NaN must fail validation, so negated comparisons are intentional. Fixed-size
// per-leg arrays read more clearly with an index than with zipped iterators.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::field_reassign_with_default)]

pub mod crd;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod legged;
pub mod model;
pub mod mpc;
pub mod trainer;

pub use error::{Error, Result};
pub use model::{RobotModel, SimConfig, ThrusterCommand, NUM_LEGS};
