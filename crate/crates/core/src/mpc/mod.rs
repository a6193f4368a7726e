//! Thruster MPC: linearized attitude dynamics, condensed prediction,
//! residual-augmented reference and a box-constrained QP over propeller
//! speeds.

mod controller;
mod linear;
mod qp;

pub use controller::{solve_qp, CrdEstimate, MpcOutput, MpcProblem, ThrusterMpc};
pub use linear::{
    build_prediction, build_reference, discretize, linearize, LinearModel, Matrix6, Matrix6x4, MpcConfig, ResidualUse,
    INPUT_DIM,
    STATE_DIM,
};
pub use qp::{projected_gradient, solve_box_qp, QpSettings, QpSolution};
