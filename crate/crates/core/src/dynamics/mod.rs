//! Floating-base rigid-body plant: thrust model, nominal angular dynamics,
//! compliant ground contact and the contact residual.

mod forces;
mod sim;
mod state;

pub use forces::{
    contact_forces, nominal_angular_accel, thrust_force, thrust_torque, true_residual_accel, ContactInfo,
};
pub use sim::{LegJoints, Simulator, StepReport};
pub use state::BodyState;
