//! Raibert-type legged control: gait timing, foot placement, stance
//! orientation correction and leg kinematics.

mod gait;
mod kinematics;
mod raibert;

pub use gait::{gait_phase, Gait, GaitPhase, LegPhase, RaibertConfig};
pub use kinematics::{knee_position, leg_fk, leg_ik, leg_jacobian, IkSolution, JointAngles};
pub use raibert::{stance_height_adjust, swing_target, swing_trajectory, LeggedController};
