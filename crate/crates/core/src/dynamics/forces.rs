use nalgebra::Vector3;

use super::state::BodyState;
use crate::error::{Error, Result};
use crate::model::{RobotModel, SimConfig, ThrusterCommand, NUM_LEGS};

/// Per-leg ground contact.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactInfo {
    pub in_contact: [bool; NUM_LEGS],
    /// Ground reaction force, inertial frame (N).
    pub force: [Vector3<f64>; NUM_LEGS],
    /// Ground reaction force, body frame (N).
    pub force_body: [Vector3<f64>; NUM_LEGS],
    /// CoM to foot, body frame (m).
    pub moment_arm: [Vector3<f64>; NUM_LEGS],
    pub penetration: [f64; NUM_LEGS],
}

impl ContactInfo {
    pub fn none() -> Self {
        Self {
            in_contact: [false; NUM_LEGS],
            force: [Vector3::zeros(); NUM_LEGS],
            force_body: [Vector3::zeros(); NUM_LEGS],
            moment_arm: [Vector3::zeros(); NUM_LEGS],
            penetration: [0.0; NUM_LEGS],
        }
    }
}

/// Thrust of propeller `i`, `c_f v^2 e_i`, body frame.
pub fn thrust_force(v: f64, model: &RobotModel, i: usize) -> Result<Vector3<f64>> {
    if !(v >= 0.0) {
        return Err(Error::Domain(format!("propeller speed must be >= 0 (got {v})")));
    }
    Ok(model.thruster_directions[i] * (model.c_f * v * v))
}

/// Body torque of the thrusters, `sum r_i x (c_f v_i^2 e_i)`.
pub fn thrust_torque(model: &RobotModel, cmd: &ThrusterCommand) -> Vector3<f64> {
    (0..NUM_LEGS)
        .map(|i| {
            let f = model.thruster_directions[i] * (model.c_f * cmd.v[i] * cmd.v[i]);
            model.thruster_positions[i].cross(&f)
        })
        .sum()
}

/// Nominal angular acceleration from thrust alone: `I^-1 sum r_i x f_i`.
pub fn nominal_angular_accel(model: &RobotModel, cmd: &ThrusterCommand) -> Vector3<f64> {
    model.inertia_inv() * thrust_torque(model, cmd)
}

/// Linear spring-damper ground with a friction-cone clamp. Flat ground at z = 0.
pub fn contact_forces(
    state: &BodyState,
    foot_positions: &[Vector3<f64>; NUM_LEGS],
    foot_velocities: &[Vector3<f64>; NUM_LEGS],
    cfg: &SimConfig,
) -> ContactInfo {
    let mut info = ContactInfo::none();
    for i in 0..NUM_LEGS {
        let p = foot_positions[i];
        let v = foot_velocities[i];
        info.moment_arm[i] = state
            .orientation
            .inverse_transform_vector(&(p - state.position));
        if p.z >= 0.0 {
            continue;
        }
        info.in_contact[i] = true;
        info.penetration[i] = -p.z;
        let normal = (-cfg.ground_stiffness * p.z - cfg.ground_damping * v.z).max(0.0);
        let mut tangential = -cfg.ground_damping * v.xy();
        let limit = cfg.friction_mu * normal;
        let t = tangential.norm();
        if t > limit {
            tangential *= if t > 0.0 { limit / t } else { 0.0 };
        }
        let f = Vector3::new(tangential.x, tangential.y, normal);
        info.force[i] = f;
        info.force_body[i] = state.orientation.inverse_transform_vector(&f);
    }
    info
}

/// `I^-1 sum d_i x F_i` with forces in body frame.
pub fn true_residual_accel(info: &ContactInfo, model: &RobotModel) -> Vector3<f64> {
    let torque: Vector3<f64> = (0..NUM_LEGS)
        .map(|i| info.moment_arm[i].cross(&info.force_body[i]))
        .sum();
    model.inertia_inv() * torque
}
