//! Robot and plant parameters.
//!
//! None of the numeric defaults below come from hardware measurements; they
//! describe a 6 kg desk-scale quadruped whose four knee-mounted thrusters
//! together produce 1.8 times its weight.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_LEGS: usize = 4;

/// Leg order used everywhere: front-left, front-right, rear-left, rear-right.
pub const LEG_NAMES: [&str; NUM_LEGS] = ["FL", "FR", "RL", "RR"];

/// +1 for legs on the left (+y) side, -1 for the right.
pub const LEG_SIDE: [f64; NUM_LEGS] = [1.0, -1.0, 1.0, -1.0];

/// +1 for front legs, -1 for rear legs.
pub const LEG_FORE_AFT: [f64; NUM_LEGS] = [1.0, 1.0, -1.0, -1.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotModel {
    /// Total mass with legs lumped into the base (kg).
    pub mass: f64,
    /// Body-frame inertia about the CoM (kg m^2).
    pub inertia: Matrix3<f64>,
    /// CoM to propeller, body frame (m).
    pub thruster_positions: [Vector3<f64>; NUM_LEGS],
    /// Unit thrust directions, body frame.
    pub thruster_directions: [Vector3<f64>; NUM_LEGS],
    /// CoM to hip joint, body frame (m).
    pub hip_offsets: [Vector3<f64>; NUM_LEGS],
    pub l_upper: f64,
    pub l_lower: f64,
    /// Thrust per squared speed unit (N).
    pub c_f: f64,
    /// Maximum propeller speed (speed units; 1.0 is full throttle).
    pub u_max: f64,
    pub gravity: f64,
    /// Joint limits for (hip frontal, hip sagittal, knee), rad.
    pub joint_limits: [[f64; 2]; 3],
}

impl Default for RobotModel {
    fn default() -> Self {
        let mass = 6.0;
        let gravity = 9.81;
        let u_max = 1.0;
        // Four thrusters at full speed give 1.8 x weight.
        let c_f = 1.8 * mass * gravity / (4.0 * u_max * u_max);
        let hip = |i: usize| Vector3::new(0.2 * LEG_FORE_AFT[i], 0.1 * LEG_SIDE[i], 0.0);
        let prop = |i: usize| Vector3::new(0.2 * LEG_FORE_AFT[i], 0.14 * LEG_SIDE[i], -0.12);
        let mut model = Self {
            mass,
            inertia: Matrix3::from_diagonal(&Vector3::new(0.08, 0.18, 0.2)),
            thruster_positions: [prop(0), prop(1), prop(2), prop(3)],
            thruster_directions: [Vector3::z(); NUM_LEGS],
            hip_offsets: [hip(0), hip(1), hip(2), hip(3)],
            l_upper: 0.2,
            l_lower: 0.2,
            c_f,
            u_max,
            gravity,
            joint_limits: [[-0.8, 0.8], [-2.0, 2.0], [-2.8, 2.8]],
        };
        model.set_thruster_tilt(0.0);
        model
    }
}

impl RobotModel {
    /// Thrust axes lie in the leg's frontal plane, tilted outward by `tilt`
    /// radians from body +z. `tilt = 0` gives vertical thrust.
    pub fn set_thruster_tilt(&mut self, tilt: f64) {
        for i in 0..NUM_LEGS {
            self.thruster_directions[i] =
                Vector3::new(0.0, LEG_SIDE[i] * tilt.sin(), tilt.cos());
        }
    }

    pub fn inertia_inv(&self) -> Matrix3<f64> {
        self.inertia
            .try_inverse()
            .expect("inertia is validated positive definite")
    }

    pub fn weight(&self) -> f64 {
        self.mass * self.gravity
    }

    pub fn max_total_thrust(&self) -> f64 {
        NUM_LEGS as f64 * self.c_f * self.u_max * self.u_max
    }

    pub fn leg_reach(&self) -> (f64, f64) {
        (
            (self.l_upper - self.l_lower).abs(),
            self.l_upper + self.l_lower,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.mass > 0.0) {
            errs.push(format!("mass must be > 0 (got {})", self.mass));
        }
        let sym_err = (self.inertia - self.inertia.transpose()).abs().max();
        if sym_err > 1e-12 {
            errs.push(format!("inertia not symmetric (asymmetry {sym_err:.3e})"));
        } else {
            let eig = SymmetricEigen::new(self.inertia).eigenvalues;
            if eig.iter().any(|&l| !(l > 0.0)) {
                errs.push(format!("inertia not positive definite (eigenvalues {eig:?})"));
            }
        }
        for (i, e) in self.thruster_directions.iter().enumerate() {
            if (e.norm() - 1.0).abs() > 1e-12 {
                errs.push(format!("thruster_directions[{i}] is not unit length"));
            }
        }
        if !(self.c_f > 0.0) {
            errs.push("c_f must be > 0".into());
        }
        if !(self.u_max > 0.0) {
            errs.push("u_max must be > 0".into());
        }
        if !(self.l_upper > 0.0 && self.l_lower > 0.0) {
            errs.push("link lengths must be > 0".into());
        }
        for (j, [lo, hi]) in self.joint_limits.iter().enumerate() {
            if !(lo < hi) {
                errs.push(format!("joint_limits[{j}] must satisfy lower < upper"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(errs.join("; ")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dt_sim: f64,
    /// Ground stiffness k_g (N/m).
    pub ground_stiffness: f64,
    /// Ground damping b_g (N s/m), used for both normal and tangential damping.
    pub ground_damping: f64,
    pub friction_mu: f64,
    /// First-order servo time constant (s).
    pub servo_time_constant: f64,
    /// Servo rate limit (rad/s).
    pub servo_rate_limit: f64,
    /// First-order propeller spin-up time constant (s); 0 makes thrust
    /// follow the command instantly.
    pub rotor_time_constant: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_sim: 1e-3,
            ground_stiffness: 1.0e4,
            ground_damping: 150.0,
            friction_mu: 0.8,
            servo_time_constant: 0.02,
            servo_rate_limit: 20.0,
            rotor_time_constant: 0.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.dt_sim > 0.0) {
            errs.push("dt_sim must be > 0".to_string());
        }
        if !(self.ground_stiffness > 0.0) {
            errs.push("ground_stiffness must be > 0".into());
        }
        if !(self.ground_damping >= 0.0) {
            errs.push("ground_damping must be >= 0".into());
        }
        if !(self.friction_mu >= 0.0) {
            errs.push("friction_mu must be >= 0".into());
        }
        if !(self.servo_time_constant > 0.0 && self.servo_rate_limit > 0.0) {
            errs.push("servo parameters must be > 0".into());
        }
        if !(self.rotor_time_constant >= 0.0) {
            errs.push("rotor_time_constant must be >= 0".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Propeller speeds, one per leg.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThrusterCommand {
    pub v: [f64; NUM_LEGS],
}

impl ThrusterCommand {
    pub const OFF: Self = Self { v: [0.0; NUM_LEGS] };

    pub fn new(v: [f64; NUM_LEGS], model: &RobotModel) -> Result<Self> {
        for (i, &vi) in v.iter().enumerate() {
            if !(0.0..=model.u_max).contains(&vi) {
                return Err(Error::Domain(format!(
                    "thruster speed v[{i}] = {vi} outside [0, {}]",
                    model.u_max
                )));
            }
        }
        Ok(Self { v })
    }

    pub fn uniform(v: f64) -> Self {
        Self { v: [v; NUM_LEGS] }
    }

    /// Sum of thrust magnitudes c_f * v_i^2 (N).
    pub fn total_thrust(&self, model: &RobotModel) -> f64 {
        self.v.iter().map(|v| model.c_f * v * v).sum()
    }
}
