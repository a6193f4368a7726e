use nalgebra::{UnitQuaternion, Vector3};

use super::forces::{contact_forces, ContactInfo};
use super::state::BodyState;
use crate::error::{Error, Result};
use crate::legged::{knee_position, leg_fk, leg_jacobian, JointAngles};
use crate::model::{RobotModel, SimConfig, ThrusterCommand, NUM_LEGS};

/// Leg joint state; legs are massless and servo-tracked.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LegJoints {
    pub q: [JointAngles; NUM_LEGS],
    pub q_dot: [JointAngles; NUM_LEGS],
}

/// What happened during one integration step.
#[derive(Clone, Copy, Debug)]
pub struct StepReport {
    /// Contact evaluated at the start of the step.
    pub contact: ContactInfo,
    /// Realized body angular acceleration over the step (rad/s^2, body frame).
    pub omega_dot: Vector3<f64>,
    /// Realized linear acceleration (m/s^2, inertial).
    pub accel: Vector3<f64>,
    /// Thrust-only angular acceleration at the rotor speeds of the step.
    pub nominal_omega_dot: Vector3<f64>,
}

/// Floating-base quadruped plant with knee thrusters and compliant ground.
#[derive(Clone, Debug)]
pub struct Simulator {
    model: RobotModel,
    cfg: SimConfig,
    inertia_inv: nalgebra::Matrix3<f64>,
    pub state: BodyState,
    pub legs: LegJoints,
    rotor: [f64; NUM_LEGS],
    time: f64,
    steps: u64,
}

impl Simulator {
    pub fn new(model: RobotModel, cfg: SimConfig, state: BodyState, q: [JointAngles; NUM_LEGS]) -> Result<Self> {
        model.validate()?;
        cfg.validate()?;
        Ok(Self {
            inertia_inv: model.inertia_inv(),
            model,
            cfg,
            state,
            legs: LegJoints { q, q_dot: [JointAngles::zeros(); NUM_LEGS] },
            rotor: [0.0; NUM_LEGS],
            time: 0.0,
            steps: 0,
        })
    }

    /// Level body at rest on `q`, lowered until the feet carry the static load.
    pub fn standing(model: RobotModel, cfg: SimConfig, q: [JointAngles; NUM_LEGS]) -> Result<Self> {
        let feet: Vec<Vector3<f64>> = (0..NUM_LEGS)
            .map(|i| model.hip_offsets[i] + leg_fk(&q[i], &model, i))
            .collect();
        let lowest = feet.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
        let sink = model.weight() / (NUM_LEGS as f64 * cfg.ground_stiffness);
        let state = BodyState::at_rest(Vector3::new(0.0, 0.0, -lowest - sink));
        Self::new(model, cfg, state, q)
    }

    /// Actual propeller speeds, which lag the command.
    pub fn rotor_speeds(&self) -> [f64; NUM_LEGS] {
        self.rotor
    }

    /// Set the propeller speeds directly, e.g. to start at a trim command.
    pub fn set_rotor_speeds(&mut self, v: [f64; NUM_LEGS]) {
        self.rotor = v;
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Foot position relative to the CoM, body frame.
    pub fn foot_body(&self, i: usize) -> Vector3<f64> {
        self.model.hip_offsets[i] + leg_fk(&self.legs.q[i], &self.model, i)
    }

    /// Knee (propeller mount) position relative to the CoM, body frame.
    pub fn knee_body(&self, i: usize) -> Vector3<f64> {
        self.model.hip_offsets[i] + knee_position(&self.legs.q[i], &self.model)
    }

    pub fn foot_kinematics(&self) -> ([Vector3<f64>; NUM_LEGS], [Vector3<f64>; NUM_LEGS]) {
        let s = &self.state;
        let mut pos = [Vector3::zeros(); NUM_LEGS];
        let mut vel = [Vector3::zeros(); NUM_LEGS];
        for i in 0..NUM_LEGS {
            let pb = self.foot_body(i);
            let vb = leg_jacobian(&self.legs.q[i], &self.model) * self.legs.q_dot[i];
            pos[i] = s.position + s.orientation.transform_vector(&pb);
            vel[i] = s.velocity + s.orientation.transform_vector(&(s.omega.cross(&pb) + vb));
        }
        (pos, vel)
    }

    pub fn contact(&self) -> ContactInfo {
        let (p, v) = self.foot_kinematics();
        contact_forces(&self.state, &p, &v, &self.cfg)
    }

    fn servo(&mut self, targets: &[JointAngles; NUM_LEGS]) {
        let dt = self.cfg.dt_sim;
        let rate = self.cfg.servo_rate_limit;
        for i in 0..NUM_LEGS {
            for j in 0..3 {
                let [lo, hi] = self.model.joint_limits[j];
                let q = self.legs.q[i][j];
                let goal = targets[i][j].clamp(lo, hi);
                let qd = ((goal - q) / self.cfg.servo_time_constant).clamp(-rate, rate);
                let next = (q + qd * dt).clamp(lo, hi);
                self.legs.q_dot[i][j] = (next - q) / dt;
                self.legs.q[i][j] = next;
            }
        }
    }

    /// Advance one `dt_sim` step (semi-implicit Euler).
    ///
    /// `external_force` acts at the CoM in the inertial frame.
    pub fn step(
        &mut self,
        cmd: &ThrusterCommand,
        joint_targets: &[JointAngles; NUM_LEGS],
        external_force: &Vector3<f64>,
    ) -> Result<StepReport> {
        let dt = self.cfg.dt_sim;
        self.servo(joint_targets);
        let tau = self.cfg.rotor_time_constant;
        let blend = if tau > 0.0 { (dt / tau).min(1.0) } else { 1.0 };
        for (w, c) in self.rotor.iter_mut().zip(cmd.v) {
            *w += (c - *w) * blend;
        }
        let rotor = ThrusterCommand { v: self.rotor };
        let contact = self.contact();

        let m = &self.model;
        let s = self.state;
        let mut force_body = Vector3::zeros();
        let mut thrust_torque = Vector3::zeros();
        let mut torque = Vector3::zeros();
        for i in 0..NUM_LEGS {
            let f = m.thruster_directions[i] * (m.c_f * rotor.v[i] * rotor.v[i]);
            force_body += f;
            thrust_torque += m.thruster_positions[i].cross(&f);
            torque += contact.moment_arm[i].cross(&contact.force_body[i]);
        }
        torque += thrust_torque;
        let force = s.orientation.transform_vector(&force_body)
            + contact.force.iter().sum::<Vector3<f64>>()
            + external_force
            - Vector3::z() * m.weight();
        let accel = force / m.mass;

        // Gyroscopic coupling as a rotation of the body-frame momentum, which
        // keeps |I w| exact when no torque acts.
        let momentum = m.inertia * s.omega;
        let spin = UnitQuaternion::from_scaled_axis(-s.omega * dt);
        let momentum = spin.transform_vector(&momentum) + torque * dt;
        let omega = self.inertia_inv * momentum;

        let velocity = s.velocity + accel * dt;
        let position = s.position + velocity * dt;
        let mut orientation = s.orientation * UnitQuaternion::from_scaled_axis(omega * dt);
        orientation.renormalize();

        let next = BodyState { position, velocity, orientation, omega };
        self.steps += 1;
        self.time = self.steps as f64 * dt;
        if !next.is_finite() || !self.legs.q.iter().all(|q| q.iter().all(|v| v.is_finite())) {
            return Err(Error::SimulationDiverged { step: self.steps, time: self.time });
        }
        self.state = next;
        Ok(StepReport {
            contact,
            omega_dot: (omega - s.omega) / dt,
            accel,
            nominal_omega_dot: self.inertia_inv * thrust_torque,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::legged::{LeggedController, RaibertConfig};
    use approx::assert_relative_eq;

    fn floating(model: RobotModel, omega: Vector3<f64>) -> Simulator {
        let mut s = BodyState::at_rest(Vector3::new(0.0, 0.0, 10.0));
        s.omega = omega;
        s.velocity = Vector3::new(0.3, -0.2, 0.1);
        Simulator::new(model, SimConfig::default(), s, [JointAngles::zeros(); NUM_LEGS]).unwrap()
    }

    #[test]
    fn free_drift_without_forces() {
        let mut m = RobotModel::default();
        m.gravity = 0.0;
        let mut sim = floating(m, Vector3::zeros());
        let before = sim.state;
        let q = sim.legs.q;
        sim.step(&ThrusterCommand::OFF, &q, &Vector3::zeros()).unwrap();
        assert_relative_eq!(sim.state.position, before.position + before.velocity * 1e-3, epsilon = 1e-15);
        assert_eq!(sim.state.velocity, before.velocity);
        assert_eq!(sim.state.omega, before.omega);
    }

    #[test]
    fn angular_momentum_conserved_in_free_rotation() {
        let mut m = RobotModel::default();
        m.gravity = 0.0;
        m.inertia = nalgebra::Matrix3::new(0.08, 0.01, 0.0, 0.01, 0.18, -0.02, 0.0, -0.02, 0.2);
        let mut sim = floating(m.clone(), Vector3::new(1.5, -2.0, 3.0));
        let l0 = (m.inertia * sim.state.omega).norm();
        let q = sim.legs.q;
        for _ in 0..1000 {
            sim.step(&ThrusterCommand::OFF, &q, &Vector3::zeros()).unwrap();
        }
        let l1 = (m.inertia * sim.state.omega).norm();
        assert!(((l1 - l0) / l0).abs() < 1e-3);
        assert!((sim.state.orientation.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn hover_thrust_balances_gravity() {
        let m = RobotModel::default();
        // c_f * 4 v^2 = m g
        let v = (m.weight() / (4.0 * m.c_f)).sqrt();
        let mut sim = floating(m, Vector3::zeros());
        let q = sim.legs.q;
        let vz = sim.state.velocity.z;
        sim.step(&ThrusterCommand::uniform(v), &q, &Vector3::zeros()).unwrap();
        assert!((sim.state.velocity.z - vz).abs() < 1e-9);
    }

    #[test]
    fn standing_robot_settles_without_violating_contact_invariants() {
        let m = RobotModel::default();
        let cfg = SimConfig::default();
        let rc = RaibertConfig::trot(&m);
        let q0 = LeggedController::nominal_posture(&rc, &m).unwrap();
        let mut sim = Simulator::standing(m.clone(), cfg.clone(), q0).unwrap();
        let z0 = sim.state.position.z;
        for _ in 0..2000 {
            let r = sim.step(&ThrusterCommand::OFF, &q0, &Vector3::zeros()).unwrap();
            for f in r.contact.force {
                assert!(f.z >= 0.0);
                assert!(f.xy().norm() <= cfg.friction_mu * f.z + 1e-9);
            }
        }
        assert!((sim.state.position.z - z0).abs() < 2e-3);
        assert!(sim.state.euler().amax() < 1e-6);
        assert!(sim.contact().in_contact.iter().all(|&c| c));
    }

    #[test]
    fn diverging_state_reports_step() {
        let mut m = RobotModel::default();
        m.gravity = 0.0;
        let mut sim = floating(m, Vector3::zeros());
        let q = sim.legs.q;
        let err = sim
            .step(&ThrusterCommand::OFF, &q, &Vector3::new(f64::NAN, 0.0, 0.0))
            .unwrap_err();
        assert!(matches!(err, Error::SimulationDiverged { step: 1, .. }));
    }
}
