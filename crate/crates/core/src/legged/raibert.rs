use nalgebra::{Vector2, Vector3};
use std::f64::consts::PI;

use super::gait::{gait_phase, RaibertConfig};
use super::kinematics::{leg_fk, leg_ik, JointAngles};
use crate::dynamics::BodyState;
use crate::error::Result;
use crate::model::{RobotModel, NUM_LEGS};

/// Largest horizontal excursion of a foot target from its reference (m).
const MAX_FOOT_EXCURSION: f64 = 0.1;

/// Raibert foot placement: `p_ref + v T / 2 + k (v - v_d)`.
pub fn swing_target(cfg: &RaibertConfig, leg: usize, v: &Vector2<f64>) -> Vector2<f64> {
    let p_ref = Vector2::from(cfg.p_ref[leg]);
    let v_d = Vector2::from(cfg.v_desired);
    p_ref + v * (cfg.period / 2.0) + (v - v_d) * cfg.k_velocity
}

/// `p^T K_ori e` with `K_ori = diag(k_pitch, k_roll)` and `e = (pitch, roll)`.
pub fn stance_height_adjust(p: &Vector2<f64>, k_pitch: f64, k_roll: f64, e: &Vector2<f64>) -> f64 {
    p.x * k_pitch * e.x + p.y * k_roll * e.y
}

/// Swing foot path from `p_start` to `(p_d, z_ground)`: cycloidal in the
/// horizontal plane with a `step_height * sin(pi * phase)` lift.
pub fn swing_trajectory(
    p_start: &Vector3<f64>,
    p_d: &Vector2<f64>,
    z_ground: f64,
    phase: f64,
    step_height: f64,
) -> Vector3<f64> {
    let phase = phase.clamp(0.0, 1.0);
    if phase == 1.0 {
        return Vector3::new(p_d.x, p_d.y, z_ground);
    }
    let s = phase - (2.0 * PI * phase).sin() / (2.0 * PI);
    let xy = p_start.xy() + (p_d - p_start.xy()) * s;
    let z = p_start.z + (z_ground - p_start.z) * s + step_height * (PI * phase).sin();
    Vector3::new(xy.x, xy.y, z)
}

fn clamp_around(p: Vector2<f64>, center: Vector2<f64>) -> Vector2<f64> {
    let d = p - center;
    let n = d.norm();
    if n > MAX_FOOT_EXCURSION {
        center + d * (MAX_FOOT_EXCURSION / n)
    } else {
        p
    }
}

/// Position-controlled Raibert leg controller.
///
/// Only per-leg contact bookkeeping is stateful: the foot position at
/// lift-off, and the ground-fixed stance foot position in body frame.
#[derive(Clone, Debug)]
pub struct LeggedController {
    cfg: RaibertConfig,
    model: RobotModel,
    was_stance: [bool; NUM_LEGS],
    swing_start: [Vector3<f64>; NUM_LEGS],
    stance_xy: [Vector2<f64>; NUM_LEGS],
}

impl LeggedController {
    pub fn new(cfg: RaibertConfig, model: RobotModel) -> Self {
        let nominal = Self::nominal_feet(&cfg);
        let stance0 = gait_phase(0.0, &cfg).stance_flags();
        Self {
            was_stance: stance0,
            swing_start: nominal,
            stance_xy: nominal.map(|p| p.xy()),
            cfg,
            model,
        }
    }

    pub fn config(&self) -> &RaibertConfig {
        &self.cfg
    }

    /// Foot targets of the standing posture, body frame.
    pub fn nominal_feet(cfg: &RaibertConfig) -> [Vector3<f64>; NUM_LEGS] {
        std::array::from_fn(|i| Vector3::new(cfg.p_ref[i][0], cfg.p_ref[i][1], -cfg.stance_height))
    }

    /// Joint angles of the standing posture.
    pub fn nominal_posture(cfg: &RaibertConfig, model: &RobotModel) -> Result<[JointAngles; NUM_LEGS]> {
        let feet = Self::nominal_feet(cfg);
        let mut out = [JointAngles::zeros(); NUM_LEGS];
        for i in 0..NUM_LEGS {
            let seed = JointAngles::new(0.0, -0.8, 1.6);
            out[i] = leg_ik(&(feet[i] - model.hip_offsets[i]), &seed, model)?.q;
        }
        Ok(out)
    }

    /// Joint targets for the current tick. `dt` is the control period.
    pub fn step(
        &mut self,
        state: &BodyState,
        q: &[JointAngles; NUM_LEGS],
        t: f64,
        dt: f64,
    ) -> Result<[JointAngles; NUM_LEGS]> {
        let gait = gait_phase(t, &self.cfg);
        let v = state.planar_velocity_body();
        let yaw_rate = state.omega.z;
        let euler = state.euler();
        let e = Vector2::new(euler.y, euler.x);
        let z_ground = -self.cfg.stance_height;

        let mut targets = [JointAngles::zeros(); NUM_LEGS];
        for i in 0..NUM_LEGS {
            let hip = self.model.hip_offsets[i];
            let foot = hip + leg_fk(&q[i], &self.model, i);
            let p_ref = Vector2::from(self.cfg.p_ref[i]);
            let lp = gait.legs[i];
            let target = if lp.stance {
                if !self.was_stance[i] {
                    self.stance_xy[i] = foot.xy();
                }
                // Ground-fixed foot seen from a moving, yawing body.
                let p = self.stance_xy[i];
                let drift = -v - Vector2::new(-yaw_rate * p.y, yaw_rate * p.x);
                self.stance_xy[i] = clamp_around(p + drift * dt, p_ref);
                let p = self.stance_xy[i];
                let dz = stance_height_adjust(&p, self.cfg.k_pitch, self.cfg.k_roll, &e);
                Vector3::new(p.x, p.y, z_ground + dz)
            } else {
                if self.was_stance[i] {
                    self.swing_start[i] = foot;
                }
                let p_d = clamp_around(swing_target(&self.cfg, i, &v), p_ref);
                swing_trajectory(&self.swing_start[i], &p_d, z_ground, lp.phase, self.cfg.step_height)
            };
            self.was_stance[i] = lp.stance;
            targets[i] = leg_ik(&(target - hip), &q[i], &self.model)?.q;
        }
        Ok(targets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::UnitQuaternion;

    fn cfg() -> RaibertConfig {
        RaibertConfig::trot(&RobotModel::default())
    }

    #[test]
    fn swing_target_stationary_is_reference() {
        let c = cfg();
        let p = swing_target(&c, 2, &Vector2::zeros());
        assert_eq!(p, Vector2::from(c.p_ref[2]));
    }

    #[test]
    fn swing_target_at_desired_velocity_is_pure_feedforward() {
        let mut c = cfg();
        c.v_desired = [0.3, -0.1];
        let v = Vector2::from(c.v_desired);
        let p = swing_target(&c, 0, &v);
        assert_relative_eq!(p, Vector2::from(c.p_ref[0]) + v * c.period / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn swing_target_hand_evaluated() {
        let mut c = cfg();
        c.p_ref[0] = [0.2, 0.1];
        c.period = 0.667;
        c.k_velocity = 0.03;
        c.v_desired = [0.0, 0.0];
        let p = swing_target(&c, 0, &Vector2::new(0.1, 0.0));
        // 0.2 + 0.1 * 0.667 / 2 + 0.03 * 0.1 = 0.2 + 0.03335 + 0.003
        assert_relative_eq!(p, Vector2::new(0.23635, 0.1), epsilon = 1e-12);
    }

    #[test]
    fn swing_target_affine_slope() {
        let c = cfg();
        let a = swing_target(&c, 1, &Vector2::new(0.1, 0.2));
        let b = swing_target(&c, 1, &Vector2::new(0.4, -0.3));
        let slope = c.period / 2.0 + c.k_velocity;
        assert_relative_eq!(b - a, Vector2::new(0.3, -0.5) * slope, epsilon = 1e-14);
    }

    #[test]
    fn stance_adjust_examples() {
        let e0 = Vector2::zeros();
        assert_eq!(stance_height_adjust(&Vector2::new(0.2, 0.1), 0.5, 0.3, &e0), 0.0);
        let dz = stance_height_adjust(&Vector2::new(1.0, 0.0), 0.5, 0.3, &Vector2::new(0.1, 0.2));
        assert_relative_eq!(dz, 0.05, epsilon = 1e-15);
        let p = Vector2::new(0.2, 0.1);
        let e = Vector2::new(0.05, -0.1);
        assert_eq!(
            stance_height_adjust(&p, 0.5, 0.3, &e),
            -stance_height_adjust(&-p, 0.5, 0.3, &e)
        );
    }

    #[test]
    fn swing_trajectory_endpoints_and_apex() {
        let start = Vector3::new(0.15, 0.1, -0.28);
        let pd = Vector2::new(0.25, 0.12);
        assert_eq!(swing_trajectory(&start, &pd, -0.28, 0.0, 0.04), start);
        assert_eq!(swing_trajectory(&start, &pd, -0.28, 1.0, 0.04), Vector3::new(0.25, 0.12, -0.28));
        let apex = swing_trajectory(&start, &pd, -0.28, 0.5, 0.04);
        assert_relative_eq!(apex.z, -0.28 + 0.04, epsilon = 1e-15);
        assert_relative_eq!(apex.xy(), (start.xy() + pd) / 2.0, epsilon = 1e-15);
    }

    fn level_state() -> BodyState {
        BodyState::at_rest(Vector3::new(0.0, 0.0, 0.28))
    }

    #[test]
    fn equilibrium_targets_are_nominal_posture() {
        let m = RobotModel::default();
        let c = cfg();
        let q0 = LeggedController::nominal_posture(&c, &m).unwrap();
        let mut ctl = LeggedController::new(c, m);
        let targets = ctl.step(&level_state(), &q0, 0.0, 0.01).unwrap();
        for i in 0..NUM_LEGS {
            assert_relative_eq!(targets[i], q0[i], epsilon = 1e-6);
        }
    }

    #[test]
    fn roll_error_shortens_left_and_extends_right_stance_legs() {
        let m = RobotModel::default();
        let mut c = cfg();
        c.duty = 0.99;
        c.phase_offsets = [0.0; NUM_LEGS];
        let q0 = LeggedController::nominal_posture(&c, &m).unwrap();
        let mut ctl = LeggedController::new(c, m.clone());
        let mut s = level_state();
        s.orientation = UnitQuaternion::from_euler_angles(0.1, 0.0, 0.0);
        let targets = ctl.step(&s, &q0, 0.0, 0.01).unwrap();
        let z = |i: usize| leg_fk(&targets[i], &m, i).z;
        // FL and RL are left legs.
        assert!(z(0) > -0.28 && z(2) > -0.28);
        assert!(z(1) < -0.28 && z(3) < -0.28);
    }
}
