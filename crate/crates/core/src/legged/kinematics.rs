//! Closed-form kinematics of the hip-frontal / hip-sagittal / knee chain.
//!
//! Axis convention (hip frame, axes parallel to the body frame):
//! the hip frontal joint `q_h` rotates about +x, so a positive angle swings
//! the foot toward +y. The sagittal joints `q_s` and `q_k` rotate so that a
//! positive angle swings the distal link forward (+x). With all joints at
//! zero the leg hangs straight down.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::model::RobotModel;

pub type JointAngles = Vector3<f64>;

const IK_TOL: f64 = 1e-6;
const IK_MAX_ITERS: usize = 50;
const IK_DAMPING: f64 = 1e-4;
const IK_MAX_STEP: f64 = 0.5;

fn sagittal(q: &JointAngles, l1: f64, l2: f64) -> (f64, f64) {
    let (qs, qk) = (q.y, q.y + q.z);
    let x = l1 * qs.sin() + l2 * qk.sin();
    let z = -l1 * qs.cos() - l2 * qk.cos();
    (x, z)
}

/// Foot position in the hip frame.
pub fn leg_fk(q: &JointAngles, model: &RobotModel, _leg: usize) -> Vector3<f64> {
    let (x, z) = sagittal(q, model.l_upper, model.l_lower);
    let (sh, ch) = q.x.sin_cos();
    Vector3::new(x, -z * sh, z * ch)
}

/// Knee (propeller mount) position in the hip frame.
pub fn knee_position(q: &JointAngles, model: &RobotModel) -> Vector3<f64> {
    let x = model.l_upper * q.y.sin();
    let z = -model.l_upper * q.y.cos();
    let (sh, ch) = q.x.sin_cos();
    Vector3::new(x, -z * sh, z * ch)
}

/// d(foot)/dq, hip frame.
pub fn leg_jacobian(q: &JointAngles, model: &RobotModel) -> Matrix3<f64> {
    let (l1, l2) = (model.l_upper, model.l_lower);
    let (qs, qsk) = (q.y, q.y + q.z);
    let (x, z) = sagittal(q, l1, l2);
    let dx_ds = l1 * qs.cos() + l2 * qsk.cos();
    let dx_dk = l2 * qsk.cos();
    let dz_ds = x;
    let dz_dk = l2 * qsk.sin();
    let (sh, ch) = q.x.sin_cos();
    Matrix3::new(
        0.0, dx_ds, dx_dk,
        -z * ch, -sh * dz_ds, -sh * dz_dk,
        -z * sh, ch * dz_ds, ch * dz_dk,
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IkSolution {
    pub q: JointAngles,
    pub iterations: usize,
    /// False when the target lay outside the workspace and was clamped onto it.
    pub reachable: bool,
    pub residual: f64,
}

/// Damped-least-squares Newton iteration from `q_seed`.
pub fn leg_ik(p_target: &Vector3<f64>, q_seed: &JointAngles, model: &RobotModel) -> Result<IkSolution> {
    let (r_min, r_max) = model.leg_reach();
    let r = p_target.norm();
    let inner = r_min + 1e-9;
    let (target, reachable) = if r > r_max + 1e-12 {
        (p_target * (r_max / r), false)
    } else if r <= inner {
        let dir = if r > 0.0 { p_target / r } else { -Vector3::z() };
        (dir * (inner + 1e-6), false)
    } else {
        (*p_target, true)
    };

    let mut q = *q_seed;
    // A perfectly straight knee has no radial authority.
    if q.z.abs() < 1e-6 && target.norm() < r_max - 1e-9 {
        q.z = 1e-3;
    }
    for it in 0..=IK_MAX_ITERS {
        let err = target - leg_fk(&q, model, 0);
        let residual = err.norm();
        if residual < IK_TOL {
            return Ok(IkSolution { q, iterations: it, reachable, residual });
        }
        if it == IK_MAX_ITERS {
            return Err(Error::IkNonConvergence { residual, iterations: it });
        }
        let j = leg_jacobian(&q, model);
        let jjt = j * j.transpose() + Matrix3::identity() * (IK_DAMPING * IK_DAMPING);
        let w = jjt
            .cholesky()
            .map(|c| c.solve(&err))
            .unwrap_or_else(Vector3::zeros);
        let mut dq = j.transpose() * w;
        let n = dq.amax();
        if n > IK_MAX_STEP {
            dq *= IK_MAX_STEP / n;
        }
        q += dq;
    }
    unreachable!()
}
