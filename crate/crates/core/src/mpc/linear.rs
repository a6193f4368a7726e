use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{RobotModel, NUM_LEGS};

pub const STATE_DIM: usize = 6;
pub const INPUT_DIM: usize = NUM_LEGS;

pub type Matrix6 = SMatrix<f64, 6, 6>;
pub type Matrix6x4 = SMatrix<f64, 6, 4>;

/// Thruster MPC settings. The state is `[roll, pitch, yaw, w_x, w_y, w_z]`,
/// the input is the deviation of each propeller speed from `v0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcConfig {
    pub horizon: usize,
    /// MPC step (s).
    pub dt: f64,
    /// Diagonal of Q.
    pub q_diag: [f64; STATE_DIM],
    /// Diagonal of R.
    pub r_diag: [f64; INPUT_DIM],
    pub u_max: f64,
    /// Desired angular velocity (rad/s).
    pub omega_desired: [f64; 3],
    /// Linearization speeds.
    pub v0: [f64; INPUT_DIM],
    /// Linearization / target attitude (rad).
    pub theta0: [f64; 3],
    /// Lower bound on each `v0` entry, as a fraction of `u_max`.
    pub v0_floor_fraction: f64,
    pub solver_tolerance: f64,
    pub solver_max_iterations: usize,
    /// How the contact residual enters the reference trajectory.
    pub residual_use: ResidualUse,
    /// Scale applied to the residual before it enters the reference. Values
    /// below one shrink a noisy learned estimate toward the thrust-only model.
    pub residual_scale: f64,
}

/// Sign with which the estimated residual shifts the reference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualUse {
    /// The reference drifts along the residual: thrust reinforces the
    /// predicted contact acceleration.
    Follow,
    /// The reference drifts against the residual, by the same amount.
    Compensate,
    /// The residual enters the prediction as a constant acceleration over
    /// the horizon, `x_k+1 = A x_k + B u_k + [0; dt a_res]`. Equivalent to
    /// shifting the reference by minus the accumulated residual response.
    Predict,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            dt: 0.01,
            q_diag: [400.0, 200.0, 0.1, 4.0, 2.0, 0.01],
            r_diag: [100.0; INPUT_DIM],
            u_max: 1.0,
            omega_desired: [0.0; 3],
            v0: [0.25; INPUT_DIM],
            theta0: [0.0; 3],
            v0_floor_fraction: 0.05,
            solver_tolerance: 1e-8,
            solver_max_iterations: 500,
            residual_use: ResidualUse::Predict,
            residual_scale: 0.5,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self, model: &RobotModel) -> Result<()> {
        let mut errs = Vec::new();
        if self.horizon < 1 {
            errs.push("mpc.horizon must be >= 1".to_string());
        }
        if !(self.dt > 0.0) {
            errs.push("mpc.dt must be > 0".into());
        }
        if self.q_diag.iter().any(|q| !(*q >= 0.0)) {
            errs.push("mpc.q_diag must be >= 0 (Q positive semidefinite)".into());
        }
        if self.r_diag.iter().any(|r| !(*r > 0.0)) {
            errs.push("mpc.r_diag must be > 0 (R positive definite)".into());
        }
        if !(self.u_max > 0.0 && self.u_max <= model.u_max) {
            errs.push(format!("mpc.u_max must lie in (0, {}]", model.u_max));
        }
        if self.v0.iter().any(|v| !(0.0..=self.u_max).contains(v)) {
            errs.push("mpc.v0 must lie in [0, u_max]".into());
        }
        if !(0.0..1.0).contains(&self.v0_floor_fraction) {
            errs.push("mpc.v0_floor_fraction must lie in [0, 1)".into());
        }
        if !(self.solver_tolerance > 0.0) || self.solver_max_iterations == 0 {
            errs.push("mpc solver tolerance and iteration cap must be positive".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// `v0` with the positive floor applied.
    pub fn operating_speeds(&self) -> [f64; INPUT_DIM] {
        let floor = self.v0_floor_fraction * self.u_max;
        self.v0.map(|v| v.max(floor))
    }

    pub fn q_matrix(&self) -> Matrix6 {
        Matrix6::from_diagonal(&self.q_diag.into())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub a_c: Matrix6,
    pub b_c: Matrix6x4,
    pub a_d: Matrix6,
    pub b_d: Matrix6x4,
}

impl LinearModel {
    pub fn new(model: &RobotModel, v0: &[f64; INPUT_DIM], dt: f64) -> Self {
        let (a_c, b_c) = linearize(model, v0);
        let (a_d, b_d) = discretize(&a_c, &b_c, dt);
        Self { a_c, b_c, a_d, b_d }
    }
}

/// Continuous model about speeds `v0`: `theta_dot = omega`, and
/// `omega_dot = B_c dv` with column i equal to `I^-1 (r_i x e_i) 2 c_f v0_i`.
pub fn linearize(model: &RobotModel, v0: &[f64; INPUT_DIM]) -> (Matrix6, Matrix6x4) {
    let mut a_c = Matrix6::zeros();
    a_c.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
    let i_inv = model.inertia_inv();
    let mut b_c = Matrix6x4::zeros();
    for i in 0..INPUT_DIM {
        let col: Vector3<f64> = i_inv
            * model.thruster_positions[i].cross(&model.thruster_directions[i])
            * (2.0 * model.c_f * v0[i]);
        b_c.fixed_view_mut::<3, 1>(3, i).copy_from(&col);
    }
    (a_c, b_c)
}

/// Forward-Euler discretization: `A_d = I + A_c dt`, `B_d = B_c dt`.
pub fn discretize(a_c: &Matrix6, b_c: &Matrix6x4, dt: f64) -> (Matrix6, Matrix6x4) {
    (Matrix6::identity() + a_c * dt, b_c * dt)
}

/// Condensed prediction `X = A_qp x0 + B_qp U` stacking `x_1 .. x_H`.
///
/// Generic in the state and input sizes so the oracle tests can use random
/// systems of any shape.
pub fn build_prediction(a_d: &DMatrix<f64>, b_d: &DMatrix<f64>, horizon: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a_d.nrows();
    let m = b_d.ncols();
    let mut a_qp = DMatrix::zeros(n * horizon, n);
    let mut b_qp = DMatrix::zeros(n * horizon, m * horizon);
    // powers[k] = A^k
    let mut powers = Vec::with_capacity(horizon + 1);
    powers.push(DMatrix::identity(n, n));
    for k in 1..=horizon {
        let next = a_d * &powers[k - 1];
        powers.push(next);
    }
    let ab: Vec<DMatrix<f64>> = powers.iter().take(horizon).map(|p| p * b_d).collect();
    for row in 0..horizon {
        a_qp.view_mut((row * n, 0), (n, n)).copy_from(&powers[row + 1]);
        for j in 0..=row {
            b_qp.view_mut((row * n, j * m), (n, m)).copy_from(&ab[row - j]);
        }
    }
    (a_qp, b_qp)
}

/// Residual-augmented reference, for k = 1..H:
/// `x_r,k = [theta0 + k dt (omega_d + k dt a_res); omega_d + k dt a_res]`.
pub fn build_reference(
    theta0: &Vector3<f64>,
    omega_d: &Vector3<f64>,
    residual: &Vector3<f64>,
    dt: f64,
    horizon: usize,
) -> DVector<f64> {
    let mut x_r = DVector::zeros(STATE_DIM * horizon);
    for k in 1..=horizon {
        let kdt = k as f64 * dt;
        let rate = omega_d + residual * kdt;
        let att = theta0 + rate * kdt;
        let base = (k - 1) * STATE_DIM;
        x_r.fixed_rows_mut::<3>(base).copy_from(&att);
        x_r.fixed_rows_mut::<3>(base + 3).copy_from(&rate);
    }
    x_r
}
