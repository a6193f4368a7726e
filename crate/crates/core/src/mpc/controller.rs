use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::linear::{build_prediction, build_reference, LinearModel, MpcConfig, ResidualUse, INPUT_DIM, STATE_DIM};
use super::qp::{solve_box_qp, QpSettings, QpSolution};
use crate::crd::{residual_from_outputs, CrdOutput};
use crate::dynamics::BodyState;
use crate::error::Result;
use crate::model::{RobotModel, ThrusterCommand, NUM_LEGS};

/// Condensed QP over the stacked speed deviations `U`.
#[derive(Clone, Debug, PartialEq)]
pub struct MpcProblem {
    pub a_qp: DMatrix<f64>,
    pub b_qp: DMatrix<f64>,
    pub x0: DVector<f64>,
    pub x_r: DVector<f64>,
    pub q_bar: DMatrix<f64>,
    pub r_bar: DMatrix<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl MpcProblem {
    /// Hessian `2 (B' Q B + R)` and linear term `2 B' Q (A x0 - x_r)`.
    pub fn condensed(&self) -> (DMatrix<f64>, DVector<f64>) {
        let bt_q = self.b_qp.transpose() * &self.q_bar;
        let hessian = (&bt_q * &self.b_qp + &self.r_bar) * 2.0;
        let linear = &bt_q * (&self.a_qp * &self.x0 - &self.x_r) * 2.0;
        (hessian, linear)
    }

    /// `(x - x_r)' Q (x - x_r) + u' R u`.
    pub fn cost(&self, u: &DVector<f64>) -> f64 {
        let e = &self.a_qp * &self.x0 + &self.b_qp * u - &self.x_r;
        e.dot(&(&self.q_bar * &e)) + u.dot(&(&self.r_bar * u))
    }
}

pub fn solve_qp(problem: &MpcProblem, settings: &QpSettings) -> QpSolution {
    let (p, q) = problem.condensed();
    solve_box_qp(&p, &q, &problem.lower, &problem.upper, settings)
}

/// Network output together with the moment arms it is evaluated at.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrdEstimate {
    pub output: CrdOutput,
    pub moment_arms: [Vector3<f64>; NUM_LEGS],
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpcOutput {
    pub command: ThrusterCommand,
    /// Residual injected into the reference (zero for the nominal controller).
    pub residual: Vector3<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
    /// Value of the MPC objective at the solution.
    pub cost: f64,
}

/// Box-constrained linear MPC over propeller speeds. All matrices that do not
/// depend on the measured state are built once.
#[derive(Clone, Debug)]
pub struct ThrusterMpc {
    cfg: MpcConfig,
    u_max: f64,
    v0: [f64; INPUT_DIM],
    inertia_inv: Matrix3<f64>,
    linear: LinearModel,
    a_qp: DMatrix<f64>,
    b_qp: DMatrix<f64>,
    q_diag: DVector<f64>,
    /// Stacked response of `x_1 .. x_H` to a unit constant residual.
    residual_response: DMatrix<f64>,
    hessian: DMatrix<f64>,
    bt_q: DMatrix<f64>,
    lower: DVector<f64>,
    upper: DVector<f64>,
    settings: QpSettings,
}

impl ThrusterMpc {
    pub fn new(model: &RobotModel, cfg: MpcConfig) -> Result<Self> {
        model.validate()?;
        cfg.validate(model)?;
        let h = cfg.horizon;
        let v0 = cfg.operating_speeds();
        let linear = LinearModel::new(model, &v0, cfg.dt);
        let a_d = DMatrix::from_column_slice(STATE_DIM, STATE_DIM, linear.a_d.as_slice());
        let b_d = DMatrix::from_column_slice(STATE_DIM, INPUT_DIM, linear.b_d.as_slice());
        let (a_qp, b_qp) = build_prediction(&a_d, &b_d, h);
        let mut e = DMatrix::zeros(STATE_DIM, 3);
        e.view_mut((3, 0), (3, 3)).fill_diagonal(cfg.dt);
        let (_, e_qp) = build_prediction(&a_d, &e, h);
        let mut residual_response = DMatrix::zeros(STATE_DIM * h, 3);
        for j in 0..h {
            residual_response += e_qp.columns(3 * j, 3);
        }
        let q_diag = DVector::from_fn(STATE_DIM * h, |i, _| cfg.q_diag[i % STATE_DIM]);
        let r_diag = DVector::from_fn(INPUT_DIM * h, |i, _| cfg.r_diag[i % INPUT_DIM]);
        let mut bt_q = b_qp.transpose();
        for (j, mut col) in bt_q.column_iter_mut().enumerate() {
            col *= q_diag[j];
        }
        let mut hessian = &bt_q * &b_qp;
        for i in 0..INPUT_DIM * h {
            hessian[(i, i)] += r_diag[i];
        }
        hessian *= 2.0;
        let lower = DVector::from_fn(INPUT_DIM * h, |i, _| -v0[i % INPUT_DIM]);
        let upper = DVector::from_fn(INPUT_DIM * h, |i, _| cfg.u_max - v0[i % INPUT_DIM]);
        let settings = QpSettings { tolerance: cfg.solver_tolerance, max_iterations: cfg.solver_max_iterations };
        Ok(Self {
            u_max: cfg.u_max,
            v0,
            inertia_inv: model.inertia_inv(),
            linear,
            a_qp,
            b_qp,
            q_diag,
            residual_response,
            hessian,
            bt_q,
            lower,
            upper,
            settings,
            cfg,
        })
    }

    pub fn config(&self) -> &MpcConfig {
        &self.cfg
    }

    pub fn linear_model(&self) -> &LinearModel {
        &self.linear
    }

    /// Operating speeds after the floor.
    pub fn operating_speeds(&self) -> [f64; INPUT_DIM] {
        self.v0
    }

    pub fn equilibrium_command(&self) -> ThrusterCommand {
        ThrusterCommand { v: self.v0 }
    }

    pub fn residual(&self, crd: Option<&CrdEstimate>) -> Vector3<f64> {
        match crd {
            Some(c) => residual_from_outputs(&c.output, &c.moment_arms, &self.inertia_inv),
            None => Vector3::zeros(),
        }
    }

    /// Reference trajectory for an estimated residual, signed per
    /// `residual_use`.
    pub fn reference(&self, residual: &Vector3<f64>) -> DVector<f64> {
        let theta0 = Vector3::from(self.cfg.theta0);
        let omega_d = Vector3::from(self.cfg.omega_desired);
        let scaled = residual * self.cfg.residual_scale;
        let (dt, h) = (self.cfg.dt, self.cfg.horizon);
        match self.cfg.residual_use {
            ResidualUse::Follow => build_reference(&theta0, &omega_d, &scaled, dt, h),
            ResidualUse::Compensate => build_reference(&theta0, &omega_d, &-scaled, dt, h),
            ResidualUse::Predict => {
                build_reference(&theta0, &omega_d, &Vector3::zeros(), dt, h) - &self.residual_response * scaled
            }
        }
    }

    /// The full QP for a given state and residual, with dense weights.
    pub fn problem(&self, state: &BodyState, residual: &Vector3<f64>) -> MpcProblem {
        let h = self.cfg.horizon;
        MpcProblem {
            a_qp: self.a_qp.clone(),
            b_qp: self.b_qp.clone(),
            x0: DVector::from_column_slice(state.mpc_state().as_slice()),
            x_r: self.reference(residual),
            q_bar: DMatrix::from_diagonal(&self.q_diag),
            r_bar: DMatrix::from_diagonal(&DVector::from_fn(INPUT_DIM * h, |i, _| self.cfg.r_diag[i % INPUT_DIM])),
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        }
    }

    /// One MPC tick: solve and return the first input block as absolute speeds.
    pub fn step(&self, state: &BodyState, crd: Option<&CrdEstimate>) -> MpcOutput {
        self.step_with_residual(state, &self.residual(crd))
    }

    /// One MPC tick with an externally supplied residual estimate.
    pub fn step_with_residual(&self, state: &BodyState, residual: &Vector3<f64>) -> MpcOutput {
        let residual = *residual;
        let x0 = DVector::from_column_slice(state.mpc_state().as_slice());
        let x_r = self.reference(&residual);
        let err0 = &self.a_qp * &x0 - &x_r;
        let linear = &self.bt_q * &err0 * 2.0;
        let sol = solve_box_qp(&self.hessian, &linear, &self.lower, &self.upper, &self.settings);
        let v = std::array::from_fn(|i| (self.v0[i] + sol.u[i]).clamp(0.0, self.u_max));
        let e = &err0 + &self.b_qp * &sol.u;
        let cost = e.component_mul(&self.q_diag).dot(&e)
            + sol.u.iter().enumerate().map(|(i, u)| self.cfg.r_diag[i % INPUT_DIM] * u * u).sum::<f64>();
        MpcOutput {
            command: ThrusterCommand { v },
            residual,
            iterations: sol.iterations,
            converged: sol.converged,
            kkt_residual: sol.kkt_residual,
            cost,
        }
    }
}
