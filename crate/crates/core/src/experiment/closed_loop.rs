use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::crd::{robot_features, CrdFeatures, NetworkParams};
use crate::dynamics::{true_residual_accel, BodyState, ContactInfo, Simulator};
use crate::error::{Error, Result};
use crate::legged::{leg_ik, JointAngles, LeggedController, RaibertConfig};
use crate::model::{RobotModel, SimConfig, ThrusterCommand, NUM_LEGS};
use crate::mpc::{CrdEstimate, MpcConfig, MpcOutput, ThrusterMpc};

/// Rectangular external push applied at the CoM.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PushSpec {
    /// Force magnitude (N).
    pub magnitude: f64,
    /// Onset (s).
    pub start: f64,
    pub duration: f64,
    /// Direction in the inertial frame, normalized on use.
    pub axis: [f64; 3],
}

impl PushSpec {
    /// Lateral push toward +y.
    pub fn lateral(magnitude: f64, start: f64, duration: f64) -> Self {
        Self { magnitude, start, duration, axis: [0.0, 1.0, 0.0] }
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn force_at(&self, t: f64) -> Vector3<f64> {
        if t >= self.start && t < self.end() {
            Vector3::from(self.axis).normalize() * self.magnitude
        } else {
            Vector3::zeros()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    /// MPC on the nominal thruster dynamics only.
    Nominal,
    /// MPC with the learned contact residual in its reference.
    #[serde(alias = "crd-augmented")]
    Crd,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Nominal => "nominal",
            Self::Crd => "crd",
        }
    }
}

/// Where the MPC gets its contact residual from.
#[derive(Clone, Debug)]
pub enum ResidualSource {
    None,
    Network(Box<NetworkParams>),
    /// The simulator's exact contact residual at the tick. Only meaningful as
    /// an upper bound on what a learned model can achieve.
    Oracle,
}

/// Everything needed to assemble the closed loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopSetup {
    pub model: RobotModel,
    pub sim: SimConfig,
    pub mpc: MpcConfig,
    pub raibert: RaibertConfig,
    /// Initial planar offsets of each foot from its reference (m, body frame).
    pub foot_offsets: [[f64; 2]; NUM_LEGS],
}

/// One integration step as seen by the logger.
#[derive(Clone, Copy, Debug)]
pub struct StepRecord {
    /// Time at the end of the step (s).
    pub t: f64,
    pub state: BodyState,
    pub command: ThrusterCommand,
    pub external_force: Vector3<f64>,
    /// Contact at the start of the step, i.e. the forces that acted during it.
    pub contact: ContactInfo,
    pub omega_dot: Vector3<f64>,
    pub nominal_omega_dot: Vector3<f64>,
    /// Joint angles at the end of the step.
    pub joints: [JointAngles; NUM_LEGS],
}

/// One control tick: the inputs the controllers saw and what they produced.
#[derive(Clone, Debug)]
pub struct TickRecord {
    /// Tick time (s).
    pub t: f64,
    pub state: BodyState,
    /// Network input, evaluated with the previously applied command.
    pub features: CrdFeatures,
    pub moment_arms: [Vector3<f64>; NUM_LEGS],
    pub contact: ContactInfo,
    pub mpc: MpcOutput,
    /// Command actually applied (differs from `mpc.command` on soft failure).
    pub applied: ThrusterCommand,
    pub steps: Vec<StepRecord>,
}

/// Simulator, Raibert legs and thruster MPC running at the MPC rate.
#[derive(Clone, Debug)]
pub struct ClosedLoop {
    sim: Simulator,
    legs: LeggedController,
    mpc: ThrusterMpc,
    source: ResidualSource,
    steps_per_tick: usize,
    command: ThrusterCommand,
    soft_failures: usize,
}

impl ClosedLoop {
    pub fn new(setup: &LoopSetup, source: ResidualSource) -> Result<Self> {
        setup.raibert.validate()?;
        let ratio = setup.mpc.dt / setup.sim.dt_sim;
        let steps_per_tick = ratio.round() as usize;
        if steps_per_tick == 0 || (ratio - steps_per_tick as f64).abs() > 1e-9 {
            return Err(Error::Config(vec![format!(
                "mpc.dt ({}) must be a positive integer multiple of sim.dt_sim ({})",
                setup.mpc.dt, setup.sim.dt_sim
            )]));
        }
        if let ResidualSource::Network(n) = &source {
            n.validate()?;
        }
        let feet = LeggedController::nominal_feet(&setup.raibert);
        let mut q0 = [JointAngles::zeros(); NUM_LEGS];
        for i in 0..NUM_LEGS {
            let offset = Vector3::new(setup.foot_offsets[i][0], setup.foot_offsets[i][1], 0.0);
            let target = feet[i] + offset - setup.model.hip_offsets[i];
            q0[i] = leg_ik(&target, &JointAngles::new(0.0, -0.8, 1.6), &setup.model)?.q;
        }
        let mut sim = Simulator::standing(setup.model.clone(), setup.sim.clone(), q0)?;
        let mpc = ThrusterMpc::new(&setup.model, setup.mpc.clone())?;
        let legs = LeggedController::new(setup.raibert.clone(), setup.model.clone());
        let command = mpc.equilibrium_command();
        sim.set_rotor_speeds(command.v);
        Ok(Self { sim, legs, mpc, source, steps_per_tick, command, soft_failures: 0 })
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    pub fn mpc(&self) -> &ThrusterMpc {
        &self.mpc
    }

    pub fn time(&self) -> f64 {
        self.sim.time()
    }

    pub fn steps_per_tick(&self) -> usize {
        self.steps_per_tick
    }

    pub fn soft_failures(&self) -> usize {
        self.soft_failures
    }

    /// Network features and moment arms at the current state.
    pub fn observe(&self) -> (CrdFeatures, [Vector3<f64>; NUM_LEGS]) {
        let features = robot_features(&self.sim, &self.command);
        let arms = std::array::from_fn(|i| self.sim.foot_body(i));
        (features, arms)
    }

    /// Run one control tick followed by `steps_per_tick` integration steps.
    pub fn tick(&mut self, push: Option<&PushSpec>) -> Result<TickRecord> {
        let t = self.sim.time();
        let state = self.sim.state;
        let (features, moment_arms) = self.observe();
        let contact = self.sim.contact();
        let residual = match &self.source {
            ResidualSource::None => Vector3::zeros(),
            ResidualSource::Network(n) => {
                self.mpc.residual(Some(&CrdEstimate { output: n.forward(&features), moment_arms }))
            }
            ResidualSource::Oracle => true_residual_accel(&contact, self.sim.model()),
        };
        let out = self.mpc.step_with_residual(&state, &residual);
        if out.converged {
            self.command = out.command;
        } else {
            self.soft_failures += 1;
            log::warn!("QP not converged at t={t:.3} (kkt {:.3e}), holding previous command", out.kkt_residual);
        }
        let dt_ctrl = self.mpc.config().dt;
        let targets = self.legs.step(&state, &self.sim.legs.q, t, dt_ctrl)?;

        let mut steps = Vec::with_capacity(self.steps_per_tick);
        for _ in 0..self.steps_per_tick {
            let f_ext = push.map_or_else(Vector3::zeros, |p| p.force_at(self.sim.time()));
            let report = self.sim.step(&self.command, &targets, &f_ext)?;
            steps.push(StepRecord {
                t: self.sim.time(),
                state: self.sim.state,
                command: self.command,
                external_force: f_ext,
                contact: report.contact,
                omega_dot: report.omega_dot,
                nominal_omega_dot: report.nominal_omega_dot,
                joints: self.sim.legs.q,
            });
        }
        Ok(TickRecord { t, state, features, moment_arms, contact, mpc: out, applied: self.command, steps })
    }
}
