use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{RobotModel, NUM_LEGS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gait {
    /// Diagonal trot with feet under the hips.
    Trot,
    /// Diagonal trot with feet pulled toward the body midline.
    Cat,
}

/// Raibert controller and gait-timing parameters.
///
/// `k_pitch` and `k_roll` are the diagonal of the orientation gain matrix.
/// With z up, positive roll lifts the left side and positive pitch drops the
/// nose, so a corrective `k_roll` is positive and a corrective `k_pitch` is
/// negative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RaibertConfig {
    /// Gait period T (s).
    pub period: f64,
    /// Velocity feedback gain k (s).
    pub k_velocity: f64,
    /// Desired planar velocity, body frame (m/s).
    pub v_desired: [f64; 2],
    pub k_pitch: f64,
    pub k_roll: f64,
    /// Reference foot positions relative to the CoM, body frame (m).
    pub p_ref: [[f64; 2]; NUM_LEGS],
    /// Nominal CoM height above the feet (m).
    pub stance_height: f64,
    pub step_height: f64,
    /// Stance fraction of the period.
    pub duty: f64,
    pub phase_offsets: [f64; NUM_LEGS],
}

impl RaibertConfig {
    pub fn trot(model: &RobotModel) -> Self {
        let p_ref = std::array::from_fn(|i| [model.hip_offsets[i].x, model.hip_offsets[i].y]);
        Self {
            period: 1.0 / 1.5,
            k_velocity: 0.03,
            v_desired: [0.0, 0.0],
            k_pitch: -0.5,
            k_roll: 0.5,
            p_ref,
            stance_height: 0.28,
            step_height: 0.04,
            duty: 0.5,
            phase_offsets: [0.0, 0.5, 0.5, 0.0],
        }
    }

    /// Trot timing with the lateral foot references scaled by `narrowing`
    /// (1 keeps the hip width, 0 puts every foot on the midline).
    pub fn cat(model: &RobotModel, narrowing: f64) -> Self {
        let mut cfg = Self::trot(model);
        for p in &mut cfg.p_ref {
            p[1] *= narrowing;
        }
        cfg
    }

    pub fn for_gait(gait: Gait, model: &RobotModel, cat_narrowing: f64) -> Self {
        match gait {
            Gait::Trot => Self::trot(model),
            Gait::Cat => Self::cat(model, cat_narrowing),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.period > 0.0) {
            errs.push("raibert.period must be > 0".to_string());
        }
        if !(self.duty > 0.0 && self.duty < 1.0) {
            errs.push("raibert.duty must lie in (0, 1)".into());
        }
        if self.phase_offsets.iter().any(|o| !(0.0..1.0).contains(o)) {
            errs.push("raibert.phase_offsets must lie in [0, 1)".into());
        }
        if !(self.stance_height > 0.0) {
            errs.push("raibert.stance_height must be > 0".into());
        }
        if !(self.step_height >= 0.0) {
            errs.push("raibert.step_height must be >= 0".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LegPhase {
    pub stance: bool,
    /// Progress through the current stance or swing interval, in [0, 1).
    pub phase: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaitPhase {
    pub legs: [LegPhase; NUM_LEGS],
}

impl GaitPhase {
    pub fn stance_flags(&self) -> [bool; NUM_LEGS] {
        self.legs.map(|l| l.stance)
    }
}

pub fn gait_phase(t: f64, cfg: &RaibertConfig) -> GaitPhase {
    let cycle = t / cfg.period;
    let legs = std::array::from_fn(|i| {
        let s = (cycle + cfg.phase_offsets[i]).rem_euclid(1.0);
        if s < cfg.duty {
            LegPhase { stance: true, phase: s / cfg.duty }
        } else {
            LegPhase {
                stance: false,
                phase: ((s - cfg.duty) / (1.0 - cfg.duty)).min(1.0 - f64::EPSILON),
            }
        }
    });
    GaitPhase { legs }
}
