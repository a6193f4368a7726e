use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Record, RolloutInfo};
use crate::experiment::config_hash;
use crate::crd::CrdSample;
use crate::error::{Error, Result};
use crate::experiment::{ClosedLoop, LoopSetup, PushSpec, ResidualSource, StepRecord, TickRecord};
use crate::legged::Gait;

/// Which gaits the rollouts use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GaitSelection {
    Trot,
    Cat,
    /// Even rollout ids trot, odd ones use the cat gait.
    Mixed,
}

impl GaitSelection {
    pub fn gait_for(self, rollout: usize) -> Gait {
        match self {
            Self::Trot => Gait::Trot,
            Self::Cat => Gait::Cat,
            Self::Mixed if rollout.is_multiple_of(2) => Gait::Trot,
            Self::Mixed => Gait::Cat,
        }
    }
}

/// How the measured angular acceleration in the training target is formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetSource {
    /// The acceleration the integrator applied over the step after the tick.
    Simulator,
    /// Central difference of the logged angular velocity around the tick.
    FiniteDifference,
    /// Mean residual over the whole control tick, i.e. the velocity change
    /// across the tick minus the mean thrust-only acceleration.
    TickAverage,
    /// Backward difference over the last integration step before the tick:
    /// the contact acceleration acting at the sampled state, before the new
    /// joint targets of the tick move the legs.
    BackwardDifference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollectConfig {
    pub n_rollouts: usize,
    /// Rollout length (s).
    pub rollout_duration: f64,
    pub seed: u64,
    /// Bounds of the per-leg planar foot offset applied at reset (m).
    pub position_offset_range: [f64; 2],
    pub push_magnitude_range: [f64; 2],
    pub push_duration_range: [f64; 2],
    pub push_start_range: [f64; 2],
    pub gait: GaitSelection,
    /// Lateral scale of the foot references in the cat gait.
    pub cat_narrowing: f64,
    pub target: TargetSource,
    /// Fraction of rollouts held out for evaluation.
    pub held_out_fraction: f64,
    /// Roll or pitch beyond this (degrees) counts as a fall and ends the
    /// rollout like a divergence.
    pub fall_angle_deg: f64,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self {
            n_rollouts: 100,
            rollout_duration: 4.0,
            seed: 7,
            position_offset_range: [-0.02, 0.02],
            push_magnitude_range: [5.0, 20.0],
            push_duration_range: [0.2, 0.8],
            push_start_range: [1.0, 3.0],
            gait: GaitSelection::Mixed,
            cat_narrowing: 0.3,
            target: TargetSource::BackwardDifference,
            held_out_fraction: 0.2,
            fall_angle_deg: 60.0,
        }
    }
}

fn check_range(errs: &mut Vec<String>, name: &str, r: [f64; 2], min: f64) {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
        errs.push(format!("collect.{name}: lower bound must not exceed upper bound"));
    } else if r[0] < min {
        errs.push(format!("collect.{name}: values must be >= {min}"));
    }
}

impl CollectConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.n_rollouts < 1 {
            errs.push("collect.n_rollouts must be >= 1".to_string());
        }
        if !(self.rollout_duration > 0.0) {
            errs.push("collect.rollout_duration must be > 0".into());
        }
        check_range(&mut errs, "position_offset_range", self.position_offset_range, f64::NEG_INFINITY);
        check_range(&mut errs, "push_magnitude_range", self.push_magnitude_range, 0.0);
        check_range(&mut errs, "push_duration_range", self.push_duration_range, 0.0);
        check_range(&mut errs, "push_start_range", self.push_start_range, 0.0);
        if !(0.0..=1.0).contains(&self.cat_narrowing) {
            errs.push("collect.cat_narrowing must lie in [0, 1]".into());
        }
        if !(self.fall_angle_deg > 0.0) {
            errs.push("collect.fall_angle_deg must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.held_out_fraction) {
            errs.push("collect.held_out_fraction must lie in [0, 1)".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Randomized per-rollout conditions. Each rollout draws from its own stream
/// so results do not depend on the order rollouts are run in.
pub fn rollout_conditions(cfg: &CollectConfig, base: &LoopSetup, rollout: usize) -> (LoopSetup, PushSpec, Gait) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(rollout as u64);
    let gait = cfg.gait.gait_for(rollout);
    let mut setup = base.clone();
    if gait == Gait::Cat {
        for p in &mut setup.raibert.p_ref {
            p[1] *= cfg.cat_narrowing;
        }
    }
    for off in &mut setup.foot_offsets {
        *off = [uniform(&mut rng, cfg.position_offset_range), uniform(&mut rng, cfg.position_offset_range)];
    }
    let magnitude = uniform(&mut rng, cfg.push_magnitude_range);
    let duration = uniform(&mut rng, cfg.push_duration_range);
    let start = uniform(&mut rng, cfg.push_start_range);
    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let axis = if rng.random_bool(0.5) { [side, 0.0, 0.0] } else { [0.0, side, 0.0] };
    let push = PushSpec { magnitude, start, duration, axis };
    (setup, push, gait)
}

fn sample_from_tick(
    tick: &TickRecord,
    prev_omega: &Vector3<f64>,
    prev_step: Option<&StepRecord>,
    target: TargetSource,
) -> Option<CrdSample> {
    let first = &tick.steps[0];
    let residual = match target {
        TargetSource::Simulator => first.omega_dot - first.nominal_omega_dot,
        TargetSource::FiniteDifference => {
            let dt = first.t - tick.t;
            (first.state.omega - prev_omega) / (2.0 * dt) - first.nominal_omega_dot
        }
        TargetSource::TickAverage => {
            let last = tick.steps.last().expect("a tick has at least one step");
            let n = tick.steps.len() as f64;
            let nominal = tick.steps.iter().map(|s| s.nominal_omega_dot).sum::<Vector3<f64>>() / n;
            (last.state.omega - tick.state.omega) / (last.t - tick.t) - nominal
        }
        TargetSource::BackwardDifference => {
            let prev = prev_step?;
            prev.omega_dot - prev.nominal_omega_dot
        }
    };
    Some(CrdSample {
        features: tick.features,
        moment_arms: tick.moment_arms,
        target_residual: residual,
        contact: tick.contact.in_contact,
    })
}

/// Run one rollout with the nominal controller. Divergence ends the rollout
/// and is reported through `RolloutInfo::diverged_at`.
pub fn run_rollout(cfg: &CollectConfig, base: &LoopSetup, rollout: usize) -> Result<(RolloutInfo, Vec<Record>)> {
    let (setup, push, gait) = rollout_conditions(cfg, base, rollout);
    let mut sim = ClosedLoop::new(&setup, ResidualSource::None)?;
    let ticks = (cfg.rollout_duration / setup.mpc.dt).round() as usize;
    let mut records = Vec::with_capacity(ticks);
    let mut prev_omega = sim.simulator().state.omega;
    let mut prev_step: Option<StepRecord> = None;
    let mut diverged_at = None;
    for _ in 0..ticks {
        match sim.tick(Some(&push)) {
            Ok(tick) => {
                let e = tick.state.euler();
                let limit = cfg.fall_angle_deg.to_radians();
                if e.x.abs() > limit || e.y.abs() > limit {
                    diverged_at = Some(tick.t);
                    break;
                }
                if let Some(sample) = sample_from_tick(&tick, &prev_omega, prev_step.as_ref(), cfg.target) {
                    records.push(Record { rollout_id: rollout, t: tick.t, sample });
                }
                prev_step = tick.steps.last().copied();
                let n = tick.steps.len();
                prev_omega = if n >= 2 { tick.steps[n - 2].state.omega } else { tick.state.omega };
            }
            Err(Error::SimulationDiverged { time, .. }) => {
                diverged_at = Some(time);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let info = RolloutInfo { id: rollout, gait, push, foot_offsets: setup.foot_offsets, diverged_at };
    Ok((info, records))
}

/// Closed-loop data collection under randomized perturbations.
///
/// Rollouts that diverge are logged and dropped; collection continues.
pub fn collect(cfg: &CollectConfig, base: &LoopSetup) -> Result<Dataset> {
    cfg.validate()?;
    let mut rollouts = Vec::with_capacity(cfg.n_rollouts);
    let mut records = Vec::new();
    for id in 0..cfg.n_rollouts {
        let (info, recs) = run_rollout(cfg, base, id)?;
        if let Some(t) = info.diverged_at {
            log::warn!("rollout {id} diverged at t={t:.3} s, discarded");
        } else {
            records.extend(recs);
        }
        rollouts.push(info);
    }
    let kept: Vec<usize> = rollouts.iter().filter(|r| r.diverged_at.is_none()).map(|r| r.id).collect();
    if kept.is_empty() {
        return Err(Error::Domain("every rollout diverged, no data collected".into()));
    }
    let n_held = ((kept.len() as f64) * cfg.held_out_fraction).round() as usize;
    let n_held = n_held.min(kept.len() - 1);
    let held_out: Vec<usize> = kept[kept.len() - n_held..].to_vec();
    let hash = config_hash(&(cfg, base))?;
    Ok(Dataset::new(records, rollouts, &held_out, cfg.seed, hash))
}
