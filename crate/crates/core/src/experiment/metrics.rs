use serde::{Deserialize, Serialize};

use super::log::LogRow;
use crate::error::{Error, Result};

/// Inputs to `compute_metrics` that the log itself does not carry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsParams {
    /// Thrust coefficient converting squared speed to force.
    pub c_f: f64,
    /// Length of the calm window required for recovery (s).
    pub gait_period: f64,
    /// End of the push (s); recovery is only sought from here on.
    pub push_end: Option<f64>,
    pub recovery_threshold_deg: f64,
    pub fall_angle_deg: f64,
    /// Whether the controller fed a residual to the MPC, in which case the
    /// augmented model error is reported.
    pub augmented: bool,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Per-axis RMSE of the thrust-only model against the realized angular
    /// acceleration (rad/s^2).
    pub omega_dot_rmse_nominal: [f64; 3],
    /// Same with the residual the MPC used added to the model.
    pub omega_dot_rmse_augmented: Option<[f64; 3]>,
    /// RMS roll angle over the log (rad).
    pub roll_rmse: f64,
    pub max_abs_roll_deg: f64,
    pub recovered: bool,
    /// Start of the first calm window after the push (s).
    pub recovery_time: Option<f64>,
    /// Time average of the total thruster force (N).
    pub mean_thruster_force: f64,
    pub failed: bool,
    pub failure_time: Option<f64>,
    pub duration: f64,
    pub n_steps: usize,
    pub config_hash: String,
}

/// Window comparisons tolerate this much floating-point slack in time stamps.
const TIME_EPS: f64 = 1e-9;

/// Metrics of a closed-loop run.
///
/// Recovery means |roll| stays under the threshold for at least one gait
/// period, starting at or after the push end, with no fall anywhere in the
/// log. A fall is the first step where |roll| or |pitch| exceeds the fall
/// angle.
pub fn compute_metrics(log: &[LogRow], p: &MetricsParams) -> Result<MetricsReport> {
    let Some(last) = log.last() else {
        return Err(Error::Log("trajectory log has no rows".into()));
    };
    if !(p.gait_period > 0.0) {
        return Err(Error::Domain("gait period must be > 0".into()));
    }
    let n = log.len() as f64;
    let mut nom = [0.0; 3];
    let mut aug = [0.0; 3];
    let (mut roll_sq, mut max_roll, mut thrust) = (0.0_f64, 0.0_f64, 0.0);
    let fall = p.fall_angle_deg.to_radians();
    let mut failure_time = None;
    for r in log {
        for a in 0..3 {
            let e = r.omega_dot[a] - r.nominal_omega_dot[a];
            nom[a] += e * e;
            let e = e - r.residual[a];
            aug[a] += e * e;
        }
        roll_sq += r.euler[0] * r.euler[0];
        max_roll = max_roll.max(r.euler[0].abs());
        thrust += r.thruster_speeds.iter().map(|v| p.c_f * v * v).sum::<f64>();
        if failure_time.is_none() && (r.euler[0].abs() > fall || r.euler[1].abs() > fall) {
            failure_time = Some(r.t);
        }
    }
    let rms = |s: [f64; 3]| s.map(|v| (v / n).sqrt());

    let recovery_time = if failure_time.is_some() { None } else { first_calm_window(log, p) };
    Ok(MetricsReport {
        omega_dot_rmse_nominal: rms(nom),
        omega_dot_rmse_augmented: p.augmented.then(|| rms(aug)),
        roll_rmse: (roll_sq / n).sqrt(),
        max_abs_roll_deg: max_roll.to_degrees(),
        recovered: recovery_time.is_some(),
        recovery_time,
        mean_thruster_force: thrust / n,
        failed: failure_time.is_some(),
        failure_time,
        duration: last.t,
        n_steps: log.len(),
        config_hash: p.config_hash.clone(),
    })
}

fn first_calm_window(log: &[LogRow], p: &MetricsParams) -> Option<f64> {
    let threshold = p.recovery_threshold_deg.to_radians();
    let from = p.push_end.unwrap_or(f64::NEG_INFINITY);
    let mut start: Option<f64> = None;
    for r in log.iter().filter(|r| r.t >= from) {
        if r.euler[0].abs() >= threshold {
            start = None;
            continue;
        }
        let s = *start.get_or_insert(r.t);
        if r.t - s >= p.gait_period - TIME_EPS {
            return Some(s);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NUM_LEGS;

    fn row(t: f64, roll: f64) -> LogRow {
        LogRow {
            t,
            position: [0.0; 3],
            euler: [roll, 0.0, 0.0],
            omega: [0.0; 3],
            omega_dot: [0.0; 3],
            contact: [true; NUM_LEGS],
            grf: [[0.0; 3]; NUM_LEGS],
            thruster_speeds: [0.0; NUM_LEGS],
            joints: [[0.0; 3]; NUM_LEGS],
            external_force: [0.0; 3],
            nominal_omega_dot: [0.0; 3],
            residual: [0.0; 3],
            qp_iterations: 0,
            qp_kkt: 0.0,
            qp_cost: 0.0,
            qp_converged: true,
        }
    }

    fn params() -> MetricsParams {
        MetricsParams {
            c_f: 0.5,
            gait_period: 0.5,
            push_end: Some(1.0),
            recovery_threshold_deg: 5.0,
            fall_angle_deg: 60.0,
            augmented: false,
            config_hash: "h".into(),
        }
    }

    fn grid(f: impl Fn(f64) -> f64) -> Vec<LogRow> {
        (1..=4000).map(|k| k as f64 * 1e-3).map(|t| row(t, f(t))).collect()
    }

    #[test]
    fn zero_roll_recovers_at_push_end() {
        let m = compute_metrics(&grid(|_| 0.0), &params()).unwrap();
        assert_eq!(m.roll_rmse, 0.0);
        assert!(m.recovered);
        let t = m.recovery_time.unwrap();
        assert!((1.0..1.0 + 1.5e-3).contains(&t), "{t}");
        assert!(!m.failed);
    }

    #[test]
    fn thrusters_off_means_zero_force() {
        let m = compute_metrics(&grid(|_| 0.0), &params()).unwrap();
        assert_eq!(m.mean_thruster_force, 0.0);
    }

    #[test]
    fn thrust_is_mean_of_summed_cf_v_squared() {
        let mut log = grid(|_| 0.0);
        for (k, r) in log.iter_mut().enumerate() {
            r.thruster_speeds = if k % 2 == 0 { [2.0; NUM_LEGS] } else { [0.0, 0.0, 0.0, 4.0] };
        }
        // Even rows: 4 * 0.5 * 4 = 8 N. Odd rows: 0.5 * 16 = 8 N.
        let m = compute_metrics(&log, &params()).unwrap();
        assert!((m.mean_thruster_force - 8.0).abs() < 1e-12);
    }

    #[test]
    fn sinusoidal_roll_rms_is_amplitude_over_root_two() {
        let amp = 0.1;
        // Four whole periods of 1 s sampled uniformly.
        let m = compute_metrics(&grid(|t| amp * (std::f64::consts::TAU * t).sin()), &params()).unwrap();
        assert!((m.roll_rmse - amp / 2f64.sqrt()).abs() < 1e-6, "{}", m.roll_rmse);
        assert!((m.max_abs_roll_deg - amp.to_degrees()).abs() < 1e-3);
    }

    #[test]
    fn recovery_waits_for_a_full_calm_period() {
        let bad = 10f64.to_radians();
        let m = compute_metrics(&grid(|t| if t < 2.2 { bad } else { 0.0 }), &params()).unwrap();
        let t = m.recovery_time.unwrap();
        assert!((t - 2.2).abs() < 1.5e-3, "{t}");

        // Calm for less than a period before the log ends.
        let m = compute_metrics(&grid(|t| if t < 3.7 { bad } else { 0.0 }), &params()).unwrap();
        assert!(!m.recovered && m.recovery_time.is_none());
    }

    #[test]
    fn fall_is_failure_and_never_recovery() {
        let m = compute_metrics(&grid(|t| if (1.5..1.6).contains(&t) { 1.2 } else { 0.0 }), &params()).unwrap();
        assert!(m.failed && !m.recovered);
        assert!((m.failure_time.unwrap() - 1.5).abs() < 1.5e-3);
    }

    #[test]
    fn omega_dot_errors_split_by_residual() {
        let mut log = grid(|_| 0.0);
        for r in &mut log {
            r.omega_dot = [3.0, -4.0, 1.0];
            r.nominal_omega_dot = [1.0, 0.0, 1.0];
            r.residual = [2.0, -4.0, 0.5];
        }
        let mut p = params();
        p.augmented = true;
        let m = compute_metrics(&log, &p).unwrap();
        assert_eq!(m.omega_dot_rmse_nominal, [2.0, 4.0, 0.0]);
        assert_eq!(m.omega_dot_rmse_augmented, Some([0.0, 0.0, 0.5]));
        p.augmented = false;
        assert!(compute_metrics(&log, &p).unwrap().omega_dot_rmse_augmented.is_none());
    }

    #[test]
    fn empty_log_is_an_error() {
        assert!(compute_metrics(&[], &params()).is_err());
    }
}
