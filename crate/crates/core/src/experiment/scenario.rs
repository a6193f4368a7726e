use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::closed_loop::{ClosedLoop, ControllerKind, ResidualSource};
use super::config::{ExperimentConfig, Scenario};
use super::log::{write_log, LogRow};
use super::metrics::{compute_metrics, MetricsParams, MetricsReport};
use crate::crd::{load_weights, save_weights};
use crate::error::{Error, Result};
use crate::trainer::{collect, evaluate_rmse, read_dataset, train, write_dataset, EpochStats, RmseReport};

/// Longest a scenario may take to recover after the push end (s).
pub const RECOVERY_DEADLINE: f64 = 2.0;

/// How a closed-loop run ended.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RunEnd {
    Completed,
    /// Roll or pitch passed the fall angle.
    Fell { time: f64 },
    /// The simulation or the leg kinematics broke down.
    Diverged { time: f64, reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, detail }
    }
}

/// Machine-readable pass/fail of a run against its scenario's criteria.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub scenario: Scenario,
    pub controller: ControllerKind,
    pub seed: u64,
    pub end: RunEnd,
    pub soft_failures: usize,
    pub checks: Vec<Check>,
    pub passed: bool,
}

/// Everything a closed-loop run produced.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub rows: Vec<LogRow>,
    pub metrics: MetricsReport,
    pub verdict: Verdict,
}

/// Residual source for the configured controller. Weights are loaded here so
/// a missing file stops the run before it starts.
pub fn residual_source(cfg: &ExperimentConfig) -> Result<ResidualSource> {
    match cfg.controller {
        ControllerKind::Nominal => Ok(ResidualSource::None),
        ControllerKind::Crd => {
            let path = cfg
                .weights
                .as_ref()
                .ok_or_else(|| Error::Config(vec!["weights: required by the crd controller".into()]))?;
            Ok(ResidualSource::Network(Box::new(load_weights(path)?)))
        }
    }
}

pub fn metrics_params(cfg: &ExperimentConfig) -> Result<MetricsParams> {
    Ok(MetricsParams {
        c_f: cfg.model.c_f,
        gait_period: cfg.gait.period,
        push_end: cfg.push().map(|p| p.end()),
        recovery_threshold_deg: cfg.metrics.recovery_threshold_deg,
        fall_angle_deg: cfg.metrics.fall_angle_deg,
        augmented: cfg.controller == ControllerKind::Crd,
        config_hash: cfg.hash()?,
    })
}

/// Run a closed-loop scenario in memory. Falls and divergence end the run
/// early and are reported in the verdict, not as errors.
pub fn simulate(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    if !cfg.scenario.is_closed_loop() {
        return Err(Error::Domain(format!("scenario {} is not a closed-loop run", cfg.scenario.name())));
    }
    simulate_with(cfg, residual_source(cfg)?)
}

/// As `simulate`, with the residual source supplied by the caller.
pub fn simulate_with(cfg: &ExperimentConfig, source: ResidualSource) -> Result<RunOutput> {
    let mut cl = ClosedLoop::new(&cfg.loop_setup(), source)?;
    let push = cfg.push();
    let ticks = (cfg.duration() / cfg.mpc.dt).round() as usize;
    let fall = cfg.metrics.fall_angle_deg.to_radians();
    let mut rows = Vec::with_capacity(ticks * cl.steps_per_tick());
    let mut end = RunEnd::Completed;
    for _ in 0..ticks {
        match cl.tick(push.as_ref()) {
            Ok(tick) => {
                let start = rows.len();
                rows.extend(LogRow::from_tick(&tick));
                if let Some(r) = rows[start..].iter().find(|r| r.euler[0].abs() > fall || r.euler[1].abs() > fall) {
                    end = RunEnd::Fell { time: r.t };
                    break;
                }
            }
            Err(e @ (Error::SimulationDiverged { .. } | Error::IkNonConvergence { .. })) => {
                end = RunEnd::Diverged { time: cl.time(), reason: e.to_string() };
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if rows.is_empty() {
        return Err(Error::Domain("the run ended before the first control tick completed".into()));
    }
    let mut metrics = compute_metrics(&rows, &metrics_params(cfg)?)?;
    if let RunEnd::Diverged { time, .. } = end {
        metrics.failed = true;
        metrics.failure_time = Some(time);
        metrics.recovered = false;
        metrics.recovery_time = None;
    }
    let checks = run_checks(cfg, &rows, &metrics);
    let verdict = Verdict {
        scenario: cfg.scenario,
        controller: cfg.controller,
        seed: cfg.seed,
        end,
        soft_failures: cl.soft_failures(),
        passed: checks.iter().all(|c| c.passed),
        checks,
    };
    Ok(RunOutput { rows, metrics, verdict })
}

fn run_checks(cfg: &ExperimentConfig, rows: &[LogRow], m: &MetricsReport) -> Vec<Check> {
    let mu = cfg.sim.friction_mu;
    let violations = rows
        .iter()
        .flat_map(|r| r.grf.iter())
        .filter(|f| f[2] < 0.0 || f[0].hypot(f[1]) > mu * f[2] + 1e-9)
        .count();
    let mut checks = vec![
        Check::new("no-fall", !m.failed, match m.failure_time {
            Some(t) => format!("failed at t = {t:.3} s"),
            None => format!("max |roll| {:.2} deg", m.max_abs_roll_deg),
        }),
        Check::new("contact-invariants", violations == 0, format!("{violations} force samples outside the friction cone")),
    ];
    if let (Scenario::PushRecovery, Some(push)) = (cfg.scenario, cfg.push()) {
        let within = m.recovery_time.is_some_and(|t| t - push.end() <= RECOVERY_DEADLINE);
        let detail = match m.recovery_time {
            Some(t) => format!("recovered at t = {t:.3} s, {:.3} s after the push", t - push.end()),
            None => "did not recover".into(),
        };
        checks.push(Check::new("recovered-within-deadline", within, detail));
    }
    checks
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_resolved_config(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let text = format!("# config hash {}\n{}", cfg.hash()?, cfg.to_toml()?);
    fs::write(dir.join("config.toml"), text)?;
    Ok(())
}

/// Write a run's log, metrics, verdict and resolved config into `dir`.
pub fn write_run(cfg: &ExperimentConfig, out: &RunOutput, dir: &Path) -> Result<()> {
    write_resolved_config(cfg, dir)?;
    write_log(&out.rows, &dir.join("trajectory.csv"))?;
    write_json(&out.metrics, &dir.join("metrics.json"))?;
    write_json(&out.verdict, &dir.join("verdict.json"))
}

fn fail_if_requested(cfg: &ExperimentConfig, out: &RunOutput) -> Result<()> {
    if !cfg.divergence_is_error {
        return Ok(());
    }
    match &out.verdict.end {
        RunEnd::Completed => Ok(()),
        RunEnd::Fell { time } => Err(Error::Domain(format!("robot fell at t = {time:.3} s"))),
        RunEnd::Diverged { time, reason } => Err(Error::Domain(format!("run diverged at t = {time:.3} s: {reason}"))),
    }
}

/// Run a closed-loop scenario and write its outputs to `cfg.out_dir`.
pub fn run_scenario(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let out = simulate(cfg)?;
    write_run(cfg, &out, &cfg.out_dir)?;
    fail_if_requested(cfg, &out)?;
    Ok(out)
}

/// Paired A/B result of the nominal and CRD controllers on one scenario.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Comparison {
    pub scenario: Scenario,
    pub seed: u64,
    pub nominal: MetricsReport,
    pub crd: MetricsReport,
    pub checks: Vec<Check>,
    pub passed: bool,
}

/// Scenario-level orderings between paired runs.
pub fn compare_checks(scenario: Scenario, nominal: &MetricsReport, crd: &MetricsReport) -> Vec<Check> {
    match scenario {
        Scenario::PushRecovery => {
            let faster = match (crd.recovery_time, nominal.recovery_time) {
                (Some(c), Some(n)) => c < n,
                (Some(_), None) => true,
                (None, _) => false,
            };
            let fmt = |t: Option<f64>| t.map_or("never".to_string(), |t| format!("{t:.3} s"));
            vec![Check::new(
                "crd-recovers-first",
                faster,
                format!("crd {}, nominal {}", fmt(crd.recovery_time), fmt(nominal.recovery_time)),
            )]
        }
        Scenario::NormalGait => vec![Check::new(
            "crd-thrust-not-above-nominal",
            crd.mean_thruster_force <= nominal.mean_thruster_force,
            format!("crd {:.4} N, nominal {:.4} N", crd.mean_thruster_force, nominal.mean_thruster_force),
        )],
        Scenario::CatGait => vec![Check::new(
            "crd-roll-rmse-not-above-nominal",
            !crd.failed && crd.roll_rmse <= nominal.roll_rmse,
            format!("crd {:.5} rad, nominal {:.5} rad", crd.roll_rmse, nominal.roll_rmse),
        )],
        _ => Vec::new(),
    }
}

/// Run both controllers from one configuration, so they see the same seed,
/// foot offsets and push. Outputs go to `nominal/` and `crd/` under
/// `cfg.out_dir`, with the ordering checks in `comparison.json`.
pub fn run_comparison(cfg: &ExperimentConfig) -> Result<Comparison> {
    let mut nom_cfg = cfg.clone();
    nom_cfg.controller = ControllerKind::Nominal;
    nom_cfg.out_dir = cfg.out_dir.join("nominal");
    let mut crd_cfg = cfg.clone();
    crd_cfg.controller = ControllerKind::Crd;
    crd_cfg.out_dir = cfg.out_dir.join("crd");
    let nominal = run_scenario(&nom_cfg)?;
    let crd = run_scenario(&crd_cfg)?;
    let checks = compare_checks(cfg.scenario, &nominal.metrics, &crd.metrics);
    let cmp = Comparison {
        scenario: cfg.scenario,
        seed: cfg.seed,
        passed: checks.iter().all(|c| c.passed),
        nominal: nominal.metrics,
        crd: crd.metrics,
        checks,
    };
    write_json(&cmp, &cfg.out_dir.join("comparison.json"))?;
    Ok(cmp)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CollectSummary {
    pub dataset: PathBuf,
    pub n_rollouts: usize,
    pub n_discarded: usize,
    pub n_samples: usize,
    pub n_train: usize,
    pub n_held_out: usize,
    pub config_hash: String,
}

/// Collect a dataset into `out_dir/dataset.csv`.
pub fn run_collect(cfg: &ExperimentConfig) -> Result<CollectSummary> {
    cfg.validate()?;
    write_resolved_config(cfg, &cfg.out_dir)?;
    let ds = collect(&cfg.collect, &cfg.collection_base())?;
    let path = cfg.out_dir.join("dataset.csv");
    let manifest = write_dataset(&ds, &path)?;
    let summary = CollectSummary {
        dataset: path,
        n_rollouts: ds.rollouts.len(),
        n_discarded: ds.rollouts.iter().filter(|r| r.diverged_at.is_some()).count(),
        n_samples: manifest.n_samples,
        n_train: manifest.n_train,
        n_held_out: manifest.n_held_out,
        config_hash: manifest.config_hash,
    };
    write_json(&summary, &cfg.out_dir.join("collect.json"))?;
    Ok(summary)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainSummary {
    pub weights: PathBuf,
    pub history: Vec<EpochStats>,
    pub held_out: Option<RmseReport>,
    pub dataset_warnings: Vec<String>,
}

/// Train on the dataset's training split and write `out_dir/weights.bin`.
/// When `weights` is set, training starts from those parameters.
pub fn run_train(cfg: &ExperimentConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let path = cfg.dataset.as_ref().ok_or_else(|| Error::Config(vec!["dataset: required by train".into()]))?;
    let loaded = read_dataset(path)?;
    let init = cfg.weights.as_deref().map(load_weights).transpose()?;
    write_resolved_config(cfg, &cfg.out_dir)?;
    let outcome = train(&loaded.dataset.train_samples(), &cfg.train, init, &cfg.model)?;
    let weights = cfg.out_dir.join("weights.bin");
    save_weights(&outcome.params, &weights)?;
    let held = loaded.dataset.held_out_samples();
    let held_out = if held.is_empty() { None } else { Some(evaluate_rmse(&outcome.params, &held, &cfg.model)?) };
    let summary = TrainSummary { weights, history: outcome.history, held_out, dataset_warnings: loaded.warnings };
    write_json(&summary, &cfg.out_dir.join("train.json"))?;
    Ok(summary)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalSummary {
    pub report: RmseReport,
    pub relative_improvement: [f64; 3],
    pub checks: Vec<Check>,
    pub passed: bool,
    pub dataset_warnings: Vec<String>,
}

/// Held-out comparison of the nominal and augmented dynamics.
pub fn eval_checks(report: &RmseReport) -> Vec<Check> {
    let gain = report.relative_improvement();
    let axes = ["roll", "pitch", "yaw"];
    let mut checks: Vec<Check> = (0..3)
        .map(|a| {
            Check::new(
                &format!("{}-rmse-improves", axes[a]),
                report.augmented[a] < report.nominal[a],
                format!("augmented {:.4}, nominal {:.4}", report.augmented[a], report.nominal[a]),
            )
        })
        .collect();
    checks.push(Check::new(
        "roll-gain-largest",
        gain[0] > gain[1] && gain[0] > gain[2],
        format!("relative gains roll {:.3}, pitch {:.3}, yaw {:.3}", gain[0], gain[1], gain[2]),
    ));
    checks
}

pub fn run_eval(cfg: &ExperimentConfig) -> Result<EvalSummary> {
    cfg.validate()?;
    let ds_path = cfg.dataset.as_ref().ok_or_else(|| Error::Config(vec!["dataset: required by eval-rmse".into()]))?;
    let w_path = cfg.weights.as_ref().ok_or_else(|| Error::Config(vec!["weights: required by eval-rmse".into()]))?;
    let params = load_weights(w_path)?;
    let loaded = read_dataset(ds_path)?;
    let held = loaded.dataset.held_out_samples();
    let report = evaluate_rmse(&params, &held, &cfg.model)?;
    let checks = eval_checks(&report);
    let summary = EvalSummary {
        relative_improvement: report.relative_improvement(),
        passed: checks.iter().all(|c| c.passed),
        report,
        checks,
        dataset_warnings: loaded.warnings,
    };
    write_resolved_config(cfg, &cfg.out_dir)?;
    write_json(&summary, &cfg.out_dir.join("eval.json"))?;
    Ok(summary)
}

/// Result of `run_experiment`, by scenario kind.
#[derive(Clone, Debug)]
pub enum ExperimentOutcome {
    Collect(CollectSummary),
    Train(TrainSummary),
    Eval(EvalSummary),
    Run(Box<RunOutput>),
}

/// Dispatch on the configured scenario.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    Ok(match cfg.scenario {
        Scenario::Collect => ExperimentOutcome::Collect(run_collect(cfg)?),
        Scenario::Train => ExperimentOutcome::Train(run_train(cfg)?),
        Scenario::EvalRmse => ExperimentOutcome::Eval(run_eval(cfg)?),
        _ => ExperimentOutcome::Run(Box::new(run_scenario(cfg)?)),
    })
}
