use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::closed_loop::{ControllerKind, LoopSetup, PushSpec};
use crate::error::{Error, Result};
use crate::legged::{Gait, RaibertConfig};
use crate::model::{RobotModel, SimConfig, NUM_LEGS};
use crate::mpc::MpcConfig;
use crate::trainer::{CollectConfig, TrainConfig};

/// SHA-256 of the JSON serialization. Field order is fixed by the type, so
/// equal values always hash equally.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let json = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&json)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Collect,
    Train,
    EvalRmse,
    PushRecovery,
    CatGait,
    NormalGait,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Collect,
        Scenario::Train,
        Scenario::EvalRmse,
        Scenario::PushRecovery,
        Scenario::CatGait,
        Scenario::NormalGait,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Collect => "collect",
            Self::Train => "train",
            Self::EvalRmse => "eval-rmse",
            Self::PushRecovery => "push-recovery",
            Self::CatGait => "cat-gait",
            Self::NormalGait => "normal-gait",
        }
    }

    /// Whether the scenario runs the closed loop and produces a trajectory.
    pub fn is_closed_loop(self) -> bool {
        matches!(self, Self::PushRecovery | Self::CatGait | Self::NormalGait)
    }

    fn default_gait(self) -> Gait {
        match self {
            Self::CatGait => Gait::Cat,
            _ => Gait::Trot,
        }
    }

    fn default_duration(self) -> f64 {
        match self {
            Self::PushRecovery => 8.0,
            _ => 10.0,
        }
    }
}

/// Gait timing and Raibert gains. Foot references follow the hips, pulled
/// toward the midline by `cat_narrowing` when the cat gait is selected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaitSection {
    /// Defaults to the scenario's gait (cat for `cat-gait`, trot otherwise).
    pub kind: Option<Gait>,
    pub cat_narrowing: f64,
    pub period: f64,
    pub k_velocity: f64,
    pub v_desired: [f64; 2],
    pub k_pitch: f64,
    pub k_roll: f64,
    pub stance_height: f64,
    pub step_height: f64,
    pub duty: f64,
}

impl Default for GaitSection {
    fn default() -> Self {
        let trot = RaibertConfig::trot(&RobotModel::default());
        Self {
            kind: None,
            cat_narrowing: 0.3,
            period: trot.period,
            k_velocity: trot.k_velocity,
            v_desired: trot.v_desired,
            k_pitch: trot.k_pitch,
            k_roll: trot.k_roll,
            stance_height: trot.stance_height,
            step_height: trot.step_height,
            duty: trot.duty,
        }
    }
}

/// Seed-driven variation shared by paired runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisturbanceSection {
    /// Bounds of the uniform per-leg planar foot offset at reset (m).
    pub foot_offset_range: [f64; 2],
}

impl Default for DisturbanceSection {
    fn default() -> Self {
        Self { foot_offset_range: [-0.02, 0.02] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    /// A run has recovered once |roll| stays below this for a gait period.
    pub recovery_threshold_deg: f64,
    /// |roll| or |pitch| beyond this ends the run as a fall.
    pub fall_angle_deg: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self { recovery_threshold_deg: 5.0, fall_angle_deg: 60.0 }
    }
}

/// One experiment: what to run, with which parameters, and where to write.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub controller: ControllerKind,
    pub seed: u64,
    /// Simulated time (s); defaults per scenario.
    pub duration: Option<f64>,
    pub out_dir: PathBuf,
    /// Network weights, required by the CRD controller and `eval-rmse`.
    pub weights: Option<PathBuf>,
    /// Dataset CSV, required by `train` and `eval-rmse`.
    pub dataset: Option<PathBuf>,
    /// Treat a fall or divergence as an error rather than a reported outcome.
    pub divergence_is_error: bool,
    /// External push; `push-recovery` uses 15 N along +y at 2 s for 0.5 s
    /// when absent.
    pub push: Option<PushSpec>,
    pub model: RobotModel,
    pub sim: SimConfig,
    pub mpc: MpcConfig,
    pub gait: GaitSection,
    pub disturbance: DisturbanceSection,
    pub metrics: MetricsSection,
    pub collect: CollectConfig,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::PushRecovery,
            controller: ControllerKind::Nominal,
            seed: 1,
            duration: None,
            out_dir: PathBuf::from("runs"),
            weights: None,
            dataset: None,
            divergence_is_error: false,
            push: None,
            model: RobotModel::default(),
            sim: SimConfig::default(),
            mpc: MpcConfig::default(),
            gait: GaitSection::default(),
            disturbance: DisturbanceSection::default(),
            metrics: MetricsSection::default(),
            collect: CollectConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

fn value_kind(v: &toml::Value) -> &'static str {
    match v {
        toml::Value::String(_) => "string",
        toml::Value::Integer(_) => "integer",
        toml::Value::Float(_) => "float",
        toml::Value::Boolean(_) => "boolean",
        toml::Value::Datetime(_) => "datetime",
        toml::Value::Array(_) => "array",
        toml::Value::Table(_) => "table",
    }
}

/// Tables whose keys depend on a tag and are left to the deserializer.
const TAGGED_TABLES: [&str; 1] = ["train.optimizer"];

/// Report unknown keys and type mismatches, removing them from `user` so the
/// rest can still be deserialized and validated.
fn check_keys(user: &mut toml::Table, reference: &toml::Table, path: &str, errs: &mut Vec<String>) {
    let mut bad = Vec::new();
    for (key, value) in user.iter_mut() {
        let full = if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
        let Some(expected) = reference.get(key) else {
            errs.push(format!("{full}: unknown field"));
            bad.push(key.clone());
            continue;
        };
        match (value, expected) {
            (toml::Value::Table(u), toml::Value::Table(r)) => {
                if !TAGGED_TABLES.contains(&full.as_str()) {
                    check_keys(u, r, &full, errs);
                }
            }
            (toml::Value::Integer(_), toml::Value::Float(_)) => {}
            (u, r) if value_kind(u) != value_kind(r) => {
                errs.push(format!("{full}: expected {}, found {}", value_kind(r), value_kind(u)));
                bad.push(key.clone());
            }
            _ => {}
        }
    }
    for key in bad {
        user.remove(&key);
    }
}

/// Collect a section's validation messages under `section.`, replacing the
/// section's own prefix (`own`) where it differs.
fn absorb(errs: &mut Vec<String>, section: &str, own: &str, result: Result<()>) {
    let prefix = format!("{section}.");
    let own = format!("{own}.");
    let mut push = |m: String| {
        let m = m.strip_prefix(&own).map(str::to_string).unwrap_or(m);
        errs.push(if m.starts_with(&prefix) { m } else { format!("{prefix}{m}") });
    };
    match result {
        Ok(()) => {}
        Err(Error::Config(list)) => list.into_iter().for_each(&mut push),
        Err(e) => push(e.to_string()),
    }
}

impl ExperimentConfig {
    /// A value with every optional field present, whose serialization lists
    /// every accepted key with its type.
    fn schema_reference() -> toml::Table {
        let mut r = Self::default();
        r.duration = Some(1.0);
        r.weights = Some(PathBuf::new());
        r.dataset = Some(PathBuf::new());
        r.push = Some(PushSpec::lateral(1.0, 0.0, 1.0));
        r.gait.kind = Some(Gait::Trot);
        r.train.force_scale = Some(1.0);
        toml::Table::try_from(&r).expect("the default configuration serializes")
    }

    /// Parse and validate TOML text. Unknown keys, type mismatches and
    /// invalid values are all reported together.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text)?;
        let mut errs = Vec::new();
        check_keys(&mut table, &Self::schema_reference(), "", &mut errs);
        match Self::deserialize(table) {
            Ok(cfg) => match cfg.validate() {
                Ok(()) if errs.is_empty() => return Ok(cfg),
                Ok(()) => {}
                Err(Error::Config(more)) => errs.extend(more),
                Err(e) => errs.push(e.to_string()),
            },
            Err(e) => errs.push(e.to_string()),
        }
        Err(Error::Config(errs))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        absorb(&mut errs, "model", "model", self.model.validate());
        absorb(&mut errs, "sim", "sim", self.sim.validate());
        absorb(&mut errs, "mpc", "mpc", self.mpc.validate(&self.model));
        absorb(&mut errs, "gait", "raibert", self.raibert().validate());
        absorb(&mut errs, "collect", "collect", self.collect.validate());
        absorb(&mut errs, "train", "train", self.train.validate());
        if let Some(d) = self.duration {
            if !(d > 0.0) {
                errs.push(format!("duration must be > 0 (got {d})"));
            }
        }
        if !(0.0..=1.0).contains(&self.gait.cat_narrowing) {
            errs.push("gait.cat_narrowing must lie in [0, 1]".into());
        }
        let [lo, hi] = self.disturbance.foot_offset_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            errs.push("disturbance.foot_offset_range: lower bound must not exceed upper bound".into());
        }
        if let Some(p) = &self.push {
            if !(p.magnitude >= 0.0) {
                errs.push("push.magnitude must be >= 0".into());
            }
            if !(p.start >= 0.0) {
                errs.push("push.start must be >= 0".into());
            }
            if !(p.duration >= 0.0) {
                errs.push("push.duration must be >= 0".into());
            }
            if !(p.axis.iter().map(|v| v * v).sum::<f64>() > 0.0) {
                errs.push("push.axis must be nonzero".into());
            }
        }
        if !(self.metrics.recovery_threshold_deg > 0.0) {
            errs.push("metrics.recovery_threshold_deg must be > 0".into());
        }
        if !(self.metrics.fall_angle_deg > 0.0) {
            errs.push("metrics.fall_angle_deg must be > 0".into());
        }
        let needs_weights = self.scenario == Scenario::EvalRmse
            || (self.scenario.is_closed_loop() && self.controller == ControllerKind::Crd);
        if needs_weights && self.weights.is_none() {
            errs.push(format!("weights: required by scenario {} with controller {}", self.scenario.name(), self.controller.name()));
        }
        if matches!(self.scenario, Scenario::Train | Scenario::EvalRmse) && self.dataset.is_none() {
            errs.push(format!("dataset: required by scenario {}", self.scenario.name()));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn gait_kind(&self) -> Gait {
        self.gait.kind.unwrap_or(self.scenario.default_gait())
    }

    pub fn duration(&self) -> f64 {
        self.duration.unwrap_or(self.scenario.default_duration())
    }

    /// The push of this run, if any.
    pub fn push(&self) -> Option<PushSpec> {
        match (&self.push, self.scenario) {
            (Some(p), _) => Some(p.clone()),
            (None, Scenario::PushRecovery) => Some(PushSpec::lateral(15.0, 2.0, 0.5)),
            _ => None,
        }
    }

    pub fn raibert(&self) -> RaibertConfig {
        self.raibert_for(self.gait_kind())
    }

    fn raibert_for(&self, gait: Gait) -> RaibertConfig {
        let g = &self.gait;
        let mut r = RaibertConfig::for_gait(gait, &self.model, g.cat_narrowing);
        r.period = g.period;
        r.k_velocity = g.k_velocity;
        r.v_desired = g.v_desired;
        r.k_pitch = g.k_pitch;
        r.k_roll = g.k_roll;
        r.stance_height = g.stance_height;
        r.step_height = g.step_height;
        r.duty = g.duty;
        r
    }

    /// Seed-driven foot offsets, identical for every controller under one seed.
    pub fn foot_offsets(&self) -> [[f64; 2]; NUM_LEGS] {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let [lo, hi] = self.disturbance.foot_offset_range;
        let mut draw = || if lo == hi { lo } else { rng.random_range(lo..hi) };
        std::array::from_fn(|_| [draw(), draw()])
    }

    /// Closed-loop setup with the seed-driven foot offsets applied.
    pub fn loop_setup(&self) -> LoopSetup {
        LoopSetup {
            model: self.model.clone(),
            sim: self.sim.clone(),
            mpc: self.mpc.clone(),
            raibert: self.raibert(),
            foot_offsets: self.foot_offsets(),
        }
    }

    /// Trot setup handed to data collection, which narrows the stance for
    /// cat rollouts and draws its own foot offsets.
    pub fn collection_base(&self) -> LoopSetup {
        LoopSetup {
            raibert: self.raibert_for(Gait::Trot),
            foot_offsets: [[0.0; 2]; NUM_LEGS],
            ..self.loop_setup()
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(vec![format!("cannot serialize configuration: {e}")]))
    }

    /// Hash of everything that determines the experiment. The output
    /// directory is left out, so the same run written elsewhere keeps its hash.
    pub fn hash(&self) -> Result<String> {
        config_hash(&Self { out_dir: PathBuf::new(), ..self.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults_and_hash_is_stable() {
        let a = ExperimentConfig::from_toml_str("scenario = \"cat-gait\"\n").unwrap();
        assert_eq!(a.scenario, Scenario::CatGait);
        assert_eq!(a.gait_kind(), Gait::Cat);
        assert_eq!(a.duration(), 10.0);
        assert!(a.push().is_none());
        let b = ExperimentConfig::from_toml_str("scenario = \"cat-gait\"\n").unwrap();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        let c = ExperimentConfig::from_toml_str("scenario = \"cat-gait\"\nseed = 2\n").unwrap();
        assert_ne!(a.hash().unwrap(), c.hash().unwrap());
        let moved = ExperimentConfig { out_dir: "elsewhere".into(), ..a.clone() };
        assert_eq!(a.hash().unwrap(), moved.hash().unwrap());
    }

    #[test]
    fn push_recovery_defaults_to_the_lateral_push() {
        let cfg = ExperimentConfig::from_toml_str("scenario = \"push-recovery\"").unwrap();
        let p = cfg.push().unwrap();
        assert_eq!((p.magnitude, p.start, p.duration, p.axis), (15.0, 2.0, 0.5, [0.0, 1.0, 0.0]));
        assert_eq!(cfg.gait_kind(), Gait::Trot);
    }

    #[test]
    fn negative_duration_names_the_field() {
        let err = ExperimentConfig::from_toml_str("duration = -1.0").unwrap_err();
        assert!(err.to_string().contains("duration"), "{err}");
    }

    #[test]
    fn every_invalid_field_is_reported() {
        let text = r#"
            bogus = 1
            duration = -2.0
            [sim]
            dt_sim = "fast"
            friction = 0.3
            [mpc]
            horizon = 10
            [gait]
            duty = 1.5
        "#;
        let Error::Config(errs) = ExperimentConfig::from_toml_str(text).unwrap_err() else {
            panic!("expected a config error");
        };
        let joined = errs.join("\n");
        for needle in [
            "bogus: unknown field",
            "sim.dt_sim: expected float, found string",
            "sim.friction: unknown field",
            "duration",
            "gait.duty",
        ] {
            assert!(joined.contains(needle), "missing `{needle}` in\n{joined}");
        }

        let text = "duration = -2.0\n[gait]\nduty = 1.5\ncat_narrowing = 2.0\n[train]\nalpha = 3.0\n";
        let Error::Config(errs) = ExperimentConfig::from_toml_str(text).unwrap_err() else {
            panic!("expected a config error");
        };
        let joined = errs.join("\n");
        for needle in ["duration", "duty", "cat_narrowing", "alpha"] {
            assert!(joined.contains(needle), "missing `{needle}` in\n{joined}");
        }
    }

    #[test]
    fn integers_are_accepted_for_floats() {
        let cfg = ExperimentConfig::from_toml_str("duration = 3\n[push]\nmagnitude = 10\nstart = 1\nduration = 1\naxis = [0, 1, 0]\n").unwrap();
        assert_eq!(cfg.duration(), 3.0);
        assert_eq!(cfg.push().unwrap().magnitude, 10.0);
    }

    #[test]
    fn crd_controller_requires_weights() {
        let err = ExperimentConfig::from_toml_str("controller = \"crd\"").unwrap_err();
        assert!(err.to_string().contains("weights"));
        let ok = ExperimentConfig::from_toml_str("controller = \"crd-augmented\"\nweights = \"w.bin\"").unwrap();
        assert_eq!(ok.controller, ControllerKind::Crd);
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.weights = Some("w.bin".into());
        cfg.push = Some(PushSpec::lateral(12.0, 1.0, 0.3));
        cfg.train.force_scale = Some(3.0);
        let text = cfg.to_toml().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn foot_offsets_depend_only_on_seed() {
        let mut a = ExperimentConfig::default();
        let mut b = a.clone();
        b.controller = ControllerKind::Crd;
        assert_eq!(a.foot_offsets(), b.foot_offsets());
        for off in a.foot_offsets().iter().flatten() {
            assert!((-0.02..0.02).contains(off));
        }
        let before = a.foot_offsets();
        a.seed = 2;
        assert_ne!(a.foot_offsets(), before);
    }
}
