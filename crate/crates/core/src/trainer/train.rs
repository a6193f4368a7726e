use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::crd::{backward, CrdSample, Dense, FeatureNorm, LayerId, NetworkParams, PackedBatch};
use crate::error::{Error, Result};
use crate::model::RobotModel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OptimizerKind {
    /// Gradient descent with heavy-ball momentum.
    Momentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        Self::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Weight of the contact loss.
    pub alpha: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Names of layers whose parameters stay fixed.
    pub freeze: Vec<String>,
    pub optimizer: OptimizerKind,
    /// Output scale of the force head for a fresh network (N). Defaults to
    /// half the robot weight when absent.
    pub force_scale: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.999,
            learning_rate: 3e-4,
            batch_size: 256,
            epochs: 20,
            seed: 11,
            freeze: Vec::new(),
            optimizer: OptimizerKind::default(),
            force_scale: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(0.0..=1.0).contains(&self.alpha) {
            errs.push("train.alpha must lie in [0, 1]".to_string());
        }
        if !(self.learning_rate > 0.0) {
            errs.push("train.learning_rate must be > 0".into());
        }
        if self.batch_size == 0 {
            errs.push("train.batch_size must be >= 1".into());
        }
        for name in &self.freeze {
            if LayerId::from_name(name).is_none() {
                errs.push(format!("train.freeze: unknown layer {name:?}"));
            }
        }
        match self.optimizer {
            OptimizerKind::Momentum { momentum } if !(0.0..1.0).contains(&momentum) => {
                errs.push("train.optimizer.momentum must lie in [0, 1)".into());
            }
            OptimizerKind::Adam { beta1, beta2, epsilon }
                if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && epsilon > 0.0) =>
            {
                errs.push("train.optimizer: Adam betas must lie in [0, 1) and epsilon be > 0".into());
            }
            _ => {}
        }
        if matches!(self.force_scale, Some(s) if !(s > 0.0)) {
            errs.push("train.force_scale must be > 0".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn frozen_layers(&self) -> BTreeSet<LayerId> {
        self.freeze.iter().filter_map(|n| LayerId::from_name(n)).collect()
    }
}

/// Sample-weighted mean losses over one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub grf: f64,
    pub contact: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub history: Vec<EpochStats>,
}

/// First and second moment buffers, shaped like the network.
struct Moments {
    m: Vec<Dense>,
    v: Vec<Dense>,
}

impl Moments {
    fn new(params: &NetworkParams) -> Self {
        let zeros: Vec<Dense> = params.layers.iter().map(|l| Dense::zeros(l.weight.nrows(), l.weight.ncols())).collect();
        Self { m: zeros.clone(), v: zeros }
    }
}

fn apply_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    opt: OptimizerKind,
    lr: f64,
    step: i32,
) {
    match opt {
        OptimizerKind::Momentum { momentum } => {
            for k in 0..param.len() {
                m[k] = momentum * m[k] + grad[k];
                param[k] -= lr * m[k];
            }
        }
        OptimizerKind::Adam { beta1, beta2, epsilon } => {
            let c1 = 1.0 - beta1.powi(step);
            let c2 = 1.0 - beta2.powi(step);
            for k in 0..param.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * grad[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * grad[k] * grad[k];
                param[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + epsilon);
            }
        }
    }
}

/// Fresh network for `samples`: He initialization with feature statistics
/// fitted to the samples.
pub fn fresh_network(samples: &[CrdSample], cfg: &TrainConfig, model: &RobotModel) -> NetworkParams {
    let scale = cfg.force_scale.unwrap_or(0.5 * model.weight());
    let norm = FeatureNorm::fit(samples.iter().flat_map(|s| s.features.iter()), scale);
    NetworkParams::init(cfg.seed, norm)
}

/// Mini-batch training of the composite loss.
///
/// Deterministic for a given seed. Frozen layers are never written.
pub fn train(
    samples: &[CrdSample],
    cfg: &TrainConfig,
    init: Option<NetworkParams>,
    model: &RobotModel,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Domain("training split is empty".into()));
    }
    let mut params = match init {
        Some(p) => {
            p.validate()?;
            p
        }
        None => fresh_network(samples, cfg, model),
    };
    let frozen = cfg.frozen_layers();
    let inertia_inv = model.inertia_inv();
    let mut moments = Moments::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5ee_d0fb_a7c4);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut grf, mut contact, mut total) = (0.0, 0.0, 0.0);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = PackedBatch::new(chunk.iter().map(|&k| &samples[k]));
            let (loss, grads) = backward(&params, &batch, &inertia_inv, cfg.alpha, &frozen)
                .map_err(|e| Error::Training { epoch, batch: b, reason: e.to_string() })?;
            if !loss.total.is_finite() {
                return Err(Error::Training { epoch, batch: b, reason: format!("non-finite loss {}", loss.total) });
            }
            let w = chunk.len() as f64;
            grf += loss.grf * w;
            contact += loss.contact * w;
            total += loss.total * w;
            step += 1;
            for id in LayerId::ALL {
                if frozen.contains(&id) {
                    continue;
                }
                let k = id.index();
                let g = &grads.layers[k];
                let layer = &mut params.layers[k];
                let (m, v) = (&mut moments.m[k], &mut moments.v[k]);
                apply_update(
                    layer.weight.as_mut_slice(),
                    g.weight.as_slice(),
                    m.weight.as_mut_slice(),
                    v.weight.as_mut_slice(),
                    cfg.optimizer,
                    cfg.learning_rate,
                    step,
                );
                apply_update(
                    layer.bias.as_mut_slice(),
                    g.bias.as_slice(),
                    m.bias.as_mut_slice(),
                    v.bias.as_mut_slice(),
                    cfg.optimizer,
                    cfg.learning_rate,
                    step,
                );
            }
        }
        let n = samples.len() as f64;
        let stats = EpochStats { epoch, grf: grf / n, contact: contact / n, total: total / n };
        log::info!("epoch {epoch}: L_grf {:.5e} L_contact {:.5e} L {:.5e}", stats.grf, stats.contact, stats.total);
        history.push(stats);
    }
    Ok(TrainOutcome { params, history })
}
