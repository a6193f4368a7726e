//! Physics-informed composite loss and its exact reverse-mode gradient.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::network::{CrdFeatures, Dense, LayerId, NetworkParams, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::model::NUM_LEGS;

/// Probability clamp of the binary cross-entropy.
pub const BCE_EPS: f64 = 1e-7;

/// One training record: features of all four legs plus the measured residual.
#[derive(Clone, Debug, PartialEq)]
pub struct CrdSample {
    pub features: CrdFeatures,
    /// CoM to foot, body frame (m).
    pub moment_arms: [Vector3<f64>; NUM_LEGS],
    /// Measured minus nominal angular acceleration (rad/s^2).
    pub target_residual: Vector3<f64>,
    pub contact: [bool; NUM_LEGS],
}

/// Mean over the batch of `|predicted - target|^2`.
pub fn loss_grf(predicted: &[Vector3<f64>], target: &[Vector3<f64>]) -> f64 {
    assert_eq!(predicted.len(), target.len());
    if predicted.is_empty() {
        return 0.0;
    }
    predicted
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t).norm_squared())
        .sum::<f64>()
        / predicted.len() as f64
}

fn bce(c: f64, label: bool) -> f64 {
    let c = c.clamp(BCE_EPS, 1.0 - BCE_EPS);
    if label {
        -c.ln()
    } else {
        -(1.0 - c).ln()
    }
}

/// Leg-averaged binary cross-entropy, averaged over the batch.
pub fn loss_contact(predicted: &[[f64; NUM_LEGS]], labels: &[[bool; NUM_LEGS]]) -> f64 {
    assert_eq!(predicted.len(), labels.len());
    if predicted.is_empty() {
        return 0.0;
    }
    predicted
        .iter()
        .zip(labels)
        .map(|(c, gt)| (0..NUM_LEGS).map(|i| bce(c[i], gt[i])).sum::<f64>() / NUM_LEGS as f64)
        .sum::<f64>()
        / predicted.len() as f64
}

/// `(1 - alpha) l_grf + alpha l_contact`.
pub fn total_loss(alpha: f64, l_grf: f64, l_contact: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(vec![format!("alpha must lie in [0, 1] (got {alpha})")]));
    }
    Ok((1.0 - alpha) * l_grf + alpha * l_contact)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub grf: f64,
    pub contact: f64,
    pub total: f64,
}

/// Gradients with the same layout as `NetworkParams::layers`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: [Dense; 6],
}

impl Gradients {
    pub fn layer(&self, id: LayerId) -> &Dense {
        &self.layers[id.index()]
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Samples packed into column-major matrices for batched evaluation.
pub struct PackedBatch {
    /// 21 x (4 n), column `4 s + i` is leg `i` of sample `s`.
    pub features: DMatrix<f64>,
    pub moment_arms: Vec<Vector3<f64>>,
    pub targets: Vec<Vector3<f64>>,
    pub contact: Vec<bool>,
}

impl PackedBatch {
    pub fn new<'a>(samples: impl ExactSizeIterator<Item = &'a CrdSample>) -> Self {
        let n = samples.len();
        let mut features = DMatrix::zeros(FEATURE_DIM, NUM_LEGS * n);
        let mut moment_arms = Vec::with_capacity(NUM_LEGS * n);
        let mut targets = Vec::with_capacity(n);
        let mut contact = Vec::with_capacity(NUM_LEGS * n);
        for (s, sample) in samples.enumerate() {
            for i in 0..NUM_LEGS {
                features
                    .column_mut(NUM_LEGS * s + i)
                    .copy_from_slice(&sample.features[i]);
                moment_arms.push(sample.moment_arms[i]);
                contact.push(sample.contact[i]);
            }
            targets.push(sample.target_residual);
        }
        Self { features, moment_arms, targets, contact }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Predicted residuals and per-sample contact probabilities.
pub fn predict(params: &NetworkParams, batch: &PackedBatch, inertia_inv: &Matrix3<f64>) -> (Vec<Vector3<f64>>, Vec<[f64; NUM_LEGS]>) {
    let cache = params.forward_batch(&batch.features);
    let n = batch.len();
    let mut pred = Vec::with_capacity(n);
    let mut probs = Vec::with_capacity(n);
    for s in 0..n {
        let mut torque = Vector3::zeros();
        let mut c = [0.0; NUM_LEGS];
        for i in 0..NUM_LEGS {
            let col = NUM_LEGS * s + i;
            let f = cache.force.fixed_view::<3, 1>(0, col).into_owned();
            c[i] = cache.contact[(0, col)];
            torque += batch.moment_arms[col].cross(&f) * c[i];
        }
        pred.push(inertia_inv * torque);
        probs.push(c);
    }
    (pred, probs)
}

pub fn evaluate_loss(params: &NetworkParams, batch: &PackedBatch, inertia_inv: &Matrix3<f64>, alpha: f64) -> Result<LossBreakdown> {
    let (pred, probs) = predict(params, batch, inertia_inv);
    let labels: Vec<[bool; NUM_LEGS]> = batch
        .contact
        .chunks_exact(NUM_LEGS)
        .map(|c| [c[0], c[1], c[2], c[3]])
        .collect();
    let grf = loss_grf(&pred, &batch.targets);
    let contact = loss_contact(&probs, &labels);
    Ok(LossBreakdown { grf, contact, total: total_loss(alpha, grf, contact)? })
}

/// Loss and exact gradients of the composite loss. Layers in `frozen` get
/// zero gradients.
pub fn backward(
    params: &NetworkParams,
    batch: &PackedBatch,
    inertia_inv: &Matrix3<f64>,
    alpha: f64,
    frozen: &BTreeSet<LayerId>,
) -> Result<(LossBreakdown, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Domain("backward needs a nonempty batch".into()));
    }
    total_loss(alpha, 0.0, 0.0)?;
    let n = batch.len();
    let cols = NUM_LEGS * n;
    let cache = params.forward_batch(&batch.features);
    let i_inv_t = inertia_inv.transpose();
    let scale = params.norm.force_scale;

    let mut d_force_raw = DMatrix::zeros(3, cols);
    let mut d_contact_logit = DMatrix::zeros(1, cols);
    let mut grf = 0.0;
    let mut con = 0.0;
    for s in 0..n {
        let mut torque = Vector3::zeros();
        for i in 0..NUM_LEGS {
            let col = NUM_LEGS * s + i;
            let f = cache.force.fixed_view::<3, 1>(0, col).into_owned();
            torque += batch.moment_arms[col].cross(&f) * cache.contact[(0, col)];
        }
        let err = inertia_inv * torque - batch.targets[s];
        grf += err.norm_squared();
        // dL/d(prediction), pulled back through I^-1.
        let h = i_inv_t * (err * (2.0 * (1.0 - alpha) / n as f64));
        for i in 0..NUM_LEGS {
            let col = NUM_LEGS * s + i;
            let d = batch.moment_arms[col];
            let f = cache.force.fixed_view::<3, 1>(0, col).into_owned();
            let c = cache.contact[(0, col)];
            let label = batch.contact[col];
            con += bce(c, label) / NUM_LEGS as f64;

            let d_f = h.cross(&d) * c;
            d_force_raw.fixed_view_mut::<3, 1>(0, col).copy_from(&(d_f * scale));

            let mut d_c = h.dot(&d.cross(&f));
            if c > BCE_EPS && c < 1.0 - BCE_EPS {
                let y = if label { 1.0 } else { 0.0 };
                d_c += alpha / (NUM_LEGS * n) as f64 * (-(y / c) + (1.0 - y) / (1.0 - c));
            }
            d_contact_logit[(0, col)] = d_c * c * (1.0 - c);
        }
    }
    let grf = grf / n as f64;
    let contact = con / n as f64;
    let loss = LossBreakdown { grf, contact, total: total_loss(alpha, grf, contact)? };

    let mut grads = Gradients { layers: params.layers.clone().map(|l| Dense::zeros(l.weight.nrows(), l.weight.ncols())) };
    let embed = &cache.activations[4];
    let mut set = |id: LayerId, dz: &DMatrix<f64>, input: &DMatrix<f64>| {
        if frozen.contains(&id) {
            return;
        }
        let g = &mut grads.layers[id.index()];
        g.weight = dz * input.transpose();
        g.bias = DVector::from_iterator(dz.nrows(), dz.row_iter().map(|r| r.sum()));
    };
    set(LayerId::ForceHead, &d_force_raw, embed);
    set(LayerId::ContactHead, &d_contact_logit, embed);

    let mut d_act = params.layer(LayerId::ForceHead).weight.transpose() * &d_force_raw
        + params.layer(LayerId::ContactHead).weight.transpose() * &d_contact_logit;
    let hidden = [LayerId::Hidden1, LayerId::Hidden2, LayerId::Hidden3, LayerId::Hidden4];
    for k in (0..4).rev() {
        let dz = d_act.zip_map(&cache.pre[k], |g, z| if z > 0.0 { g } else { 0.0 });
        set(hidden[k], &dz, &cache.activations[k]);
        if k > 0 {
            d_act = params.layers[k].weight.transpose() * &dz;
        }
    }

    for id in LayerId::ALL {
        let g = grads.layer(id);
        if !g.weight.iter().chain(g.bias.iter()).all(|v| v.is_finite()) {
            return Err(Error::Training {
                epoch: 0,
                batch: 0,
                reason: format!("non-finite gradient in layer {}", id.name()),
            });
        }
    }
    Ok((loss, grads))
}
