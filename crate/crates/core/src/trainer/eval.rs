use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::crd::{predict, CrdSample, NetworkParams, PackedBatch};
use crate::error::{Error, Result};
use crate::model::{RobotModel, NUM_LEGS};

/// Per-axis (roll, pitch, yaw) RMSE of the predicted angular acceleration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    /// Nominal thrust-only model.
    pub nominal: [f64; 3],
    /// Nominal model plus the learned residual.
    pub augmented: [f64; 3],
    /// Fraction of legs whose thresholded contact probability matches the label.
    pub contact_accuracy: f64,
    pub n_samples: usize,
}

impl RmseReport {
    /// `1 - augmented / nominal` per axis.
    pub fn relative_improvement(&self) -> [f64; 3] {
        std::array::from_fn(|a| 1.0 - self.augmented[a] / self.nominal[a])
    }
}

/// RMSE of nominal and augmented models against the recorded truth, with the
/// residual supplied per sample. The nominal error of a sample is its target
/// residual, since the truth is nominal plus target.
pub fn rmse_with(samples: &[CrdSample], residual: impl Fn(usize) -> Vector3<f64>) -> Result<([f64; 3], [f64; 3])> {
    if samples.is_empty() {
        return Err(Error::Domain("cannot evaluate RMSE on an empty split".into()));
    }
    let mut nom = Vector3::zeros();
    let mut aug = Vector3::zeros();
    for (k, s) in samples.iter().enumerate() {
        let e = s.target_residual - residual(k);
        nom += s.target_residual.component_mul(&s.target_residual);
        aug += e.component_mul(&e);
    }
    let n = samples.len() as f64;
    Ok((std::array::from_fn(|a| (nom[a] / n).sqrt()), std::array::from_fn(|a| (aug[a] / n).sqrt())))
}

const EVAL_CHUNK: usize = 2048;

/// Held-out comparison of the nominal and CRD-augmented dynamics.
pub fn evaluate_rmse(params: &NetworkParams, samples: &[CrdSample], model: &RobotModel) -> Result<RmseReport> {
    let i_inv = model.inertia_inv();
    let mut residuals = Vec::with_capacity(samples.len());
    let mut correct = 0usize;
    for chunk in samples.chunks(EVAL_CHUNK) {
        let batch = PackedBatch::new(chunk.iter());
        let (pred, probs) = predict(params, &batch, &i_inv);
        residuals.extend(pred);
        for (s, p) in chunk.iter().zip(&probs) {
            correct += (0..NUM_LEGS).filter(|&i| (p[i] >= 0.5) == s.contact[i]).count();
        }
    }
    let (nominal, augmented) = rmse_with(samples, |k| residuals[k])?;
    Ok(RmseReport {
        nominal,
        augmented,
        contact_accuracy: correct as f64 / (NUM_LEGS * samples.len()) as f64,
        n_samples: samples.len(),
    })
}
