use nalgebra::{DMatrix, DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NUM_LEGS;

pub const FEATURE_DIM: usize = 21;
pub const HIDDEN_DIMS: [usize; 4] = [64, 128, 512, 64];
pub const FORCE_DIM: usize = 3;

/// 21 features of one leg, in this order: joint angles (3), joint rates (3),
/// foot position (3), propeller position (3), base roll/pitch/yaw (3), base
/// angular rates (3), base planar velocity (2), the leg's thruster speed (1).
/// Positions and velocities are in the body frame.
pub type LegFeatures = [f64; FEATURE_DIM];
pub type CrdFeatures = [LegFeatures; NUM_LEGS];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerId {
    Hidden1,
    Hidden2,
    Hidden3,
    Hidden4,
    ForceHead,
    ContactHead,
}

impl LayerId {
    pub const ALL: [LayerId; 6] = [
        LayerId::Hidden1,
        LayerId::Hidden2,
        LayerId::Hidden3,
        LayerId::Hidden4,
        LayerId::ForceHead,
        LayerId::ContactHead,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerId::Hidden1 => "hidden1",
            LayerId::Hidden2 => "hidden2",
            LayerId::Hidden3 => "hidden3",
            LayerId::Hidden4 => "hidden4",
            LayerId::ForceHead => "force_head",
            LayerId::ContactHead => "contact_head",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.name() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// (outputs, inputs)
    pub fn shape(self) -> (usize, usize) {
        match self {
            LayerId::Hidden1 => (HIDDEN_DIMS[0], FEATURE_DIM),
            LayerId::Hidden2 => (HIDDEN_DIMS[1], HIDDEN_DIMS[0]),
            LayerId::Hidden3 => (HIDDEN_DIMS[2], HIDDEN_DIMS[1]),
            LayerId::Hidden4 => (HIDDEN_DIMS[3], HIDDEN_DIMS[2]),
            LayerId::ForceHead => (FORCE_DIM, HIDDEN_DIMS[3]),
            LayerId::ContactHead => (1, HIDDEN_DIMS[3]),
        }
    }
}

/// Affine layer `W x + b`, `W` stored outputs x inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { weight: DMatrix::zeros(rows, cols), bias: DVector::zeros(rows) }
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Parameter `k` in (weight column-major, then bias) order.
    pub fn param_mut(&mut self, k: usize) -> &mut f64 {
        let nw = self.weight.len();
        if k < nw {
            &mut self.weight.as_mut_slice()[k]
        } else {
            &mut self.bias[k - nw]
        }
    }

    pub fn param(&self, k: usize) -> f64 {
        let nw = self.weight.len();
        if k < nw {
            self.weight.as_slice()[k]
        } else {
            self.bias[k - nw]
        }
    }

    fn is_finite(&self) -> bool {
        self.weight.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

/// Per-feature z-score statistics plus the scale of the force head output.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureNorm {
    pub mean: [f64; FEATURE_DIM],
    pub std: [f64; FEATURE_DIM],
    /// Raw force-head outputs are multiplied by this (N).
    pub force_scale: f64,
}

impl FeatureNorm {
    pub fn identity() -> Self {
        Self { mean: [0.0; FEATURE_DIM], std: [1.0; FEATURE_DIM], force_scale: 1.0 }
    }

    /// Statistics of a set of leg feature vectors; near-constant features get
    /// unit scale.
    pub fn fit<'a>(rows: impl Iterator<Item = &'a LegFeatures>, force_scale: f64) -> Self {
        let mut n = 0usize;
        let mut sum = [0.0; FEATURE_DIM];
        let mut sq = [0.0; FEATURE_DIM];
        for r in rows {
            n += 1;
            for k in 0..FEATURE_DIM {
                sum[k] += r[k];
                sq[k] += r[k] * r[k];
            }
        }
        if n == 0 {
            return Self { force_scale, ..Self::identity() };
        }
        let mut mean = [0.0; FEATURE_DIM];
        let mut std = [1.0; FEATURE_DIM];
        for k in 0..FEATURE_DIM {
            mean[k] = sum[k] / n as f64;
            let var = (sq[k] / n as f64 - mean[k] * mean[k]).max(0.0);
            if var.sqrt() > 1e-9 {
                std[k] = var.sqrt();
            }
        }
        Self { mean, std, force_scale }
    }
}

/// Shared weights of the per-leg subnetwork.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub layers: [Dense; 6],
    pub norm: FeatureNorm,
}

impl NetworkParams {
    pub fn zeros() -> Self {
        Self {
            layers: LayerId::ALL.map(|l| {
                let (r, c) = l.shape();
                Dense::zeros(r, c)
            }),
            norm: FeatureNorm::identity(),
        }
    }

    /// He-normal hidden layers, small-variance heads, zero biases.
    pub fn init(seed: u64, norm: FeatureNorm) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = LayerId::ALL.map(|l| {
            let (r, c) = l.shape();
            let std = match l {
                LayerId::ForceHead | LayerId::ContactHead => (1.0 / c as f64).sqrt(),
                _ => (2.0 / c as f64).sqrt(),
            };
            let dist = Normal::new(0.0, std).expect("positive std");
            Dense {
                weight: DMatrix::from_fn(r, c, |_, _| dist.sample(&mut rng)),
                bias: DVector::zeros(r),
            }
        });
        Self { layers, norm }
    }

    pub fn layer(&self, id: LayerId) -> &Dense {
        &self.layers[id.index()]
    }

    pub fn layer_mut(&mut self, id: LayerId) -> &mut Dense {
        &mut self.layers[id.index()]
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::num_params).sum()
    }

    pub fn validate(&self) -> Result<()> {
        for id in LayerId::ALL {
            let l = self.layer(id);
            let (r, c) = id.shape();
            if l.weight.shape() != (r, c) {
                return Err(Error::ShapeMismatch {
                    name: format!("{}.weight", id.name()),
                    expected: (r, c),
                    found: l.weight.shape(),
                });
            }
            if l.bias.len() != r {
                return Err(Error::ShapeMismatch {
                    name: format!("{}.bias", id.name()),
                    expected: (r, 1),
                    found: (l.bias.len(), 1),
                });
            }
            if !l.is_finite() {
                return Err(Error::Domain(format!("non-finite parameters in {}", id.name())));
            }
        }
        if !(self.norm.force_scale.is_finite() && self.norm.std.iter().all(|s| *s > 0.0)) {
            return Err(Error::Domain("invalid feature normalization".into()));
        }
        Ok(())
    }
}

/// Per-leg force estimate (N, body frame) and contact probability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrdOutput {
    pub force: [Vector3<f64>; NUM_LEGS],
    pub contact: [f64; NUM_LEGS],
}

impl CrdOutput {
    pub fn zero_force(contact: f64) -> Self {
        Self { force: [Vector3::zeros(); NUM_LEGS], contact: [contact; NUM_LEGS] }
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Intermediate values of a batched forward pass, columns are leg samples.
pub(crate) struct ForwardCache {
    /// Normalized input, then the four hidden activations.
    pub activations: Vec<DMatrix<f64>>,
    /// Pre-activations of the hidden layers.
    pub pre: Vec<DMatrix<f64>>,
    /// Force estimates (N), 3 x cols.
    pub force: DMatrix<f64>,
    /// Contact probabilities, 1 x cols.
    pub contact: DMatrix<f64>,
}

fn affine(layer: &Dense, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = &layer.weight * x;
    for mut col in z.column_iter_mut() {
        col += &layer.bias;
    }
    z
}

impl NetworkParams {
    pub(crate) fn normalize(&self, raw: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = raw.clone();
        for mut col in x.column_iter_mut() {
            for k in 0..FEATURE_DIM {
                col[k] = (col[k] - self.norm.mean[k]) / self.norm.std[k];
            }
        }
        x
    }

    /// Batched forward pass over a 21 x n matrix of raw leg features.
    pub(crate) fn forward_batch(&self, raw: &DMatrix<f64>) -> ForwardCache {
        let mut activations = vec![self.normalize(raw)];
        let mut pre = Vec::with_capacity(4);
        for l in &self.layers[..4] {
            let z = affine(l, activations.last().expect("input present"));
            activations.push(z.map(|v| v.max(0.0)));
            pre.push(z);
        }
        let embed = activations.last().expect("embedding present");
        let force = affine(self.layer(LayerId::ForceHead), embed) * self.norm.force_scale;
        let contact = affine(self.layer(LayerId::ContactHead), embed).map(sigmoid);
        ForwardCache { activations, pre, force, contact }
    }

    /// Run the shared subnetwork on every leg.
    pub fn forward(&self, features: &CrdFeatures) -> CrdOutput {
        let raw = DMatrix::from_fn(FEATURE_DIM, NUM_LEGS, |k, i| features[i][k]);
        let cache = self.forward_batch(&raw);
        CrdOutput {
            force: std::array::from_fn(|i| cache.force.fixed_view::<3, 1>(0, i).into_owned()),
            contact: std::array::from_fn(|i| cache.contact[(0, i)]),
        }
    }
}

/// Estimated contact residual `I^-1 sum C_i (d_i x F_i)`.
pub fn residual_from_outputs(
    out: &CrdOutput,
    moment_arms: &[Vector3<f64>; NUM_LEGS],
    inertia_inv: &nalgebra::Matrix3<f64>,
) -> Vector3<f64> {
    let torque: Vector3<f64> = (0..NUM_LEGS)
        .map(|i| moment_arms[i].cross(&out.force[i]) * out.contact[i])
        .sum();
    inertia_inv * torque
}
