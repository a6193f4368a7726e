//! Contact residual dynamics network: a shared per-leg MLP predicting a
//! ground-reaction force and a contact probability, trained through the
//! angular acceleration those forces would induce.

mod features;
mod loss;
mod network;
mod weights;

pub use features::{leg_features, robot_features};
pub use loss::{
    backward, evaluate_loss, loss_contact, loss_grf, predict, total_loss, CrdSample, Gradients, LossBreakdown,
    PackedBatch, BCE_EPS,
};
pub use network::{
    residual_from_outputs, CrdFeatures, CrdOutput, Dense, FeatureNorm, LayerId, LegFeatures, NetworkParams,
    FEATURE_DIM, HIDDEN_DIMS,
};
pub use weights::{decode_weights, encode_weights, load_weights, save_weights};
