//! Graph convolutional autoencoder with a dwell-time branch.
//!
//! The encoder maps a nodal field to a latent vector; a small dense network
//! maps the dwell time into the same latent space; the decoder maps a latent
//! vector back to a field. Training minimizes reconstruction error plus
//! `lambda` times the mismatch between the two latent vectors, so at
//! inference the dwell-time branch can stand in for the encoder.

mod checkpoint;
mod graph;
mod model;
mod optim;
mod train;

pub use checkpoint::{parameter_count, GcaCheckpoint, MANIFEST_FILE, WEIGHTS_FILE};
pub use graph::{build_graph, Graph};
pub use model::{
    decode_latent, elu, gc_layer_forward, gca_backward, gca_forward, gca_loss, predict_gca, Activation, GcaArchitecture, GcaModel,
    GcaNormalization, GcaOutput, GcaParams, GcaSample, Layer, LossParts,
};
pub use optim::{adamw_step, cosine_warm_restart_lr, AdamW, AdamWConfig, CosineWarmRestarts};
pub use train::{evaluate_loss, final_fields, train_gca, EpochRecord, FieldSample, GcaTrainConfig, TrainHistory};
