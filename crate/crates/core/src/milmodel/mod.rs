//! Gated-attention MIL model, projection head and parameter checkpoints.

mod checkpoint;
mod model;

pub use checkpoint::{decode_params, encode_params, load_params, save_params, CHECKPOINT_MAGIC};
pub use model::{
    canonical_order, cross_entropy_traced, mil_forward, mil_forward_traced, project, project_traced, BagEmbedding, MilOutput,
    MilParams, MilTrace, ModelConfig,
};
