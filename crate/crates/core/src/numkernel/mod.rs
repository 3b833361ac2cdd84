//! Dense tensors, forward primitives and reverse-mode differentiation.

mod gradcheck;
mod ops;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, finite_diff_report, GradCheckReport};
pub use ops::{
    attend, attention_mix, attention_scores, cross_attention, l2_normalize, masked_softmax,
    AttentionScores, AttentionVars, AttentionWeights,
};
pub use params::{init_matrix, init_near_identity, Bound, ParamSet};
pub use tape::{Gradients, ParamId, Tape, Var, MASK_FILL};
pub use tensor::Tensor;
