//! Cross-bag pseudo-bag augmentation and bag/group-level contrastive
//! learning for multiple instance learning on feature-space bags.
//!
//! Modules, bottom-up:
//! - [`numkernel`]: tensors, masked attention, reverse-mode tape
//! - [`bagdata`]: bags, the MBAG1 file format, synthetic data, class pools
//! - [`crossbag`]: multi-view fusion, instance expansion and compression
//! - [`milmodel`]: gated-attention MIL model and checkpoints
//! - [`contrastive`]: memory bank, EMA teacher, prototype grouping, losses
//! - [`harness`]: training, evaluation, cross-validation, reports

pub mod bagdata;
pub mod contrastive;
pub mod crossbag;
pub mod error;
pub mod exec;
pub mod harness;
pub mod milmodel;
pub mod numkernel;
pub mod rng;

pub use error::{Error, Result};
pub use exec::Exec;
