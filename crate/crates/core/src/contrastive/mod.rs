//! Bag-level (InfoNCE against an EMA teacher and a FIFO bank) and
//! group-level (prototype-aligned KL) contrastive objectives.

mod bagloss;
mod bank;
mod config;
mod ema;
mod group;

pub use bagloss::{bag_contrastive_loss, bag_contrastive_traced};
pub use bank::{bank_push, MemoryBank, UNIT_TOL};
pub use config::ContrastiveConfig;
pub use ema::ema_update;
pub use group::{
    assign_to_prototypes, center_and_sharpen, group_align_compress, group_align_traced, group_kl_loss, group_kl_traced,
    group_vars, groups, init_group_params, init_prototypes, student_distribution, P_FLOOR,
};
pub(crate) use group::PROTOTYPES;
