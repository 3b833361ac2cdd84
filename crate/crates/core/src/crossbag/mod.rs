//! Cross-bag augmentation: multi-view fusion, instance expansion and
//! instance compression, composed into student/teacher pseudo-bag pairs.

mod compress;
mod expand;
mod fusion;
mod mask;
mod pair;
mod params;
mod pseudo;
mod views;

pub use compress::{compress_with_plan, instance_compress, padding, CompressionPlan};
pub use expand::instance_expand;
pub use fusion::multi_view_fuse;
pub use mask::{build_mask, top_k_row, Mask, MaskSpec, MaskStrategy, TopKMasks};
pub use pair::{augment, augment_traced, make_pseudo_pair, AugmentConfig};
pub use params::AugmenterParams;
pub use params::AugmenterVars;
pub use pseudo::{Lineage, PseudoBag, TracedBag};
pub use views::{sample_views, ViewSet};
