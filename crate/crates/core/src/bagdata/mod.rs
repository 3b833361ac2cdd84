//! Bags, the MBAG1 file format, synthetic data, class pools and strata.

mod bag;
mod format;
mod pool;
mod stratify;
mod synth;

pub use bag::{Bag, ProvenanceId};
pub use format::{decode_bags, decode_header, encode_bags, load_bags, save_bags, Header, MAGIC};
pub use pool::{ClassPool, PoolEntry};
pub use stratify::{stratify_by_tumor_ratio, Strata, Stratum};
pub use synth::{synth_generate, RatioDistribution, SynthConfig};
