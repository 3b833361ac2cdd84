//! Seeded random streams.
//!
//! Every component draws from its own ChaCha stream, selected by a fixed
//! text label, so adding a component never shifts the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const DATA: &str = "data";
pub const STUDENT_AUG: &str = "student-aug";
pub const TEACHER_AUG: &str = "teacher-aug";
pub const INIT: &str = "init";

/// FNV-1a, used only to turn a stream label into a stream number.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Stream `label` of the global `seed`.
pub fn stream(seed: u64, label: &str) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label_hash(label));
    rng
}

/// Stream `label` specialised to a sub-index (fold, worker chunk, trial).
pub fn substream(seed: u64, label: &str, index: u64) -> Rng {
    let mixed = seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(17);
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    rng.set_stream(label_hash(label));
    rng
}
