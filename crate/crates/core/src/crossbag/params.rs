use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::numkernel::{init_near_identity, AttentionVars, AttentionWeights, Bound, ParamSet, Tensor, Var};

/// Learnable weights of the augmenter: the fusion attention transforms and
/// the compression attention (shared query plus key/value transforms).
#[derive(Clone, Debug, PartialEq)]
pub struct AugmenterParams {
    pub set: ParamSet,
}

pub(crate) const FUSE_Q: &str = "fuse.wq";
pub(crate) const FUSE_K: &str = "fuse.wk";
pub(crate) const FUSE_V: &str = "fuse.wv";
pub(crate) const COMP_QUERY: &str = "comp.query";
pub(crate) const COMP_K: &str = "comp.wk";
pub(crate) const COMP_V: &str = "comp.wv";

impl AugmenterParams {
    /// Near-identity transforms (noise std 0.01) and a small random query.
    pub fn init<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        let mut set = ParamSet::new();
        for name in [FUSE_Q, FUSE_K, FUSE_V] {
            set.push(name, init_near_identity(d, 0.01, rng));
        }
        let normal = Normal::new(0.0, 0.1).expect("std");
        set.push(COMP_QUERY, Tensor::matrix(1, d, (0..d).map(|_| normal.sample(rng)).collect()));
        for name in [COMP_K, COMP_V] {
            set.push(name, init_near_identity(d, 0.01, rng));
        }
        Self { set }
    }

    /// Exact identity transforms and a zero compression query.
    pub fn identity(d: usize) -> Self {
        let mut set = ParamSet::new();
        for name in [FUSE_Q, FUSE_K, FUSE_V] {
            set.push(name, Tensor::identity(d));
        }
        set.push(COMP_QUERY, Tensor::zeros(&[1, d]));
        for name in [COMP_K, COMP_V] {
            set.push(name, Tensor::identity(d));
        }
        Self { set }
    }

    pub fn from_set(set: ParamSet) -> Self {
        Self { set }
    }

    pub fn dim(&self) -> usize {
        self.set.get(FUSE_Q).map_or(0, Tensor::cols)
    }

    pub fn fusion_weights(&self) -> AttentionWeights {
        AttentionWeights {
            query: self.set.get(FUSE_Q).cloned(),
            key: self.set.get(FUSE_K).cloned(),
            value: self.set.get(FUSE_V).cloned(),
        }
    }
}

/// Augmenter weights placed on a tape.
#[derive(Clone, Copy, Debug)]
pub struct AugmenterVars {
    pub fusion: AttentionVars,
    pub comp_query: Var,
    pub compression: AttentionVars,
}

impl AugmenterVars {
    /// Looks up `{prefix}fuse.wq`, … in `bound`.
    pub fn from_bound(bound: &Bound, prefix: &str) -> Self {
        let v = |n: &str| bound.var(&format!("{prefix}{n}"));
        Self {
            fusion: AttentionVars {
                query: Some(v(FUSE_Q)),
                key: Some(v(FUSE_K)),
                value: Some(v(FUSE_V)),
            },
            comp_query: v(COMP_QUERY),
            compression: AttentionVars {
                query: None,
                key: Some(v(COMP_K)),
                value: Some(v(COMP_V)),
            },
        }
    }
}
