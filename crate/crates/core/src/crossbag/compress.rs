use rand::Rng;

use super::params::{AugmenterParams, AugmenterVars};
use super::pseudo::{Lineage, PseudoBag, TracedBag};
use crate::error::{Error, Result};
use crate::numkernel::{attend, Tape};

/// Sampled ratio and fold membership (indices into the input rows).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompressionPlan {
    pub ratio: usize,
    pub folds: Vec<Vec<usize>>,
}

impl CompressionPlan {
    /// Consecutive folds of `ratio` rows; the tail is padded with rows
    /// resampled uniformly from the input.
    pub fn new<R: Rng + ?Sized>(n: usize, ratio: usize, rng: &mut R) -> Self {
        let c = n.div_ceil(ratio);
        let mut order: Vec<usize> = (0..n).collect();
        order.extend((0..c * ratio - n).map(|_| rng.random_range(0..n)));
        Self {
            ratio,
            folds: order.chunks(ratio).map(<[usize]>::to_vec).collect(),
        }
    }

    /// `C_r ~ U{2..cr_max}`.
    pub fn sample<R: Rng + ?Sized>(n: usize, cr_max: usize, rng: &mut R) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyBag);
        }
        if cr_max < 2 {
            return Err(Error::Config(format!("cr_max must be ≥ 2, got {cr_max}")));
        }
        let ratio = rng.random_range(2..=cr_max);
        Ok(Self::new(n, ratio, rng))
    }

    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    /// Member `r` of fold `c` at row `r·C + c`, the block layout attention expects.
    fn block_index(&self) -> Vec<usize> {
        (0..self.ratio)
            .flat_map(|r| self.folds.iter().map(move |f| f[r]))
            .collect()
    }
}

pub(crate) fn compress_traced(tape: &mut Tape, input: TracedBag, plan: &CompressionPlan, w: &AugmenterVars) -> Result<TracedBag> {
    let keys = tape.gather_rows(input.instances, &plan.block_index());
    let queries = tape.gather_rows(w.comp_query, &vec![0; plan.len()]);
    let out = attend(tape, queries, keys, keys, plan.ratio, None, &w.compression)?;
    let lineage = plan
        .folds
        .iter()
        .map(|f| Lineage::Compressed {
            members: f.iter().map(|&i| input.lineage[i].clone()).collect(),
        })
        .collect();
    Ok(TracedBag {
        instances: out,
        lineage,
        ..input
    })
}

/// Attention-compresses each fold of `plan` into one instance using the
/// shared learnable query.
pub fn compress_with_plan(bag: &PseudoBag, plan: &CompressionPlan, params: &AugmenterParams) -> Result<PseudoBag> {
    if let Some(&bad) = plan.folds.iter().flatten().find(|&&i| i >= bag.len()) {
        return Err(Error::shape("instance_compress", format!("fold index {bad} for {} rows", bag.len())));
    }
    let mut tape = Tape::new();
    let bound = params.set.bind(&mut tape, None);
    let w = AugmenterVars::from_bound(&bound, "");
    let input = TracedBag {
        source_id: bag.source_id,
        label: bag.label,
        instances: tape.constant(bag.instances.clone()),
        lineage: bag.lineage.clone(),
    };
    Ok(compress_traced(&mut tape, input, plan, &w)?.materialize(&tape))
}

/// Samples a plan and compresses `bag` into `⌈n/C_r⌉` instances.
pub fn instance_compress<R: Rng + ?Sized>(
    bag: &PseudoBag,
    params: &AugmenterParams,
    cr_max: usize,
    rng: &mut R,
) -> Result<PseudoBag> {
    let plan = CompressionPlan::sample(bag.len(), cr_max, rng)?;
    compress_with_plan(bag, &plan, params)
}

/// Padding rows needed for ratio `C_r`: `C·C_r − n`.
pub fn padding(n: usize, ratio: usize) -> usize {
    n.div_ceil(ratio) * ratio - n
}
