use rand::Rng;

use super::mask::{build_mask, Mask, MaskSpec};
use super::params::{AugmenterParams, AugmenterVars};
use super::pseudo::{Lineage, PseudoBag, TracedBag};
use super::views::ViewSet;
use crate::bagdata::{Bag, ProvenanceId};
use crate::error::{Error, Result};
use crate::numkernel::{attention_mix, attention_scores, AttentionScores, Tape};

fn scores(tape: &mut Tape, input: &TracedBag, views: &ViewSet, w: &AugmenterVars) -> Result<AttentionScores> {
    if views.n != input.len() {
        return Err(Error::shape(
            "multi_view_fuse",
            format!("views of {} rows for a bag of {}", views.n, input.len()),
        ));
    }
    let kv = tape.constant(views.rows.clone());
    attention_scores(tape, input.instances, kv, kv, views.m, &w.fusion)
}

fn fused_lineage(input: &TracedBag, views: &ViewSet, mask: &Mask) -> Vec<Lineage> {
    input
        .lineage
        .iter()
        .enumerate()
        .map(|(j, l)| {
            let original = match l {
                Lineage::Original { provenance } => *provenance,
                other => other.provenance()[0],
            };
            let kept: Vec<ProvenanceId> = (0..views.m)
                .filter(|&v| !mask.row(j)[v])
                .map(|v| views.at(v, j))
                .collect();
            Lineage::Fused { original, views: kept }
        })
        .collect()
}

fn mix(tape: &mut Tape, input: &TracedBag, views: &ViewSet, s: &AttentionScores, mask: &Mask) -> Result<TracedBag> {
    let out = attention_mix(tape, s, Some(&mask.masked))?;
    Ok(TracedBag {
        source_id: input.source_id,
        label: input.label,
        instances: out,
        lineage: fused_lineage(input, views, mask),
    })
}

/// Fusion on a tape: scores, a fresh mask drawn from them, then the mix.
/// An empty view set returns the input unchanged.
pub(crate) fn fuse_traced<R: Rng + ?Sized>(
    tape: &mut Tape,
    input: &TracedBag,
    views: &ViewSet,
    w: &AugmenterVars,
    spec: &MaskSpec,
    rng: &mut R,
) -> Result<(TracedBag, Mask)> {
    if views.is_empty() {
        return Ok((input.clone(), Mask::none(input.len(), 0)));
    }
    let s = scores(tape, input, views, w)?;
    let mask = build_mask(spec, tape.value(s.logits), rng);
    Ok((mix(tape, input, views, &s, &mask)?, mask))
}

/// Replaces instance `j` by attention of `x_j` over the `j`-th instance of
/// every unmasked view. Output size equals input size.
pub fn multi_view_fuse(bag: &Bag, views: &ViewSet, mask: &Mask, params: &AugmenterParams) -> Result<PseudoBag> {
    if views.is_empty() {
        return Ok(PseudoBag::identity(bag));
    }
    if mask.n != bag.len() || mask.m != views.m {
        return Err(Error::shape(
            "multi_view_fuse",
            format!("mask {}×{} for {} rows and {} views", mask.n, mask.m, bag.len(), views.m),
        ));
    }
    let mut tape = Tape::new();
    let bound = params.set.bind(&mut tape, None);
    let w = AugmenterVars::from_bound(&bound, "");
    let input = TracedBag::from_bag(&mut tape, bag);
    let s = scores(&mut tape, &input, views, &w)?;
    Ok(mix(&mut tape, &input, views, &s, mask)?.materialize(&tape))
}
