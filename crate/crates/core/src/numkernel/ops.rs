use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Softmax over a single logit row with masked entries suppressed.
///
/// `mask[i] == true` marks entry `i` as masked. At least one entry must
/// stay unmasked.
pub fn masked_softmax(logits: &Tensor, mask: &[bool]) -> Result<Tensor> {
    if mask.len() != logits.len() {
        return Err(Error::shape(
            "masked_softmax",
            format!("{} logits, {} mask entries", logits.len(), mask.len()),
        ));
    }
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::matrix(1, logits.len(), logits.data().to_vec()));
    let y = tape.softmax_rows(x, Some(mask))?;
    Ok(Tensor::vector(tape.value(y).data().to_vec()))
}

pub fn l2_normalize(v: &Tensor) -> Result<Tensor> {
    let norm = v.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroNorm);
    }
    Ok(v.map(|x| x / norm))
}

/// Linear maps applied to query, key and value before attention.
/// `None` is the identity.
#[derive(Clone, Debug, Default)]
pub struct AttentionWeights {
    pub query: Option<Tensor>,
    pub key: Option<Tensor>,
    pub value: Option<Tensor>,
}

impl AttentionWeights {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn bind(&self, tape: &mut Tape) -> AttentionVars {
        AttentionVars {
            query: self.query.clone().map(|t| tape.constant(t)),
            key: self.key.clone().map(|t| tape.constant(t)),
            value: self.value.clone().map(|t| tape.constant(t)),
        }
    }
}

/// [`AttentionWeights`] already placed on a tape.
#[derive(Clone, Copy, Debug, Default)]
pub struct AttentionVars {
    pub query: Option<Var>,
    pub key: Option<Var>,
    pub value: Option<Var>,
}

/// Scaled query–key scores before masking, plus the transformed values
/// they will mix.
#[derive(Clone, Copy, Debug)]
pub struct AttentionScores {
    /// `[n, blocks]`
    pub logits: Var,
    /// `[blocks·n, d_v]`
    pub values: Var,
    pub blocks: usize,
}

fn project(tape: &mut Tape, x: Var, w: Option<Var>) -> Var {
    match w {
        Some(w) => tape.matmul(x, w),
        None => x,
    }
}

/// Batched cross-attention scores.
///
/// Query `j` (row `j` of `queries`, `[n, d]`) attends over its own set of
/// `blocks` keys stored block-major: key `b` of query `j` is row `b·n + j`
/// of `keys`. The scale is `1/√d'` with `d'` the key width after the key
/// transform.
pub fn attention_scores(
    tape: &mut Tape,
    queries: Var,
    keys: Var,
    values: Var,
    blocks: usize,
    w: &AttentionVars,
) -> Result<AttentionScores> {
    let (n, _) = tape.shape(queries);
    let (kr, _) = tape.shape(keys);
    let (vr, _) = tape.shape(values);
    if blocks == 0 || kr != blocks * n || vr != blocks * n {
        return Err(Error::shape(
            "cross_attention",
            format!("{n} queries, {blocks} blocks, {kr} keys, {vr} values"),
        ));
    }
    let q = project(tape, queries, w.query);
    let k = project(tape, keys, w.key);
    let v = project(tape, values, w.value);
    let (_, dq) = tape.shape(q);
    let (_, dk) = tape.shape(k);
    if dq != dk {
        return Err(Error::shape(
            "cross_attention",
            format!("query width {dq} vs key width {dk}"),
        ));
    }
    let dots = tape.block_dots(q, k, blocks);
    let logits = tape.scale(dots, 1.0 / (dk as f64).sqrt());
    Ok(AttentionScores {
        logits,
        values: v,
        blocks,
    })
}

/// Masked softmax of `scores` followed by the convex combination of values.
pub fn attention_mix(tape: &mut Tape, scores: &AttentionScores, mask: Option<&[bool]>) -> Result<Var> {
    let weights = tape.softmax_rows(scores.logits, mask)?;
    Ok(tape.block_mix(weights, scores.values, scores.blocks))
}

/// Tape-level cross-attention: scores then masked mix.
pub fn attend(
    tape: &mut Tape,
    queries: Var,
    keys: Var,
    values: Var,
    blocks: usize,
    mask: Option<&[bool]>,
    w: &AttentionVars,
) -> Result<Var> {
    let s = attention_scores(tape, queries, keys, values, blocks, w)?;
    attention_mix(tape, &s, mask)
}

/// Single-query cross-attention on plain tensors.
///
/// `query` has `d` entries, `keys`/`values` are `m × d`, `mask[i] == true`
/// hides key `i`.
pub fn cross_attention(
    query: &Tensor,
    keys: &Tensor,
    values: &Tensor,
    mask: &[bool],
    weights: &AttentionWeights,
) -> Result<Tensor> {
    let m = keys.rows();
    if values.rows() != m || mask.len() != m {
        return Err(Error::shape(
            "cross_attention",
            format!("{m} keys, {} values, {} mask entries", values.rows(), mask.len()),
        ));
    }
    if query.cols() != keys.cols() || keys.cols() != values.cols() {
        return Err(Error::shape(
            "cross_attention",
            format!(
                "widths query {} keys {} values {}",
                query.cols(),
                keys.cols(),
                values.cols()
            ),
        ));
    }
    let mut tape = Tape::new();
    let w = weights.bind(&mut tape);
    let q = tape.constant(Tensor::matrix(1, query.cols(), query.data().to_vec()));
    let k = tape.constant(Tensor::matrix(m, keys.cols(), keys.data().to_vec()));
    let v = tape.constant(Tensor::matrix(m, values.cols(), values.data().to_vec()));
    let out = attend(&mut tape, q, k, v, m, Some(mask), &w)?;
    Ok(Tensor::vector(tape.value(out).data().to_vec()))
}
