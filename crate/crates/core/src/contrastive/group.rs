use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numkernel::{attend, init_near_identity, AttentionVars, AttentionWeights, Bound, ParamSet, Tape, Tensor, Var};

/// Floor applied to teacher probabilities inside the KL.
pub const P_FLOOR: f64 = 1e-12;

pub(crate) const GROUP_Q: &str = "group.wq";
pub(crate) const GROUP_K: &str = "group.wk";
pub(crate) const GROUP_V: &str = "group.wv";
pub(crate) const PROTOTYPES: &str = "proto";

/// Group attention transforms (`group.wq|wk|wv`, `h × h`).
pub fn init_group_params<R: Rng + ?Sized>(h: usize, rng: &mut R) -> ParamSet {
    let mut p = ParamSet::new();
    for name in [GROUP_Q, GROUP_K, GROUP_V] {
        p.push(name, init_near_identity(h, 0.01, rng));
    }
    p
}

/// `C × h` prototypes with standard-normal entries.
pub fn init_prototypes<R: Rng + ?Sized>(c: usize, h: usize, rng: &mut R) -> Tensor {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    Tensor::matrix(c, h, (0..c * h).map(|_| normal.sample(rng)).collect())
}

pub fn group_vars(bound: &Bound, prefix: &str) -> AttentionVars {
    AttentionVars {
        query: Some(bound.var(&format!("{prefix}{GROUP_Q}"))),
        key: Some(bound.var(&format!("{prefix}{GROUP_K}"))),
        value: Some(bound.var(&format!("{prefix}{GROUP_V}"))),
    }
}

/// Index of the most cosine-similar prototype per instance row; the lowest
/// index wins ties. Zero rows go to prototype 0.
pub fn assign_to_prototypes(h: &Tensor, prototypes: &Tensor) -> Vec<usize> {
    let norms: Vec<f64> = (0..prototypes.rows())
        .map(|c| prototypes.row(c).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    (0..h.rows())
        .map(|j| {
            let x = h.row(j);
            let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if xn == 0.0 {
                log::debug!("zero-norm instance row {j} assigned to prototype 0");
                return 0;
            }
            let mut best = (0, f64::NEG_INFINITY);
            for (c, &pn) in norms.iter().enumerate() {
                let dot: f64 = x.iter().zip(prototypes.row(c)).map(|(a, b)| a * b).sum();
                let cos = if pn == 0.0 { 0.0 } else { dot / (xn * pn) };
                if cos > best.1 {
                    best = (c, cos);
                }
            }
            best.0
        })
        .collect()
}

/// Members of each of `c` groups, in row order.
pub fn groups(assignment: &[usize], c: usize) -> Vec<Vec<usize>> {
    let mut g = vec![Vec::new(); c];
    for (j, &a) in assignment.iter().enumerate() {
        g[a].push(j);
    }
    g
}

/// One row per prototype: attention of prototype `c` over its assigned
/// instances, or over itself when the group is empty. Always `C × h`.
pub fn group_align_traced(tape: &mut Tape, h: Var, assignment: &[usize], prototypes: Var, w: &AttentionVars) -> Result<Var> {
    let (n, _) = tape.shape(h);
    let (c, _) = tape.shape(prototypes);
    if assignment.len() != n || assignment.iter().any(|&a| a >= c) {
        return Err(Error::shape(
            "group_align_compress",
            format!("assignment of {} entries for {n} rows and {c} prototypes", assignment.len()),
        ));
    }
    let mut rows = Vec::with_capacity(c);
    for (k, members) in groups(assignment, c).iter().enumerate() {
        let q = tape.gather_rows(prototypes, &[k]);
        let (kv, blocks) = if members.is_empty() {
            (q, 1)
        } else {
            (tape.gather_rows(h, members), members.len())
        };
        rows.push(attend(tape, q, kv, kv, blocks, None, w)?);
    }
    Ok(tape.concat_rows(&rows))
}

pub fn group_align_compress(h: &Tensor, assignment: &[usize], prototypes: &Tensor, weights: &AttentionWeights) -> Result<Tensor> {
    let mut tape = Tape::new();
    let w = weights.bind(&mut tape);
    let hv = tape.constant(h.clone());
    let pv = tape.constant(prototypes.clone());
    let g = group_align_traced(&mut tape, hv, assignment, pv, &w)?;
    Ok(tape.value(g).clone())
}

fn softmax_row(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Row-wise softmax over the feature dimension of `(g − center)/τ_t`,
/// then `center ← cm·center + (1−cm)·mean_c g_c`.
pub fn center_and_sharpen(g_t: &Tensor, center: &mut [f64], tau_t: f64, momentum: f64) -> Result<Tensor> {
    let (c, d) = (g_t.rows(), g_t.cols());
    if center.len() != d {
        return Err(Error::shape("center_and_sharpen", format!("center of {} for width {d}", center.len())));
    }
    let mut out = Vec::with_capacity(c * d);
    for r in 0..c {
        let shifted: Vec<f64> = g_t.row(r).iter().zip(center.iter()).map(|(g, m)| (g - m) / tau_t).collect();
        out.extend(softmax_row(&shifted));
    }
    for (i, m) in center.iter_mut().enumerate() {
        let mean = (0..c).map(|r| g_t.row(r)[i]).sum::<f64>() / c as f64;
        *m = momentum * *m + (1.0 - momentum) * mean;
    }
    Ok(Tensor::matrix(c, d, out))
}

/// Student distributions: row-wise softmax of `g/τ_s`.
pub fn student_distribution(g_s: &Tensor, tau_s: f64) -> Tensor {
    let (c, d) = (g_s.rows(), g_s.cols());
    let data = (0..c).flat_map(|r| softmax_row(&g_s.row(r).iter().map(|v| v / tau_s).collect::<Vec<_>>())).collect();
    Tensor::matrix(c, d, data)
}

/// `Σ_c KL(P_s[c] ‖ P_t[c])` on a tape, from student log-probabilities.
pub fn group_kl_traced(tape: &mut Tape, log_ps: Var, p_t: &Tensor) -> Result<Var> {
    if tape.shape(log_ps) != (p_t.rows(), p_t.cols()) {
        return Err(Error::shape("group_kl_loss", format!("{:?} vs {:?}", tape.shape(log_ps), p_t.shape())));
    }
    let log_pt = tape.constant(p_t.map(|p| p.max(P_FLOOR).ln()));
    let ps = tape.exp(log_ps);
    let diff = tape.sub(log_ps, log_pt);
    let prod = tape.mul(ps, diff);
    Ok(tape.sum(prod))
}

/// `Σ_c Σ_i P_s·log(P_s/P_t)` with `P_t` floored at [`P_FLOOR`].
pub fn group_kl_loss(p_s: &Tensor, p_t: &Tensor) -> Result<f64> {
    if !p_s.same_shape(p_t) {
        return Err(Error::shape("group_kl_loss", format!("{:?} vs {:?}", p_s.shape(), p_t.shape())));
    }
    Ok(p_s
        .data()
        .iter()
        .zip(p_t.data())
        .filter(|(s, _)| **s > 0.0)
        .map(|(s, t)| s * (s.ln() - t.max(P_FLOOR).ln()))
        .sum())
}
