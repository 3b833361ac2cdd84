use super::bank::{MemoryBank, UNIT_TOL};
use crate::error::{Error, Result};
use crate::numkernel::{Tape, Tensor, Var};

/// InfoNCE on a tape: `−log softmax([z·z⁺, z·z⁻₁, …] / τ)[0]`.
///
/// `z_s` is the student embedding (`1 × h`) and carries the gradient;
/// `z_t` and the bank enter as constants.
pub fn bag_contrastive_traced(tape: &mut Tape, z_s: Var, z_t: &Tensor, bank: &MemoryBank, tau: f64) -> Result<Var> {
    let (_, h) = tape.shape(z_s);
    if z_t.len() != h {
        return Err(Error::shape("bag_contrastive_loss", format!("student width {h}, teacher {}", z_t.len())));
    }
    let mut keys = z_t.data().to_vec();
    for z in bank.iter() {
        if z.len() != h {
            return Err(Error::shape("bag_contrastive_loss", format!("bank width {} vs {h}", z.len())));
        }
        keys.extend_from_slice(z);
    }
    let keys = tape.constant(Tensor::matrix(1 + bank.len(), h, keys));
    let sims = tape.matmul_t(z_s, keys);
    let logits = tape.scale(sims, 1.0 / tau);
    let logp = tape.log_softmax_rows(logits);
    let pos = tape.pick(logp, 0, 0);
    Ok(tape.scale(pos, -1.0))
}

fn check_unit(z: &Tensor) -> Result<()> {
    let norm = z.norm();
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(Error::NotUnitNorm { norm });
    }
    Ok(())
}

/// Bag-level contrastive loss on plain tensors. All embeddings unit-norm.
pub fn bag_contrastive_loss(z_s: &Tensor, z_t: &Tensor, bank: &MemoryBank, tau: f64) -> Result<f64> {
    check_unit(z_s)?;
    check_unit(z_t)?;
    let mut tape = Tape::new();
    let zs = tape.constant(Tensor::matrix(1, z_s.len(), z_s.data().to_vec()));
    let loss = bag_contrastive_traced(&mut tape, zs, z_t, bank, tau)?;
    Ok(tape.value(loss).item())
}
