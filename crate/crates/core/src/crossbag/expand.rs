use rand::Rng;

use super::pseudo::{Lineage, PseudoBag, TracedBag};
use crate::bagdata::{ClassPool, PoolEntry};
use crate::numkernel::{Tape, Tensor};

/// Draws `n_e ~ U{0..n_max−n}` same-class instances from other bags, with
/// replacement. Empty when the pool has nothing to offer.
pub(crate) fn draw_expansion<'p, R: Rng + ?Sized>(
    n: usize,
    label: u8,
    source_id: u64,
    pool: &'p ClassPool<'_>,
    rng: &mut R,
) -> Vec<&'p PoolEntry> {
    let avail = pool.foreign_len(label, source_id);
    if avail == 0 || n >= pool.n_max() {
        return Vec::new();
    }
    let n_e = rng.random_range(0..=pool.n_max() - n);
    (0..n_e)
        .map(|_| pool.foreign(label, source_id, rng.random_range(0..avail)))
        .collect()
}

fn extra(pool: &ClassPool<'_>, picks: &[&PoolEntry], d: usize) -> (Tensor, Vec<Lineage>) {
    let data = picks.iter().flat_map(|e| pool.row(e).iter().copied()).collect();
    let lineage = picks
        .iter()
        .map(|e| Lineage::Expanded {
            provenance: e.provenance,
        })
        .collect();
    (Tensor::matrix(picks.len(), d, data), lineage)
}

pub(crate) fn expand_traced<R: Rng + ?Sized>(
    tape: &mut Tape,
    input: TracedBag,
    pool: &ClassPool<'_>,
    rng: &mut R,
) -> TracedBag {
    let picks = draw_expansion(input.len(), input.label, input.source_id, pool, rng);
    if picks.is_empty() {
        return input;
    }
    let (_, d) = tape.shape(input.instances);
    let (rows, lineage) = extra(pool, &picks, d);
    let rows = tape.constant(rows);
    let mut out = input;
    out.instances = tape.concat_rows(&[out.instances, rows]);
    out.lineage.extend(lineage);
    out
}

/// Appends `n_e` uniformly drawn same-class instances after the input rows.
pub fn instance_expand<R: Rng + ?Sized>(bag: &PseudoBag, pool: &ClassPool<'_>, rng: &mut R) -> PseudoBag {
    let picks = draw_expansion(bag.len(), bag.label, bag.source_id, pool, rng);
    let mut out = bag.clone();
    if picks.is_empty() {
        return out;
    }
    let d = bag.instances.cols();
    let (rows, lineage) = extra(pool, &picks, d);
    let mut data = out.instances.into_data();
    data.extend_from_slice(rows.data());
    out.instances = Tensor::matrix(bag.len() + picks.len(), d, data);
    out.lineage.extend(lineage);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bagdata::Bag;
    use crate::rng;

    fn split() -> Vec<Bag> {
        let mk = |id: u64, label: u8, n: usize| Bag::new(id, label, Tensor::matrix(n, 1, vec![id as f64; n]), None).unwrap();
        vec![mk(0, 1, 2), mk(1, 1, 5), mk(2, 0, 3)]
    }

    #[test]
    fn largest_bag_is_unchanged() {
        let bags = split();
        let pool = ClassPool::build(&bags).unwrap();
        let p = PseudoBag::identity(&bags[1]);
        assert_eq!(instance_expand(&p, &pool, &mut rng::stream(0, "t")), p);
    }

    #[test]
    fn keeps_prefix_and_respects_bound() {
        let bags = split();
        let pool = ClassPool::build(&bags).unwrap();
        let p = PseudoBag::identity(&bags[0]);
        let mut r = rng::stream(1, "t");
        for _ in 0..200 {
            let out = instance_expand(&p, &pool, &mut r);
            assert!((2..=5).contains(&out.len()));
            assert_eq!(&out.instances.data()[..2], p.instances.data());
            assert!(out.provenance().all(|q| pool.label_of(q) == Some(1)));
            assert!(out.lineage[2..].iter().all(|l| matches!(l, Lineage::Expanded { provenance } if provenance.bag_id() == 1)));
        }
    }

    #[test]
    fn empty_foreign_pool_gives_no_expansion() {
        let bags = split();
        let pool = ClassPool::build(&bags).unwrap();
        let p = PseudoBag::identity(&bags[2]);
        assert_eq!(instance_expand(&p, &pool, &mut rng::stream(0, "t")).len(), 3);
    }
}
