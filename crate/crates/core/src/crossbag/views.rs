use rand::seq::index;
use rand::Rng;

use crate::bagdata::{Bag, ClassPool, ProvenanceId};
use crate::numkernel::Tensor;

/// `m` views of `n` same-class foreign instances each, stored view-major:
/// instance `j` of view `v` is row `v·n + j`.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewSet {
    pub m: usize,
    pub n: usize,
    pub rows: Tensor,
    pub provenance: Vec<ProvenanceId>,
}

impl ViewSet {
    pub fn empty(d: usize) -> Self {
        Self {
            m: 0,
            n: 0,
            rows: Tensor::zeros(&[0, d]),
            provenance: Vec::new(),
        }
    }

    /// No views: fusion degrades to the identity.
    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn view_provenance(&self, v: usize) -> &[ProvenanceId] {
        &self.provenance[v * self.n..(v + 1) * self.n]
    }

    pub fn at(&self, v: usize, j: usize) -> ProvenanceId {
        self.provenance[v * self.n + j]
    }
}

/// Draws `m` pairwise-disjoint views for `bag` from same-class instances of
/// other bags, without replacement. With fewer than `m·n` foreign instances
/// `m` shrinks to `⌊pool/n⌋`; with fewer than `n` the set is empty.
pub fn sample_views<R: Rng + ?Sized>(bag: &Bag, pool: &ClassPool<'_>, m: usize, rng: &mut R) -> ViewSet {
    let n = bag.len();
    let avail = pool.foreign_len(bag.label, bag.id);
    let m = m.min(avail / n);
    if m == 0 {
        return ViewSet::empty(bag.dim());
    }
    let picks = index::sample(rng, avail, m * n);
    let mut data = Vec::with_capacity(m * n * bag.dim());
    let mut provenance = Vec::with_capacity(m * n);
    for k in picks.iter() {
        let e = pool.foreign(bag.label, bag.id, k);
        data.extend_from_slice(pool.row(e));
        provenance.push(e.provenance);
    }
    ViewSet {
        m,
        n,
        rows: Tensor::matrix(m * n, bag.dim(), data),
        provenance,
    }
}
