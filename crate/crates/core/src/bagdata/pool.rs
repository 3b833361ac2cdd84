use std::collections::{BTreeMap, HashMap};
use std::ops::Range;

use super::bag::{Bag, ProvenanceId};
use crate::error::{Error, Result};

/// One training instance as seen from a [`ClassPool`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolEntry {
    /// Index into the pool's bag slice.
    pub bag: usize,
    pub instance: usize,
    pub provenance: ProvenanceId,
}

/// Per-class index over every instance of a training split.
///
/// Entries of one class are stored grouped by bag, so "all same-class
/// instances except those of bag `b`" is the class list with one
/// contiguous range cut out.
#[derive(Clone, Debug)]
pub struct ClassPool<'a> {
    bags: &'a [Bag],
    per_class: BTreeMap<u8, Vec<PoolEntry>>,
    ranges: HashMap<u64, (u8, Range<usize>)>,
    n_max: usize,
}

impl<'a> ClassPool<'a> {
    pub fn build(bags: &'a [Bag]) -> Result<Self> {
        if bags.is_empty() {
            return Err(Error::Config("class pool needs a non-empty training split".into()));
        }
        let mut per_class: BTreeMap<u8, Vec<PoolEntry>> = BTreeMap::new();
        let mut ranges = HashMap::with_capacity(bags.len());
        for (bi, b) in bags.iter().enumerate() {
            let list = per_class.entry(b.label).or_default();
            let start = list.len();
            list.extend((0..b.len()).map(|j| PoolEntry {
                bag: bi,
                instance: j,
                provenance: b.provenance(j),
            }));
            if ranges.insert(b.id, (b.label, start..list.len())).is_some() {
                return Err(Error::Config(format!("duplicate bag id {} in training split", b.id)));
            }
        }
        let n_max = bags.iter().map(Bag::len).max().unwrap_or(0);
        Ok(Self {
            bags,
            per_class,
            ranges,
            n_max,
        })
    }

    /// Largest bag in the training split.
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn bags(&self) -> &'a [Bag] {
        self.bags
    }

    pub fn classes(&self) -> impl Iterator<Item = u8> + '_ {
        self.per_class.keys().copied()
    }

    /// Every instance of `class`; empty when the class has no bags.
    pub fn entries(&self, class: u8) -> &[PoolEntry] {
        self.per_class.get(&class).map_or(&[], Vec::as_slice)
    }

    pub fn total(&self) -> usize {
        self.per_class.values().map(Vec::len).sum()
    }

    pub fn contains_bag(&self, bag_id: u64) -> bool {
        self.ranges.contains_key(&bag_id)
    }

    fn excluded(&self, class: u8, bag_id: u64) -> Range<usize> {
        match self.ranges.get(&bag_id) {
            Some((c, r)) if *c == class => r.clone(),
            _ => 0..0,
        }
    }

    /// Number of `class` instances that do not belong to bag `bag_id`.
    pub fn foreign_len(&self, class: u8, bag_id: u64) -> usize {
        self.entries(class).len() - self.excluded(class, bag_id).len()
    }

    /// The `k`-th `class` instance outside bag `bag_id`, `k < foreign_len`.
    pub fn foreign(&self, class: u8, bag_id: u64, k: usize) -> &PoolEntry {
        let ex = self.excluded(class, bag_id);
        let idx = if k >= ex.start { k + ex.len() } else { k };
        &self.entries(class)[idx]
    }

    pub fn row(&self, e: &PoolEntry) -> &'a [f64] {
        self.bags[e.bag].row(e.instance)
    }

    pub fn bag_of(&self, e: &PoolEntry) -> &'a Bag {
        &self.bags[e.bag]
    }

    /// Label of the training bag that owns `p`, if any.
    pub fn label_of(&self, p: ProvenanceId) -> Option<u8> {
        self.ranges.get(&p.bag_id()).map(|(c, _)| *c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::Tensor;
    use std::collections::HashSet;

    fn bag(id: u64, label: u8, n: usize) -> Bag {
        Bag::new(id, label, Tensor::matrix(n, 2, (0..2 * n).map(|v| v as f64).collect()), None).unwrap()
    }

    #[test]
    fn counts_and_n_max() {
        let bags = vec![bag(1, 0, 3), bag(2, 0, 5)];
        let pool = ClassPool::build(&bags).unwrap();
        assert_eq!(pool.entries(0).len(), 8);
        assert_eq!(pool.n_max(), 5);
        assert!(pool.entries(1).is_empty());
    }

    #[test]
    fn classes_are_disjoint_by_provenance() {
        let bags = vec![bag(1, 0, 3), bag(2, 1, 4), bag(3, 0, 2)];
        let pool = ClassPool::build(&bags).unwrap();
        let a: HashSet<_> = pool.entries(0).iter().map(|e| e.provenance).collect();
        let b: HashSet<_> = pool.entries(1).iter().map(|e| e.provenance).collect();
        assert!(a.is_disjoint(&b));
        assert_eq!(a.len() + b.len(), 9);
        assert!(pool.entries(1).iter().all(|e| pool.bag_of(e).label == 1));
    }

    #[test]
    fn single_bag_pool_is_its_instances() {
        let bags = vec![bag(4, 1, 3)];
        let pool = ClassPool::build(&bags).unwrap();
        let got: Vec<_> = pool.entries(1).iter().map(|e| e.provenance).collect();
        assert_eq!(got, (0..3).map(|j| bags[0].provenance(j)).collect::<Vec<_>>());
        assert_eq!(pool.foreign_len(1, 4), 0);
    }

    #[test]
    fn foreign_indexing_skips_own_bag() {
        let bags = vec![bag(1, 0, 2), bag(2, 0, 3), bag(3, 0, 1)];
        let pool = ClassPool::build(&bags).unwrap();
        assert_eq!(pool.foreign_len(0, 2), 3);
        let ids: Vec<u64> = (0..3).map(|k| pool.foreign(0, 2, k).provenance.bag_id()).collect();
        assert_eq!(ids, vec![1, 1, 3]);
        // a bag outside the pool excludes nothing
        assert_eq!(pool.foreign_len(0, 99), 6);
    }

    #[test]
    fn empty_training_set_rejected() {
        assert!(ClassPool::build(&[]).is_err());
    }
}
