use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::bagdata::Bag;
use crate::error::{Error, Result};
use crate::rng;

/// Fold index for every bag, stratified by label. Each class is shuffled
/// and dealt round-robin, continuing from where the previous class ended,
/// so per-class fold sizes differ by at most one.
pub fn kfold_split(bags: &[Bag], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Config(format!("folds must be ≥ 2, got {folds}")));
    }
    if bags.len() < folds {
        return Err(Error::Config(format!("{} bags cannot fill {folds} folds", bags.len())));
    }
    let mut by_class: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, b) in bags.iter().enumerate() {
        by_class.entry(b.label).or_default().push(i);
    }
    if let Some((&class, idx)) = by_class.iter().find(|(_, v)| v.len() < folds) {
        return Err(Error::ClassTooSmall {
            class,
            count: idx.len(),
            folds,
        });
    }
    let mut r = rng::stream(seed, "folds");
    let mut out = vec![0; bags.len()];
    let mut next = 0;
    for idx in by_class.values_mut() {
        idx.shuffle(&mut r);
        for &i in idx.iter() {
            out[i] = next;
            next = (next + 1) % folds;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::Tensor;

    fn bags(pos: usize, neg: usize) -> Vec<Bag> {
        (0..pos + neg)
            .map(|i| Bag::new(i as u64, u8::from(i < pos), Tensor::matrix(1, 1, vec![0.0]), None).unwrap())
            .collect()
    }

    #[test]
    fn ten_bags_five_folds() {
        let b = bags(5, 5);
        let f = kfold_split(&b, 5, 0).unwrap();
        for k in 0..5 {
            assert_eq!(f.iter().filter(|&&x| x == k).count(), 2);
        }
    }

    #[test]
    fn stratified_counts() {
        let b = bags(6, 4);
        let f = kfold_split(&b, 2, 3).unwrap();
        for k in 0..2 {
            let pos = (0..10).filter(|&i| f[i] == k && b[i].label == 1).count();
            let neg = (0..10).filter(|&i| f[i] == k && b[i].label == 0).count();
            assert_eq!((pos, neg), (3, 2));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let b = bags(7, 9);
        assert_eq!(kfold_split(&b, 3, 11).unwrap(), kfold_split(&b, 3, 11).unwrap());
    }

    #[test]
    fn small_class_is_named() {
        let err = kfold_split(&bags(1, 5), 2, 0).unwrap_err();
        assert!(matches!(err, Error::ClassTooSmall { class: 1, count: 1, folds: 2 }));
        assert!(kfold_split(&bags(3, 3), 1, 0).is_err());
    }
}
