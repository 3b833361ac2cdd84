use serde::{Deserialize, Serialize};

use super::bag::Bag;
use crate::error::{Error, Result};

/// Tumor-instance-ratio groups. Boundaries are closed on the left:
/// normal = 0, (0, 1%), [1%, 10%), [10%, 100%].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    Normal,
    Below1,
    From1To10,
    From10,
}

impl Stratum {
    pub const ALL: [Stratum; 4] = [Stratum::Normal, Stratum::Below1, Stratum::From1To10, Stratum::From10];

    pub fn of_ratio(ratio: f64) -> Self {
        if ratio <= 0.0 {
            Stratum::Normal
        } else if ratio < 0.01 {
            Stratum::Below1
        } else if ratio < 0.10 {
            Stratum::From1To10
        } else {
            Stratum::From10
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stratum::Normal => "normal",
            Stratum::Below1 => "<1%",
            Stratum::From1To10 => "1%-10%",
            Stratum::From10 => ">=10%",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Bag indices per stratum, in input order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Strata {
    pub groups: [Vec<usize>; 4],
}

impl Strata {
    pub fn get(&self, s: Stratum) -> &[usize] {
        &self.groups[s.index()]
    }

    pub fn total(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }
}

pub fn stratify_by_tumor_ratio(bags: &[Bag]) -> Result<Strata> {
    let mut out = Strata::default();
    for (i, b) in bags.iter().enumerate() {
        let ratio = b.tumor_ratio().ok_or(Error::MissingInstanceLabels { bag_id: b.id })?;
        out.groups[Stratum::of_ratio(ratio).index()].push(i);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::Tensor;

    fn bag_with_ratio(id: u64, pos: usize, n: usize) -> Bag {
        let tags: Vec<u8> = (0..n).map(|j| u8::from(j < pos)).collect();
        Bag::new(id, u8::from(pos > 0), Tensor::zeros(&[n, 1]), Some(tags)).unwrap()
    }

    #[test]
    fn one_bag_per_group() {
        // ratios 0, 0.005, 0.05, 0.5
        let bags = vec![
            bag_with_ratio(0, 0, 200),
            bag_with_ratio(1, 1, 200),
            bag_with_ratio(2, 10, 200),
            bag_with_ratio(3, 100, 200),
        ];
        let s = stratify_by_tumor_ratio(&bags).unwrap();
        for (k, st) in Stratum::ALL.iter().enumerate() {
            assert_eq!(s.get(*st), &[k]);
        }
    }

    #[test]
    fn one_percent_goes_to_middle_group() {
        let s = stratify_by_tumor_ratio(&[bag_with_ratio(0, 1, 100)]).unwrap();
        assert_eq!(s.get(Stratum::From1To10), &[0]);
        assert_eq!(Stratum::of_ratio(0.10), Stratum::From10);
    }

    #[test]
    fn all_normal_leaves_tumor_groups_empty() {
        let bags: Vec<_> = (0..5).map(|i| bag_with_ratio(i, 0, 10)).collect();
        let s = stratify_by_tumor_ratio(&bags).unwrap();
        assert_eq!(s.get(Stratum::Normal).len(), 5);
        assert!(s.groups[1..].iter().all(Vec::is_empty));
    }

    #[test]
    fn missing_tags_error() {
        let b = Bag::new(7, 0, Tensor::zeros(&[2, 1]), None).unwrap();
        let e = stratify_by_tumor_ratio(&[b]).unwrap_err();
        assert!(e.to_string().contains("stratification requires instance labels"));
    }
}
