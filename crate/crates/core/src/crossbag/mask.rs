use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaskStrategy {
    /// Each entry masked independently with probability `p`.
    ElementWise,
    /// `m′` uniform over `{0..m}` per row, entries chosen uniformly.
    #[default]
    RowWise,
    /// `m′` as row-wise, entries chosen by attention logit.
    TopK,
}

impl std::str::FromStr for MaskStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "element" | "element_wise" => Ok(Self::ElementWise),
            "row" | "row_wise" => Ok(Self::RowWise),
            "topk" | "top_k" => Ok(Self::TopK),
            other => Err(Error::Config(format!("unknown mask strategy {other:?}"))),
        }
    }
}

/// Which end of the logit ranking top-k masking removes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TopKMasks {
    /// Mask the lowest logits; the highest-attention views survive.
    #[default]
    Lowest,
    Highest,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub strategy: MaskStrategy,
    pub p: f64,
    pub topk_masks: TopKMasks,
}

impl Default for MaskSpec {
    fn default() -> Self {
        Self {
            strategy: MaskStrategy::RowWise,
            p: 0.5,
            topk_masks: TopKMasks::Lowest,
        }
    }
}

impl MaskSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::Config(format!("mask probability p = {} outside [0, 1]", self.p)));
        }
        Ok(())
    }
}

/// An `n × m` boolean mask (`true` = masked) together with the per-row
/// counts that were drawn before the never-mask-all repair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub n: usize,
    pub m: usize,
    pub masked: Vec<bool>,
    pub drawn: Vec<usize>,
}

impl Mask {
    pub fn none(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            masked: vec![false; n * m],
            drawn: vec![0; n],
        }
    }

    pub fn row(&self, j: usize) -> &[bool] {
        &self.masked[j * self.m..(j + 1) * self.m]
    }

    pub fn masked_count(&self, j: usize) -> usize {
        self.row(j).iter().filter(|&&b| b).count()
    }
}

/// Draws a mask for `logits` (`n × m`). Logits are read only by top-k.
pub fn build_mask<R: Rng + ?Sized>(spec: &MaskSpec, logits: &Tensor, rng: &mut R) -> Mask {
    let (n, m) = (logits.rows(), logits.cols());
    let mut mask = Mask::none(n, m);
    if m == 0 {
        return mask;
    }
    for j in 0..n {
        let row = &mut mask.masked[j * m..(j + 1) * m];
        match spec.strategy {
            MaskStrategy::ElementWise => {
                for e in row.iter_mut() {
                    *e = rng.random_bool(spec.p);
                }
                mask.drawn[j] = row.iter().filter(|&&b| b).count();
                if mask.drawn[j] == m {
                    row[rng.random_range(0..m)] = false;
                }
            }
            MaskStrategy::RowWise => {
                let k = rng.random_range(0..=m);
                mask.drawn[j] = k;
                for c in index::sample(rng, m, k.min(m - 1)).iter() {
                    row[c] = true;
                }
            }
            MaskStrategy::TopK => {
                let k = rng.random_range(0..=m);
                mask.drawn[j] = k;
                row.copy_from_slice(&top_k_row(logits.row(j), k, spec.topk_masks));
            }
        }
    }
    mask
}

/// Masks exactly `k` entries of one logit row by the top-k rule.
pub fn top_k_row(logits: &[f64], k: usize, which: TopKMasks) -> Vec<bool> {
    let m = logits.len();
    let mut order: Vec<usize> = (0..m).collect();
    match which {
        TopKMasks::Lowest => order.sort_by(|&a, &b| logits[a].total_cmp(&logits[b]).then(a.cmp(&b))),
        TopKMasks::Highest => order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b))),
    }
    let mut row = vec![false; m];
    for &c in order.iter().take(k.min(m.saturating_sub(1))) {
        row[c] = true;
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn top_k_keeps_highest_logit() {
        assert_eq!(top_k_row(&[3.0, 1.0, 2.0], 2, TopKMasks::Lowest), vec![false, true, true]);
        assert_eq!(top_k_row(&[3.0, 1.0, 2.0], 2, TopKMasks::Highest), vec![true, false, true]);
    }

    #[test]
    fn ties_favour_lower_column() {
        assert_eq!(top_k_row(&[1.0, 1.0, 1.0], 1, TopKMasks::Lowest), vec![true, false, false]);
    }

    #[test]
    fn rows_never_fully_masked() {
        let logits = Tensor::matrix(200, 3, vec![0.0; 600]);
        let mut r = rng::stream(5, "t");
        for strategy in [MaskStrategy::ElementWise, MaskStrategy::RowWise, MaskStrategy::TopK] {
            let spec = MaskSpec {
                strategy,
                p: 0.9,
                ..MaskSpec::default()
            };
            let mask = build_mask(&spec, &logits, &mut r);
            assert!((0..200).all(|j| mask.masked_count(j) < 3));
            assert!(mask.drawn.iter().all(|&k| k <= 3));
        }
    }

    #[test]
    fn single_view_is_never_masked() {
        let logits = Tensor::matrix(50, 1, vec![0.0; 50]);
        let spec = MaskSpec {
            strategy: MaskStrategy::ElementWise,
            p: 1.0,
            ..MaskSpec::default()
        };
        let mask = build_mask(&spec, &logits, &mut rng::stream(0, "t"));
        assert!(mask.masked.iter().all(|&b| !b));
    }

    #[test]
    fn strategy_names_parse() {
        assert_eq!("element".parse::<MaskStrategy>().unwrap(), MaskStrategy::ElementWise);
        assert_eq!("row".parse::<MaskStrategy>().unwrap(), MaskStrategy::RowWise);
        assert_eq!("topk".parse::<MaskStrategy>().unwrap(), MaskStrategy::TopK);
        assert!("col".parse::<MaskStrategy>().is_err());
    }
}
