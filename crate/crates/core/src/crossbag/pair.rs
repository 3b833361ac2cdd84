use rand::Rng;
use serde::{Deserialize, Serialize};

use super::compress::{compress_traced, CompressionPlan};
use super::expand::expand_traced;
use super::fusion::fuse_traced;
use super::mask::{MaskSpec, MaskStrategy, TopKMasks};
use super::params::{AugmenterParams, AugmenterVars};
use super::pseudo::{PseudoBag, TracedBag};
use super::views::sample_views;
use crate::bagdata::{Bag, ClassPool};
use crate::error::{Error, Result};
use crate::numkernel::Tape;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Master switch; `false` makes every pipeline the identity.
    pub enabled: bool,
    pub fusion: bool,
    pub expansion: bool,
    pub compression: bool,
    /// View count `m`.
    pub views: usize,
    pub strategy: MaskStrategy,
    /// Element-wise mask probability.
    pub p: f64,
    pub topk_masks: TopKMasks,
    pub cr_max: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            fusion: true,
            expansion: true,
            compression: true,
            views: 4,
            strategy: MaskStrategy::RowWise,
            p: 0.5,
            topk_masks: TopKMasks::Lowest,
            cr_max: 4,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn mask_spec(&self) -> MaskSpec {
        MaskSpec {
            strategy: self.strategy,
            p: self.p,
            topk_masks: self.topk_masks,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mask_spec().validate()?;
        if self.views == 0 {
            return Err(Error::Config("views must be ≥ 1".into()));
        }
        if self.cr_max < 2 {
            return Err(Error::Config(format!("cr_max must be ≥ 2, got {}", self.cr_max)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Resize {
    None,
    Expand,
    Compress,
}

/// One randomized pipeline on a tape: fusion, then one of expansion,
/// compression or nothing, chosen uniformly among the enabled options.
pub fn augment_traced<R: Rng + ?Sized>(
    tape: &mut Tape,
    bag: &Bag,
    pool: &ClassPool<'_>,
    w: &AugmenterVars,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<TracedBag> {
    let mut cur = TracedBag::from_bag(tape, bag);
    if !cfg.enabled {
        return Ok(cur);
    }
    if cfg.fusion {
        let views = sample_views(bag, pool, cfg.views, rng);
        cur = fuse_traced(tape, &cur, &views, w, &cfg.mask_spec(), rng)?.0;
    }
    let mut options = vec![Resize::None];
    if cfg.expansion {
        options.push(Resize::Expand);
    }
    if cfg.compression {
        options.push(Resize::Compress);
    }
    let pick = if options.len() > 1 {
        options[rng.random_range(0..options.len())]
    } else {
        Resize::None
    };
    Ok(match pick {
        Resize::None => cur,
        Resize::Expand => expand_traced(tape, cur, pool, rng),
        Resize::Compress => {
            let plan = CompressionPlan::sample(cur.len(), cfg.cr_max, rng)?;
            compress_traced(tape, cur, &plan, w)?
        }
    })
}

/// Plain-tensor version of [`augment_traced`].
pub fn augment<R: Rng + ?Sized>(
    bag: &Bag,
    pool: &ClassPool<'_>,
    params: &AugmenterParams,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<PseudoBag> {
    if !cfg.enabled {
        return Ok(PseudoBag::identity(bag));
    }
    let mut tape = Tape::new();
    let bound = params.set.bind(&mut tape, None);
    let w = AugmenterVars::from_bound(&bound, "");
    Ok(augment_traced(&mut tape, bag, pool, &w, cfg, rng)?.materialize(&tape))
}

/// Two independent pipelines over the same bag, drawn in sequence from `rng`.
pub fn make_pseudo_pair<R: Rng + ?Sized>(
    bag: &Bag,
    pool: &ClassPool<'_>,
    params: &AugmenterParams,
    rng: &mut R,
    cfg: &AugmentConfig,
) -> Result<(PseudoBag, PseudoBag)> {
    let student = augment(bag, pool, params, cfg, rng)?;
    let teacher = augment(bag, pool, params, cfg, rng)?;
    Ok((student, teacher))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bagdata::{synth_generate, SynthConfig};
    use crate::rng;

    fn data() -> Vec<Bag> {
        synth_generate(&SynthConfig {
            d: 3,
            normal_bags: 6,
            tumor_bags: 6,
            bag_size_min: 4,
            bag_size_max: 12,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn disabled_is_bit_exact_identity() {
        let bags = data();
        let pool = ClassPool::build(&bags).unwrap();
        let params = AugmenterParams::init(3, &mut rng::stream(0, "p"));
        let (s, t) = make_pseudo_pair(&bags[0], &pool, &params, &mut rng::stream(0, "t"), &AugmentConfig::disabled()).unwrap();
        assert_eq!(s, PseudoBag::identity(&bags[0]));
        assert_eq!(t, s);
    }

    #[test]
    fn replay_is_identical() {
        let bags = data();
        let pool = ClassPool::build(&bags).unwrap();
        let params = AugmenterParams::init(3, &mut rng::stream(0, "p"));
        let cfg = AugmentConfig::default();
        let a = make_pseudo_pair(&bags[1], &pool, &params, &mut rng::stream(7, "t"), &cfg).unwrap();
        let b = make_pseudo_pair(&bags[1], &pool, &params, &mut rng::stream(7, "t"), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn labels_and_class_closure_hold() {
        let bags = data();
        let pool = ClassPool::build(&bags).unwrap();
        let params = AugmenterParams::init(3, &mut rng::stream(0, "p"));
        let mut r = rng::stream(3, "t");
        for bag in &bags {
            for _ in 0..20 {
                let (s, t) = make_pseudo_pair(bag, &pool, &params, &mut r, &AugmentConfig::default()).unwrap();
                for p in [&s, &t] {
                    assert_eq!(p.label, bag.label);
                    assert_eq!(p.lineage.len(), p.len());
                    assert!(p.provenance().all(|q| pool.label_of(q) == Some(bag.label)));
                }
            }
        }
    }

    #[test]
    fn fusion_only_preserves_size() {
        let bags = data();
        let pool = ClassPool::build(&bags).unwrap();
        let params = AugmenterParams::init(3, &mut rng::stream(0, "p"));
        let cfg = AugmentConfig {
            expansion: false,
            compression: false,
            ..AugmentConfig::default()
        };
        let out = augment(&bags[2], &pool, &params, &cfg, &mut rng::stream(1, "t")).unwrap();
        assert_eq!(out.len(), bags[2].len());
    }
}
