use proptest::prelude::*;
use rand::seq::SliceRandom;

use c2aug::bagdata::{decode_bags, encode_bags, synth_generate, Bag, ClassPool, SynthConfig};
use c2aug::contrastive::{group_kl_loss, MemoryBank};
use c2aug::crossbag::{
    build_mask, compress_with_plan, instance_expand, AugmenterParams, CompressionPlan, MaskSpec, MaskStrategy,
    PseudoBag, TopKMasks,
};
use c2aug::harness::{auc, evaluate, kfold_split, train_step, RunConfig, Streams, TrainState};
use c2aug::milmodel::{mil_forward, MilParams, ModelConfig};
use c2aug::numkernel::{masked_softmax, Tensor};
use c2aug::{rng, Exec};

fn matrix(max_rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    (1..=max_rows).prop_flat_map(move |n| {
        prop::collection::vec(-3.0f64..3.0, n * cols).prop_map(move |v| Tensor::matrix(n, cols, v))
    })
}

fn bags(d: usize) -> impl Strategy<Value = Vec<Bag>> {
    prop::collection::vec((matrix(6, d), 0u8..2), 1..8).prop_map(|items| {
        items
            .into_iter()
            .enumerate()
            .map(|(i, (x, label))| {
                let x = x.map(|v| f64::from(v as f32));
                Bag::new(i as u64, label, x, None).unwrap()
            })
            .collect()
    })
}

fn strategy() -> impl Strategy<Value = MaskStrategy> {
    prop_oneof![
        Just(MaskStrategy::ElementWise),
        Just(MaskStrategy::RowWise),
        Just(MaskStrategy::TopK)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forward_is_permutation_invariant(x in matrix(10, 3), seed in any::<u64>()) {
        let cfg = ModelConfig { hidden: 5, attention: 3, classes: 2 };
        let params = MilParams::init(3, &cfg, &mut rng::stream(seed, "p"));
        let mut order: Vec<usize> = (0..x.rows()).collect();
        order.shuffle(&mut rng::stream(seed, "perm"));
        let a = mil_forward(&x, &params).unwrap();
        let b = mil_forward(&x.select_rows(&order), &params).unwrap();
        prop_assert_eq!(a.rep, b.rep);
        prop_assert_eq!(a.logits, b.logits);
    }

    #[test]
    fn masks_never_cover_a_whole_row(
        n in 1usize..6, m in 1usize..6, p in 0.0f64..=1.0, s in strategy(), seed in any::<u64>(), highest in any::<bool>()
    ) {
        let spec = MaskSpec {
            strategy: s,
            p,
            topk_masks: if highest { TopKMasks::Highest } else { TopKMasks::Lowest },
        };
        let logits = Tensor::matrix(n, m, (0..n * m).map(|i| (i as f64 * 0.37).sin()).collect());
        let mask = build_mask(&spec, &logits, &mut rng::stream(seed, "mask"));
        prop_assert_eq!(mask.masked.len(), n * m);
        for j in 0..n {
            prop_assert!(mask.masked_count(j) < m);
            prop_assert!(mask.drawn[j] <= m);
        }
    }

    #[test]
    fn masked_softmax_is_a_distribution(logits in prop::collection::vec(-50.0f64..50.0, 1..8), bits in any::<u64>()) {
        let k = logits.len();
        let mut mask: Vec<bool> = (0..k).map(|i| bits >> i & 1 == 1).collect();
        mask[(bits as usize >> 8) % k] = false;
        let y = masked_softmax(&Tensor::vector(logits), &mask).unwrap();
        let total: f64 = y.data().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for (w, &masked) in y.data().iter().zip(&mask) {
            prop_assert!(*w >= 0.0);
            if masked {
                prop_assert_eq!(*w, 0.0);
            }
        }
    }

    #[test]
    fn expansion_and_compression_sizes(bags in bags(2), seed in any::<u64>(), cr_max in 2usize..6) {
        let pool = ClassPool::build(&bags).unwrap();
        let params = AugmenterParams::init(2, &mut rng::stream(seed, "init"));
        let mut r = rng::stream(seed, "aug");
        for bag in &bags {
            let n = bag.len();
            let e = instance_expand(&PseudoBag::identity(bag), &pool, &mut r);
            prop_assert!(e.len() >= n && e.len() <= pool.n_max().max(n));
            prop_assert!(e.provenance().all(|p| pool.label_of(p) == Some(bag.label)));
            let plan = CompressionPlan::sample(n, cr_max, &mut r).unwrap();
            prop_assert!((2..=cr_max).contains(&plan.ratio));
            let c = compress_with_plan(&PseudoBag::identity(bag), &plan, &params).unwrap();
            prop_assert_eq!(c.len(), n.div_ceil(plan.ratio));
        }
    }

    #[test]
    fn mbag_round_trips(bags in bags(3)) {
        let bytes = encode_bags(&bags).unwrap();
        prop_assert_eq!(decode_bags(&bytes).unwrap(), bags);
    }

    #[test]
    fn kfold_is_a_stratified_partition(pos in 2usize..12, neg in 2usize..12, folds in 2usize..4, seed in any::<u64>()) {
        prop_assume!(pos >= folds && neg >= folds);
        let bags: Vec<Bag> = (0..pos + neg)
            .map(|i| Bag::new(i as u64, u8::from(i < pos), Tensor::matrix(1, 1, vec![0.0]), None).unwrap())
            .collect();
        let assign = kfold_split(&bags, folds, seed).unwrap();
        prop_assert_eq!(&assign, &kfold_split(&bags, folds, seed).unwrap());
        for label in [0u8, 1] {
            let counts: Vec<usize> = (0..folds)
                .map(|f| bags.iter().zip(&assign).filter(|(b, &a)| b.label == label && a == f).count())
                .collect();
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
        }
    }

    #[test]
    fn kl_is_nonnegative(a in prop::collection::vec(0.01f64..1.0, 2..6), b in prop::collection::vec(0.01f64..1.0, 2..6)) {
        let k = a.len().min(b.len());
        let norm = |v: &[f64]| {
            let s: f64 = v[..k].iter().sum();
            Tensor::matrix(1, k, v[..k].iter().map(|x| x / s).collect())
        };
        prop_assert!(group_kl_loss(&norm(&a), &norm(&b)).unwrap() >= -1e-15);
    }

    #[test]
    fn auc_is_symmetric(pos in prop::collection::vec(0.0f64..1.0, 1..10), neg in prop::collection::vec(0.0f64..1.0, 1..10)) {
        let a = auc(&pos, &neg).unwrap();
        let b = auc(&neg, &pos).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bank_keeps_the_newest(capacity in 0usize..5, len in 0usize..12) {
        let mut bank = MemoryBank::new(capacity);
        for i in 0..len {
            let a = i as f64;
            bank.push(&[a.cos(), a.sin()]).unwrap();
        }
        let kept = len.min(capacity);
        prop_assert_eq!(bank.len(), kept);
        let first = bank.iter().next().map(|z| z[0]);
        prop_assert_eq!(first, (kept > 0).then(|| ((len - kept) as f64).cos()));
    }
}

fn tiny_config(alpha: f64, beta: f64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.model = ModelConfig {
        hidden: 6,
        attention: 3,
        classes: 2,
    };
    cfg.contrastive.alpha = alpha;
    cfg.contrastive.beta = beta;
    cfg.contrastive.bank_size = 4;
    cfg
}

fn tiny_data() -> Vec<Bag> {
    synth_generate(&SynthConfig {
        d: 4,
        normal_bags: 4,
        tumor_bags: 4,
        bag_size_min: 3,
        bag_size_max: 8,
        ..SynthConfig::default()
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn logged_total_is_the_weighted_sum(alpha in 0.0f64..2.0, beta in 0.0f64..2.0, seed in any::<u64>()) {
        let cfg = tiny_config(alpha, beta);
        let bags = tiny_data();
        let pool = ClassPool::build(&bags).unwrap();
        let mut state = TrainState::init(4, &cfg, Streams::new(seed, 0));
        for bag in bags.iter().cycle().take(12) {
            let l = train_step(bag, &pool, &mut state, &cfg).unwrap();
            prop_assert!((l.total - (l.cls + alpha * l.bag + beta * l.group)).abs() <= 1e-9);
        }
    }
}

#[test]
fn evaluation_ignores_worker_count() {
    let bags = tiny_data();
    let params = MilParams::init(4, &tiny_config(0.5, 0.5).model, &mut rng::stream(1, "init"));
    let a = evaluate(&params, &bags, Exec::Sequential).unwrap();
    let b = evaluate(&params, &bags, Exec::Parallel).unwrap();
    let c = evaluate(&params, &bags, Exec::Parallel).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(serde_json::to_string(&b).unwrap(), serde_json::to_string(&c).unwrap());
}
