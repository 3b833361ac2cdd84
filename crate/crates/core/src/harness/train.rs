use rand::seq::SliceRandom;
use serde::Serialize;

use super::config::RunConfig;
use crate::bagdata::{Bag, ClassPool};
use crate::contrastive::{
    assign_to_prototypes, bag_contrastive_traced, center_and_sharpen, ema_update, group_align_traced, group_kl_traced,
    group_vars, init_group_params, init_prototypes, MemoryBank, PROTOTYPES,
};
use crate::crossbag::{augment_traced, AugmenterParams, AugmenterVars, TracedBag};
use crate::error::{Error, Result};
use crate::milmodel::{cross_entropy_traced, mil_forward_traced, project_traced, MilParams};
use crate::numkernel::{Bound, ParamSet, Tape, Tensor, Var};
use crate::rng::{self, Rng};

/// Norm floor for group representations; all-zero groups stay zero.
pub const GROUP_NORM_EPS: f64 = 1e-12;

/// Prefixes of the parameters the EMA teacher mirrors.
pub const TEACHER_PREFIXES: [&str; 3] = ["mil.", "head.", "group."];

/// Losses of one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepLosses {
    pub cls: f64,
    pub bag: f64,
    pub group: f64,
    pub total: f64,
}

/// Random streams of one training run.
pub struct Streams {
    pub init: Rng,
    pub student: Rng,
    pub teacher: Rng,
    pub order: Rng,
}

impl Streams {
    /// Streams for run `index` (a fold) under `seed`.
    pub fn new(seed: u64, index: u64) -> Self {
        Self {
            init: rng::substream(seed, rng::INIT, index),
            student: rng::substream(seed, rng::STUDENT_AUG, index),
            teacher: rng::substream(seed, rng::TEACHER_AUG, index),
            order: rng::substream(seed, "order", index),
        }
    }
}

/// Student (model, head, group attention, augmenter, prototypes), EMA
/// teacher, memory bank and teacher center.
pub struct TrainState {
    pub student: ParamSet,
    pub teacher: ParamSet,
    pub bank: MemoryBank,
    pub center: Vec<f64>,
    pub streams: Streams,
    pub step: u64,
}

impl TrainState {
    pub fn init(d: usize, cfg: &RunConfig, mut streams: Streams) -> Self {
        let r = &mut streams.init;
        let mut student = MilParams::init(d, &cfg.model, r).set;
        student.extend_prefixed("", init_group_params(cfg.model.hidden, r));
        student.extend_prefixed("aug.", AugmenterParams::init(d, r).set);
        student.push(PROTOTYPES, init_prototypes(cfg.contrastive.prototypes, cfg.model.hidden, r));
        let teacher = student.subset(&TEACHER_PREFIXES);
        Self {
            student,
            teacher,
            bank: MemoryBank::new(cfg.contrastive.bank_size),
            center: vec![0.0; cfg.model.hidden],
            streams,
            step: 0,
        }
    }

    pub fn model(&self) -> MilParams {
        MilParams {
            set: self.student.subset(&["mil.", "head."]),
        }
    }
}

fn check_lineage(p: &TracedBag, pool: &ClassPool<'_>) -> Result<()> {
    for l in &p.lineage {
        for q in l.provenance() {
            if !pool.contains_bag(q.bag_id()) {
                return Err(Error::Leakage {
                    provenance: q.to_string(),
                    bag_id: p.source_id,
                });
            }
        }
    }
    Ok(())
}

fn finite(what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { what: what.into() })
    }
}

/// Gradient-free teacher outputs for one bag: the teacher bag embedding,
/// the centered and sharpened group distributions, and the center value
/// to commit after the step.
#[derive(Clone, Debug)]
pub struct TeacherTargets {
    pub z: Tensor,
    pub p: Tensor,
    pub center_next: Vec<f64>,
}

/// Teacher branch: its own pseudo-bag (augmenter weights frozen), the EMA
/// teacher forward and grouping against the current, detached prototypes.
pub fn teacher_targets<R: rand::Rng + ?Sized>(
    bag: &Bag,
    pool: &ClassPool<'_>,
    student: &ParamSet,
    teacher: &ParamSet,
    center: &[f64],
    cfg: &RunConfig,
    rng: &mut R,
) -> Result<TeacherTargets> {
    let c = &cfg.contrastive;
    let mut tape = Tape::new();
    let frozen = student.subset(&["aug.", PROTOTYPES]).bind(&mut tape, None);
    let aug = AugmenterVars::from_bound(&frozen, "aug.");
    let t = teacher.bind(&mut tape, None);
    let xt = augment_traced(&mut tape, bag, pool, &aug, &cfg.augment, rng)?;
    check_lineage(&xt, pool)?;
    let mt = mil_forward_traced(&mut tape, xt.instances, &t, "")?;
    let zt = project_traced(&mut tape, mt.rep, &t, "")?;
    let protos = frozen.var(PROTOTYPES);
    let assign = assign_to_prototypes(tape.value(mt.h), tape.value(protos));
    let gt = group_align_traced(&mut tape, mt.h, &assign, protos, &group_vars(&t, ""))?;
    let gt = normalize_rows(tape.value(gt));
    let mut center_next = center.to_vec();
    let p = center_and_sharpen(&gt, &mut center_next, c.tau_t, c.center_momentum)?;
    Ok(TeacherTargets {
        z: tape.value(zt).clone(),
        p,
        center_next,
    })
}

/// The four loss terms as tape variables.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub cls: Var,
    pub bag: Var,
    pub group: Var,
    pub total: Var,
}

/// Student branch and `L = L_cls + α·L_bag + β·L_group` against fixed
/// teacher targets. `s` binds the full student set.
#[allow(clippy::too_many_arguments)]
pub fn student_loss<R: rand::Rng + ?Sized>(
    tape: &mut Tape,
    s: &Bound,
    bag: &Bag,
    pool: &ClassPool<'_>,
    targets: &TeacherTargets,
    bank: &MemoryBank,
    cfg: &RunConfig,
    rng: &mut R,
) -> Result<LossVars> {
    let c = &cfg.contrastive;
    let aug = AugmenterVars::from_bound(s, "aug.");
    let xs = augment_traced(tape, bag, pool, &aug, &cfg.augment, rng)?;
    check_lineage(&xs, pool)?;
    let ms = mil_forward_traced(tape, xs.instances, s, "")?;
    let cls = cross_entropy_traced(tape, ms.logits, bag.label)?;

    let zs = project_traced(tape, ms.rep, s, "")?;
    let bag_loss = bag_contrastive_traced(tape, zs, &targets.z, bank, c.tau_bag)?;

    let protos = s.var(PROTOTYPES);
    let assign = assign_to_prototypes(tape.value(ms.h), tape.value(protos));
    let gs = group_align_traced(tape, ms.h, &assign, protos, &group_vars(s, ""))?;
    let gs = tape.l2_normalize_rows_eps(gs, GROUP_NORM_EPS);
    let gs = tape.scale(gs, 1.0 / c.tau_s);
    let log_ps = tape.log_softmax_rows(gs);
    let group = group_kl_traced(tape, log_ps, &targets.p)?;

    let wb = tape.scale(bag_loss, c.alpha);
    let wg = tape.scale(group, c.beta);
    let partial = tape.add(cls, wb);
    let total = tape.add(partial, wg);
    Ok(LossVars {
        cls,
        bag: bag_loss,
        group,
        total,
    })
}

/// One step of `L = L_cls + α·L_bag + β·L_group` on `bag`, then SGD on
/// the student, EMA of the teacher, bank push of the teacher embedding
/// and the center update.
pub fn train_step(bag: &Bag, pool: &ClassPool<'_>, state: &mut TrainState, cfg: &RunConfig) -> Result<StepLosses> {
    let targets = teacher_targets(
        bag,
        pool,
        &state.student,
        &state.teacher,
        &state.center,
        cfg,
        &mut state.streams.teacher,
    )?;
    let mut tape = Tape::new();
    let s = state.student.bind(&mut tape, Some(0));
    let l = student_loss(&mut tape, &s, bag, pool, &targets, &state.bank, cfg, &mut state.streams.student)?;
    let losses = StepLosses {
        cls: finite("L_cls", tape.value(l.cls).item())?,
        bag: finite("L_bag", tape.value(l.bag).item())?,
        group: finite("L_group", tape.value(l.group).item())?,
        total: finite("L", tape.value(l.total).item())?,
    };
    let grads = tape.backward(l.total)?;
    state.student.sgd_step(&grads, 0, cfg.train.lr);
    if !state.student.is_finite() {
        return Err(Error::NonFinite {
            what: "student parameters after update".into(),
        });
    }
    ema_update(&mut state.teacher, &state.student, cfg.contrastive.ema)?;
    state.bank.push(targets.z.data())?;
    state.center = targets.center_next;
    state.step += 1;
    Ok(losses)
}

fn normalize_rows(g: &Tensor) -> Tensor {
    let mut out = g.clone();
    for r in 0..g.rows() {
        let row = out.row_mut(r);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(GROUP_NORM_EPS);
        row.iter_mut().for_each(|v| *v /= norm);
    }
    out
}

/// Trained student plus its per-step losses.
pub struct Trained {
    pub state: TrainState,
    pub losses: Vec<StepLosses>,
}

/// `epochs` shuffled passes over `train`, one step per bag. Classes and
/// `n_max` come from `train` alone.
pub fn train_model(train: &[Bag], cfg: &RunConfig, streams: Streams) -> Result<Trained> {
    let pool = ClassPool::build(train)?;
    let d = train[0].dim();
    let mut state = TrainState::init(d, cfg, streams);
    let mut losses = Vec::with_capacity(cfg.train.epochs * train.len());
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.train.epochs {
        order.shuffle(&mut state.streams.order);
        for &i in &order {
            losses.push(train_step(&train[i], &pool, &mut state, cfg)?);
        }
        if let Some(last) = losses.last() {
            log::debug!("epoch {epoch}: L = {:.4}", last.total);
        }
    }
    Ok(Trained { state, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bagdata::{synth_generate, SynthConfig};

    fn tiny() -> (Vec<Bag>, RunConfig) {
        let mut cfg = RunConfig::default();
        cfg.data = SynthConfig {
            d: 4,
            normal_bags: 4,
            tumor_bags: 4,
            bag_size_min: 3,
            bag_size_max: 6,
            tumor_ratio_min: 0.2,
            tumor_ratio_max: 0.5,
            ..SynthConfig::default()
        };
        cfg.model.hidden = 6;
        cfg.model.attention = 4;
        cfg.contrastive.prototypes = 3;
        cfg.contrastive.bank_size = 5;
        cfg.train.epochs = 2;
        (synth_generate(&cfg.data).unwrap(), cfg)
    }

    #[test]
    fn total_is_weighted_sum() {
        let (bags, cfg) = tiny();
        let t = train_model(&bags, &cfg, Streams::new(0, 0)).unwrap();
        for l in &t.losses {
            let recomposed = l.cls + cfg.contrastive.alpha * l.bag + cfg.contrastive.beta * l.group;
            assert!((l.total - recomposed).abs() <= 1e-9);
        }
        assert_eq!(t.state.bank.len(), 5);
    }

    #[test]
    fn zero_weights_reduce_to_classification() {
        let (bags, mut cfg) = tiny();
        cfg.contrastive.alpha = 0.0;
        cfg.contrastive.beta = 0.0;
        let t = train_model(&bags, &cfg, Streams::new(0, 0)).unwrap();
        assert!(t.losses.iter().all(|l| l.total == l.cls));
    }

    #[test]
    fn replay_gives_identical_losses() {
        let (bags, cfg) = tiny();
        let a = train_model(&bags, &cfg, Streams::new(4, 1)).unwrap();
        let b = train_model(&bags, &cfg, Streams::new(4, 1)).unwrap();
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.state.student, b.state.student);
    }

    #[test]
    fn teacher_tracks_only_mirrored_prefixes() {
        let (bags, cfg) = tiny();
        let t = train_model(&bags, &cfg, Streams::new(0, 0)).unwrap();
        assert!(t.state.teacher.names().iter().all(|n| TEACHER_PREFIXES.iter().any(|p| n.starts_with(p))));
        assert!(t.state.teacher.get("proto").is_none());
    }

    #[test]
    fn foreign_bag_in_lineage_is_leakage() {
        let (bags, cfg) = tiny();
        let pool = ClassPool::build(&bags[..4]).unwrap();
        let mut state = TrainState::init(4, &cfg, Streams::new(0, 0));
        let err = train_step(&bags[5], &pool, &mut state, &cfg).unwrap_err();
        assert!(matches!(err, Error::Leakage { .. }), "{err}");
    }
}
