use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::eval::{evaluate, BagPrediction, Evaluation, StratumAcc};
use super::kfold::kfold_split;
use super::metrics::{mean_std, Metrics};
use super::train::{train_model, StepLosses, Streams};
use crate::bagdata::{load_bags, save_bags, synth_generate, Bag, Stratum};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::milmodel::{save_params, MilParams};
use crate::numkernel::ParamSet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(xs: &[f64]) -> Option<Self> {
        mean_std(xs).map(|(mean, std)| Self { mean, std })
    }
}

/// Mean losses of one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub cls: f64,
    pub bag: f64,
    pub group: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_bags: usize,
    pub test_bags: usize,
    pub metrics: Metrics,
    pub strata: Option<Vec<StratumAcc>>,
    pub loss_curve: Vec<EpochLoss>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumSummary {
    pub stratum: String,
    pub count: usize,
    pub acc: Option<MeanStd>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub acc: MeanStd,
    pub auc: Option<MeanStd>,
    pub f1: MeanStd,
    pub strata: Option<Vec<StratumSummary>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config: RunConfig,
    /// `"kfold"` or `"holdout"`.
    pub mode: String,
    pub folds: Vec<FoldReport>,
    pub summary: Summary,
}

/// Outcome of one fold (or the single holdout run).
pub struct FoldOutcome {
    pub report: FoldReport,
    pub losses: Vec<StepLosses>,
    pub params: ParamSet,
    pub evaluation: Evaluation,
}

pub struct Experiment {
    pub report: MetricsReport,
    pub folds: Vec<FoldOutcome>,
}

impl Experiment {
    /// Every step of every fold, folds in order.
    pub fn losses(&self) -> impl Iterator<Item = &StepLosses> {
        self.folds.iter().flat_map(|f| &f.losses)
    }

    /// Test-set predictions of all folds, by bag id.
    pub fn predictions(&self) -> Vec<&BagPrediction> {
        let mut all: Vec<&BagPrediction> = self.folds.iter().flat_map(|f| &f.evaluation.predictions).collect();
        all.sort_by_key(|p| p.bag_id);
        all
    }
}

fn epoch_curve(losses: &[StepLosses], per_epoch: usize) -> Vec<EpochLoss> {
    losses
        .chunks(per_epoch.max(1))
        .enumerate()
        .map(|(epoch, c)| {
            let n = c.len() as f64;
            EpochLoss {
                epoch,
                cls: c.iter().map(|l| l.cls).sum::<f64>() / n,
                bag: c.iter().map(|l| l.bag).sum::<f64>() / n,
                group: c.iter().map(|l| l.group).sum::<f64>() / n,
                total: c.iter().map(|l| l.total).sum::<f64>() / n,
            }
        })
        .collect()
}

/// Rounds every parameter to `f32`, the checkpoint precision, so reloaded
/// checkpoints reproduce reported metrics exactly.
fn to_checkpoint_precision(p: &ParamSet) -> ParamSet {
    let mut out = p.clone();
    for t in out.tensors_mut() {
        for v in t.data_mut() {
            *v = f64::from(*v as f32);
        }
    }
    out
}

/// Trains on `train`, evaluates on `test`.
pub fn run_fold(fold: usize, train: &[Bag], test: &[Bag], cfg: &RunConfig, exec: Exec) -> Result<FoldOutcome> {
    let trained = train_model(train, cfg, Streams::new(cfg.seed, fold as u64))?;
    let params = to_checkpoint_precision(&trained.state.student);
    let model = MilParams::from_set(params.subset(&["mil.", "head."]))?;
    let evaluation = evaluate(&model, test, exec)?;
    let report = FoldReport {
        fold,
        train_bags: train.len(),
        test_bags: test.len(),
        metrics: evaluation.metrics.clone(),
        strata: evaluation.strata.clone(),
        loss_curve: epoch_curve(&trained.losses, train.len()),
    };
    Ok(FoldOutcome {
        report,
        losses: trained.losses,
        params,
        evaluation,
    })
}

fn summarize(folds: &[FoldOutcome]) -> Summary {
    let col = |f: &dyn Fn(&FoldOutcome) -> Option<f64>| folds.iter().filter_map(f).collect::<Vec<f64>>();
    let strata = folds.iter().all(|f| f.report.strata.is_some()).then(|| {
        Stratum::ALL
            .iter()
            .map(|s| StratumSummary {
                stratum: s.name().into(),
                count: folds.iter().map(|f| f.evaluation.stratum_count(*s)).sum(),
                acc: MeanStd::of(&col(&|f| f.evaluation.stratum_acc(*s))),
            })
            .collect()
    });
    Summary {
        acc: MeanStd::of(&col(&|f| Some(f.report.metrics.acc))).expect("≥ 1 fold"),
        auc: MeanStd::of(&col(&|f| f.report.metrics.auc)),
        f1: MeanStd::of(&col(&|f| Some(f.report.metrics.f1))).expect("≥ 1 fold"),
        strata,
    }
}

/// Loads or generates the data named by `cfg`: (train-or-all, optional test).
pub fn load_data(cfg: &RunConfig) -> Result<(Vec<Bag>, Option<Vec<Bag>>)> {
    let main = match &cfg.data_file {
        Some(path) => load_bags(path)?,
        None => synth_generate(&cfg.data)?,
    };
    if main.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    let test = cfg.test.as_ref().map(synth_generate).transpose()?;
    if let Some(t) = &test {
        let ids: std::collections::HashSet<u64> = main.iter().map(|b| b.id).collect();
        if t.iter().any(|b| ids.contains(&b.id)) {
            return Err(Error::Config("test bag ids overlap training ids; set test.first_id".into()));
        }
    }
    Ok((main, test))
}

/// Cross-validation (or holdout when `cfg.test` is set) with folds run
/// through `exec`. Writes artifacts into `out` when given.
pub fn run_experiment(cfg: &RunConfig, out: Option<&Path>, exec: Exec) -> Result<Experiment> {
    cfg.validate()?;
    let (bags, test) = load_data(cfg)?;
    let (mode, folds) = match &test {
        Some(test) => ("holdout", vec![run_fold(0, &bags, test, cfg, exec).map_err(|e| fold_err(0, e))?]),
        None => {
            let assign = kfold_split(&bags, cfg.folds, cfg.seed)?;
            let split = |k: usize| -> (Vec<Bag>, Vec<Bag>) {
                let (te, tr): (Vec<_>, Vec<_>) = bags.iter().zip(&assign).partition(|(_, &f)| f == k);
                (tr.into_iter().map(|(b, _)| b.clone()).collect(), te.into_iter().map(|(b, _)| b.clone()).collect())
            };
            let folds = exec.try_map_range(cfg.folds, |k| {
                let (tr, te) = split(k);
                run_fold(k, &tr, &te, cfg, exec).map_err(|e| fold_err(k, e))
            })?;
            ("kfold", folds)
        }
    };
    let report = MetricsReport {
        config: cfg.clone(),
        mode: mode.into(),
        folds: folds.iter().map(|f| f.report.clone()).collect(),
        summary: summarize(&folds),
    };
    let exp = Experiment { report, folds };
    if let Some(dir) = out {
        write_artifacts(&exp, &bags, test.as_deref(), dir)?;
    }
    Ok(exp)
}

fn fold_err(fold: usize, e: Error) -> Error {
    Error::Fold {
        fold,
        source: Box::new(e),
    }
}

pub fn loss_csv<'a>(losses: impl Iterator<Item = &'a StepLosses>) -> String {
    let mut s = String::from("step,L_cls,L_bag,L_group,L\n");
    for (i, l) in losses.enumerate() {
        writeln!(s, "{},{},{},{},{}", i + 1, l.cls, l.bag, l.group, l.total).expect("string write");
    }
    s
}

pub fn embeddings_csv(predictions: &[&BagPrediction]) -> String {
    let h = predictions.first().map_or(0, |p| p.rep.len());
    let mut s = String::from("bag_id,label");
    for i in 0..h {
        write!(s, ",h{i}").expect("string write");
    }
    s.push('\n');
    for p in predictions {
        write!(s, "{},{}", p.bag_id, p.label).expect("string write");
        for v in &p.rep {
            write!(s, ",{v}").expect("string write");
        }
        s.push('\n');
    }
    s
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// `report.json`, `loss.csv`, `embeddings.csv`, one checkpoint per fold
/// (`fold{k}.ckpt`) and the data as MBAG1 (`data.mbag`, plus `test.mbag`
/// in holdout mode).
pub fn write_artifacts(exp: &Experiment, bags: &[Bag], test: Option<&[Bag]>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = serde_json::to_string_pretty(&exp.report).map_err(|e| Error::Config(e.to_string()))?;
    write(&dir.join("report.json"), json + "\n")?;
    write(&dir.join("loss.csv"), loss_csv(exp.losses()))?;
    write(&dir.join("embeddings.csv"), embeddings_csv(&exp.predictions()))?;
    for f in &exp.folds {
        save_params(&f.params, dir.join(format!("fold{}.ckpt", f.report.fold)))?;
    }
    save_bags(bags, dir.join("data.mbag"))?;
    if let Some(t) = test {
        save_bags(t, dir.join("test.mbag"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bagdata::SynthConfig;

    fn smoke() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.folds = 2;
        cfg.data = SynthConfig {
            d: 4,
            normal_bags: 4,
            tumor_bags: 4,
            bag_size_min: 4,
            bag_size_max: 8,
            ..SynthConfig::default()
        };
        cfg.model.hidden = 6;
        cfg.model.attention = 4;
        cfg.contrastive.prototypes = 2;
        cfg.train.epochs = 1;
        cfg
    }

    #[test]
    fn kfold_covers_every_bag_once() {
        let exp = run_experiment(&smoke(), None, Exec::Sequential).unwrap();
        assert_eq!(exp.folds.len(), 2);
        let ids: Vec<u64> = exp.predictions().iter().map(|p| p.bag_id).collect();
        assert_eq!(ids, (0..8).collect::<Vec<_>>());
        assert_eq!(exp.losses().count(), 8);
        assert!(exp.report.summary.strata.is_some());
    }

    #[test]
    fn exec_mode_does_not_change_results() {
        let a = run_experiment(&smoke(), None, Exec::Sequential).unwrap();
        let b = run_experiment(&smoke(), None, Exec::Parallel).unwrap();
        assert_eq!(a.report, b.report);
    }

    #[test]
    fn one_fold_is_rejected() {
        let mut cfg = smoke();
        cfg.folds = 1;
        assert!(matches!(run_experiment(&cfg, None, Exec::Sequential), Err(Error::Config(_))));
    }

    #[test]
    fn fold_failure_names_the_fold() {
        let mut cfg = smoke();
        cfg.train.lr = 1e300;
        match run_experiment(&cfg, None, Exec::Sequential) {
            Err(Error::Fold { fold, .. }) => assert_eq!(fold, 0),
            other => panic!("{:?}", other.map(|e| e.report)),
        }
    }
}
