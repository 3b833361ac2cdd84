use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, Metrics};
use crate::bagdata::{Bag, Stratum};
use crate::error::Result;
use crate::exec::Exec;
use crate::milmodel::{mil_forward, MilParams};

/// Model output for one bag, without augmentation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BagPrediction {
    pub bag_id: u64,
    pub label: u8,
    pub predicted: usize,
    pub probabilities: Vec<f64>,
    pub rep: Vec<f64>,
    pub tumor_ratio: Option<f64>,
}

/// Accuracy within one tumor-ratio group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumAcc {
    pub stratum: String,
    pub count: usize,
    pub acc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub metrics: Metrics,
    /// Present when every bag carries instance tags.
    pub strata: Option<Vec<StratumAcc>>,
    pub predictions: Vec<BagPrediction>,
}

impl Evaluation {
    pub fn stratum_acc(&self, s: Stratum) -> Option<f64> {
        self.strata.as_ref()?.iter().find(|a| a.stratum == s.name())?.acc
    }

    pub fn stratum_count(&self, s: Stratum) -> usize {
        self.strata
            .as_ref()
            .and_then(|v| v.iter().find(|a| a.stratum == s.name()))
            .map_or(0, |a| a.count)
    }
}

pub fn predict(params: &MilParams, bag: &Bag) -> Result<BagPrediction> {
    let out = mil_forward(&bag.instances, params)?;
    Ok(BagPrediction {
        bag_id: bag.id,
        label: bag.label,
        predicted: out.predicted(),
        probabilities: out.probabilities(),
        rep: out.rep,
        tumor_ratio: bag.tumor_ratio(),
    })
}

/// Augmentation-free inference over `bags`, fanned out by `exec`; results
/// keep input order.
pub fn evaluate(params: &MilParams, bags: &[Bag], exec: Exec) -> Result<Evaluation> {
    let predictions = exec.try_map_range(bags.len(), |i| predict(params, &bags[i]))?;
    Ok(summarize(predictions, params.classes()))
}

pub fn summarize(predictions: Vec<BagPrediction>, classes: usize) -> Evaluation {
    let labels: Vec<usize> = predictions.iter().map(|p| usize::from(p.label)).collect();
    let pred: Vec<usize> = predictions.iter().map(|p| p.predicted).collect();
    let scores: Vec<Vec<f64>> = predictions.iter().map(|p| p.probabilities.clone()).collect();
    let metrics = compute_metrics(&labels, &pred, &scores, classes);
    let strata = predictions.iter().all(|p| p.tumor_ratio.is_some()).then(|| {
        Stratum::ALL
            .iter()
            .map(|&s| {
                let members: Vec<&BagPrediction> = predictions
                    .iter()
                    .filter(|p| Stratum::of_ratio(p.tumor_ratio.unwrap_or(0.0)) == s)
                    .collect();
                let correct = members.iter().filter(|p| usize::from(p.label) == p.predicted).count();
                StratumAcc {
                    stratum: s.name().into(),
                    count: members.len(),
                    acc: (!members.is_empty()).then(|| correct as f64 / members.len() as f64),
                }
            })
            .collect()
    });
    Evaluation {
        metrics,
        strata,
        predictions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bagdata::{synth_generate, SynthConfig};
    use crate::milmodel::ModelConfig;
    use crate::rng;

    #[test]
    fn repeated_evaluation_is_identical_across_exec_modes() {
        let bags = synth_generate(&SynthConfig {
            d: 3,
            normal_bags: 5,
            tumor_bags: 5,
            bag_size_min: 5,
            bag_size_max: 9,
            ..SynthConfig::default()
        })
        .unwrap();
        let p = MilParams::init(3, &ModelConfig::default(), &mut rng::stream(0, rng::INIT));
        let a = evaluate(&p, &bags, Exec::Sequential).unwrap();
        let b = evaluate(&p, &bags, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        let twice = [bags[0].clone(), bags[0].clone()];
        let e = evaluate(&p, &twice, Exec::Sequential).unwrap();
        assert_eq!(e.predictions[0], e.predictions[1]);
        assert_eq!(a.strata.as_ref().unwrap().iter().map(|s| s.count).sum::<usize>(), 10);
    }
}
