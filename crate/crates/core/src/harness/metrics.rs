use serde::{Deserialize, Serialize};

/// Accuracy, AUC and F1 of one evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    /// Absent when only one class is present.
    pub auc: Option<f64>,
    pub f1: f64,
}

/// `P(score_pos > score_neg)` with ties counted half. `None` when either
/// side is empty.
pub fn auc(pos: &[f64], neg: &[f64]) -> Option<f64> {
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    // rank-sum form: sort all scores once, average ranks over ties
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// F1 of class `positive`; 0 when it has no true positives.
pub fn f1_for(labels: &[usize], predicted: &[usize], positive: usize) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&y, &p) in labels.iter().zip(predicted) {
        match (y == positive, p == positive) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            _ => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

/// Metrics from labels, predicted classes and per-class probabilities.
/// Binary: AUC on the class-1 score, F1 of class 1. More classes:
/// one-vs-rest AUC and F1, macro-averaged.
pub fn compute_metrics(labels: &[usize], predicted: &[usize], scores: &[Vec<f64>], classes: usize) -> Metrics {
    let n = labels.len();
    let correct = labels.iter().zip(predicted).filter(|(a, b)| a == b).count();
    let acc = if n == 0 { 0.0 } else { correct as f64 / n as f64 };
    let ovr = |c: usize| {
        let pos: Vec<f64> = (0..n).filter(|&i| labels[i] == c).map(|i| scores[i][c]).collect();
        let neg: Vec<f64> = (0..n).filter(|&i| labels[i] != c).map(|i| scores[i][c]).collect();
        auc(&pos, &neg)
    };
    if classes <= 2 {
        return Metrics {
            acc,
            auc: ovr(1),
            f1: f1_for(labels, predicted, 1),
        };
    }
    let aucs: Vec<f64> = (0..classes).filter_map(ovr).collect();
    let present: Vec<usize> = (0..classes).filter(|c| labels.contains(c)).collect();
    Metrics {
        acc,
        auc: (present.len() >= 2 && !aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64),
        f1: (0..classes).map(|c| f1_for(labels, predicted, c)).sum::<f64>() / classes as f64,
    }
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
    Some((m, v.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Pairwise Mann–Whitney count.
    fn brute(pos: &[f64], neg: &[f64]) -> f64 {
        let mut s = 0.0;
        for p in pos {
            for n in neg {
                s += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
            }
        }
        s / (pos.len() * neg.len()) as f64
    }

    #[test]
    fn perfect_ranking() {
        assert_eq!(auc(&[0.9, 0.8], &[0.1, 0.2]), Some(1.0));
    }

    #[test]
    fn ties_count_half() {
        assert_eq!(auc(&[0.5], &[0.5]), Some(0.5));
        let pos = [0.3, 0.7, 0.7, 0.1];
        let neg = [0.7, 0.1, 0.2];
        assert_abs_diff_eq!(auc(&pos, &neg).unwrap(), brute(&pos, &neg), epsilon = 1e-15);
    }

    #[test]
    fn single_class_has_no_auc() {
        assert_eq!(auc(&[0.2], &[]), None);
        let m = compute_metrics(&[1, 1], &[1, 0], &[vec![0.2, 0.8], vec![0.6, 0.4]], 2);
        assert_eq!(m.auc, None);
        assert_eq!(m.acc, 0.5);
    }

    #[test]
    fn f1_two_thirds() {
        // TP = 2, FP = 1, FN = 1
        let labels = [1, 1, 1, 0, 0];
        let pred = [1, 1, 0, 1, 0];
        assert_abs_diff_eq!(f1_for(&labels, &pred, 1), 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn macro_f1_for_three_classes() {
        let labels = [0, 1, 2];
        let m = compute_metrics(&labels, &labels, &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]], 3);
        assert_eq!((m.acc, m.f1, m.auc), (1.0, 1.0, Some(1.0)));
    }

    #[test]
    fn mean_std_is_population() {
        assert_eq!(mean_std(&[1.0, 3.0]), Some((2.0, 1.0)));
        assert_eq!(mean_std(&[]), None);
    }
}
