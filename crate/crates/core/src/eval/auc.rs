use super::metrics::{classification_metrics, ConfusionMatrix};
use super::EvalError;

/// Area under the ROC curve from scores via the rank-sum (Mann-Whitney)
/// statistic; tied positive/negative pairs count one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(EvalError::NonFinite);
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::OneClassOnly);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Average 1-based ranks over tie groups.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += avg_rank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// AUC of hard decisions: the ROC curve through a single operating point,
/// which equals the balanced accuracy of that decision.
pub fn hard_label_auc(predicted: &[bool], labels: &[bool]) -> Result<f64, EvalError> {
    let m = classification_metrics(&ConfusionMatrix::from_labels(predicted, labels)?)?;
    m.ba.ok_or(EvalError::OneClassOnly)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairwise_oracle(scores: &[f64], labels: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn separated_and_uninformative_scores() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5; 4], &[false, true, true, false]).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(EvalError::OneClassOnly)));
    }

    #[test]
    fn six_point_fixture() {
        let scores = [0.9, 0.4, 0.4, 0.7, 0.2, 0.4];
        let labels = [true, true, false, false, false, true];
        // Hand count: positives {0.9, 0.4, 0.4} vs negatives {0.4, 0.7, 0.2}:
        // 0.9 beats all 3; each 0.4 ties 0.4, loses to 0.7, beats 0.2 -> 1.5 each. 6/9.
        assert_eq!(pairwise_oracle(&scores, &labels), 6.0 / 9.0);
        assert!((roc_auc(&scores, &labels).unwrap() - 6.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn hard_auc_is_balanced_accuracy() {
        let truth = [true, true, false, false];
        let pred = [true, false, false, false];
        assert_eq!(hard_label_auc(&pred, &truth).unwrap(), 0.75);
    }

    proptest! {
        #[test]
        fn matches_pairwise_and_invariant_under_monotone_maps(
            data in proptest::collection::vec((0u8..20, any::<bool>()), 2..60)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 / 4.0).collect();
            let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let auc = roc_auc(&scores, &labels).unwrap();
            prop_assert!((auc - pairwise_oracle(&scores, &labels)).abs() < 1e-12);
            let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
            prop_assert!((roc_auc(&warped, &labels).unwrap() - auc).abs() < 1e-12);
        }
    }
}
