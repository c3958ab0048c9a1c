use super::real::Real;

/// Numerically stable softmax of one logit row.
pub fn softmax<F: Real>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let exps: Vec<F> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: F = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Per-class weights `N / (K * N_c)` from class counts; classes absent from
/// the counts get weight 0.
pub fn inverse_frequency_weights(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    let k = counts.len() as f64;
    counts.iter().map(|&c| if c == 0 { 0.0 } else { total as f64 / (k * c as f64) }).collect()
}

/// `-w_y * ln p_y` for a single sample.
pub fn weighted_cross_entropy(probs: &[f64], label: usize, class_weights: &[f64]) -> f64 {
    -class_weights[label] * probs[label].ln()
}

/// Mean weighted cross-entropy of a batch of logit rows and its gradient with
/// respect to the logits, `w_y * (p - onehot(y)) / n`.
pub fn batch_loss_and_grad<F: Real>(logits: &[Vec<F>], labels: &[usize], class_weights: &[F]) -> (F, Vec<Vec<F>>) {
    let n = F::of(logits.len() as f64);
    let mut loss = F::zero();
    let mut grads = Vec::with_capacity(logits.len());
    for (row, &y) in logits.iter().zip(labels) {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let log_total = row.iter().map(|&l| (l - max).exp()).sum::<F>().ln() + max;
        let w = class_weights[y];
        loss += -w * (row[y] - log_total);
        let probs = softmax(row);
        grads.push(
            probs.iter().enumerate().map(|(c, &p)| w * (p - if c == y { F::one() } else { F::zero() }) / n).collect(),
        );
    }
    (loss / n, grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_examples() {
        assert_eq!(inverse_frequency_weights(&[50, 50]), vec![1.0, 1.0]);
        let w = inverse_frequency_weights(&[75, 25]);
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((w[1] - 2.0).abs() < 1e-12);
        let loss = weighted_cross_entropy(&[0.5, 0.5], 1, &w);
        assert!((loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((loss - 1.3863).abs() < 1e-4);
        assert_eq!(weighted_cross_entropy(&[0.0, 1.0], 1, &[1.0, 1.0]), 0.0);
    }

    #[test]
    fn batch_gradient_is_p_minus_onehot_over_n() {
        let logits = vec![vec![0.3f64, -1.2], vec![2.0, 0.5]];
        let (loss, g) = batch_loss_and_grad(&logits, &[0, 1], &[1.0, 1.0]);
        for (row, (gr, &y)) in logits.iter().zip(g.iter().zip(&[0usize, 1])) {
            let p = softmax(row);
            for c in 0..2 {
                let want = (p[c] - if c == y { 1.0 } else { 0.0 }) / 2.0;
                assert!((gr[c] - want).abs() < 1e-15);
            }
        }
        let manual = -(softmax(&logits[0])[0].ln() + softmax(&logits[1])[1].ln()) / 2.0;
        assert!((loss - manual).abs() < 1e-12);
    }

    #[test]
    fn softmax_handles_large_logits() {
        let p = softmax(&[1000.0f64, 1000.0]);
        assert_eq!(p, vec![0.5, 0.5]);
    }
}
