use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::EvalError;

/// Discordant-pair count below which the exact binomial p-value is used.
pub const EXACT_BELOW: u64 = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McNemarMethod {
    /// Continuity-corrected chi-square with one degree of freedom.
    ChiSquare,
    /// Two-sided exact binomial test on the discordant pairs.
    ExactBinomial,
    /// No discordant pairs; p = 1 by convention.
    NoDiscordantPairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    /// Pairs where A is right and B wrong.
    pub b: u64,
    /// Pairs where A is wrong and B right.
    pub c: u64,
    /// Continuity-corrected statistic `(|b - c| - 1)^2 / (b + c)`.
    pub statistic: f64,
    /// Chi-square tail probability of `statistic`.
    pub p_chi_square: f64,
    /// Reported p-value: exact binomial when `b + c < 25`, otherwise the chi-square value.
    pub p_value: f64,
    pub method: McNemarMethod,
}

/// McNemar's test comparing two classifiers' correctness on the same items.
pub fn mcnemar_test(preds_a: &[bool], preds_b: &[bool], truth: &[bool]) -> Result<McNemarResult, EvalError> {
    if preds_a.len() != truth.len() {
        return Err(EvalError::LengthMismatch(preds_a.len(), truth.len()));
    }
    if preds_b.len() != truth.len() {
        return Err(EvalError::LengthMismatch(preds_b.len(), truth.len()));
    }
    let (mut b, mut c) = (0u64, 0u64);
    for ((&pa, &pb), &t) in preds_a.iter().zip(preds_b).zip(truth) {
        match (pa == t, pb == t) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok(mcnemar_from_counts(b, c))
}

pub fn mcnemar_from_counts(b: u64, c: u64) -> McNemarResult {
    let n = b + c;
    if n == 0 {
        return McNemarResult {
            b,
            c,
            statistic: 0.0,
            p_chi_square: 1.0,
            p_value: 1.0,
            method: McNemarMethod::NoDiscordantPairs,
        };
    }
    let diff = (b.abs_diff(c) as f64 - 1.0).max(0.0);
    let statistic = diff * diff / n as f64;
    // Survival function of chi-square with one degree of freedom.
    let p_chi_square = erfc((statistic / 2.0).sqrt());
    let (p_value, method) = if n < EXACT_BELOW {
        (exact_binomial_two_sided(b.min(c), n), McNemarMethod::ExactBinomial)
    } else {
        (p_chi_square, McNemarMethod::ChiSquare)
    };
    McNemarResult { b, c, statistic, p_chi_square, p_value, method }
}

/// `min(1, 2 * P(X <= k))` for `X ~ Binomial(n, 1/2)`.
fn exact_binomial_two_sided(k: u64, n: u64) -> f64 {
    let mut coeff = 1.0f64;
    let mut tail = 0.0;
    for i in 0..=k {
        if i > 0 {
            coeff *= (n - i + 1) as f64 / i as f64;
        }
        tail += coeff;
    }
    (2.0 * tail * 0.5f64.powi(n as i32)).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_predictions() {
        let t = [true, false, true];
        let r = mcnemar_test(&t, &t, &[true, true, false]).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.method, McNemarMethod::NoDiscordantPairs);
    }

    #[test]
    fn chi_square_value_for_15_vs_5() {
        let r = mcnemar_from_counts(15, 5);
        assert!((r.statistic - 4.05).abs() < 1e-12);
        // chi2 survival at 4.05 with 1 df = 0.044171...
        assert!((r.p_chi_square - 0.044171).abs() < 1e-5);
        // 20 discordant pairs is below the exact threshold: 2 * P(X <= 5 | 20, 1/2).
        assert_eq!(r.method, McNemarMethod::ExactBinomial);
        assert!((r.p_value - 2.0 * 21700.0 / 1048576.0).abs() < 1e-12);
    }

    #[test]
    fn exact_branch_for_3_vs_1() {
        let r = mcnemar_from_counts(3, 1);
        assert_eq!(r.method, McNemarMethod::ExactBinomial);
        assert!((r.p_value - 0.625).abs() < 1e-12);
    }

    #[test]
    fn large_samples_use_chi_square() {
        let r = mcnemar_from_counts(30, 10);
        assert_eq!(r.method, McNemarMethod::ChiSquare);
        assert_eq!(r.p_value, r.p_chi_square);
    }

    #[test]
    fn counts_from_predictions() {
        let truth = [true, true, false, false];
        let a = [true, true, false, true];
        let b = [false, true, true, true];
        let r = mcnemar_test(&a, &b, &truth).unwrap();
        assert_eq!((r.b, r.c), (2, 0));
    }
}
