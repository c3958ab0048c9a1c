use serde::{Deserialize, Serialize};

use super::EvalError;

/// Disagreement weighting for ordinal categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// `|i - j| / (k - 1)`
    #[default]
    Linear,
    /// `(|i - j| / (k - 1))^2`
    Quadratic,
}

/// Two raters' ordinal ratings of the same items on a `levels`-point scale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingPair {
    pub levels: usize,
    pub first: Vec<usize>,
    pub second: Vec<usize>,
}

impl RatingPair {
    pub fn new(levels: usize, first: Vec<usize>, second: Vec<usize>) -> Result<Self, EvalError> {
        if first.len() != second.len() {
            return Err(EvalError::LengthMismatch(first.len(), second.len()));
        }
        if levels < 2 {
            return Err(EvalError::InvalidInput("a rating scale needs at least 2 levels".into()));
        }
        if let Some(&bad) = first.iter().chain(&second).find(|&&r| r >= levels) {
            return Err(EvalError::InvalidInput(format!("rating {bad} outside 0..{levels}")));
        }
        Ok(Self { levels, first, second })
    }

    pub fn from_flags(first: &[bool], second: &[bool]) -> Result<Self, EvalError> {
        Self::new(2, first.iter().map(|&b| b as usize).collect(), second.iter().map(|&b| b as usize).collect())
    }
}

/// Weighted Cohen's kappa, `1 - sum(w * observed) / sum(w * expected)` with
/// chance-expected proportions from the two raters' marginals.
///
/// When both observed and expected disagreement are zero (every item in one
/// category for both raters) the raters agree perfectly and kappa is 1.
pub fn weighted_cohens_kappa(pair: &RatingPair, weighting: Weighting) -> Result<f64, EvalError> {
    let n = pair.first.len();
    if n < 2 {
        return Err(EvalError::InvalidInput("kappa needs at least 2 rated items".into()));
    }
    let k = pair.levels;
    let mut observed = vec![0.0; k * k];
    let mut row = vec![0.0; k];
    let mut col = vec![0.0; k];
    let inv_n = 1.0 / n as f64;
    for (&a, &b) in pair.first.iter().zip(&pair.second) {
        observed[a * k + b] += inv_n;
        row[a] += inv_n;
        col[b] += inv_n;
    }
    let weight = |i: usize, j: usize| {
        let d = i.abs_diff(j) as f64 / (k - 1) as f64;
        match weighting {
            Weighting::Linear => d,
            Weighting::Quadratic => d * d,
        }
    };
    let mut obs_dis = 0.0;
    let mut exp_dis = 0.0;
    for i in 0..k {
        for j in 0..k {
            let w = weight(i, j);
            obs_dis += w * observed[i * k + j];
            exp_dis += w * row[i] * col[j];
        }
    }
    if exp_dis == 0.0 {
        return if obs_dis == 0.0 { Ok(1.0) } else { Err(EvalError::DegenerateMarginals) };
    }
    Ok(1.0 - obs_dis / exp_dis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_ratings_give_one() {
        let p = RatingPair::new(3, vec![0, 1, 2, 2, 1], vec![0, 1, 2, 2, 1]).unwrap();
        assert_eq!(weighted_cohens_kappa(&p, Weighting::Linear).unwrap(), 1.0);
        let constant = RatingPair::new(3, vec![1; 6], vec![1; 6]).unwrap();
        assert_eq!(weighted_cohens_kappa(&constant, Weighting::Quadratic).unwrap(), 1.0);
    }

    #[test]
    fn binary_scale_reduces_to_plain_kappa() {
        let a = vec![1, 1, 0, 0, 1, 0, 1, 1, 0, 0];
        let b = vec![1, 0, 0, 0, 1, 1, 1, 1, 0, 1];
        let p = RatingPair::new(2, a.clone(), b.clone()).unwrap();
        // po = 7/10; pe = 0.5*0.6 + 0.5*0.4 = 0.5
        let plain = (0.7 - 0.5) / (1.0 - 0.5);
        for w in [Weighting::Linear, Weighting::Quadratic] {
            assert!((weighted_cohens_kappa(&p, w).unwrap() - plain).abs() < 1e-12);
        }
    }

    #[test]
    fn known_three_level_value() {
        // observed counts [[2,1,0],[0,2,1],[0,0,2]] over 8 items.
        let p = RatingPair::new(3, vec![0, 0, 0, 1, 1, 1, 2, 2], vec![0, 0, 1, 1, 1, 2, 2, 2]).unwrap();
        // rows (3,3,2)/8, cols (2,3,3)/8; linear obs dis = 2*0.5/8 = 0.125
        // exp dis = sum w_ij r_i c_j = 0.5*(3*3+3*2+3*3+2*3)/64 + 1*(3*3+2*2)/64 = (15 + 13)/64
        let want = 1.0 - 0.125 / (28.0 / 64.0);
        assert!((weighted_cohens_kappa(&p, Weighting::Linear).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RatingPair::new(3, vec![0, 3], vec![0, 1]).is_err());
        assert!(RatingPair::new(3, vec![0], vec![0, 1]).is_err());
        let one = RatingPair::new(3, vec![0], vec![0]).unwrap();
        assert!(weighted_cohens_kappa(&one, Weighting::Linear).is_err());
    }

    proptest! {
        #[test]
        fn symmetric_and_order_invariant(
            items in proptest::collection::vec((0usize..3, 0usize..3), 2..80),
            rot in 0usize..80,
        ) {
            let a: Vec<usize> = items.iter().map(|x| x.0).collect();
            let b: Vec<usize> = items.iter().map(|x| x.1).collect();
            let ab = RatingPair::new(3, a.clone(), b.clone()).unwrap();
            let ba = RatingPair::new(3, b.clone(), a.clone()).unwrap();
            let r = rot % a.len();
            let (mut ar, mut br) = (a.clone(), b.clone());
            ar.rotate_left(r);
            br.rotate_left(r);
            let rotated = RatingPair::new(3, ar, br).unwrap();
            for w in [Weighting::Linear, Weighting::Quadratic] {
                match weighted_cohens_kappa(&ab, w) {
                    Ok(k) => {
                        prop_assert!((k - weighted_cohens_kappa(&ba, w).unwrap()).abs() < 1e-12);
                        prop_assert!((k - weighted_cohens_kappa(&rotated, w).unwrap()).abs() < 1e-12);
                    }
                    Err(_) => prop_assert!(weighted_cohens_kappa(&ba, w).is_err()),
                }
            }
        }
    }
}
