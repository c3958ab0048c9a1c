use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::model::DatasetSplit;

/// One image to be split, with its patient and stratum key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitItem {
    pub image_id: String,
    pub patient_id: String,
    pub stratum: String,
}

impl SplitItem {
    pub fn new(image_id: impl Into<String>, patient_id: impl Into<String>, stratum: impl Into<String>) -> Self {
        Self { image_id: image_id.into(), patient_id: patient_id.into(), stratum: stratum.into() }
    }
}

/// Stratum key combining quality tier and scanner manufacturer.
pub fn stratum_key(tier: impl std::fmt::Display, manufacturer: &str) -> String {
    format!("{tier}|{manufacturer}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumAllocation {
    pub stratum: String,
    pub available: usize,
    /// Exact proportional share of the test set.
    pub target: f64,
    pub selected: usize,
}

impl StratumAllocation {
    pub fn deviation(&self) -> f64 {
        self.selected as f64 - self.target
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratificationReport {
    pub requested: usize,
    pub selected: usize,
    pub strata: Vec<StratumAllocation>,
}

impl StratificationReport {
    /// Strata whose selected count is more than one image away from the proportional target.
    pub fn deviations(&self) -> Vec<&StratumAllocation> {
        self.strata.iter().filter(|s| s.deviation().abs() > 1.0 + 1e-9).collect()
    }

    pub fn is_within_one(&self) -> bool {
        self.deviations().is_empty() && self.selected == self.requested
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedSplit {
    pub test: Vec<String>,
    pub pool: Vec<String>,
    pub report: StratificationReport,
}

struct PatientGroup {
    images: Vec<usize>,
    per_stratum: Vec<(usize, usize)>,
}

fn group_by_patient(items: &[SplitItem], stratum_index: &HashMap<&str, usize>) -> Vec<PatientGroup> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, it) in items.iter().enumerate() {
        groups
            .entry(it.patient_id.as_str())
            .or_insert_with(|| {
                order.push(it.patient_id.as_str());
                Vec::new()
            })
            .push(i);
    }
    order
        .into_iter()
        .map(|p| {
            let images = groups.remove(p).unwrap();
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for &i in &images {
                *counts.entry(stratum_index[items[i].stratum.as_str()]).or_default() += 1;
            }
            PatientGroup { images, per_stratum: counts.into_iter().collect() }
        })
        .collect()
}

/// Draws a patient-disjoint test set whose stratum counts follow the pool's proportions.
///
/// Patients are admitted whole, one at a time: among those that keep every
/// stratum they touch under its cap, the one touching the stratum furthest
/// below its target wins, ties going to a seeded random order. A first pass caps strata at the
/// largest-remainder rounding of the proportional targets; a second pass lets
/// strata grow to `floor(target + 1)` to absorb shortfalls left by
/// multi-image patients. The report records any stratum that still misses its
/// target by more than one image.
pub fn stratified_test_split(items: &[SplitItem], n_test: usize, seed: u64) -> Result<StratifiedSplit, EvalError> {
    if items.is_empty() {
        return Err(EvalError::InvalidInput("no images to split".into()));
    }
    if n_test > items.len() {
        return Err(EvalError::InvalidInput(format!("test size {n_test} exceeds {} images", items.len())));
    }
    let mut names: Vec<&str> = items.iter().map(|i| i.stratum.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let mut available = vec![0usize; names.len()];
    for it in items {
        available[index[it.stratum.as_str()]] += 1;
    }
    let total = items.len() as f64;
    let targets: Vec<f64> = available.iter().map(|&a| n_test as f64 * a as f64 / total).collect();
    let rounded = largest_remainder(&targets, n_test);

    let mut groups = group_by_patient(items, &index);
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut counts = vec![0usize; names.len()];
    let mut taken = vec![false; groups.len()];
    let mut selected = 0usize;
    let relaxed: Vec<usize> = targets.iter().map(|t| (t + 1.0 + 1e-9).floor() as usize).collect();
    for caps in [&rounded, &relaxed] {
        while selected < n_test {
            let mut best: Option<(usize, f64)> = None;
            for (g, group) in groups.iter().enumerate() {
                if taken[g]
                    || selected + group.images.len() > n_test
                    || group.per_stratum.iter().any(|&(s, c)| counts[s] + c > caps[s])
                {
                    continue;
                }
                let need =
                    group.per_stratum.iter().map(|&(s, _)| targets[s] - counts[s] as f64).fold(f64::MIN, f64::max);
                if best.is_none_or(|(_, b)| need > b) {
                    best = Some((g, need));
                }
            }
            let Some((g, _)) = best else { break };
            for &(s, c) in &groups[g].per_stratum {
                counts[s] += c;
            }
            selected += groups[g].images.len();
            taken[g] = true;
        }
    }

    let mut in_test = vec![false; items.len()];
    for (g, group) in groups.iter().enumerate() {
        if taken[g] {
            for &i in &group.images {
                in_test[i] = true;
            }
        }
    }
    let (mut test, mut pool) = (Vec::new(), Vec::new());
    for (it, &t) in items.iter().zip(&in_test) {
        if t { &mut test } else { &mut pool }.push(it.image_id.clone());
    }
    let strata = names
        .iter()
        .enumerate()
        .map(|(s, name)| StratumAllocation {
            stratum: name.to_string(),
            available: available[s],
            target: targets[s],
            selected: counts[s],
        })
        .collect();
    Ok(StratifiedSplit { test, pool, report: StratificationReport { requested: n_test, selected, strata } })
}

/// Like [`stratified_test_split`] but fails with `InfeasibleStrata` when the
/// patient grouping keeps a stratum more than one image off target.
pub fn strict_stratified_test_split(
    items: &[SplitItem],
    n_test: usize,
    seed: u64,
) -> Result<StratifiedSplit, EvalError> {
    let split = stratified_test_split(items, n_test, seed)?;
    if split.report.is_within_one() {
        Ok(split)
    } else {
        Err(EvalError::InfeasibleStrata(Box::new(split.report)))
    }
}

/// Integer apportionment of `targets` summing to `total`.
pub fn largest_remainder(targets: &[f64], total: usize) -> Vec<usize> {
    let mut out: Vec<usize> = targets.iter().map(|t| t.floor() as usize).collect();
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..targets.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = targets[a] - targets[a].floor();
        let rb = targets[b] - targets[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(total.saturating_sub(assigned)) {
        out[i] += 1;
    }
    out
}

/// Patient-level k-fold partition: fold `i` validates on patient group `i` and trains on the rest.
///
/// `items` are `(image_id, patient_id)` pairs; image order is preserved inside each list.
pub fn patient_kfold(items: &[(String, String)], n_folds: usize, seed: u64) -> Result<DatasetSplit, EvalError> {
    if n_folds < 2 {
        return Err(EvalError::InvalidInput("at least 2 folds are required".into()));
    }
    let mut patients: Vec<&str> = items.iter().map(|(_, p)| p.as_str()).collect();
    patients.sort_unstable();
    patients.dedup();
    if patients.len() < n_folds {
        return Err(EvalError::TooFewPatients { patients: patients.len(), folds: n_folds });
    }
    patients.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let fold_of: HashMap<&str, usize> = patients.iter().enumerate().map(|(i, &p)| (p, i % n_folds)).collect();
    let mut train = vec![Vec::new(); n_folds];
    let mut validation = vec![Vec::new(); n_folds];
    for (image, patient) in items {
        let f = fold_of[patient.as_str()];
        for (k, t) in train.iter_mut().enumerate() {
            if k == f {
                validation[k].push(image.clone());
            } else {
                t.push(image.clone());
            }
        }
    }
    Ok(DatasetSplit { train, validation, test: Vec::new(), n_folds })
}

/// Stratified test split followed by patient k-fold on the remaining pool.
pub fn build_split(
    items: &[SplitItem],
    n_test: usize,
    n_folds: usize,
    seed: u64,
) -> Result<(DatasetSplit, StratificationReport), EvalError> {
    let strat = stratified_test_split(items, n_test, seed)?;
    let patient: HashMap<&str, &str> = items.iter().map(|i| (i.image_id.as_str(), i.patient_id.as_str())).collect();
    let pool: Vec<(String, String)> =
        strat.pool.iter().map(|id| (id.clone(), patient[id.as_str()].to_string())).collect();
    let mut split = patient_kfold(&pool, n_folds, seed.wrapping_add(1))?;
    split.test = strat.test;
    Ok((split, strat.report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog(tiers: &[(usize, &str)], multi_every: usize) -> Vec<SplitItem> {
        let mut out = Vec::new();
        let mut patient = 0;
        for &(n, stratum) in tiers {
            for i in 0..n {
                if multi_every == 0 || i % multi_every != 1 {
                    patient += 1;
                }
                out.push(SplitItem::new(format!("{stratum}-{i}"), format!("p{patient}"), stratum));
            }
        }
        out
    }

    #[test]
    fn proportional_tier_counts() {
        let items = catalog(&[(260, "t1"), (160, "t2"), (280, "t3"), (300, "sr")], 0);
        let s = stratified_test_split(&items, 100, 3).unwrap();
        assert_eq!(s.test.len(), 100);
        let got: Vec<usize> = s.report.strata.iter().map(|a| a.selected).collect();
        // strata sorted by name: sr, t1, t2, t3
        assert_eq!(got, vec![30, 26, 16, 28]);
        assert!(s.report.is_within_one());
    }

    #[test]
    fn patients_are_kept_whole() {
        let items: Vec<SplitItem> =
            (0..30).map(|i| SplitItem::new(format!("i{i}"), format!("p{}", i / 3), "a")).collect();
        let s = stratified_test_split(&items, 9, 1).unwrap();
        for p in 0..10 {
            let n = (0..3).filter(|k| s.test.contains(&format!("i{}", p * 3 + k))).count();
            assert!(n == 0 || n == 3);
        }
        assert_eq!(s.test.len(), 9);
    }

    #[test]
    fn largest_remainder_sums_to_total() {
        assert_eq!(largest_remainder(&[1.5, 1.5, 1.0], 4), vec![2, 1, 1]);
        assert_eq!(largest_remainder(&[0.2, 0.3, 0.5], 1), vec![0, 0, 1]);
    }

    #[test]
    fn kfold_groups_patients_evenly() {
        let items: Vec<(String, String)> = (0..20).map(|i| (format!("i{i}"), format!("p{}", i / 2))).collect();
        let split = patient_kfold(&items, 5, 7).unwrap();
        let patient: HashMap<String, String> = items.iter().cloned().collect();
        assert!(split.violations(&patient).is_empty());
        for f in 0..5 {
            assert_eq!(split.validation[f].len(), 4);
            assert_eq!(split.train[f].len(), 16);
        }
        assert_eq!(split, patient_kfold(&items, 5, 7).unwrap());
        assert!(matches!(patient_kfold(&items[..6], 5, 0), Err(EvalError::TooFewPatients { .. })));
    }

    #[test]
    fn full_split_has_no_leakage() {
        let items = catalog(&[(120, "a"), (80, "b")], 4);
        let patient: HashMap<String, String> =
            items.iter().map(|i| (i.image_id.clone(), i.patient_id.clone())).collect();
        for seed in 0..20 {
            let (split, report) = build_split(&items, 40, 5, seed).unwrap();
            assert!(split.violations(&patient).is_empty());
            assert!(report.deviations().is_empty());
        }
    }

    #[test]
    fn strict_mode_reports_infeasible_grouping() {
        // One patient owns every image of stratum "b", so b can only be 0 or 10.
        let mut items: Vec<SplitItem> =
            (0..90).map(|i| SplitItem::new(format!("a{i}"), format!("p{i}"), "a")).collect();
        items.extend((0..10).map(|i| SplitItem::new(format!("b{i}"), "big", "b")));
        assert!(matches!(strict_stratified_test_split(&items, 50, 0), Err(EvalError::InfeasibleStrata(_))));
        let best = stratified_test_split(&items, 50, 0).unwrap();
        assert_eq!(best.report.deviations().len(), 1);
    }
}
