use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Fold index of every sample in a k-fold split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub fold_of_sample: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

impl FoldAssignment {
    /// Sample indices belonging to `fold`.
    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of_sample.len()).filter(|&i| self.fold_of_sample[i] == fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        self.fold_of_sample.iter().for_each(|&f| sizes[f] += 1);
        sizes
    }
}

fn group_by_class(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    groups
}

/// Stratified k-fold assignment.
///
/// Members of each class are shuffled and dealt round-robin into folds; the
/// dealing position carries over from one class to the next, so per-class
/// fold counts differ by at most one and so do total fold sizes.
pub fn stratified_kfold_split(labels: &[usize], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Stratification(format!("need k >= 2, got {k}")));
    }
    let groups = group_by_class(labels);
    if let Some((class, members)) = groups.iter().find(|(_, m)| m.len() < k) {
        return Err(Error::Stratification(format!(
            "class {class} has {} members, fewer than k = {k}",
            members.len()
        )));
    }
    let mut rng = rng::stream(seed, "stratified-kfold");
    let mut fold_of_sample = vec![0; labels.len()];
    let mut position = 0usize;
    for members in groups.values() {
        for j in rng::permutation(&mut rng, members.len()) {
            fold_of_sample[members[j]] = position % k;
            position += 1;
        }
    }
    Ok(FoldAssignment { fold_of_sample, k, seed })
}

/// Splits indices into `(pool, holdout)` with `holdout_per_class` members of each class held out.
pub fn stratified_holdout(labels: &[usize], holdout_per_class: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rng = rng::stream(seed, "stratified-holdout");
    let mut pool = Vec::new();
    let mut holdout = Vec::new();
    for (class, members) in group_by_class(labels) {
        if members.len() <= holdout_per_class {
            return Err(Error::Stratification(format!(
                "class {class} has {} members, cannot hold out {holdout_per_class}",
                members.len()
            )));
        }
        let perm = rng::permutation(&mut rng, members.len());
        holdout.extend(perm[..holdout_per_class].iter().map(|&j| members[j]));
        pool.extend(perm[holdout_per_class..].iter().map(|&j| members[j]));
    }
    pool.sort_unstable();
    holdout.sort_unstable();
    Ok((pool, holdout))
}

/// Sorted indices keeping `round(fraction · count)` members of each class (at least one).
pub fn stratified_subsample(labels: &[usize], fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Stratification(format!("subsample fraction must be in (0, 1], got {fraction}")));
    }
    let mut rng = rng::stream(seed, "stratified-subsample");
    let mut keep = Vec::new();
    for members in group_by_class(labels).values() {
        let n = ((fraction * members.len() as f64).round() as usize).clamp(1, members.len());
        keep.extend(rng::permutation(&mut rng, members.len())[..n].iter().map(|&j| members[j]));
    }
    keep.sort_unstable();
    Ok(keep)
}
