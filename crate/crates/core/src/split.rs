//! Subject-level dataset partitioning: 60/40 train/test and k-fold CV.
//!
//! Splits operate on unique subjects so that no subject's images ever span
//! two sides of a partition.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::manifest::Manifest;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubjectSplit {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    /// `folds[k]` holds the subjects validating in fold `k`.
    pub folds: Vec<Vec<String>>,
}

fn shuffled_subjects(manifest: &Manifest, seed: u64) -> Vec<String> {
    let mut subjects = manifest.unique_subjects();
    SplitMix64::new(seed).shuffle(&mut subjects);
    subjects
}

/// Deterministic 60/40 split over unique subjects.
pub fn split_subjects(manifest: &Manifest, seed: u64) -> Result<SubjectSplit> {
    let subjects = shuffled_subjects(manifest, seed);
    let n = subjects.len();
    if n < 2 {
        return Err(Error::Config(format!(
            "need at least 2 subjects to split, got {n}"
        )));
    }
    let n_train = ((0.6 * n as f64).round() as usize).clamp(1, n - 1);
    let (train, test) = subjects.split_at(n_train);
    Ok(SubjectSplit {
        train: train.to_vec(),
        test: test.to_vec(),
    })
}

/// Deterministic k-fold partition over unique subjects; fold sizes differ by
/// at most one subject.
pub fn kfold(manifest: &Manifest, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Config(format!("k must be >= 2, got {k}")));
    }
    let subjects = shuffled_subjects(manifest, seed);
    kfold_subjects(&subjects, k)
}

/// K-fold over an already-ordered subject list (used when the CV runs inside
/// a prior train/test split).
pub fn kfold_subjects(subjects: &[String], k: usize) -> Result<FoldAssignment> {
    let n = subjects.len();
    if n < k {
        return Err(Error::Config(format!(
            "need at least {k} subjects for {k}-fold CV, got {n}"
        )));
    }
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut offset = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(subjects[offset..offset + size].to_vec());
        offset += size;
    }
    Ok(FoldAssignment { folds })
}

impl FoldAssignment {
    /// Fold id per subject.
    pub fn fold_of(&self) -> BTreeMap<&str, usize> {
        let mut map = BTreeMap::new();
        for (f, fold) in self.folds.iter().enumerate() {
            for s in fold {
                map.insert(s.as_str(), f);
            }
        }
        map
    }
}

/// Indices of manifest rows whose subject is in `subjects`.
pub fn rows_for_subjects(manifest: &Manifest, subjects: &[String]) -> Vec<usize> {
    manifest
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| subjects.contains(&r.subject_id))
        .map(|(i, _)| i)
        .collect()
}
