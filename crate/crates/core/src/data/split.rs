use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::manifest::VolumeRecord;
use crate::error::{Error, Result};

/// Subject-grouped train / validation / test partition.
#[derive(Clone, Debug)]
pub struct GroupSplit {
    pub train: Vec<VolumeRecord>,
    pub val: Vec<VolumeRecord>,
    pub test: Vec<VolumeRecord>,
    /// Achieved session fractions per split.
    pub achieved: [f64; 3],
}

impl GroupSplit {
    pub fn parts(&self) -> [&[VolumeRecord]; 3] {
        [&self.train, &self.val, &self.test]
    }
}

pub const DEFAULT_RATIOS: [f64; 3] = [8.0, 1.0, 1.0];

/// Assigns whole subjects to splits. Subjects are shuffled with `seed`, then
/// visited largest-first (stable, so the shuffle breaks ties); each goes to
/// the split with the largest remaining session deficit. Once the number of
/// unvisited subjects equals the number of still-empty splits, those splits
/// are filled first so none ends up empty.
pub fn group_split(records: &[VolumeRecord], ratios: [f64; 3], seed: u64) -> Result<GroupSplit> {
    if ratios.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
        return Err(Error::invalid(format!("split ratios must be positive, got {ratios:?}")));
    }
    let mut by_subject: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_subject.entry(r.subject_id.as_str()).or_default().push(i);
    }
    if by_subject.len() < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 distinct subjects for a 3-way split, found {}",
            by_subject.len()
        )));
    }

    let mut subjects: Vec<(&str, Vec<usize>)> = by_subject.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    subjects.shuffle(&mut rng);
    subjects.sort_by(|a, b| b.1.len().cmp(&a.1.len()));

    let total = records.len() as f64;
    let ratio_sum: f64 = ratios.iter().sum();
    let targets = ratios.map(|r| r / ratio_sum * total);
    let mut counts = [0usize; 3];
    let mut subject_counts = [0usize; 3];
    let mut assignment = vec![0usize; records.len()];

    for (visited, (_, sessions)) in subjects.iter().enumerate() {
        let remaining = subjects.len() - visited;
        let empty: Vec<usize> = (0..3).filter(|&s| subject_counts[s] == 0).collect();
        let candidates: Vec<usize> = if remaining <= empty.len() { empty } else { vec![0, 1, 2] };
        let deficit = |s: usize| targets[s] - counts[s] as f64;
        let mut best = candidates[0];
        for &s in &candidates[1..] {
            if deficit(s) > deficit(best) {
                best = s;
            }
        }
        counts[best] += sessions.len();
        subject_counts[best] += 1;
        for &i in sessions {
            assignment[i] = best;
        }
    }

    let mut parts: [Vec<VolumeRecord>; 3] = Default::default();
    for (record, &s) in records.iter().zip(&assignment) {
        parts[s].push(record.clone());
    }
    let achieved = counts.map(|c| c as f64 / total);
    let [train, val, test] = parts;
    Ok(GroupSplit {
        train,
        val,
        test,
        achieved,
    })
}
