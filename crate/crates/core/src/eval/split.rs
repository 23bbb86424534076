use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::{derive_seed, rng_from_seed};
use crate::{BinaryLabel, Error, Result};

const SPLIT_TAG: u64 = 0x5A17_0001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub anchor_frac: f64,
    pub n_splits: usize,
    pub base_seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            anchor_frac: 0.2,
            n_splits: 3,
            base_seed: 0,
            stratified: true,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.anchor_frac > 0.0 && self.anchor_frac < 1.0) {
            return Err(Error::Config(format!(
                "anchor fraction must lie in (0, 1), got {}",
                self.anchor_frac
            )));
        }
        if self.n_splits == 0 {
            return Err(Error::Config("at least one split is required".into()));
        }
        Ok(())
    }

    /// Seed of everything random inside split `index`.
    pub fn split_seed(&self, index: usize) -> u64 {
        derive_seed(self.base_seed, index as u64)
    }
}

/// Indices into the dataset, each list ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Split {
    pub anchor: Vec<usize>,
    pub test: Vec<usize>,
}

/// Largest-remainder allocation of `total` slots proportional to `sizes`.
fn allocate(sizes: &[usize], frac: f64) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let total = (frac * n as f64).round() as usize;
    let exact: Vec<f64> = sizes.iter().map(|&s| frac * s as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    // stable: equal remainders keep class order
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    let assigned: usize = counts.iter().sum();
    for &c in order.iter().cycle().take(total.saturating_sub(assigned)) {
        counts[c] += 1;
    }
    counts
}

/// Partition record indices into anchor and test sets for one split.
pub fn stratified_split(
    labels: &[BinaryLabel],
    spec: &SplitSpec,
    split_index: usize,
) -> Result<Split> {
    spec.validate()?;
    if split_index >= spec.n_splits {
        return Err(Error::Config(format!(
            "split index {split_index} out of range for {} splits",
            spec.n_splits
        )));
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = rng_from_seed(derive_seed(spec.split_seed(split_index), SPLIT_TAG));
    let mut anchor = Vec::new();
    if spec.stratified {
        let classes = [BinaryLabel::Positive, BinaryLabel::Negative];
        let members: Vec<Vec<usize>> = classes
            .iter()
            .map(|c| (0..labels.len()).filter(|&i| labels[i] == *c).collect())
            .collect();
        for (c, m) in classes.iter().zip(&members) {
            if m.len() < 2 {
                return Err(Error::DegenerateClass(format!(
                    "class {c} has {} member(s); at least 2 are needed",
                    m.len()
                )));
            }
        }
        let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
        let counts = allocate(&sizes, spec.anchor_frac);
        for (mut m, count) in members.into_iter().zip(counts) {
            // every class keeps at least one anchor and one test item
            let count = count.clamp(1, m.len() - 1);
            m.shuffle(&mut rng);
            anchor.extend_from_slice(&m[..count]);
        }
    } else {
        let mut all: Vec<usize> = (0..labels.len()).collect();
        let count = ((spec.anchor_frac * labels.len() as f64).round() as usize)
            .clamp(1, labels.len().saturating_sub(1).max(1));
        all.shuffle(&mut rng);
        anchor.extend_from_slice(&all[..count]);
    }
    anchor.sort_unstable();
    let mut is_anchor = vec![false; labels.len()];
    anchor.iter().for_each(|&i| is_anchor[i] = true);
    let test = (0..labels.len()).filter(|&i| !is_anchor[i]).collect();
    Ok(Split { anchor, test })
}
