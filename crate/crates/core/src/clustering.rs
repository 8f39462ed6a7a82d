//! Grouping samples by activation path and splitting them into ordinary and
//! biased sets by activation frequency.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::slicing::{ActivationPath, PathKey};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathEntry {
    pub key: PathKey,
    /// Sample ids whose path has this key, ascending.
    pub members: Vec<usize>,
}

impl PathEntry {
    /// Activation frequency: number of samples sharing the path.
    pub fn frequency(&self) -> usize {
        self.members.len()
    }
}

/// Paths grouped by canonical key, ordered by key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathTable {
    pub entries: Vec<PathEntry>,
    pub max_frequency: usize,
}

impl PathTable {
    pub fn total_samples(&self) -> usize {
        self.entries.iter().map(PathEntry::frequency).sum()
    }

    pub fn get(&self, key: &PathKey) -> Option<&PathEntry> {
        self.entries
            .binary_search_by(|e| e.key.cmp(key))
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Frequencies sorted in descending order.
    pub fn frequencies(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.entries.iter().map(PathEntry::frequency).collect();
        f.sort_unstable_by(|a, b| b.cmp(a));
        f
    }
}

pub fn build_path_table(paths: &[ActivationPath]) -> Result<PathTable> {
    if paths.is_empty() {
        return Err(Error::Parameter("no paths to cluster".into()));
    }
    let mut groups: HashMap<PathKey, Vec<usize>> = HashMap::new();
    for p in paths {
        groups.entry(p.canonical_key()).or_default().push(p.sample_id);
    }
    let mut entries: Vec<PathEntry> = groups
        .into_iter()
        .map(|(key, mut members)| {
            members.sort_unstable();
            PathEntry { key, members }
        })
        .collect();
    entries.sort_unstable_by(|a, b| a.key.cmp(&b.key));
    let max_frequency = entries.iter().map(PathEntry::frequency).max().unwrap_or(0);
    Ok(PathTable {
        entries,
        max_frequency,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    /// Frequency-ratio threshold in `(0, 1]`.
    pub theta: f64,
}

impl ClusterParams {
    pub fn new(theta: f64) -> Result<Self> {
        let p = ClusterParams { theta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::Parameter(format!(
                "theta must be in (0, 1], got {}",
                self.theta
            )));
        }
        Ok(())
    }
}

/// Ordinary / biased partition of the sliced samples.
///
/// JSON shape: `{biased_path_keys, ordinary_sample_ids, biased_sample_ids,
/// theta, M, threshold}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSplit {
    pub biased_path_keys: Vec<String>,
    pub ordinary_sample_ids: Vec<usize>,
    pub biased_sample_ids: Vec<usize>,
    pub theta: f64,
    #[serde(rename = "M")]
    pub max_frequency: usize,
    pub threshold: f64,
}

impl SampleSplit {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// A path is biased when its frequency is at most `theta * M` and below `M`
/// itself; its samples go to the biased list, everything else is ordinary.
pub fn get_samples_divided(table: &PathTable, params: &ClusterParams) -> Result<SampleSplit> {
    params.validate()?;
    if table.entries.is_empty() {
        return Err(Error::Parameter("empty path table".into()));
    }
    let threshold = params.theta * table.max_frequency as f64;
    let mut split = SampleSplit {
        biased_path_keys: Vec::new(),
        ordinary_sample_ids: Vec::new(),
        biased_sample_ids: Vec::new(),
        theta: params.theta,
        max_frequency: table.max_frequency,
        threshold,
    };
    for entry in &table.entries {
        let f = entry.frequency();
        if (f as f64) <= threshold && f < table.max_frequency {
            split.biased_path_keys.push(entry.key.to_string());
            split.biased_sample_ids.extend_from_slice(&entry.members);
        } else {
            split.ordinary_sample_ids.extend_from_slice(&entry.members);
        }
    }
    split.ordinary_sample_ids.sort_unstable();
    split.biased_sample_ids.sort_unstable();
    Ok(split)
}
