use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::env::DType;

use super::{read_episode, DataError, Dataset, Episode, ACTION_KEY};

/// Lower bound applied to every standard deviation.
pub const STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    /// Population standard deviation, floored at [`STD_FLOOR`].
    pub std: Vec<f64>,
}

impl ChannelStats {
    pub fn normalize(&self, i: usize, v: f64) -> f64 {
        (v - self.mean[i]) / self.std[i]
    }

    pub fn denormalize(&self, i: usize, v: f64) -> f64 {
        v * self.std[i] + self.mean[i]
    }
}

/// Per-element statistics of every numeric channel and of the actions
/// (under the key `action`). Image (u8) channels are not normalised.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NormStats {
    pub channels: BTreeMap<String, ChannelStats>,
}

impl NormStats {
    pub fn get(&self, name: &str) -> Option<&ChannelStats> {
        self.channels.get(name)
    }

    pub fn action(&self) -> Option<&ChannelStats> {
        self.channels.get(ACTION_KEY)
    }
}

/// Welford accumulator over rows of a fixed width.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningStats {
    pub fn new(width: usize) -> Self {
        Self { count: 0, mean: vec![0.0; width], m2: vec![0.0; width] }
    }

    pub fn push(&mut self, row: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(row) {
            let d = x - *m;
            *m += d / n;
            *s += d * (x - *m);
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn finish(&self) -> ChannelStats {
        let n = self.count.max(1) as f64;
        ChannelStats {
            mean: self.mean.clone(),
            std: self.m2.iter().map(|s| (s / n).max(0.0).sqrt().max(STD_FLOOR)).collect(),
        }
    }
}

fn accumulate(acc: &mut BTreeMap<String, RunningStats>, ep: &Episode) {
    let t = ep.len();
    let numeric = ep.channels.iter().filter(|(_, v)| v.dtype() != DType::U8);
    for (name, tensor) in numeric.map(|(n, v)| (n.as_str(), v)).chain([(ACTION_KEY, &ep.actions)]) {
        let values = tensor.to_f64_vec();
        let width = values.len() / t;
        let stats = acc.entry(name.to_string()).or_insert_with(|| RunningStats::new(width));
        for row in values.chunks_exact(width) {
            stats.push(row);
        }
    }
}

/// Exact population statistics over every timestep of every episode of the
/// dataset, reading one episode at a time.
pub fn compute_stats(ds: &Dataset) -> Result<NormStats, DataError> {
    if ds.episodes.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let mut acc = BTreeMap::new();
    for e in &ds.episodes {
        accumulate(&mut acc, &read_episode(ds.root.join(&e.file))?);
    }
    Ok(NormStats { channels: acc.into_iter().map(|(k, v)| (k, v.finish())).collect() })
}

/// Statistics of in-memory episodes.
pub fn stats_of(episodes: &[Episode]) -> Result<NormStats, DataError> {
    if episodes.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let mut acc = BTreeMap::new();
    for ep in episodes {
        accumulate(&mut acc, ep);
    }
    Ok(NormStats { channels: acc.into_iter().map(|(k, v)| (k, v.finish())).collect() })
}
