use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// Success rate over a set of episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    pub episodes: usize,
    pub successes: usize,
    pub mean: f64,
    /// Sample standard deviation of the 0/1 outcomes; 0 for one episode.
    pub std: f64,
}

impl SuccessReport {
    pub fn from_outcomes(outcomes: &[bool]) -> Self {
        let n = outcomes.len();
        let k = outcomes.iter().filter(|&&s| s).count();
        let mean = if n == 0 { 0.0 } else { k as f64 / n as f64 };
        let std = if n < 2 {
            0.0
        } else {
            let ss: f64 = outcomes.iter().map(|&s| (s as u8 as f64 - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        };
        Self { episodes: n, successes: k, mean, std }
    }

    /// `"mean ± std"` with two decimals.
    pub fn display(&self) -> String {
        format!("{:.2} ± {:.2}", self.mean, self.std)
    }
}

impl std::fmt::Display for SuccessReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.display())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub policy: String,
    pub task: String,
    pub report: SuccessReport,
    pub base_seed: u64,
    /// Per-episode trace hashes in seed order.
    pub trace_hashes: Vec<u32>,
}

/// Results of one or more evaluations plus the resolved run configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchReport {
    pub entries: Vec<ReportEntry>,
    pub config: serde_json::Value,
}

impl BenchReport {
    /// Markdown table with one row per policy and one column per task.
    pub fn to_markdown(&self) -> String {
        let policies: Vec<&str> = unique(self.entries.iter().map(|e| e.policy.as_str()));
        let tasks: Vec<&str> = unique(self.entries.iter().map(|e| e.task.as_str()));
        let mut out = String::from("| policy |");
        for t in &tasks {
            out.push_str(&format!(" {t} |"));
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(tasks.len()));
        out.push('\n');
        for p in &policies {
            out.push_str(&format!("| {p} |"));
            for t in &tasks {
                let cell = self
                    .entries
                    .iter()
                    .find(|e| e.policy == *p && e.task == *t)
                    .map_or_else(|| "n/a".to_string(), |e| e.report.display());
                out.push_str(&format!(" {cell} |"));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }
}

/// First-appearance order without duplicates.
fn unique<'a>(items: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut seen = BTreeSet::new();
    items.filter(|s| seen.insert(*s)).collect()
}
