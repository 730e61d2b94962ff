use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::EnvSpec;

use super::{compute_stats, read_episode, write_episode, DataError, Episode, NormStats, Source};

const MANIFEST: &str = "manifest.json";
const STATS: &str = "stats.json";
const EPISODE_DIR: &str = "episodes";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRef {
    /// Path relative to the dataset root.
    pub file: String,
    pub length: usize,
    pub seed: u64,
    pub source: Source,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub env_spec: EnvSpec,
    pub episodes: Vec<EpisodeRef>,
    /// Resolved configuration of the run that produced the dataset.
    #[serde(default)]
    pub config: serde_json::Value,
}

/// A dataset directory: `episodes/ep_<idx:06>.rmbe`, `stats.json` and
/// `manifest.json`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub env_spec: EnvSpec,
    pub episodes: Vec<EpisodeRef>,
    pub stats: Option<NormStats>,
    pub config: serde_json::Value,
}

impl Dataset {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, DataError> {
        let root = root.as_ref().to_path_buf();
        let manifest: Manifest = serde_json::from_slice(&fs::read(root.join(MANIFEST))?)?;
        let stats = match fs::read(root.join(STATS)) {
            Ok(bytes) => Some(serde_json::from_slice(&bytes)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(e.into()),
        };
        Ok(Self { root, env_spec: manifest.env_spec, episodes: manifest.episodes, stats, config: manifest.config })
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn path_of(&self, e: &EpisodeRef) -> PathBuf {
        self.root.join(&e.file)
    }

    pub fn load(&self, index: usize) -> Result<Episode, DataError> {
        read_episode(self.path_of(&self.episodes[index]))
    }

    pub fn successful(&self) -> impl Iterator<Item = &EpisodeRef> {
        self.episodes.iter().filter(|e| e.success)
    }

    /// Statistics, computing and saving them if the dataset has none yet.
    pub fn stats_or_compute(&mut self) -> Result<NormStats, DataError> {
        if let Some(s) = &self.stats {
            return Ok(s.clone());
        }
        let s = compute_stats(self)?;
        fs::write(self.root.join(STATS), serde_json::to_vec_pretty(&s)?)?;
        self.stats = Some(s.clone());
        Ok(s)
    }
}

/// Appends episodes to a dataset directory.
#[derive(Debug)]
pub struct DatasetWriter {
    root: PathBuf,
    env_spec: EnvSpec,
    episodes: Vec<EpisodeRef>,
}

impl DatasetWriter {
    pub fn create(root: impl AsRef<Path>, env_spec: EnvSpec) -> Result<Self, DataError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join(EPISODE_DIR))?;
        Ok(Self { root, env_spec, episodes: Vec::new() })
    }

    /// Continues an existing dataset, or creates one when `root` has no
    /// manifest yet.
    pub fn append(root: impl AsRef<Path>, env_spec: EnvSpec) -> Result<Self, DataError> {
        let root = root.as_ref().to_path_buf();
        if !root.join(MANIFEST).exists() {
            return Self::create(root, env_spec);
        }
        let manifest: Manifest = serde_json::from_slice(&fs::read(root.join(MANIFEST))?)?;
        if manifest.env_spec != env_spec {
            return Err(DataError::InvariantViolation(format!(
                "dataset at {} holds `{}`, not `{}`",
                root.display(),
                manifest.env_spec.env_id,
                env_spec.env_id
            )));
        }
        fs::create_dir_all(root.join(EPISODE_DIR))?;
        Ok(Self { root, env_spec, episodes: manifest.episodes })
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn add(&mut self, ep: &Episode) -> Result<PathBuf, DataError> {
        if ep.env_spec != self.env_spec {
            return Err(DataError::InvariantViolation(format!(
                "episode env spec `{}` differs from the dataset's",
                ep.env_spec.env_id
            )));
        }
        let file = format!("{EPISODE_DIR}/ep_{:06}.rmbe", self.episodes.len());
        let path = self.root.join(&file);
        write_episode(ep, &path)?;
        self.episodes.push(EpisodeRef { file, length: ep.len(), seed: ep.seed, source: ep.source, success: ep.success });
        Ok(path)
    }

    /// Writes the manifest and the statistics.
    pub fn finish(self, config: serde_json::Value) -> Result<Dataset, DataError> {
        self.flush(config)
    }

    /// Writes the manifest and recomputes the statistics, keeping the writer
    /// open for more episodes.
    pub fn flush(&self, config: serde_json::Value) -> Result<Dataset, DataError> {
        let manifest = Manifest { env_spec: self.env_spec.clone(), episodes: self.episodes.clone(), config };
        fs::write(self.root.join(MANIFEST), serde_json::to_vec_pretty(&manifest)?)?;
        let mut ds = Dataset {
            root: self.root.clone(),
            env_spec: manifest.env_spec,
            episodes: manifest.episodes,
            stats: None,
            config: manifest.config,
        };
        if !ds.is_empty() {
            let _ = fs::remove_file(self.root.join(STATS));
            ds.stats_or_compute()?;
        }
        Ok(ds)
    }
}
