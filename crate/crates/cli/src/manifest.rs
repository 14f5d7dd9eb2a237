use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use airl_core::Error;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.json";
pub const LOCK_FILE: &str = ".lock";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    TrainExpert,
    TrainAirl,
    Analyze,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::TrainExpert, Stage::TrainAirl, Stage::Analyze];

    pub fn name(self) -> &'static str {
        match self {
            Stage::TrainExpert => "train-expert",
            Stage::TrainAirl => "train-airl",
            Stage::Analyze => "analyze",
        }
    }

    pub fn predecessor(self) -> Option<Stage> {
        match self {
            Stage::TrainExpert => None,
            Stage::TrainAirl => Some(Stage::TrainExpert),
            Stage::Analyze => Some(Stage::TrainAirl),
        }
    }

    pub fn successors(self) -> impl Iterator<Item = Stage> {
        Stage::ALL.into_iter().filter(move |s| *s > self)
    }

    /// Files the stage writes into the output directory.
    pub fn artifacts(self) -> &'static [&'static str] {
        match self {
            Stage::TrainExpert => &[
                "expert.ckpt.json",
                "expert_curve.csv",
                "expert_eval.json",
                "expert_trajectories.jsonl",
                "vocab.tsv",
            ],
            Stage::TrainAirl => &[
                "airl_curve.csv",
                "airl_eval.json",
                "discriminator.ckpt.json",
                "novice.ckpt.json",
            ],
            Stage::Analyze => &[
                "feature_table.csv",
                "fig_method1.svg",
                "fig_method2.svg",
                "mi_scores.csv",
                "pos_summary.csv",
                "report.md",
                "reward_table.csv",
                "scored_trajectories.jsonl",
            ],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageRecord {
    pub complete: bool,
    /// Hash of the config sections this stage (and its inputs) depend on.
    pub stage_hash: String,
    /// File name to SHA-256 of its contents.
    pub artifacts: BTreeMap<String, String>,
}

/// `manifest.json`: completion state of each stage. Contains no timings, so
/// identical runs produce identical manifests.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub config_hash: String,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    pub fn load_or_default(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let text = fs::read_to_string(&path).map_err(|e| io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Core(Error::Json { path, source: e }))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        write_atomic(&path, text.as_bytes())
    }

    pub fn record(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.get(stage.name())
    }

    pub fn is_complete(&self, stage: Stage) -> bool {
        self.record(stage).is_some_and(|r| r.complete)
    }

    /// Marks `stage` as in progress and invalidates everything after it.
    pub fn begin(&mut self, stage: Stage) {
        for s in std::iter::once(stage).chain(stage.successors()) {
            if let Some(r) = self.stages.get_mut(s.name()) {
                r.complete = false;
            }
        }
    }

    pub fn finish(&mut self, stage: Stage, stage_hash: &str, dir: &Path) -> Result<()> {
        let mut artifacts = BTreeMap::new();
        for name in stage.artifacts() {
            artifacts.insert(name.to_string(), file_sha256(&dir.join(name))?);
        }
        self.stages.insert(
            stage.name().to_string(),
            StageRecord {
                complete: true,
                stage_hash: stage_hash.to_string(),
                artifacts,
            },
        );
        Ok(())
    }

    /// Why `stage`'s recorded outputs cannot be used as they are, if at all.
    pub fn stale_reason(&self, stage: Stage, stage_hash: &str, dir: &Path) -> Option<String> {
        if let Some(name) = stage.artifacts().iter().find(|n| !dir.join(n).exists()) {
            return Some(format!("missing artifact {} from stage {}", dir.join(name).display(), stage.name()));
        }
        let Some(r) = self.record(stage).filter(|r| r.complete) else {
            return Some(format!("stage {} has not completed", stage.name()));
        };
        if r.stage_hash != stage_hash {
            return Some(format!(
                "stage {} was run with a different configuration (hash {} vs {})",
                stage.name(),
                short(&r.stage_hash),
                short(stage_hash)
            ));
        }
        for name in stage.artifacts() {
            let path = dir.join(name);
            match (file_sha256(&path), r.artifacts.get(*name)) {
                (Ok(sum), Some(want)) if &sum == want => {}
                _ => return Some(format!("artifact {} changed since stage {} ran", path.display(), stage.name())),
            }
        }
        None
    }
}

pub fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Writes through a temporary file so an interrupted write never leaves a
/// truncated file under the final name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io(path, e))
}

pub fn save_timing(dir: &Path, stage: Stage, seconds: f64) -> Result<()> {
    let path = dir.join(TIMINGS_FILE);
    let mut t: BTreeMap<String, f64> = fs::read_to_string(&path)
        .ok()
        .and_then(|s| serde_json::from_str(&s).ok())
        .unwrap_or_default();
    t.insert(stage.name().to_string(), seconds);
    let text = serde_json::to_string_pretty(&t).expect("timings serialize") + "\n";
    write_atomic(&path, text.as_bytes())
}

fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Exclusive hold on an output directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(LOCK_FILE);
        for attempt in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    let _ = writeln!(f, "{}", std::process::id());
                    return Ok(DirLock { path });
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    if attempt == 0 && holder_is_gone(&path) {
                        let _ = fs::remove_file(&path);
                        continue;
                    }
                    return Err(CliError::Pipeline(format!(
                        "{} is locked by another run (remove {} if no run is active)",
                        dir.display(),
                        path.display()
                    )));
                }
                Err(e) => return Err(io(&path, e)),
            }
        }
        unreachable!("second attempt returns")
    }
}

/// A lock left behind by a killed process. Only detectable where `/proc` exists.
fn holder_is_gone(lock: &Path) -> bool {
    let Some(pid) = fs::read_to_string(lock).ok().and_then(|s| s.trim().parse::<u32>().ok()) else {
        return false;
    };
    Path::new("/proc/self").exists() && !Path::new(&format!("/proc/{pid}")).exists()
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
