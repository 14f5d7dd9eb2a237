use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::Vocabulary;
use crate::error::{Error, Result};
use crate::rl::Trajectory;

/// Softmax over one trajectory's raw rewards, max-subtracted.
pub fn normalize_rewards(trajectory_id: usize, raw: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::Data(format!("trajectory {trajectory_id} has no rewards")));
    }
    if let Some((i, r)) = raw.iter().enumerate().find(|(_, r)| !r.is_finite()) {
        return Err(Error::Data(format!(
            "trajectory {trajectory_id}: reward at step {i} is {r}"
        )));
    }
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = raw.iter().map(|r| (r - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}

/// Which discriminator reward of a scored step to analyse.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RewardField {
    #[default]
    Primary,
    Alternate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardRow {
    pub trajectory_id: usize,
    pub step_index: usize,
    pub token_surface: Option<String>,
    pub token_tag: Option<String>,
    pub raw_reward: f64,
    pub normalized_reward: f64,
}

impl RewardRow {
    /// `(surface, tag)` for token steps; `None` for unannotated steps such as
    /// the end-of-summary action.
    pub fn word(&self) -> Option<(&str, &str)> {
        match (&self.token_surface, &self.token_tag) {
            (Some(s), Some(t)) => Some((s, t)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RewardTable {
    pub rows: Vec<RewardRow>,
}

impl RewardTable {
    /// Normalizes each trajectory's discriminator rewards. Every step counts
    /// towards the softmax, including unannotated ones.
    pub fn from_scored(trajectories: &[Trajectory], field: RewardField) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::Data("no scored trajectories".into()));
        }
        let mut rows = Vec::new();
        for t in trajectories {
            let raw = t
                .steps
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let r = match field {
                        RewardField::Primary => s.reward_disc,
                        RewardField::Alternate => s.reward_disc_alt,
                    };
                    r.ok_or_else(|| Error::Data(format!("trajectory {}: step {i} has no reward", t.id)))
                })
                .collect::<Result<Vec<_>>>()?;
            let norm = normalize_rewards(t.id, &raw)?;
            for (i, step) in t.steps.iter().enumerate() {
                rows.push(RewardRow {
                    trajectory_id: t.id,
                    step_index: i,
                    token_surface: step.token_surface.clone(),
                    token_tag: step.token_tag.clone(),
                    raw_reward: raw[i],
                    normalized_reward: norm[i],
                });
            }
        }
        Ok(RewardTable { rows })
    }

    pub fn token_rows(&self) -> impl Iterator<Item = &RewardRow> {
        self.rows.iter().filter(|r| r.word().is_some())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_csv(path, &self.rows)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Ok(RewardTable { rows: read_csv(path)? })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub surface: String,
    pub tag: String,
    /// Occurrences of the word across all trajectories.
    pub n_w: usize,
    /// Character count of the surface form.
    pub complexity: usize,
}

/// Per-word characteristics over the words that occur in the data.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureTable {
    rows: Vec<FeatureRow>,
    index: BTreeMap<(String, String), usize>,
}

impl FeatureTable {
    /// Counts words in `rewards`; a word missing from `vocab` is a data error.
    pub fn build(rewards: &RewardTable, vocab: &Vocabulary) -> Result<Self> {
        let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
        for row in &rewards.rows {
            if let Some((s, t)) = row.word() {
                if vocab.lookup(s, t).is_none() {
                    return Err(Error::Data(format!(
                        "trajectory {} step {}: token ({s}, {t}) is not in the vocabulary",
                        row.trajectory_id, row.step_index
                    )));
                }
                *counts.entry((s.to_string(), t.to_string())).or_default() += 1;
            }
        }
        Ok(Self::from_rows(
            counts
                .into_iter()
                .map(|((surface, tag), n_w)| FeatureRow {
                    complexity: surface.chars().count(),
                    surface,
                    tag,
                    n_w,
                })
                .collect(),
        ))
    }

    pub fn from_rows(rows: Vec<FeatureRow>) -> Self {
        let index = rows
            .iter()
            .enumerate()
            .map(|(i, r)| ((r.surface.clone(), r.tag.clone()), i))
            .collect();
        FeatureTable { rows, index }
    }

    pub fn rows(&self) -> &[FeatureRow] {
        &self.rows
    }

    pub fn get(&self, surface: &str, tag: &str) -> Option<&FeatureRow> {
        self.index
            .get(&(surface.to_string(), tag.to_string()))
            .map(|&i| &self.rows[i])
    }

    /// Like [`get`](Self::get), but a missing word is a data error.
    pub fn require(&self, row: &RewardRow) -> Result<Option<&FeatureRow>> {
        match row.word() {
            None => Ok(None),
            Some((s, t)) => self.get(s, t).map(Some).ok_or_else(|| {
                Error::Data(format!(
                    "trajectory {} step {}: token ({s}, {t}) has no feature row",
                    row.trajectory_id, row.step_index
                ))
            }),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_csv(path, &self.rows)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Ok(Self::from_rows(read_csv(path)?))
    }
}

pub(crate) fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    // `#` lines carry provenance such as the config hash.
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| csv_error(path, e)))
        .collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Data(format!("{}: {e}", path.display()))
    }
}
