use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::tables::{FeatureTable, RewardTable};

/// Per-tag reward averages. Word `w` with `n_w` occurrences and total
/// normalized reward `R_w` contributes `R_w / n_w` to Method 1 and `R_w` to
/// Method 2; both sums are divided by `n_s`, the tag's occurrence count.
#[derive(Clone, Debug, PartialEq)]
pub struct TagAverages {
    /// `(tag, n_s, value)`, sorted by tag.
    pub rows: Vec<(String, usize, f64)>,
}

impl TagAverages {
    pub fn value(&self, tag: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.0 == tag).map(|r| r.2)
    }

    pub fn pairs(&self) -> Vec<(String, f64)> {
        self.rows.iter().map(|(t, _, v)| (t.clone(), *v)).collect()
    }
}

/// Total normalized reward per word, over the token rows of `rewards`.
fn word_totals(rewards: &RewardTable, features: &FeatureTable) -> Result<BTreeMap<(String, String), f64>> {
    let mut totals = BTreeMap::new();
    for row in &rewards.rows {
        if let Some(f) = features.require(row)? {
            *totals.entry((f.surface.clone(), f.tag.clone())).or_insert(0.0) += row.normalized_reward;
        }
    }
    Ok(totals)
}

fn averages(rewards: &RewardTable, features: &FeatureTable, per_word_mean: bool) -> Result<TagAverages> {
    let totals = word_totals(rewards, features)?;
    let mut by_tag: BTreeMap<String, (usize, f64)> = BTreeMap::new();
    for f in features.rows() {
        let Some(total) = totals.get(&(f.surface.clone(), f.tag.clone())) else {
            continue;
        };
        let e = by_tag.entry(f.tag.clone()).or_insert((0, 0.0));
        e.0 += f.n_w;
        e.1 += if per_word_mean { total / f.n_w as f64 } else { *total };
    }
    Ok(TagAverages {
        rows: by_tag
            .into_iter()
            .map(|(tag, (n_s, sum))| (tag, n_s, sum / n_s as f64))
            .collect(),
    })
}

/// Method 1: word rewards are first averaged over the word's occurrences.
pub fn avg_method1(rewards: &RewardTable, features: &FeatureTable) -> Result<TagAverages> {
    averages(rewards, features, true)
}

/// Method 2: word rewards are summed without per-word normalization.
pub fn avg_method2(rewards: &RewardTable, features: &FeatureTable) -> Result<TagAverages> {
    averages(rewards, features, false)
}

/// Tags by descending value; equal values fall back to tag name order.
pub fn rank_tags(values: &[(String, f64)]) -> Vec<String> {
    let mut v: Vec<&(String, f64)> = values.iter().collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.into_iter().map(|(t, _)| t.clone()).collect()
}

/// 1-based rank of every tag in `order`.
pub fn ranks(order: &[String]) -> BTreeMap<String, usize> {
    order.iter().enumerate().map(|(i, t)| (t.clone(), i + 1)).collect()
}

/// Spearman correlation of two tie-free rankings of the same tags.
/// Defined as 1 for fewer than two tags.
pub fn spearman(a: &[String], b: &[String]) -> f64 {
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let rb = ranks(b);
    let d2: f64 = a
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let d = (i + 1) as f64 - rb[t] as f64;
            d * d
        })
        .sum();
    let n = n as f64;
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosSummaryRow {
    pub tag: String,
    pub n_s: usize,
    pub avg_m1: f64,
    pub avg_m2: f64,
    pub rank_m1: usize,
    pub rank_m2: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PosSummary {
    pub rows: Vec<PosSummaryRow>,
    pub order_m1: Vec<String>,
    pub order_m2: Vec<String>,
    pub spearman: f64,
}

impl PosSummary {
    pub fn build(rewards: &RewardTable, features: &FeatureTable) -> Result<Self> {
        let m1 = avg_method1(rewards, features)?;
        let m2 = avg_method2(rewards, features)?;
        let order_m1 = rank_tags(&m1.pairs());
        let order_m2 = rank_tags(&m2.pairs());
        let (r1, r2) = (ranks(&order_m1), ranks(&order_m2));
        let rows = m1
            .rows
            .iter()
            .zip(&m2.rows)
            .map(|((tag, n_s, a1), (_, _, a2))| PosSummaryRow {
                tag: tag.clone(),
                n_s: *n_s,
                avg_m1: *a1,
                avg_m2: *a2,
                rank_m1: r1[tag],
                rank_m2: r2[tag],
            })
            .collect();
        Ok(PosSummary {
            spearman: spearman(&order_m1, &order_m2),
            rows,
            order_m1,
            order_m2,
        })
    }
}
