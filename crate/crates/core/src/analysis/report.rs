use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::Vocabulary;
use crate::error::{Error, Result};
use crate::rl::Trajectory;

use super::aggregate::{spearman, PosSummary};
use super::mi::{normalized_mi, Nmi, NmiMode, Series};
use super::tables::{write_csv, FeatureTable, RewardField, RewardTable};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Bins for reward and numeric characteristic discretization.
    pub bins: usize,
    pub nmi_mode: NmiMode,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            bins: 8,
            nmi_mode: NmiMode::Geometric,
        }
    }
}

pub const CHARACTERISTICS: [&str; 3] = ["appearances", "complexity", "tag"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiScore {
    pub characteristic: String,
    pub nmi: f64,
}

/// NMI of each word characteristic against normalized rewards, one sample per
/// token occurrence. Order follows [`CHARACTERISTICS`].
pub fn characteristic_mi(
    rewards: &RewardTable,
    features: &FeatureTable,
    bins: usize,
    mode: NmiMode,
) -> Result<Vec<(String, Nmi)>> {
    let mut appearances = Vec::new();
    let mut complexity = Vec::new();
    let mut tags = Vec::new();
    let mut r = Vec::new();
    for row in &rewards.rows {
        if let Some(f) = features.require(row)? {
            appearances.push(f.n_w as f64);
            complexity.push(f.complexity as f64);
            tags.push(f.tag.clone());
            r.push(row.normalized_reward);
        }
    }
    if r.is_empty() {
        return Err(Error::Data("no annotated tokens to analyse".into()));
    }
    Ok(vec![
        (
            CHARACTERISTICS[0].into(),
            normalized_mi(Series::Numeric(&appearances), &r, bins, mode)?,
        ),
        (
            CHARACTERISTICS[1].into(),
            normalized_mi(Series::Numeric(&complexity), &r, bins, mode)?,
        ),
        (CHARACTERISTICS[2].into(), normalized_mi(Series::Categorical(&tags), &r, bins, mode)?),
    ])
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetStats {
    pub trajectories: usize,
    pub steps: usize,
    pub token_steps: usize,
    pub distinct_words: usize,
    pub tags: usize,
    pub mean_length: f64,
    pub mean_episode_reward: f64,
}

/// Everything the analysis stage produces.
#[derive(Clone, Debug)]
pub struct Analysis {
    pub rewards: RewardTable,
    pub features: FeatureTable,
    pub summary: PosSummary,
    /// The same summary under the alternate scoring policy, if scored.
    pub alternate: Option<PosSummary>,
    pub mi: Vec<(String, Nmi)>,
    pub mi_other: Vec<(String, Nmi)>,
    pub stats: DatasetStats,
    pub config: AnalysisConfig,
    /// `(key, value)` lines for the provenance block.
    pub provenance: Vec<(String, String)>,
}

impl Analysis {
    pub fn run(
        scored: &[Trajectory],
        vocab: &Vocabulary,
        cfg: &AnalysisConfig,
        provenance: Vec<(String, String)>,
    ) -> Result<Self> {
        let rewards = RewardTable::from_scored(scored, RewardField::Primary)?;
        let features = FeatureTable::build(&rewards, vocab)?;
        let summary = PosSummary::build(&rewards, &features)?;
        let alternate = if scored.iter().all(|t| t.steps.iter().all(|s| s.reward_disc_alt.is_some())) {
            let alt = RewardTable::from_scored(scored, RewardField::Alternate)?;
            Some(PosSummary::build(&alt, &features)?)
        } else {
            None
        };
        let mi = characteristic_mi(&rewards, &features, cfg.bins, cfg.nmi_mode)?;
        let mi_other = characteristic_mi(&rewards, &features, cfg.bins, cfg.nmi_mode.other())?;
        let steps: usize = scored.iter().map(Trajectory::len).sum();
        let stats = DatasetStats {
            trajectories: scored.len(),
            steps,
            token_steps: rewards.token_rows().count(),
            distinct_words: features.rows().len(),
            tags: summary.rows.len(),
            mean_length: steps as f64 / scored.len() as f64,
            mean_episode_reward: scored.iter().map(|t| t.episode_reward).sum::<f64>() / scored.len() as f64,
        };
        Ok(Analysis {
            rewards,
            features,
            summary,
            alternate,
            mi,
            mi_other,
            stats,
            config: cfg.clone(),
            provenance,
        })
    }

    pub fn mi_scores(&self) -> Vec<MiScore> {
        self.mi
            .iter()
            .map(|(c, n)| MiScore {
                characteristic: c.clone(),
                nmi: n.value,
            })
            .collect()
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        let st = &self.stats;
        let _ = writeln!(s, "# Reward analysis report\n");
        let _ = writeln!(s, "## Dataset\n");
        let _ = writeln!(s, "| statistic | value |\n|---|---|");
        let _ = writeln!(s, "| trajectories | {} |", st.trajectories);
        let _ = writeln!(s, "| transitions | {} |", st.steps);
        let _ = writeln!(s, "| token transitions | {} |", st.token_steps);
        let _ = writeln!(s, "| distinct words | {} |", st.distinct_words);
        let _ = writeln!(s, "| tags | {} |", st.tags);
        let _ = writeln!(s, "| mean length | {:.4} |", st.mean_length);
        let _ = writeln!(s, "| mean episode reward | {:.6} |", st.mean_episode_reward);

        let _ = writeln!(s, "\n## Per-tag average rewards\n");
        let _ = writeln!(
            s,
            "Rewards are softmax-normalized within each trajectory before grouping.\n"
        );
        let _ = writeln!(s, "| tag | n_s | method 1 | method 2 | rank m1 | rank m2 |\n|---|---|---|---|---|---|");
        for r in &self.summary.rows {
            let _ = writeln!(
                s,
                "| {} | {} | {:.6} | {:.6} | {} | {} |",
                r.tag, r.n_s, r.avg_m1, r.avg_m2, r.rank_m1, r.rank_m2
            );
        }
        let _ = writeln!(s, "\n## Rankings\n");
        let _ = writeln!(s, "- method 1: {}", self.summary.order_m1.join(" > "));
        let _ = writeln!(s, "- method 2: {}", self.summary.order_m2.join(" > "));
        let _ = writeln!(s, "- Spearman correlation between methods: {:.6}", self.summary.spearman);

        let _ = writeln!(s, "\n## Normalized mutual information\n");
        let _ = writeln!(
            s,
            "Rewards and numeric characteristics use {} equal-frequency bins.\n",
            self.config.bins
        );
        let (a, b) = (self.config.nmi_mode, self.config.nmi_mode.other());
        let _ = writeln!(s, "| characteristic | nmi ({}) | nmi ({}) |\n|---|---|---|", a.name(), b.name());
        for ((c, n), (_, o)) in self.mi.iter().zip(&self.mi_other) {
            let flag = if n.degenerate { " (constant marginal)" } else { "" };
            let _ = writeln!(s, "| {c} | {:.6}{flag} | {:.6} |", n.value, o.value);
        }

        if let Some(alt) = &self.alternate {
            let _ = writeln!(s, "\n## Alternate scoring policy\n");
            let _ = writeln!(s, "- method 1: {}", alt.order_m1.join(" > "));
            let _ = writeln!(s, "- method 2: {}", alt.order_m2.join(" > "));
            let _ = writeln!(
                s,
                "- Spearman vs primary: method 1 {:.6}, method 2 {:.6}",
                spearman(&self.summary.order_m1, &alt.order_m1),
                spearman(&self.summary.order_m2, &alt.order_m2)
            );
        }

        let _ = writeln!(s, "\n## Provenance\n");
        for (k, v) in &self.provenance {
            let _ = writeln!(s, "- {k}: {v}");
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        self.rewards.write_csv(&dir.join("reward_table.csv"))?;
        self.features.write_csv(&dir.join("feature_table.csv"))?;
        write_csv(&dir.join("pos_summary.csv"), &self.summary.rows)?;
        write_csv(&dir.join("mi_scores.csv"), &self.mi_scores())?;
        write_text(&dir.join("report.md"), &self.report())?;
        let m1: Vec<(String, f64)> = self.summary.rows.iter().map(|r| (r.tag.clone(), r.avg_m1)).collect();
        let m2: Vec<(String, f64)> = self.summary.rows.iter().map(|r| (r.tag.clone(), r.avg_m2)).collect();
        write_text(&dir.join("fig_method1.svg"), &bar_chart("Average reward by tag, method 1", &m1))?;
        write_text(&dir.join("fig_method2.svg"), &bar_chart("Average reward by tag, method 2", &m2))
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Vertical bar chart as a standalone SVG document.
pub fn bar_chart(title: &str, bars: &[(String, f64)]) -> String {
    let (w, h, left, bottom, top) = (640.0, 360.0, 60.0, 40.0, 40.0);
    let plot_h = h - bottom - top;
    let max = bars.iter().map(|b| b.1).fold(0.0, f64::max);
    let scale = if max > 0.0 { plot_h / max } else { 0.0 };
    let slot = (w - left - 20.0) / bars.len().max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let axis_y = h - bottom;
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{axis_y}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{axis_y}" x2="{}" y2="{axis_y}" stroke="black"/>"#, w - 20.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{max:.4}</text>"#, left - 4.0, top + 4.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">0</text>"#, left - 4.0, axis_y + 4.0);
    for (i, (tag, v)) in bars.iter().enumerate() {
        let bh = v.max(0.0) * scale;
        let x = left + i as f64 * slot + slot * 0.15;
        let _ = writeln!(
            s,
            r##"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{bh:.2}" fill="#4a78b0"><title>{}: {v:.6}</title></rect>"##,
            axis_y - bh,
            slot * 0.7,
            escape(tag)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            x + slot * 0.35,
            axis_y + 16.0,
            escape(tag)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
