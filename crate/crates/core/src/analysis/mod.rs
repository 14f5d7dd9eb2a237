//! Reward aggregation over scored expert trajectories: per-trajectory softmax
//! normalization, per-tag averages under two weightings, and normalized mutual
//! information between word characteristics and rewards.

mod aggregate;
mod mi;
mod report;
mod tables;

pub use aggregate::{
    avg_method1, avg_method2, rank_tags, ranks, spearman, PosSummary, PosSummaryRow, TagAverages,
};
pub use mi::{discretize, entropy, nmi_from_codes, nmi_from_joint, normalized_mi, Nmi, NmiMode, Series};
pub use report::{bar_chart, characteristic_mi, Analysis, AnalysisConfig, DatasetStats, MiScore, CHARACTERISTICS};
pub use tables::{normalize_rewards, FeatureRow, FeatureTable, RewardField, RewardRow, RewardTable};
