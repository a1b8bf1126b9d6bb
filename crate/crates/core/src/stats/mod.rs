//! Self-contained statistics engine.

pub mod descriptive;
pub mod kde;
pub mod special;
pub mod tests;

pub use descriptive::{mean, quantile, std_dev, summarize, variance, StatSummary};
pub use kde::{kde, kde_auto, silverman_bandwidth, trapezoid, KdeCurve};
pub use tests::{
    anova_oneway, average_ranks, fisher_z_p, pairwise_welch_bonferroni, pearson, spearman,
    welch_t, PairwiseComparison, TestKind, TestResult,
};
