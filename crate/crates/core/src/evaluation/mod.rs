//! Accuracy tables, paired statistics and binned analyses.

mod analysis;
mod stats;
mod table;

pub use analysis::{
    bin_by_intensity, bin_by_orientation, bin_by_yaw, mav_msa_day_report, trim_transitions, trimmed_indices, Bin,
    BinnedAnalysis, DayComparison, DayReport, DayStats, DEFAULT_INTENSITY_BIN, DEFAULT_MIN_COUNT,
    DEFAULT_ORIENTATION_GRID, DEFAULT_TRIM_S,
};
pub use stats::{accuracy, cohens_dz, mid_ranks, pearson_r, wilcoxon_signed_rank, Wilcoxon, WILCOXON_EXACT_MAX_N};
pub use table::{AccuracyRow, AccuracyTable, SchemeComparison, TestSet};
