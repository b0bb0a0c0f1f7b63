//! Statistics for subjective studies: hypothesis tests, effect sizes,
//! reliability, MOS aggregation and the compression/environment reports.

pub mod hypothesis;
pub mod ratings;
pub mod report;
pub mod special;

pub use hypothesis::{
    anova_oneway, cliffs_delta, cronbach_alpha, holm_adjust, kruskal_wallis, mann_whitney,
    shapiro_wilk, tukey_hsd, welch_t, PairwiseResult, TestResult,
};
pub use ratings::{
    aggregate_mos, group_by_asset, item_matrix, read_object_checks, read_ratings,
    screen_participants, to_vmaf_scale, write_ratings, Dimension, MosLabel, ObjectCheck,
    RatingRecord,
};
pub use report::{
    compression_effect_report, environment_report, CompressionReport, EnvironmentReport, Group,
    PairwiseComparison,
};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the `n - 1` denominator; 0 for fewer than 2 values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// 1-based ranks with ties replaced by their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Sizes of tie groups, for tie corrections.
pub(crate) fn tie_sizes(xs: &[f64]) -> Vec<usize> {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        out.push(j - i + 1);
        i = j + 1;
    }
    out
}
