//! Compression-effect and environment-effect reports built from MOS labels.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::hypothesis::{
    anova_oneway, cliffs_delta, holm_adjust, kruskal_wallis, mann_whitney, shapiro_wilk,
    tukey_hsd, welch_t, TestResult,
};
use super::{mean, variance};
use crate::error::{Error, Result};

/// Significance level used for normality gating and for the
/// `significant` flags of the report.
pub const ALPHA: f64 = 0.05;

/// A labelled sample, e.g. the MOS values of all assets encoded at one CRF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub label: String,
    pub values: Vec<f64>,
}

impl Group {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        Group {
            label: label.into(),
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

impl GroupSummary {
    fn of(g: &Group) -> Self {
        GroupSummary {
            label: g.label.clone(),
            n: g.values.len(),
            mean: mean(&g.values),
            std: variance(&g.values).sqrt(),
        }
    }
}

/// Shapiro-Wilk outcome for one group; `result` is absent when the test
/// could not be run (too few values or zero variance), which counts as
/// non-normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityCheck {
    pub label: String,
    pub result: Option<TestResult>,
    pub normal: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Path {
    /// ANOVA with Tukey HSD.
    Parametric,
    /// Kruskal-Wallis with Holm-adjusted Mann-Whitney.
    Nonparametric,
}

/// One pairwise comparison. `cliffs_delta` is `delta(a, b)`, so with groups
/// ordered by increasing compression a positive value means group `a` was
/// rated higher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub a: String,
    pub b: String,
    pub adjacent: bool,
    pub test: TestResult,
    pub p_adjusted: f64,
    pub significant: bool,
    pub cliffs_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    pub unit_of_analysis: String,
    pub groups: Vec<GroupSummary>,
    pub normality: Vec<NormalityCheck>,
    pub path: Path,
    pub omnibus: TestResult,
    pub omnibus_significant: bool,
    pub pairwise: Vec<PairwiseComparison>,
}

impl CompressionReport {
    pub fn adjacent(&self) -> impl Iterator<Item = &PairwiseComparison> {
        self.pairwise.iter().filter(|p| p.adjacent)
    }

    pub fn pair(&self, a: &str, b: &str) -> Option<&PairwiseComparison> {
        self.pairwise.iter().find(|p| p.a == a && p.b == b)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "unit of analysis: {}", self.unit_of_analysis);
        let _ = writeln!(s, "{:<12} {:>5} {:>10} {:>10}", "group", "n", "mean", "std");
        for g in &self.groups {
            let _ = writeln!(s, "{:<12} {:>5} {:>10.3} {:>10.3}", g.label, g.n, g.mean, g.std);
        }
        for c in &self.normality {
            match &c.result {
                Some(r) => {
                    let _ = writeln!(
                        s,
                        "normality {:<12} W={:.4} p={}",
                        c.label,
                        r.statistic,
                        fmt_p(r.p())
                    );
                }
                None => {
                    let _ = writeln!(
                        s,
                        "normality {:<12} not testable ({})",
                        c.label,
                        c.note.as_deref().unwrap_or("")
                    );
                }
            }
        }
        let _ = writeln!(s, "path: {:?}", self.path);
        let _ = writeln!(s, "omnibus: {}", fmt_test(&self.omnibus));
        let _ = writeln!(
            s,
            "{:<12} {:<12} {:>10} {:>10} {:>10} {:>8} {:>4}",
            "a", "b", "stat", "p", "p_adj", "delta", "sig"
        );
        for p in &self.pairwise {
            let _ = writeln!(
                s,
                "{:<12} {:<12} {:>10.3} {:>10} {:>10} {:>8.3} {:>4}",
                p.a,
                p.b,
                p.test.statistic,
                fmt_p(p.test.p()),
                fmt_p(p.p_adjusted),
                p.cliffs_delta,
                if p.significant { "*" } else { "" }
            );
        }
        s
    }
}

fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        "<.001".to_string()
    } else {
        format!("{p:.3}")
    }
}

fn fmt_test(t: &TestResult) -> String {
    let mut s = format!("{}={:.3}", t.name, t.statistic);
    match (t.df, t.df2) {
        (Some(d1), Some(d2)) => {
            let _ = write!(s, " df=({d1}, {d2})");
        }
        (Some(d), None) => {
            let _ = write!(s, " df={d:.2}");
        }
        _ => {}
    }
    if let Some(p) = t.p_value {
        let _ = write!(s, " p={}", fmt_p(p));
    }
    s
}

fn normality(g: &Group) -> NormalityCheck {
    match shapiro_wilk(&g.values) {
        Ok(r) => NormalityCheck {
            label: g.label.clone(),
            normal: r.p() > ALPHA,
            result: Some(r),
            note: None,
        },
        Err(e) => NormalityCheck {
            label: g.label.clone(),
            result: None,
            normal: false,
            note: Some(e.to_string()),
        },
    }
}

/// Kruskal-Wallis where an all-identical pooled sample is reported as
/// `H = 0, p = 1` instead of an error.
fn kruskal_or_null(groups: &[Vec<f64>]) -> Result<TestResult> {
    match kruskal_wallis(groups) {
        Err(Error::ZeroVariance(_)) => Ok(TestResult {
            name: "H".into(),
            statistic: 0.0,
            df: Some((groups.len() - 1) as f64),
            df2: None,
            p_value: Some(1.0),
        }),
        other => other,
    }
}

/// Tests whether the groups (ordered by increasing compression) differ.
/// All groups normal: ANOVA then Tukey HSD. Otherwise Kruskal-Wallis then
/// Holm-adjusted pairwise Mann-Whitney. Cliff's delta accompanies every
/// pair.
pub fn compression_effect_report(groups: &[Group], unit_of_analysis: &str) -> Result<CompressionReport> {
    if groups.len() < 2 {
        return Err(Error::Precondition(format!(
            "compression report needs at least two groups, got {}",
            groups.len()
        )));
    }
    if let Some(g) = groups.iter().find(|g| g.values.is_empty()) {
        return Err(Error::Precondition(format!("group `{}` is empty", g.label)));
    }
    let values: Vec<Vec<f64>> = groups.iter().map(|g| g.values.clone()).collect();
    let normality: Vec<NormalityCheck> = groups.iter().map(normality).collect();
    let all_normal = normality.iter().all(|c| c.normal);

    let mut pairs = Vec::new();
    for a in 0..groups.len() {
        for b in a + 1..groups.len() {
            pairs.push((a, b));
        }
    }

    let (path, omnibus, tests, adjusted) = if all_normal {
        let omnibus = anova_oneway(&values)?;
        let tukey = tukey_hsd(&values)?;
        let tests: Vec<TestResult> = tukey.into_iter().map(|t| t.result).collect();
        let adjusted = tests.iter().map(TestResult::p).collect();
        (Path::Parametric, omnibus, tests, adjusted)
    } else {
        let omnibus = kruskal_or_null(&values)?;
        let tests = pairs
            .iter()
            .map(|&(a, b)| mann_whitney(&values[a], &values[b]))
            .collect::<Result<Vec<_>>>()?;
        let raw: Vec<f64> = tests.iter().map(TestResult::p).collect();
        let adjusted = holm_adjust(&raw)?;
        (Path::Nonparametric, omnibus, tests, adjusted)
    };

    let pairwise = pairs
        .iter()
        .zip(tests)
        .zip(adjusted)
        .map(|((&(a, b), test), p_adjusted)| {
            Ok(PairwiseComparison {
                a: groups[a].label.clone(),
                b: groups[b].label.clone(),
                adjacent: b == a + 1,
                test,
                p_adjusted,
                significant: p_adjusted < ALPHA,
                cliffs_delta: cliffs_delta(&values[a], &values[b])?.statistic,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(CompressionReport {
        unit_of_analysis: unit_of_analysis.to_string(),
        groups: groups.iter().map(GroupSummary::of).collect(),
        normality,
        path,
        omnibus_significant: omnibus.p() < ALPHA,
        omnibus,
        pairwise,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTest {
    pub comparison: String,
    pub result: TestResult,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentReport {
    pub unit_of_analysis: String,
    pub groups: Vec<GroupSummary>,
    pub omnibus: TestResult,
    pub omnibus_significant: bool,
    pub contrasts: Vec<NamedTest>,
}

impl EnvironmentReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "unit of analysis: {}", self.unit_of_analysis);
        for g in &self.groups {
            let _ = writeln!(s, "{:<12} {:>5} {:>10.3} {:>10.3}", g.label, g.n, g.mean, g.std);
        }
        let _ = writeln!(s, "omnibus: {}", fmt_test(&self.omnibus));
        for c in &self.contrasts {
            let _ = writeln!(s, "{}: {}", c.comparison, fmt_test(&c.result));
        }
        s
    }
}

/// Environmental effects across scene categories: Kruskal-Wallis over all
/// categories plus Welch contrasts good vs bad weather (daytime) and day vs
/// night (good weather). Contrasts whose categories are missing are
/// skipped.
pub fn environment_report(
    day_good: &[f64],
    day_bad: &[f64],
    night_good: &[f64],
    unit_of_analysis: &str,
) -> Result<EnvironmentReport> {
    let groups = [
        Group::new("day_good", day_good.to_vec()),
        Group::new("day_bad", day_bad.to_vec()),
        Group::new("night_good", night_good.to_vec()),
    ];
    let present: Vec<&Group> = groups.iter().filter(|g| !g.values.is_empty()).collect();
    if present.len() < 2 {
        return Err(Error::Precondition(
            "environment report needs at least two nonempty categories".into(),
        ));
    }
    let values: Vec<Vec<f64>> = present.iter().map(|g| g.values.clone()).collect();
    let omnibus = kruskal_or_null(&values)?;
    let mut contrasts = Vec::new();
    for (name, a, b) in [
        ("weather: day_good vs day_bad", day_good, day_bad),
        ("time: day_good vs night_good", day_good, night_good),
    ] {
        if a.len() >= 2 && b.len() >= 2 {
            let result = match welch_t(a, b) {
                Err(Error::ZeroVariance(_)) if mean(a) == mean(b) => TestResult {
                    name: "t".into(),
                    statistic: 0.0,
                    df: None,
                    df2: None,
                    p_value: Some(1.0),
                },
                other => other?,
            };
            contrasts.push(NamedTest {
                comparison: name.to_string(),
                significant: result.p() < ALPHA,
                result,
            });
        }
    }
    Ok(EnvironmentReport {
        unit_of_analysis: unit_of_analysis.to_string(),
        groups: present.into_iter().map(GroupSummary::of).collect(),
        omnibus_significant: omnibus.p() < ALPHA,
        omnibus,
        contrasts,
    })
}
