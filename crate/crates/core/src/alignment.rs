//! Agreement between model predictions and subjective scores.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::average_ranks;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub asset_id: String,
    pub mos: f64,
    pub prediction: f64,
    /// `prediction - mos`.
    pub residual: f64,
}

impl Residual {
    /// Outlier sign convention: `mos - prediction`, so a negative value
    /// means the model overrated the clip.
    pub fn delta(&self) -> f64 {
        self.mos - self.prediction
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub n: usize,
    pub mad: f64,
    pub mse: f64,
    pub rmse: f64,
    /// NaN (serialized as null) when either series has zero variance.
    #[serde(with = "nan_as_null")]
    pub pearson_r: f64,
    #[serde(with = "nan_as_null")]
    pub spearman_rho: f64,
    pub correlation_undefined: bool,
    /// Sorted by asset id.
    pub residuals: Vec<Residual>,
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Pearson correlation; `None` if either series is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman correlation: Pearson on average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

fn describe_keys(keys: &BTreeSet<&String>) -> String {
    let shown: Vec<&str> = keys.iter().take(5).map(|s| s.as_str()).collect();
    let more = keys.len().saturating_sub(shown.len());
    if more > 0 {
        format!("{} (+{more} more)", shown.join(", "))
    } else {
        shown.join(", ")
    }
}

pub fn evaluate(
    predictions: &BTreeMap<String, f64>,
    labels: &BTreeMap<String, f64>,
) -> Result<AlignmentReport> {
    let pk: BTreeSet<&String> = predictions.keys().collect();
    let lk: BTreeSet<&String> = labels.keys().collect();
    if pk != lk {
        let only_p: BTreeSet<&String> = pk.difference(&lk).copied().collect();
        let only_l: BTreeSet<&String> = lk.difference(&pk).copied().collect();
        return Err(Error::KeyMismatch(format!(
            "predictions only: [{}]; labels only: [{}]",
            describe_keys(&only_p),
            describe_keys(&only_l)
        )));
    }
    if predictions.len() < 3 {
        return Err(Error::Precondition(format!(
            "alignment needs at least 3 assets, got {}",
            predictions.len()
        )));
    }
    if predictions.values().chain(labels.values()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("alignment input".into()));
    }
    let residuals: Vec<Residual> = labels
        .iter()
        .map(|(id, &mos)| {
            let prediction = predictions[id];
            Residual {
                asset_id: id.clone(),
                mos,
                prediction,
                residual: prediction - mos,
            }
        })
        .collect();
    let n = residuals.len() as f64;
    let mad = residuals.iter().map(|r| r.residual.abs()).sum::<f64>() / n;
    let mse = residuals.iter().map(|r| r.residual * r.residual).sum::<f64>() / n;
    let p: Vec<f64> = residuals.iter().map(|r| r.prediction).collect();
    let l: Vec<f64> = residuals.iter().map(|r| r.mos).collect();
    let r = pearson(&p, &l);
    let rho = spearman(&p, &l);
    Ok(AlignmentReport {
        n: residuals.len(),
        mad,
        mse,
        rmse: mse.sqrt(),
        pearson_r: r.unwrap_or(f64::NAN),
        spearman_rho: rho.unwrap_or(f64::NAN),
        correlation_undefined: r.is_none() || rho.is_none(),
        residuals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: String,
    pub old: f64,
    pub new: f64,
    pub delta: f64,
    /// `(old - new) / old * 100` for error metrics, `(new - old) / |old| *
    /// 100` for correlations, so positive always means better.
    pub improvement_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub n: usize,
    pub metrics: Vec<MetricDelta>,
}

impl ModelComparison {
    pub fn metric(&self, name: &str) -> Option<&MetricDelta> {
        self.metrics.iter().find(|m| m.metric == name)
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<10} {:>10} {:>10} {:>10} {:>10}\n", "metric", "old", "new", "delta", "improv%");
        for m in &self.metrics {
            s.push_str(&format!(
                "{:<10} {:>10.4} {:>10.4} {:>10.4} {:>10.1}\n",
                m.metric, m.old, m.new, m.delta, m.improvement_pct
            ));
        }
        s
    }
}

/// Percent improvement of an error metric, `(old - new) / old * 100`;
/// 0 when both are 0.
pub fn error_improvement(old: f64, new: f64) -> f64 {
    if old == new {
        0.0
    } else {
        (old - new) / old * 100.0
    }
}

fn correlation_improvement(old: f64, new: f64) -> f64 {
    if old == new || !old.is_finite() || !new.is_finite() {
        0.0
    } else {
        (new - old) / old.abs() * 100.0
    }
}

/// Compares an old (baseline) and a new report computed on the same assets.
pub fn compare_models(old: &AlignmentReport, new: &AlignmentReport) -> Result<ModelComparison> {
    let ids = |r: &AlignmentReport| -> Vec<String> {
        r.residuals.iter().map(|x| x.asset_id.clone()).collect()
    };
    if ids(old) != ids(new) {
        return Err(Error::KeyMismatch("reports cover different asset sets".into()));
    }
    let error = |metric: &str, o: f64, n: f64| MetricDelta {
        metric: metric.into(),
        old: o,
        new: n,
        delta: n - o,
        improvement_pct: error_improvement(o, n),
    };
    let corr = |metric: &str, o: f64, n: f64| MetricDelta {
        metric: metric.into(),
        old: o,
        new: n,
        delta: n - o,
        improvement_pct: correlation_improvement(o, n),
    };
    Ok(ModelComparison {
        n: old.n,
        metrics: vec![
            error("mad", old.mad, new.mad),
            error("mse", old.mse, new.mse),
            error("rmse", old.rmse, new.rmse),
            corr("pearson", old.pearson_r, new.pearson_r),
            corr("spearman", old.spearman_rho, new.spearman_rho),
        ],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outlier {
    pub asset_id: String,
    pub mos: f64,
    pub prediction: f64,
    /// `mos - prediction`.
    pub delta: f64,
}

/// The `k` assets with the largest `|mos - prediction|`, descending; ties
/// keep asset-id order.
pub fn outlier_report(report: &AlignmentReport, k: usize) -> Result<Vec<Outlier>> {
    if k > report.n {
        return Err(Error::Precondition(format!(
            "requested {k} outliers from {} assets",
            report.n
        )));
    }
    let mut all: Vec<Outlier> = report
        .residuals
        .iter()
        .map(|r| Outlier {
            asset_id: r.asset_id.clone(),
            mos: r.mos,
            prediction: r.prediction,
            delta: r.delta(),
        })
        .collect();
    all.sort_by(|a, b| b.delta.abs().total_cmp(&a.delta.abs()));
    all.truncate(k);
    Ok(all)
}

/// Extra per-asset columns for the residual dump.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssetInfo {
    pub category: String,
    pub crf: u32,
}

/// CSV with `asset_id,mos,prediction,residual,category,crf`; unknown
/// assets get empty category/crf cells.
pub fn write_residual_csv<W: Write>(
    report: &AlignmentReport,
    info: &BTreeMap<String, AssetInfo>,
    w: W,
) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    writer.write_record(["asset_id", "mos", "prediction", "residual", "category", "crf"])?;
    for r in &report.residuals {
        let (category, crf) = match info.get(&r.asset_id) {
            Some(i) => (i.category.clone(), i.crf.to_string()),
            None => (String::new(), String::new()),
        };
        writer.write_record([
            r.asset_id.clone(),
            r.mos.to_string(),
            r.prediction.to_string(),
            r.residual.to_string(),
            category,
            crf,
        ])?;
    }
    writer.flush().map_err(|e| Error::io("<residual csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn perfect_agreement() {
        let l = map(&[("a", 10.0), ("b", 20.0), ("c", 35.0)]);
        let r = evaluate(&l, &l).unwrap();
        assert_eq!((r.mad, r.rmse, r.pearson_r, r.spearman_rho), (0.0, 0.0, 1.0, 1.0));
    }

    #[test]
    fn constant_predictions_flag_correlations() {
        let p = map(&[("a", 0.0), ("b", 0.0), ("c", 0.0)]);
        let l = map(&[("a", 3.0), ("b", 4.0), ("c", 5.0)]);
        let r = evaluate(&p, &l).unwrap();
        assert!(r.correlation_undefined && r.pearson_r.is_nan());
        assert_eq!(r.mad, 4.0);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"pearson_r\":null"));
        let back: AlignmentReport = serde_json::from_str(&json).unwrap();
        assert!(back.spearman_rho.is_nan());
    }

    #[test]
    fn key_mismatch() {
        let p = map(&[("a", 0.0), ("b", 0.0), ("c", 0.0)]);
        let l = map(&[("a", 3.0), ("b", 4.0), ("d", 5.0)]);
        assert!(matches!(evaluate(&p, &l), Err(Error::KeyMismatch(m)) if m.contains("c") && m.contains("d")));
    }

    #[test]
    fn improvement_percentages() {
        assert!((error_improvement(10.36, 8.83) - 14.768).abs() < 1e-3);
        assert!((error_improvement(8.71, 6.38) - 26.751).abs() < 1e-3);
        assert_eq!(error_improvement(5.0, 5.0), 0.0);
    }

    #[test]
    fn outliers_use_mos_minus_prediction() {
        let p = map(&[("x", 68.9), ("y", 46.2), ("z", 50.0)]);
        let l = map(&[("x", 38.8), ("y", 55.8), ("z", 50.0)]);
        let r = evaluate(&p, &l).unwrap();
        let o = outlier_report(&r, 3).unwrap();
        assert_eq!(o[0].asset_id, "x");
        assert!((o[0].delta + 30.1).abs() < 1e-9);
        assert!((o[1].delta - 9.6).abs() < 1e-9);
        assert_eq!(o[2].delta, 0.0);
        assert!(outlier_report(&r, 4).is_err());
    }

    #[test]
    fn residual_csv_columns() {
        let l = map(&[("a", 10.0), ("b", 20.0), ("c", 35.0)]);
        let r = evaluate(&l, &l).unwrap();
        let info = BTreeMap::from([(
            "a".to_string(),
            AssetInfo {
                category: "day_good".into(),
                crf: 30,
            },
        )]);
        let mut buf = Vec::new();
        write_residual_csv(&r, &info, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("asset_id,mos,prediction,residual,category,crf\na,10,10,0,day_good,30\n"));
        assert!(text.contains("b,20,20,0,,\n"));
    }
}
