//! Rating records, the shared rating-export CSV, participant screening and
//! MOS aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::hypothesis::ci95_half_width;
use super::{mean, variance};
use crate::error::{Error, Result};

/// Questionnaire dimensions. The first three are rated after the compressed
/// clip; `Reflection` after the original.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    DetailLoss,
    Drivability,
    SituationalAwareness,
    Reflection,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::DetailLoss,
        Dimension::Drivability,
        Dimension::SituationalAwareness,
        Dimension::Reflection,
    ];
    /// Dimensions pooled into the training label by default.
    pub const LABEL: [Dimension; 3] = [
        Dimension::DetailLoss,
        Dimension::Drivability,
        Dimension::SituationalAwareness,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Dimension::DetailLoss => "detail_loss",
            Dimension::Drivability => "drivability",
            Dimension::SituationalAwareness => "situational_awareness",
            Dimension::Reflection => "reflection",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::Rating(format!("unknown dimension `{s}`")))
    }
}

/// One Likert answer. Serialized as a row of the rating export:
/// `asset_id,participant_id,dimension,item,value`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RatingRecord {
    pub asset_id: String,
    pub participant_id: String,
    pub dimension: Dimension,
    #[serde(rename = "item")]
    pub item_id: String,
    pub value: u8,
}

impl RatingRecord {
    pub fn validate(&self) -> Result<()> {
        if !(1..=5).contains(&self.value) {
            return Err(Error::Rating(format!(
                "value {} for {}/{} outside 1..=5",
                self.value, self.participant_id, self.asset_id
            )));
        }
        Ok(())
    }
}

pub fn read_ratings<R: Read>(r: R) -> Result<Vec<RatingRecord>> {
    let mut reader = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in reader.deserialize::<RatingRecord>() {
        let rec = rec.map_err(|e| Error::Rating(e.to_string()))?;
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_ratings<W: Write>(records: &[RatingRecord], w: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    if records.is_empty() {
        writer.write_record(["asset_id", "participant_id", "dimension", "item", "value"])?;
    }
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush().map_err(|e| Error::io("<ratings csv>", e))?;
    Ok(())
}

/// Outcome of the object-identification question for one scenario.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjectCheck {
    pub participant_id: String,
    pub asset_id: String,
    pub correct: bool,
}

pub fn read_object_checks<R: Read>(r: R) -> Result<Vec<ObjectCheck>> {
    let mut reader = csv::Reader::from_reader(r);
    reader
        .deserialize::<ObjectCheck>()
        .map(|r| r.map_err(|e| Error::Rating(e.to_string())))
        .collect()
}

/// Participants whose failed object checks exceed `max_failure_fraction`
/// of their scenarios.
pub fn screen_participants(checks: &[ObjectCheck], max_failure_fraction: f64) -> BTreeSet<String> {
    let mut tally: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for c in checks {
        let e = tally.entry(&c.participant_id).or_default();
        e.1 += 1;
        if !c.correct {
            e.0 += 1;
        }
    }
    tally
        .into_iter()
        .filter(|(_, (failed, total))| *failed as f64 / *total as f64 > max_failure_fraction)
        .map(|(p, _)| p.to_string())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosLabel {
    pub asset_id: String,
    /// Mean Likert score in [1, 5].
    pub mos_raw: f64,
    /// `(mos_raw - 1) * 25`, on [0, 100].
    pub mos_vmaf: f64,
    pub n_raters: usize,
    /// Standard deviation of participant means (raw scale).
    pub std: f64,
    pub ci95_half_width: f64,
}

pub fn to_vmaf_scale(mos_raw: f64) -> f64 {
    (mos_raw - 1.0) * 25.0
}

/// Aggregates the records of one asset: each participant's mean over all
/// items in `dimensions`, then the mean over participants.
pub fn aggregate_mos(records: &[RatingRecord], dimensions: &[Dimension]) -> Result<MosLabel> {
    let first = records
        .first()
        .ok_or_else(|| Error::Empty("no ratings for asset".into()))?;
    let asset_id = first.asset_id.clone();
    let mut per_participant: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut seen_dims = BTreeSet::new();
    for r in records {
        r.validate()?;
        if r.asset_id != asset_id {
            return Err(Error::Rating(format!(
                "mixed assets `{asset_id}` and `{}` in one aggregation",
                r.asset_id
            )));
        }
        if dimensions.contains(&r.dimension) {
            seen_dims.insert(r.dimension);
            per_participant
                .entry(&r.participant_id)
                .or_default()
                .push(f64::from(r.value));
        }
    }
    if let Some(missing) = dimensions.iter().find(|d| !seen_dims.contains(d)) {
        return Err(Error::Rating(format!(
            "asset `{asset_id}` has no ratings for dimension {missing}"
        )));
    }
    let means: Vec<f64> = per_participant.values().map(|v| mean(v)).collect();
    let mos_raw = mean(&means);
    let std = variance(&means).sqrt();
    Ok(MosLabel {
        asset_id,
        mos_raw,
        mos_vmaf: to_vmaf_scale(mos_raw),
        n_raters: means.len(),
        std,
        ci95_half_width: ci95_half_width(std, means.len()),
    })
}

/// Groups records by asset, dropping excluded participants.
pub fn group_by_asset<'a>(
    records: &'a [RatingRecord],
    excluded: &BTreeSet<String>,
) -> BTreeMap<&'a str, Vec<RatingRecord>> {
    let mut out: BTreeMap<&str, Vec<RatingRecord>> = BTreeMap::new();
    for r in records {
        if !excluded.contains(&r.participant_id) {
            out.entry(&r.asset_id).or_default().push(r.clone());
        }
    }
    out
}

/// Participant-occasion x item matrix for reliability analysis. Rows are
/// (participant, asset) pairs, columns the distinct (dimension, item)
/// pairs; rows with any missing cell are dropped (listwise deletion).
pub fn item_matrix(records: &[RatingRecord], dimensions: &[Dimension]) -> Vec<Vec<f64>> {
    let columns: BTreeSet<(Dimension, &str)> = records
        .iter()
        .filter(|r| dimensions.contains(&r.dimension))
        .map(|r| (r.dimension, r.item_id.as_str()))
        .collect();
    let columns: Vec<(Dimension, &str)> = columns.into_iter().collect();
    let mut rows: BTreeMap<(&str, &str), BTreeMap<(Dimension, &str), f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| dimensions.contains(&r.dimension)) {
        rows.entry((&r.participant_id, &r.asset_id))
            .or_default()
            .insert((r.dimension, &r.item_id), f64::from(r.value));
    }
    rows.into_values()
        .filter_map(|cells| columns.iter().map(|c| cells.get(c).copied()).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(p: &str, dim: Dimension, item: &str, value: u8) -> RatingRecord {
        RatingRecord {
            asset_id: "a1".into(),
            participant_id: p.into(),
            dimension: dim,
            item_id: item.into(),
            value,
        }
    }

    fn all_dims(p: &str, value: u8) -> Vec<RatingRecord> {
        Dimension::LABEL
            .iter()
            .flat_map(|&d| (0..2).map(move |i| rec(p, d, &format!("i{i}"), value)))
            .collect()
    }

    #[test]
    fn scale_endpoints() {
        let top = aggregate_mos(&all_dims("p1", 5), &Dimension::LABEL).unwrap();
        assert_eq!((top.mos_raw, top.mos_vmaf), (5.0, 100.0));
        let bottom = aggregate_mos(&all_dims("p1", 1), &Dimension::LABEL).unwrap();
        assert_eq!(bottom.mos_vmaf, 0.0);
        assert!((to_vmaf_scale(3.2) - (25.0 * 3.2 - 25.0)).abs() < 1e-12);
    }

    #[test]
    fn participant_means_then_grand_mean() {
        let mut records = all_dims("p1", 2);
        records.extend(all_dims("p2", 4));
        let m = aggregate_mos(&records, &Dimension::LABEL).unwrap();
        assert_eq!((m.mos_raw, m.mos_vmaf, m.n_raters), (3.0, 50.0, 2));
        assert!((m.std - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn aggregation_errors() {
        assert!(matches!(
            aggregate_mos(&[], &Dimension::LABEL),
            Err(Error::Empty(_))
        ));
        assert!(matches!(
            aggregate_mos(&[rec("p", Dimension::DetailLoss, "i", 6)], &[Dimension::DetailLoss]),
            Err(Error::Rating(_))
        ));
        assert!(matches!(
            aggregate_mos(&[rec("p", Dimension::DetailLoss, "i", 3)], &Dimension::LABEL),
            Err(Error::Rating(_))
        ));
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let records = all_dims("p9", 3);
        let mut buf = Vec::new();
        write_ratings(&records, &mut buf).unwrap();
        assert!(buf.starts_with(b"asset_id,participant_id,dimension,item,value\n"));
        assert_eq!(read_ratings(&buf[..]).unwrap(), records);
        let bad = b"asset_id,participant_id,dimension,item,value\na,p,glare,i,3\n";
        assert!(read_ratings(&bad[..]).is_err());
        let bad = b"asset_id,participant_id,dimension,item,value\na,p,drivability,i,0\n";
        assert!(read_ratings(&bad[..]).is_err());
    }

    #[test]
    fn screening_threshold() {
        let checks: Vec<ObjectCheck> = (0..4)
            .map(|i| ObjectCheck {
                participant_id: "p".into(),
                asset_id: format!("a{i}"),
                correct: i < 2,
            })
            .chain((0..4).map(|i| ObjectCheck {
                participant_id: "q".into(),
                asset_id: format!("a{i}"),
                correct: i < 1,
            }))
            .collect();
        let excluded = screen_participants(&checks, 0.5);
        assert_eq!(excluded.into_iter().collect::<Vec<_>>(), vec!["q".to_string()]);
    }

    #[test]
    fn item_matrix_listwise_deletion() {
        let mut records = all_dims("p1", 3);
        let mut partial = all_dims("p2", 4);
        partial.pop();
        records.extend(partial);
        let m = item_matrix(&records, &Dimension::LABEL);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].len(), 6);
    }
}
