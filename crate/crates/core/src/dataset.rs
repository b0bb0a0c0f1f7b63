//! Scene/asset manifests, compressed-variant generation through an external
//! encoder, scene-disjoint splitting and label joining.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_io::FrameRate;
use crate::stats::ratings::{aggregate_mos, group_by_asset, Dimension, MosLabel, RatingRecord};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
/// Compression levels of the study; `0` marks the uncompressed reference.
pub const CRF_LEVELS: [u32; 4] = [30, 36, 42, 48];
pub const REFERENCE_CRF: u32 = 0;
pub const DEFAULT_MIN_RATERS: usize = 15;
pub const DEFAULT_ENCODER_TEMPLATE: &str =
    "ffmpeg -y -loglevel error -i {input} -c:v libx264 -preset slow -crf {crf} {output}";
pub const DEFAULT_DECODER_TEMPLATE: &str =
    "ffmpeg -y -loglevel error -i {input} -pix_fmt yuv420p -f yuv4mpegpipe {output}";

/// Minimum declared source geometry for curated footage.
pub const CURATION_MIN_WIDTH: usize = 1920;
pub const CURATION_MIN_HEIGHT: usize = 1200;
pub const CURATION_MIN_FPS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    DayGood,
    DayBad,
    NightGood,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::DayGood, Category::DayBad, Category::NightGood];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::DayGood => "day_good",
            Category::DayBad => "day_bad",
            Category::NightGood => "night_good",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Manifest(format!("unknown category `{s}`")))
    }
}

/// Declared geometry of a source clip; required to read raw `.yuv` files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub width: usize,
    pub height: usize,
    pub fps: FrameRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub content_id: String,
    pub category: Category,
    pub reference_path: PathBuf,
    /// Seconds.
    pub duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<Geometry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetEntry {
    pub asset_id: String,
    pub content_id: String,
    pub crf: u32,
    pub path: PathBuf,
    /// Uncompressed 4:2:0 rendition of `path` used for feature extraction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoded_path: Option<PathBuf>,
}

impl AssetEntry {
    pub fn is_reference(&self) -> bool {
        self.crf == REFERENCE_CRF
    }

    /// The file to read frames from.
    pub fn media_path(&self) -> &Path {
        self.decoded_path.as_deref().unwrap_or(&self.path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder_version: Option<String>,
    pub scenes: Vec<SceneEntry>,
    #[serde(default)]
    pub assets: Vec<AssetEntry>,
    /// asset_id -> label on [0, 100].
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, f64>,
}

impl DatasetManifest {
    pub fn new(scenes: Vec<SceneEntry>) -> Self {
        DatasetManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            encoder_version: None,
            scenes,
            assets: Vec::new(),
            labels: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Manifest(format!(
                "schema_version {} is not supported (expected {MANIFEST_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let mut scenes = BTreeSet::new();
        for s in &self.scenes {
            if s.content_id.is_empty() {
                return Err(Error::Manifest("empty content_id".into()));
            }
            if !scenes.insert(s.content_id.as_str()) {
                return Err(Error::Manifest(format!("duplicate content_id `{}`", s.content_id)));
            }
            if !(s.duration.is_finite() && s.duration > 0.0) {
                return Err(Error::Manifest(format!(
                    "scene `{}` has invalid duration {}",
                    s.content_id, s.duration
                )));
            }
        }
        let mut assets = BTreeSet::new();
        let mut variants = BTreeSet::new();
        for a in &self.assets {
            if !scenes.contains(a.content_id.as_str()) {
                return Err(Error::Manifest(format!(
                    "asset `{}` references missing scene `{}`",
                    a.asset_id, a.content_id
                )));
            }
            if a.crf != REFERENCE_CRF && !CRF_LEVELS.contains(&a.crf) {
                return Err(Error::Manifest(format!(
                    "asset `{}` has crf {} outside {{0, 30, 36, 42, 48}}",
                    a.asset_id, a.crf
                )));
            }
            if !assets.insert(a.asset_id.as_str()) {
                return Err(Error::Manifest(format!("duplicate asset_id `{}`", a.asset_id)));
            }
            if !variants.insert((a.content_id.as_str(), a.crf)) {
                return Err(Error::Manifest(format!(
                    "scene `{}` has two assets at crf {}",
                    a.content_id, a.crf
                )));
            }
        }
        for (id, &label) in &self.labels {
            if !assets.contains(id.as_str()) {
                return Err(Error::Manifest(format!("label for unknown asset `{id}`")));
            }
            if !(0.0..=100.0).contains(&label) {
                return Err(Error::Manifest(format!("label {label} for `{id}` outside [0, 100]")));
            }
        }
        Ok(())
    }

    pub fn scene(&self, content_id: &str) -> Option<&SceneEntry> {
        self.scenes.iter().find(|s| s.content_id == content_id)
    }

    pub fn asset(&self, asset_id: &str) -> Option<&AssetEntry> {
        self.assets.iter().find(|a| a.asset_id == asset_id)
    }

    /// Compressed variants, in manifest order.
    pub fn distorted_assets(&self) -> impl Iterator<Item = &AssetEntry> {
        self.assets.iter().filter(|a| !a.is_reference())
    }

    pub fn has_variant(&self, content_id: &str, crf: u32) -> bool {
        self.assets
            .iter()
            .any(|a| a.content_id == content_id && a.crf == crf)
    }

    /// Scenes whose declared geometry falls below the curation thresholds.
    /// Scenes without declared geometry are not checked.
    pub fn curation_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for s in &self.scenes {
            if let Some(g) = s.geometry {
                if g.width < CURATION_MIN_WIDTH || g.height < CURATION_MIN_HEIGHT {
                    out.push(format!(
                        "scene `{}` is {}x{}, below {CURATION_MIN_WIDTH}x{CURATION_MIN_HEIGHT}",
                        s.content_id, g.width, g.height
                    ));
                }
                if g.fps.as_f64() < CURATION_MIN_FPS {
                    out.push(format!(
                        "scene `{}` runs at {} fps, below {CURATION_MIN_FPS}",
                        s.content_id,
                        g.fps.as_f64()
                    ));
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn parse_manifest(text: &str) -> Result<DatasetManifest> {
    let manifest: DatasetManifest =
        serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

/// A shell-free command line with `{name}` placeholders, split with POSIX
/// shell quoting rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandTemplate {
    args: Vec<String>,
}

impl CommandTemplate {
    pub const ENCODE_PLACEHOLDERS: [&'static str; 3] = ["{input}", "{output}", "{crf}"];
    pub const DECODE_PLACEHOLDERS: [&'static str; 2] = ["{input}", "{output}"];

    pub fn parse(template: &str, required: &[&str]) -> Result<Self> {
        let args = shlex::split(template)
            .ok_or_else(|| Error::EncoderConfig(format!("unbalanced quoting in `{template}`")))?;
        if args.is_empty() {
            return Err(Error::EncoderConfig("empty command template".into()));
        }
        for p in required {
            if !args.iter().any(|a| a.contains(p)) {
                return Err(Error::EncoderConfig(format!(
                    "template `{template}` lacks placeholder {p}"
                )));
            }
        }
        Ok(CommandTemplate { args })
    }

    pub fn program(&self) -> &str {
        &self.args[0]
    }

    /// Arguments with every `{key}` replaced by its value.
    pub fn render(&self, values: &[(&str, &str)]) -> Vec<String> {
        self.args
            .iter()
            .map(|a| {
                values.iter().fold(a.clone(), |acc, (k, v)| {
                    acc.replace(&format!("{{{k}}}"), v)
                })
            })
            .collect()
    }

    pub fn run(&self, values: &[(&str, &str)]) -> Result<()> {
        let argv = self.render(values);
        let shown = argv.join(" ");
        let output = Command::new(&argv[0])
            .args(&argv[1..])
            .output()
            .map_err(|e| Error::External {
                command: shown.clone(),
                reason: e.to_string(),
            })?;
        if !output.status.success() {
            let stderr = String::from_utf8_lossy(&output.stderr);
            return Err(Error::External {
                command: shown,
                reason: format!("{} ({})", output.status, stderr.trim()),
            });
        }
        Ok(())
    }

    /// First line printed by `<program> -version`, or `"unknown"`.
    pub fn version(&self) -> String {
        Command::new(self.program())
            .arg("-version")
            .output()
            .ok()
            .filter(|o| o.status.success())
            .and_then(|o| {
                String::from_utf8_lossy(&o.stdout)
                    .lines()
                    .next()
                    .map(|l| l.trim().to_string())
            })
            .filter(|l| !l.is_empty())
            .unwrap_or_else(|| "unknown".to_string())
    }
}

#[derive(Debug, Clone)]
pub struct EncodeOptions {
    pub encoder: CommandTemplate,
    /// Optional second pass producing a Y4M rendition for feature
    /// extraction.
    pub decoder: Option<CommandTemplate>,
    pub out_dir: PathBuf,
    /// Extension of encoded files, without the dot.
    pub extension: String,
}

pub fn asset_id_for(content_id: &str, crf: u32) -> String {
    format!("{content_id}_crf{crf}")
}

/// Encodes one scene at each CRF by invoking the configured encoder once
/// per level. Returns the new assets in `crfs` order.
pub fn encode_variants(
    scene: &SceneEntry,
    crfs: &[u32],
    options: &EncodeOptions,
) -> Result<Vec<AssetEntry>> {
    if crfs.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(bad) = crfs.iter().find(|c| !CRF_LEVELS.contains(c)) {
        return Err(Error::InvalidParameter(format!("crf {bad} outside {{30, 36, 42, 48}}")));
    }
    if !scene.reference_path.is_file() {
        return Err(Error::io(
            &scene.reference_path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "reference file not found"),
        ));
    }
    let input = scene.reference_path.to_string_lossy().into_owned();
    let mut out = Vec::with_capacity(crfs.len());
    for &crf in crfs {
        let asset_id = asset_id_for(&scene.content_id, crf);
        let path = options.out_dir.join(format!("{asset_id}.{}", options.extension));
        let output = path.to_string_lossy().into_owned();
        let crf_text = crf.to_string();
        options.encoder.run(&[
            ("input", &input),
            ("output", &output),
            ("crf", &crf_text),
        ])?;
        if !path.is_file() {
            return Err(Error::External {
                command: options.encoder.program().to_string(),
                reason: format!("expected output {} was not created", path.display()),
            });
        }
        let decoded_path = match &options.decoder {
            Some(decoder) => {
                let decoded = options.out_dir.join(format!("{asset_id}.y4m"));
                let decoded_text = decoded.to_string_lossy().into_owned();
                decoder.run(&[("input", &output), ("output", &decoded_text)])?;
                if !decoded.is_file() {
                    return Err(Error::External {
                        command: decoder.program().to_string(),
                        reason: format!("expected output {} was not created", decoded.display()),
                    });
                }
                Some(decoded)
            }
            None => None,
        };
        out.push(AssetEntry {
            asset_id,
            content_id: scene.content_id.clone(),
            crf,
            path,
            decoded_path,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySplit {
    pub train: usize,
    pub val: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub seed: u64,
    pub train_fraction: f64,
    pub train: BTreeSet<String>,
    pub val: BTreeSet<String>,
    pub per_category: BTreeMap<Category, CategorySplit>,
}

impl SplitResult {
    pub fn is_train(&self, content_id: &str) -> bool {
        self.train.contains(content_id)
    }
}

/// Number of training scenes for a category of `n` scenes: the fraction is
/// rounded up, then clamped so both sides keep at least one scene.
pub fn train_count(n: usize, train_fraction: f64) -> usize {
    let raw = (n as f64 * train_fraction - 1e-9).ceil().max(0.0) as usize;
    raw.clamp(1, n.saturating_sub(1).max(1))
}

/// Stratified scene-disjoint split. Within each category (in fixed order)
/// the sorted scene ids are shuffled with one seeded generator and the
/// first [`train_count`] go to training.
pub fn split_by_scene(manifest: &DatasetManifest, train_fraction: f64, seed: u64) -> Result<SplitResult> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        if train_fraction == 1.0 {
            return Err(Error::Split(
                "train fraction 1.0 leaves the validation set empty".into(),
            ));
        }
        return Err(Error::InvalidParameter(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let mut by_category: BTreeMap<Category, Vec<&str>> = BTreeMap::new();
    for s in &manifest.scenes {
        by_category.entry(s.category).or_default().push(&s.content_id);
    }
    if by_category.is_empty() {
        return Err(Error::Split("manifest has no scenes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut result = SplitResult {
        seed,
        train_fraction,
        train: BTreeSet::new(),
        val: BTreeSet::new(),
        per_category: BTreeMap::new(),
    };
    for (category, mut ids) in by_category {
        if ids.len() < 2 {
            return Err(Error::Split(format!(
                "category {category} has {} scene(s), at least 2 required",
                ids.len()
            )));
        }
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let n_train = train_count(ids.len(), train_fraction);
        let (train, val) = ids.split_at(n_train);
        result.train.extend(train.iter().map(|s| s.to_string()));
        result.val.extend(val.iter().map(|s| s.to_string()));
        result.per_category.insert(
            category,
            CategorySplit {
                train: train.len(),
                val: val.len(),
            },
        );
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinOptions {
    pub min_raters: usize,
    pub dimensions: Vec<Dimension>,
    pub excluded_participants: BTreeSet<String>,
    /// Use `100 - (MOS(reference) - MOS(distorted))` on the 0-100 scale
    /// instead of the plain MOS of the distorted clip.
    pub dmos: bool,
}

impl Default for JoinOptions {
    fn default() -> Self {
        JoinOptions {
            min_raters: DEFAULT_MIN_RATERS,
            dimensions: Dimension::LABEL.to_vec(),
            excluded_participants: BTreeSet::new(),
            dmos: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledAsset {
    pub asset_id: String,
    pub content_id: String,
    pub category: Category,
    pub crf: u32,
    pub mos: MosLabel,
    /// Training label on [0, 100].
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedAsset {
    pub asset_id: String,
    pub n_raters: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelJoin {
    pub labeled: Vec<LabeledAsset>,
    pub flagged: Vec<FlaggedAsset>,
}

impl LabelJoin {
    pub fn labels(&self) -> BTreeMap<String, f64> {
        self.labeled
            .iter()
            .map(|l| (l.asset_id.clone(), l.label))
            .collect()
    }
}

/// Joins a rating export onto the manifest's distorted assets. Assets with
/// fewer than `min_raters` raters (after exclusions) are flagged and left
/// out; distorted assets without any rating are flagged as well.
pub fn join_labels(
    manifest: &DatasetManifest,
    ratings: &[RatingRecord],
    options: &JoinOptions,
) -> Result<LabelJoin> {
    if ratings.is_empty() {
        return Err(Error::Empty("rating export has no rows".into()));
    }
    if let Some(r) = ratings.iter().find(|r| manifest.asset(&r.asset_id).is_none()) {
        return Err(Error::UnknownAsset(r.asset_id.clone()));
    }
    let grouped = group_by_asset(ratings, &options.excluded_participants);
    let mos_of = |asset_id: &str| -> Result<Option<MosLabel>> {
        match grouped.get(asset_id) {
            Some(records) => aggregate_mos(records, &options.dimensions).map(Some),
            None => Ok(None),
        }
    };
    let mut join = LabelJoin {
        labeled: Vec::new(),
        flagged: Vec::new(),
    };
    let mut assets: Vec<&AssetEntry> = manifest.distorted_assets().collect();
    assets.sort_by(|a, b| a.asset_id.cmp(&b.asset_id));
    for asset in assets {
        let flag = |n_raters: usize, reason: String| FlaggedAsset {
            asset_id: asset.asset_id.clone(),
            n_raters,
            reason,
        };
        let Some(mos) = mos_of(&asset.asset_id)? else {
            join.flagged.push(flag(0, "no ratings".into()));
            continue;
        };
        if mos.n_raters < options.min_raters {
            join.flagged.push(flag(
                mos.n_raters,
                format!("{} raters, {} required", mos.n_raters, options.min_raters),
            ));
            continue;
        }
        let label = if options.dmos {
            let reference = manifest
                .assets
                .iter()
                .find(|a| a.content_id == asset.content_id && a.is_reference());
            let ref_mos = match reference {
                Some(r) => mos_of(&r.asset_id)?,
                None => None,
            };
            match ref_mos {
                Some(r) => (100.0 - (r.mos_vmaf - mos.mos_vmaf)).clamp(0.0, 100.0),
                None => {
                    join.flagged.push(flag(mos.n_raters, "no reference ratings for DMOS".into()));
                    continue;
                }
            }
        } else {
            mos.mos_vmaf
        };
        let scene = manifest
            .scene(&asset.content_id)
            .ok_or_else(|| Error::Manifest(format!("missing scene `{}`", asset.content_id)))?;
        join.labeled.push(LabeledAsset {
            asset_id: asset.asset_id.clone(),
            content_id: asset.content_id.clone(),
            category: scene.category,
            crf: asset.crf,
            mos,
            label,
        });
    }
    Ok(join)
}
