use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use teleqa_core::alignment::{
    compare_models, evaluate, outlier_report, write_residual_csv, AlignmentReport, AssetInfo,
    ModelComparison, Outlier,
};
use teleqa_core::dataset::{
    encode_variants, join_labels, load_manifest, split_by_scene, AssetEntry, CommandTemplate,
    DatasetManifest, EncodeOptions, FlaggedAsset, JoinOptions, LabelJoin, SplitResult, CRF_LEVELS,
};
use teleqa_core::features::{
    extract_clip_features, write_feature_csv, FeatureConfig, FeatureSidecar,
};
use teleqa_core::frame_io::read_clip_file;
use teleqa_core::metrics::{ms_ssim, psnr_capped, ssim, MsSsimParams, SsimParams};
use teleqa_core::stats::{
    aggregate_mos, compression_effect_report, cronbach_alpha, environment_report, group_by_asset,
    item_matrix, read_object_checks, read_ratings, screen_participants, CompressionReport,
    Dimension, EnvironmentReport, Group, MosLabel, RatingRecord, TestResult,
};
use teleqa_core::svr::{
    baseline_model, grid_search, load_model, save_model, scene_folds, train, GridResult,
    SvrHyperparams, SvrModel, TrainingRow, TrainingSet,
};
use teleqa_core::dataset::Category;
use teleqa_core::{Error, ErrorClass, FrameRate};

use crate::cli::{
    AnalyzeArgs, EvaluateArgs, FeaturesArgs, LabelArgs, MetricsArgs, PredictArgs, PrepareArgs,
    ServeArgs, SplitArgs, Subset, TrainArgs,
};
use crate::config::{check_fraction, PipelineConfig};
use crate::error::{CliError, Result};
use crate::provenance::{default_run_manifest_path, sha256_file, to_pretty_json, RunManifest};

/// Settings shared by every command.
#[derive(Debug, Clone)]
pub struct Context {
    pub seed: u64,
    pub config: PipelineConfig,
    pub run_manifest: Option<PathBuf>,
}

impl Context {
    fn finish(&self, run: &RunManifest, primary: &Path) -> Result<()> {
        let path = self
            .run_manifest
            .clone()
            .unwrap_or_else(|| default_run_manifest_path(primary));
        crate::provenance::write_atomic(&path, &run.to_json()?)
    }

    fn manifest_path(&self, flag: &Option<PathBuf>) -> Result<PathBuf> {
        flag.clone()
            .or_else(|| self.config.manifest.clone())
            .ok_or_else(|| CliError::Config("no manifest given (--manifest or config `manifest`)".into()))
    }

    fn media_root(&self, flag: &Option<PathBuf>, manifest_path: &Path) -> PathBuf {
        flag.clone()
            .or_else(|| self.config.media_root.clone())
            .unwrap_or_else(|| manifest_path.parent().map(Path::to_path_buf).unwrap_or_default())
    }
}

fn resolve(root: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        root.join(path)
    }
}

fn read_manifest(run: &mut RunManifest, path: &Path) -> Result<DatasetManifest> {
    if !path.is_file() {
        return Err(CliError::Config(format!("manifest {} does not exist", path.display())));
    }
    run.input(path)?;
    Ok(load_manifest(path)?)
}

fn read_json<T: for<'de> Deserialize<'de>>(run: &mut RunManifest, path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    run.input_digest(path, crate::provenance::sha256_bytes(&bytes));
    Ok(serde_json::from_slice(&bytes).map_err(Error::from)?)
}

fn partial(what: &'static str, total: usize, failures: &[(String, CliError)]) -> Result<()> {
    match failures.first() {
        None => Ok(()),
        Some((id, err)) => Err(CliError::Partial {
            what,
            failed: failures.len(),
            total,
            first: format!("{id}: {err}"),
            class: err.class(),
        }),
    }
}

pub fn prepare(ctx: &Context, args: &PrepareArgs) -> Result<()> {
    let manifest_path = ctx.manifest_path(&args.manifest)?;
    let output = args.output.clone().unwrap_or_else(|| manifest_path.clone());
    let mut run = RunManifest::new("prepare", ctx.seed, args)?;
    let mut manifest = read_manifest(&mut run, &manifest_path)?;
    let encoder_text = args.encoder.clone().unwrap_or_else(|| ctx.config.encoder.template.clone());
    let encoder = CommandTemplate::parse(&encoder_text, &CommandTemplate::ENCODE_PLACEHOLDERS)?;
    let decoder = match (&args.decoder, args.no_decode) {
        (_, true) => None,
        (Some(d), false) => Some(d.clone()),
        (None, false) => ctx.config.encoder.decoder.clone(),
    };
    let decoder = decoder
        .map(|d| CommandTemplate::parse(&d, &CommandTemplate::DECODE_PLACEHOLDERS))
        .transpose()?;
    let root = ctx.media_root(&None, &manifest_path);
    let out_dir = args
        .out_dir
        .clone()
        .or_else(|| ctx.config.out_dir.clone())
        .unwrap_or_else(|| root.clone());
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let options = EncodeOptions {
        encoder: encoder.clone(),
        decoder,
        out_dir,
        extension: args.extension.clone().unwrap_or_else(|| ctx.config.encoder.extension.clone()),
    };

    let jobs: Vec<_> = manifest
        .scenes
        .iter()
        .map(|s| {
            let missing: Vec<u32> = CRF_LEVELS
                .into_iter()
                .filter(|&c| !manifest.has_variant(&s.content_id, c))
                .collect();
            let mut scene = s.clone();
            scene.reference_path = resolve(&root, &s.reference_path);
            (scene, missing)
        })
        .filter(|(_, missing)| !missing.is_empty())
        .collect();
    let total = jobs.len();
    let results: Vec<(String, Result<Vec<AssetEntry>>)> = jobs
        .into_par_iter()
        .map(|(scene, missing)| {
            let id = scene.content_id.clone();
            (id, encode_variants(&scene, &missing, &options).map_err(CliError::from))
        })
        .collect();

    let mut failures = Vec::new();
    let mut encoded = 0;
    for (id, res) in results {
        match res {
            Ok(assets) => {
                encoded += assets.len();
                manifest.assets.extend(assets);
            }
            Err(e) => {
                log::error!("scene {id}: {e}");
                failures.push((id, e));
            }
        }
    }
    if encoded > 0 {
        manifest.encoder_version = Some(encoder.version());
    }
    manifest.validate()?;
    let bytes = format!("{}\n", manifest.to_json()?).into_bytes();
    run.write(&output, &bytes)?;
    ctx.finish(&run, &output)?;
    println!(
        "encoded {encoded} new assets; {} scenes complete; {} failed",
        manifest.scenes.len() - total,
        failures.len()
    );
    partial("scenes", total, &failures)
}

#[derive(Debug)]
enum FeatureOutcome {
    Computed,
    Skipped,
}

fn sidecar_path(dir: &Path, asset_id: &str) -> PathBuf {
    dir.join(format!("{asset_id}.json"))
}

fn read_sidecar(path: &Path) -> Result<FeatureSidecar> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes).map_err(Error::from)?)
}

pub fn features(ctx: &Context, args: &FeaturesArgs) -> Result<()> {
    let manifest_path = ctx.manifest_path(&args.manifest)?;
    let out_dir = args
        .out_dir
        .clone()
        .or_else(|| ctx.config.out_dir.as_ref().map(|d| d.join("features")))
        .ok_or_else(|| CliError::Config("no output directory (--out-dir)".into()))?;
    let mut run = RunManifest::new("features", ctx.seed, args)?;
    let manifest = read_manifest(&mut run, &manifest_path)?;
    let root = ctx.media_root(&args.media_root, &manifest_path);
    let config = ctx.config.feature_config();
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    let assets: Vec<&AssetEntry> = manifest.distorted_assets().collect();
    let results: Vec<(String, Result<(FeatureOutcome, Vec<(PathBuf, String)>, Vec<(PathBuf, Vec<u8>)>)>)> =
        assets
            .par_iter()
            .map(|asset| {
                let res = extract_asset(&manifest, asset, &root, &out_dir, &config, args.force);
                (asset.asset_id.clone(), res)
            })
            .collect();

    let (mut computed, mut skipped) = (0, 0);
    let mut failures = Vec::new();
    for (id, res) in results {
        match res {
            Ok((outcome, inputs, outputs)) => {
                match outcome {
                    FeatureOutcome::Computed => computed += 1,
                    FeatureOutcome::Skipped => skipped += 1,
                }
                for (p, h) in inputs {
                    run.input_digest(&p, h);
                }
                for (p, bytes) in outputs {
                    run.output(&p, &bytes);
                }
            }
            Err(e) => {
                log::error!("asset {id}: {e}");
                failures.push((id, e));
            }
        }
    }
    ctx.finish(&run, &out_dir.join("features"))?;
    println!(
        "features: {computed} computed, {skipped} up to date, {} failed",
        failures.len()
    );
    partial("assets", assets.len(), &failures)
}

type Extracted = (FeatureOutcome, Vec<(PathBuf, String)>, Vec<(PathBuf, Vec<u8>)>);

fn extract_asset(
    manifest: &DatasetManifest,
    asset: &AssetEntry,
    root: &Path,
    out_dir: &Path,
    config: &FeatureConfig,
    force: bool,
) -> Result<Extracted> {
    let scene = manifest
        .scene(&asset.content_id)
        .ok_or_else(|| Error::Manifest(format!("missing scene `{}`", asset.content_id)))?;
    let reference_path = resolve(root, &scene.reference_path);
    let distorted_path = resolve(root, asset.media_path());
    let reference_sha256 = sha256_file(&reference_path)?;
    let distorted_sha256 = sha256_file(&distorted_path)?;
    let inputs = vec![
        (reference_path.clone(), reference_sha256.clone()),
        (distorted_path.clone(), distorted_sha256.clone()),
    ];
    let csv_path = out_dir.join(format!("{}.csv", asset.asset_id));
    let json_path = sidecar_path(out_dir, &asset.asset_id);
    if !force && csv_path.is_file() {
        if let Ok(existing) = read_sidecar(&json_path) {
            if existing.reference_sha256 == reference_sha256
                && existing.distorted_sha256 == distorted_sha256
                && existing.feature_config == *config
            {
                let outputs = [csv_path, json_path]
                    .into_iter()
                    .map(|p| std::fs::read(&p).map(|b| (p.clone(), b)).map_err(|e| Error::io(&p, e)))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                return Ok((FeatureOutcome::Skipped, inputs, outputs));
            }
        }
    }
    let geometry = scene.geometry.map(|g| (g.width, g.height, g.fps));
    let reference = read_clip_file(&reference_path, geometry)?;
    let distorted = read_clip_file(&distorted_path, geometry)?;
    let features = extract_clip_features(&reference, &distorted, config)?;
    for w in &features.warnings {
        log::warn!("{} frame {} {}: {}", asset.asset_id, w.frame, w.feature, w.message);
    }
    let mut csv = Vec::new();
    write_feature_csv(&features, &mut csv)?;
    let sidecar = FeatureSidecar {
        feature_config: config.clone(),
        content_id: asset.content_id.clone(),
        asset_id: asset.asset_id.clone(),
        reference_sha256,
        distorted_sha256,
        frames: features.per_frame.len(),
        pooled: features.pooled,
        warnings: features.warnings,
    };
    let json = to_pretty_json(&sidecar)?;
    crate::provenance::write_atomic(&csv_path, &csv)?;
    crate::provenance::write_atomic(&json_path, &json)?;
    Ok((FeatureOutcome::Computed, inputs, vec![(csv_path, csv), (json_path, json)]))
}

fn parse_geometry(size: &Option<String>, fps: &Option<String>) -> Result<Option<(usize, usize, FrameRate)>> {
    let Some(size) = size else { return Ok(None) };
    let bad = || CliError::Config(format!("--size `{size}` is not WIDTHxHEIGHT"));
    let (w, h) = size.split_once('x').ok_or_else(bad)?;
    let (w, h) = (w.parse().map_err(|_| bad())?, h.parse().map_err(|_| bad())?);
    let fps = fps.as_deref().unwrap_or("30");
    let bad = || CliError::Config(format!("--fps `{fps}` is not NUM/DEN"));
    let (num, den) = match fps.split_once('/') {
        Some((n, d)) => (n.parse().map_err(|_| bad())?, d.parse().map_err(|_| bad())?),
        None => (fps.parse().map_err(|_| bad())?, 1),
    };
    Ok(Some((w, h, FrameRate::new(num, den)?)))
}

/// MS-SSIM parameters whose window still fits the coarsest scale.
pub fn ms_ssim_params_for(width: usize, height: usize) -> MsSsimParams {
    let mut params = MsSsimParams::default();
    let coarsest = width.min(height) >> (params.scales() - 1);
    if coarsest < params.base.window {
        let window = if coarsest % 2 == 1 { coarsest } else { coarsest.saturating_sub(1) };
        params.base.sigma *= window as f64 / params.base.window as f64;
        params.base.window = window;
    }
    params
}

pub fn metrics(ctx: &Context, args: &MetricsArgs) -> Result<()> {
    let mut run = RunManifest::new("metrics", ctx.seed, args)?;
    run.input(&args.reference)?;
    run.input(&args.distorted)?;
    let geometry = parse_geometry(&args.size, &args.fps)?;
    let reference = read_clip_file(&args.reference, geometry)?;
    let distorted = read_clip_file(&args.distorted, geometry)?;
    if reference.len() != distorted.len() {
        return Err(Error::FrameCountMismatch {
            reference: reference.len(),
            distorted: distorted.len(),
        }
        .into());
    }
    let ssim_params = SsimParams::default();
    let ms_params = ms_ssim_params_for(reference.width(), reference.height());
    let rows: Vec<Result<[f64; 3]>> = reference
        .frames()
        .par_iter()
        .zip(distorted.frames().par_iter())
        .map(|(r, d)| {
            let (r, d) = (r.luma(), d.luma());
            Ok([
                psnr_capped(&r, &d)?,
                ssim(&r, &d, &ssim_params)?,
                ms_ssim(&r, &d, &ms_params)?,
            ])
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["frame_idx", "psnr", "ssim", "ms_ssim"]).map_err(Error::from)?;
    for (i, r) in rows.iter().enumerate() {
        w.write_record([i.to_string(), r[0].to_string(), r[1].to_string(), r[2].to_string()])
            .map_err(Error::from)?;
    }
    let n = rows.len() as f64;
    let pooled: Vec<String> = (0..3)
        .map(|k| (rows.iter().map(|r| r[k]).sum::<f64>() / n).to_string())
        .collect();
    w.write_record(["pooled", &pooled[0], &pooled[1], &pooled[2]]).map_err(Error::from)?;
    let bytes = w.into_inner().map_err(|e| Error::io(&args.out, e.into_error()))?;
    run.write(&args.out, &bytes)?;
    ctx.finish(&run, &args.out)?;
    println!("psnr {} ssim {} ms_ssim {}", pooled[0], pooled[1], pooled[2]);
    Ok(())
}

pub fn split(ctx: &Context, args: &SplitArgs) -> Result<()> {
    let manifest_path = ctx.manifest_path(&args.manifest)?;
    let fraction = args.fraction.unwrap_or(ctx.config.split.fraction);
    check_fraction(fraction)?;
    #[derive(Serialize)]
    struct Resolved<'a> {
        args: &'a SplitArgs,
        fraction: f64,
    }
    let mut run = RunManifest::new("split", ctx.seed, &Resolved { args, fraction })?;
    let manifest = read_manifest(&mut run, &manifest_path)?;
    let result = split_by_scene(&manifest, fraction, ctx.seed)?;
    run.write(&args.out, &to_pretty_json(&result)?)?;
    ctx.finish(&run, &args.out)?;
    for (category, c) in &result.per_category {
        println!("{category}: {} train / {} val", c.train, c.val);
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct LabelSummary {
    excluded_participants: BTreeSet<String>,
    flagged: Vec<FlaggedAsset>,
}

fn read_records(run: &mut RunManifest, path: &Path) -> Result<Vec<RatingRecord>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    run.input_digest(path, crate::provenance::sha256_bytes(&bytes));
    Ok(read_ratings(bytes.as_slice())?)
}

fn excluded_participants(ctx: &Context, run: &mut RunManifest, args: &LabelArgs) -> Result<BTreeSet<String>> {
    let Some(path) = &args.object_checks else {
        return Ok(BTreeSet::new());
    };
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    run.input_digest(path, crate::provenance::sha256_bytes(&bytes));
    let checks = read_object_checks(bytes.as_slice())?;
    let threshold = args
        .max_object_failures
        .unwrap_or(ctx.config.thresholds.max_object_failure_fraction);
    Ok(screen_participants(&checks, threshold))
}

fn labels(
    ctx: &Context,
    run: &mut RunManifest,
    manifest: &DatasetManifest,
    args: &LabelArgs,
) -> Result<(LabelJoin, LabelSummary)> {
    let records = read_records(run, &args.ratings)?;
    let excluded = excluded_participants(ctx, run, args)?;
    let options = JoinOptions {
        min_raters: args.min_raters.unwrap_or(ctx.config.thresholds.min_raters),
        excluded_participants: excluded.clone(),
        dmos: args.dmos,
        ..JoinOptions::default()
    };
    let join = join_labels(manifest, &records, &options)?;
    for f in &join.flagged {
        log::warn!("asset {} left out: {}", f.asset_id, f.reason);
    }
    let summary = LabelSummary {
        excluded_participants: excluded,
        flagged: join.flagged.clone(),
    };
    Ok((join, summary))
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub hyperparams: SvrHyperparams,
    pub grid: GridResult,
    pub train_assets: usize,
    pub validation_assets: usize,
    pub validation: Option<AlignmentReport>,
    pub baseline_validation: Option<AlignmentReport>,
    pub comparison: Option<ModelComparison>,
    pub excluded_participants: BTreeSet<String>,
    pub flagged: Vec<FlaggedAsset>,
}

fn predictions_for(model: &SvrModel, rows: &[TrainingRow], version: &str) -> Result<BTreeMap<String, f64>> {
    rows.iter()
        .map(|r| Ok((r.clip_id.clone(), model.predict(&r.features, version)?)))
        .collect()
}

pub fn train_cmd(ctx: &Context, args: &TrainArgs) -> Result<()> {
    let manifest_path = ctx.manifest_path(&args.manifest)?;
    let folds = args.folds.unwrap_or(ctx.config.grid.folds);
    let grid = ctx.config.grid.hyper_grid();
    #[derive(Serialize)]
    struct Resolved<'a> {
        args: &'a TrainArgs,
        folds: usize,
        grid: &'a teleqa_core::svr::HyperGrid,
        min_raters: usize,
    }
    let min_raters = args.labels.min_raters.unwrap_or(ctx.config.thresholds.min_raters);
    let mut run = RunManifest::new(
        "train",
        ctx.seed,
        &Resolved { args, folds, grid: &grid, min_raters },
    )?;
    let manifest = read_manifest(&mut run, &manifest_path)?;
    let split: SplitResult = read_json(&mut run, &args.split)?;
    let (join, summary) = labels(ctx, &mut run, &manifest, &args.labels)?;
    let config = ctx.config.feature_config();

    let (mut train_rows, mut val_rows) = (Vec::new(), Vec::new());
    for l in &join.labeled {
        let path = sidecar_path(&args.features, &l.asset_id);
        run.input(&path)?;
        let sidecar = read_sidecar(&path)?;
        if sidecar.feature_config.version != config.version {
            return Err(Error::VersionMismatch {
                expected: config.version.clone(),
                got: sidecar.feature_config.version,
            }
            .into());
        }
        let row = TrainingRow {
            clip_id: l.asset_id.clone(),
            scene: Some(l.content_id.clone()),
            features: sidecar.pooled,
            label: l.label,
        };
        if split.train.contains(&l.content_id) {
            train_rows.push(row);
        } else if split.val.contains(&l.content_id) {
            val_rows.push(row);
        } else {
            return Err(Error::Split(format!("scene `{}` is in neither side of the split", l.content_id)).into());
        }
    }
    let set = TrainingSet::new(train_rows)?;
    let fold_sets = scene_folds(&set, folds, ctx.seed)?;
    let search = grid_search(&set, &fold_sets, &grid, &config)?;
    let model = train(&set, &search.best, &config)?;

    let (validation, baseline_validation, comparison) = if val_rows.len() >= 3 {
        let labels: BTreeMap<String, f64> = val_rows.iter().map(|r| (r.clip_id.clone(), r.label)).collect();
        let retrained = evaluate(&predictions_for(&model, &val_rows, &config.version)?, &labels)?;
        let baseline = evaluate(&predictions_for(&baseline_model(), &val_rows, &config.version)?, &labels)?;
        let comparison = compare_models(&baseline, &retrained)?;
        println!("{}", comparison.to_table());
        (Some(retrained), Some(baseline), Some(comparison))
    } else {
        log::warn!("only {} validation assets; skipping validation report", val_rows.len());
        (None, None, None)
    };
    let report = TrainReport {
        hyperparams: search.best.clone(),
        grid: search,
        train_assets: set.len(),
        validation_assets: val_rows.len(),
        validation,
        baseline_validation,
        comparison,
        excluded_participants: summary.excluded_participants,
        flagged: summary.flagged,
    };
    run.write(&args.out, &save_model(&model)?)?;
    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| args.out.with_extension("validation.json"));
    run.write(&report_path, &to_pretty_json(&report)?)?;
    ctx.finish(&run, &args.out)?;
    println!(
        "trained on {} assets: C={} gamma={} epsilon={}",
        report.train_assets, report.hyperparams.c, report.hyperparams.gamma, report.hyperparams.epsilon
    );
    Ok(())
}

fn subset_filter(run: &mut RunManifest, subset: Subset, split: &Option<PathBuf>) -> Result<Option<(Subset, SplitResult)>> {
    match (subset, split) {
        (Subset::All, _) => Ok(None),
        (s, Some(path)) => Ok(Some((s, read_json(run, path)?))),
        (_, None) => Err(CliError::Config("--subset train/val needs --split".into())),
    }
}

fn keep(filter: &Option<(Subset, SplitResult)>, content_id: &str) -> bool {
    match filter {
        None => true,
        Some((Subset::Train, s)) => s.train.contains(content_id),
        Some((Subset::Val, s)) => s.val.contains(content_id),
        Some((Subset::All, _)) => true,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictionRow {
    asset_id: String,
    prediction: f64,
}

pub fn predict(ctx: &Context, args: &PredictArgs) -> Result<()> {
    let manifest_path = ctx.manifest_path(&args.manifest)?;
    let mut run = RunManifest::new("predict", ctx.seed, args)?;
    let manifest = read_manifest(&mut run, &manifest_path)?;
    let model = match &args.model {
        Some(path) => {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            run.input_digest(path, crate::provenance::sha256_bytes(&bytes));
            load_model(&bytes)?
        }
        None => baseline_model(),
    };
    let filter = subset_filter(&mut run, args.subset, &args.split)?;
    let mut assets: Vec<&AssetEntry> = manifest
        .distorted_assets()
        .filter(|a| keep(&filter, &a.content_id))
        .collect();
    assets.sort_by(|a, b| a.asset_id.cmp(&b.asset_id));
    let mut w = csv::Writer::from_writer(Vec::new());
    for a in &assets {
        let path = sidecar_path(&args.features, &a.asset_id);
        run.input(&path)?;
        let sidecar = read_sidecar(&path)?;
        let prediction = model.predict(&sidecar.pooled, &sidecar.feature_config.version)?;
        w.serialize(PredictionRow {
            asset_id: a.asset_id.clone(),
            prediction,
        })
        .map_err(Error::from)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(&args.out, e.into_error()))?;
    run.write(&args.out, &bytes)?;
    ctx.finish(&run, &args.out)?;
    println!("predicted {} assets", assets.len());
    Ok(())
}

fn read_predictions(run: &mut RunManifest, path: &Path) -> Result<BTreeMap<String, f64>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    run.input_digest(path, crate::provenance::sha256_bytes(&bytes));
    let mut out = BTreeMap::new();
    for row in csv::Reader::from_reader(bytes.as_slice()).deserialize::<PredictionRow>() {
        let row = row.map_err(Error::from)?;
        if out.insert(row.asset_id.clone(), row.prediction).is_some() {
            return Err(Error::Corrupted(format!("duplicate prediction for `{}`", row.asset_id)).into());
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct EvaluationReport {
    pub alignment: AlignmentReport,
    pub outliers: Vec<Outlier>,
    pub comparison: Option<ModelComparison>,
    pub excluded_participants: BTreeSet<String>,
    pub flagged: Vec<FlaggedAsset>,
}

pub fn evaluate_cmd(ctx: &Context, args: &EvaluateArgs) -> Result<()> {
    let manifest_path = ctx.manifest_path(&args.manifest)?;
    let mut run = RunManifest::new("evaluate", ctx.seed, args)?;
    let manifest = read_manifest(&mut run, &manifest_path)?;
    let predictions = read_predictions(&mut run, &args.predictions)?;
    let (join, summary) = labels(ctx, &mut run, &manifest, &args.labels)?;
    let filter = subset_filter(&mut run, args.subset, &args.split)?;
    let labels: BTreeMap<String, f64> = join
        .labeled
        .iter()
        .filter(|l| keep(&filter, &l.content_id))
        .map(|l| (l.asset_id.clone(), l.label))
        .collect();
    let alignment = evaluate(&predictions, &labels)?;
    let k = args.outliers.unwrap_or(ctx.config.thresholds.outliers);
    let outliers = outlier_report(&alignment, k)?;
    let comparison = match &args.compare {
        Some(path) => {
            let other = read_predictions(&mut run, path)?;
            Some(compare_models(&evaluate(&other, &labels)?, &alignment)?)
        }
        None => None,
    };
    if let Some(path) = &args.residuals {
        let info: BTreeMap<String, AssetInfo> = join
            .labeled
            .iter()
            .map(|l| {
                (
                    l.asset_id.clone(),
                    AssetInfo {
                        category: l.category.to_string(),
                        crf: l.crf,
                    },
                )
            })
            .collect();
        let mut bytes = Vec::new();
        write_residual_csv(&alignment, &info, &mut bytes)?;
        run.write(path, &bytes)?;
    }
    if let Some(path) = &args.plot_columns {
        let mut text = String::from("# mos prediction\n");
        for r in &alignment.residuals {
            let _ = writeln!(text, "{} {}", r.mos, r.prediction);
        }
        run.write(path, text.as_bytes())?;
    }
    println!(
        "n={} MAD={:.4} RMSE={:.4} r={:.4} rho={:.4}",
        alignment.n, alignment.mad, alignment.rmse, alignment.pearson_r, alignment.spearman_rho
    );
    if let Some(c) = &comparison {
        println!("{}", c.to_table());
    }
    let report = EvaluationReport {
        alignment,
        outliers,
        comparison,
        excluded_participants: summary.excluded_participants,
        flagged: summary.flagged,
    };
    run.write(&args.out, &to_pretty_json(&report)?)?;
    ctx.finish(&run, &args.out)
}

#[derive(Debug, Serialize)]
pub struct AnalysisReport {
    pub participants: usize,
    pub excluded_participants: BTreeSet<String>,
    pub flagged: Vec<FlaggedAsset>,
    pub reliability: Option<TestResult>,
    pub mos: Vec<MosLabel>,
    pub compression: CompressionReport,
    pub environment: Option<EnvironmentReport>,
    /// Mean reflection score per compression level, reported apart from
    /// the training label.
    pub reflection: BTreeMap<String, f64>,
}

pub fn analyze(ctx: &Context, args: &AnalyzeArgs) -> Result<()> {
    let manifest_path = ctx.manifest_path(&args.manifest)?;
    let mut run = RunManifest::new("analyze", ctx.seed, args)?;
    let manifest = read_manifest(&mut run, &manifest_path)?;
    let (join, summary) = labels(ctx, &mut run, &manifest, &args.labels)?;
    let records = read_records(&mut run, &args.labels.ratings)?;
    let kept: Vec<RatingRecord> = records
        .into_iter()
        .filter(|r| !summary.excluded_participants.contains(&r.participant_id))
        .collect();
    let participants = kept.iter().map(|r| r.participant_id.as_str()).collect::<BTreeSet<_>>().len();

    let reliability = match cronbach_alpha(&item_matrix(&kept, &Dimension::ALL)) {
        Ok(t) => Some(t),
        Err(e) => {
            log::warn!("reliability not computed: {e}");
            None
        }
    };
    let groups: Vec<Group> = CRF_LEVELS
        .iter()
        .map(|&c| {
            Group::new(
                format!("crf{c}"),
                join.labeled.iter().filter(|l| l.crf == c).map(|l| l.label).collect(),
            )
        })
        .filter(|g| !g.values.is_empty())
        .collect();
    let compression = compression_effect_report(&groups, "asset")?;
    let by_category = |c: Category| -> Vec<f64> {
        join.labeled.iter().filter(|l| l.category == c).map(|l| l.label).collect()
    };
    let environment = match environment_report(
        &by_category(Category::DayGood),
        &by_category(Category::DayBad),
        &by_category(Category::NightGood),
        "asset",
    ) {
        Ok(r) => Some(r),
        Err(e) if e.class() == ErrorClass::Data => {
            log::warn!("environment report not computed: {e}");
            None
        }
        Err(e) => return Err(e.into()),
    };
    let mut reflection: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (asset_id, recs) in group_by_asset(&kept, &BTreeSet::new()) {
        let Some(asset) = manifest.asset(asset_id) else { continue };
        if let Ok(m) = aggregate_mos(&recs, &[Dimension::Reflection]) {
            reflection.entry(format!("crf{}", asset.crf)).or_default().push(m.mos_vmaf);
        }
    }
    let report = AnalysisReport {
        participants,
        excluded_participants: summary.excluded_participants,
        flagged: summary.flagged,
        reliability,
        mos: join.labeled.iter().map(|l| l.mos.clone()).collect(),
        compression,
        environment,
        reflection: reflection
            .into_iter()
            .map(|(k, v)| (k, v.iter().sum::<f64>() / v.len() as f64))
            .collect(),
    };
    run.write(&args.out, &to_pretty_json(&report)?)?;
    ctx.finish(&run, &args.out)?;
    if args.table {
        if let Some(a) = &report.reliability {
            println!("cronbach alpha: {:.4}", a.statistic);
        }
        print!("{}", report.compression.to_table());
        if let Some(e) = &report.environment {
            print!("{}", e.to_table());
        }
    }
    Ok(())
}

pub fn serve(ctx: &Context, args: &ServeArgs) -> Result<()> {
    let mut config = match &args.study_config {
        Some(path) => teleqa_study::StudyConfig::load(path)?,
        None => teleqa_study::StudyConfig::default(),
    };
    config.apply_env();
    if let Some(bind) = &args.bind {
        config.bind = bind.clone();
    }
    if let Some(m) = args.manifest.clone().or_else(|| ctx.config.manifest.clone()) {
        config.manifest = m;
    }
    config.validate()?;
    let mut run = RunManifest::new("serve", ctx.seed, args)?;
    run.input(&config.manifest)?;
    ctx.finish(&run, &config.log_path)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(teleqa_study::serve(config))?;
    Ok(())
}
