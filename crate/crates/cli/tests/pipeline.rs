use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use teleqa_core::dataset::{DatasetManifest, SceneEntry, Category};
use teleqa_testkit::desk::{write_desk_fixture, DeskFixture};
use teleqa_testkit::synth::{random_clip, DeskConfig};

fn teleqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_teleqa"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn fixture(dir: &Path) -> DeskFixture {
    write_desk_fixture(&dir.join("data"), &DeskConfig::default(), 11, 15).unwrap()
}

fn extract(fx: &DeskFixture, out: &Path) -> PathBuf {
    let features = out.join("features");
    assert_ok(&teleqa(&["features", "--manifest", p(&fx.manifest_path), "--out-dir", p(&features)]));
    features
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn desk_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture(dir.path());
    let out = dir.path().join("out");
    let features = extract(&fx, &out);
    assert_eq!(std::fs::read_dir(&features).unwrap().count(), 48 * 2 + 1);

    let split = out.join("split.json");
    assert_ok(&teleqa(&["split", "--manifest", p(&fx.manifest_path), "--fraction", "0.8", "--seed", "11", "--out", p(&split)]));

    let model = out.join("model.json");
    let train = teleqa(&[
        "train", "--manifest", p(&fx.manifest_path), "--features", p(&features), "--split", p(&split),
        "--ratings", p(&fx.ratings_path), "--seed", "11", "--out", p(&model),
    ]);
    assert_ok(&train);
    let report = json(&out.join("model.validation.json"));
    assert_eq!(report["train_assets"], 36);
    assert_eq!(report["validation_assets"], 12);
    assert!(report["validation"]["rmse"].as_f64().unwrap() > 0.0);
    assert!(report["comparison"]["metrics"].is_array());
    assert!(out.join("model.json.run.json").is_file());

    let predictions = out.join("val_predictions.csv");
    assert_ok(&teleqa(&[
        "predict", "--manifest", p(&fx.manifest_path), "--features", p(&features), "--model", p(&model),
        "--subset", "val", "--split", p(&split), "--out", p(&predictions),
    ]));
    let baseline = out.join("val_baseline.csv");
    assert_ok(&teleqa(&[
        "predict", "--manifest", p(&fx.manifest_path), "--features", p(&features),
        "--subset", "val", "--split", p(&split), "--out", p(&baseline),
    ]));
    let eval = out.join("eval.json");
    let residuals = out.join("residuals.csv");
    let columns = out.join("columns.dat");
    let evaluated = teleqa(&[
        "evaluate", "--manifest", p(&fx.manifest_path), "--predictions", p(&predictions),
        "--compare", p(&baseline), "--ratings", p(&fx.ratings_path), "--subset", "val",
        "--split", p(&split), "--out", p(&eval), "--residuals", p(&residuals), "--plot-columns", p(&columns),
    ]);
    assert_ok(&evaluated);
    let e = json(&eval);
    assert_eq!(e["alignment"]["n"], 12);
    let val_rmse = report["validation"]["rmse"].as_f64().unwrap();
    assert!((e["alignment"]["rmse"].as_f64().unwrap() - val_rmse).abs() < 1e-9);
    let residual_text = std::fs::read_to_string(&residuals).unwrap();
    assert!(residual_text.starts_with("asset_id,mos,prediction,residual,category,crf"));
    assert_eq!(residual_text.lines().count(), 13);
    assert_eq!(std::fs::read_to_string(&columns).unwrap().lines().count(), 13);
}

#[test]
fn split_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        assert_ok(&teleqa(&["split", "--manifest", p(&fx.manifest_path), "--fraction", "0.8", "--seed", "7", "--out", p(&out)]));
        (
            std::fs::read(&out).unwrap(),
            json(&dir.path().join(format!("{name}.run.json"))),
        )
    };
    let (a, run_a) = run("a.json");
    let (b, run_b) = run("b.json");
    assert_eq!(a, b);
    assert_eq!(run_a["seed"], 7);
    assert_eq!(run_a["inputs"], run_b["inputs"]);
    assert_eq!(run_a["outputs"][0]["sha256"], run_b["outputs"][0]["sha256"]);
    let (c, _) = {
        let out = dir.path().join("c.json");
        assert_ok(&teleqa(&["split", "--manifest", p(&fx.manifest_path), "--seed", "8", "--out", p(&out)]));
        (std::fs::read(&out).unwrap(), ())
    };
    assert_ne!(a, c);
}

#[test]
fn evaluate_key_mismatch_exits_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture(dir.path());
    let out = dir.path().join("out");
    let features = extract(&fx, &out);
    let split = out.join("split.json");
    assert_ok(&teleqa(&["split", "--manifest", p(&fx.manifest_path), "--out", p(&split)]));
    let predictions = out.join("val.csv");
    assert_ok(&teleqa(&[
        "predict", "--manifest", p(&fx.manifest_path), "--features", p(&features),
        "--subset", "val", "--split", p(&split), "--out", p(&predictions),
    ]));
    let res = teleqa(&[
        "evaluate", "--manifest", p(&fx.manifest_path), "--predictions", p(&predictions),
        "--ratings", p(&fx.ratings_path), "--out", p(&out.join("eval.json")),
    ]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("key mismatch"));
}

#[test]
fn features_skip_unchanged_and_isolate_bad_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture(dir.path());
    let out = dir.path().join("out");
    extract(&fx, &out);
    let rerun = teleqa(&["features", "--manifest", p(&fx.manifest_path), "--out-dir", p(&out.join("features"))]);
    assert_ok(&rerun);
    assert!(stdout(&rerun).contains("0 computed, 48 up to date"), "{}", stdout(&rerun));

    let victim = &fx.manifest.assets[0];
    let clip = random_clip(32, 32, 3, 1);
    clip.write_y4m(std::fs::File::create(&victim.path).unwrap()).unwrap();
    let res = teleqa(&["features", "--manifest", p(&fx.manifest_path), "--out-dir", p(&out.join("features"))]);
    assert_eq!(res.status.code(), Some(3));
    assert!(stdout(&res).contains("0 computed, 47 up to date, 1 failed"), "{}", stdout(&res));
    assert!(String::from_utf8_lossy(&res.stderr).contains(&victim.asset_id));
}

#[test]
fn csv_and_sidecar_per_asset() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture(dir.path());
    let features = extract(&fx, &dir.path().join("out"));
    let id = &fx.manifest.assets[0].asset_id;
    let csv = std::fs::read_to_string(features.join(format!("{id}.csv"))).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "frame_idx,vif0,vif1,vif2,vif3,dlm,motion");
    assert_eq!(csv.lines().count(), 1 + DeskConfig::default().frames);
    let sidecar = json(&features.join(format!("{id}.json")));
    assert_eq!(sidecar["asset_id"], id.as_str());
    assert_eq!(sidecar["feature_config"]["version"], "teleqa-features-1");
}

fn scene_manifest(dir: &Path, scenes: usize, missing: &[usize]) -> PathBuf {
    let entries = (0..scenes)
        .map(|i| {
            let path = dir.join(format!("s{i}.y4m"));
            if !missing.contains(&i) {
                std::fs::write(&path, b"reference bytes").unwrap();
            }
            SceneEntry {
                content_id: format!("s{i}"),
                category: Category::ALL[i % 3],
                reference_path: path,
                duration: 8.0,
                geometry: None,
            }
        })
        .collect();
    let manifest = DatasetManifest::new(entries);
    let path = dir.join("manifest.json");
    std::fs::write(&path, manifest.to_json().unwrap()).unwrap();
    path
}

const COPY_ENCODER: &str = r#"sh -c 'cp "$0" "$1"' {input} {output} {crf}"#;

#[test]
fn prepare_encodes_missing_variants_once() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = scene_manifest(dir.path(), 3, &[]);
    let enc = dir.path().join("enc");
    let args = ["prepare", "--manifest", p(&manifest), "--encoder", COPY_ENCODER, "--no-decode", "--out-dir", p(&enc)];
    let first = teleqa(&args);
    assert_ok(&first);
    assert!(stdout(&first).contains("encoded 12 new assets"), "{}", stdout(&first));
    let m: DatasetManifest = serde_json::from_slice(&std::fs::read(&manifest).unwrap()).unwrap();
    assert_eq!(m.assets.len(), 12);
    assert!(m.assets.iter().all(|a| a.path.is_file()));

    let second = teleqa(&args);
    assert_ok(&second);
    assert!(stdout(&second).contains("encoded 0 new assets"), "{}", stdout(&second));
}

#[test]
fn prepare_reports_missing_media_and_encoder_failures() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = scene_manifest(dir.path(), 3, &[1]);
    let enc = dir.path().join("enc");
    let res = teleqa(&["prepare", "--manifest", p(&manifest), "--encoder", COPY_ENCODER, "--no-decode", "--out-dir", p(&enc)]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("scene s1"));
    let m: DatasetManifest = serde_json::from_slice(&std::fs::read(&manifest).unwrap()).unwrap();
    assert_eq!(m.assets.len(), 8);

    let clean = tempfile::tempdir().unwrap();
    let manifest = scene_manifest(clean.path(), 2, &[]);
    let failing = teleqa(&["prepare", "--manifest", p(&manifest), "--encoder", "false {input} {output} {crf}", "--no-decode", "--out-dir", p(&enc)]);
    assert_eq!(failing.status.code(), Some(5));

    let bad_template = teleqa(&["prepare", "--manifest", p(&manifest), "--encoder", "cp {input} {output}", "--no-decode"]);
    assert_eq!(bad_template.status.code(), Some(2));
}

#[test]
fn configuration_errors_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture(dir.path());
    let out = dir.path().join("split.json");
    let res = teleqa(&["split", "--manifest", p(&fx.manifest_path), "--fraction", "1.5", "--out", p(&out)]);
    assert_eq!(res.status.code(), Some(2));
    let missing = teleqa(&["split", "--manifest", p(&dir.path().join("nope.json")), "--out", p(&out)]);
    assert_eq!(missing.status.code(), Some(2));
    let config = dir.path().join("pipeline.toml");
    std::fs::write(&config, "[grid]\nfolds = 1\n").unwrap();
    let bad = teleqa(&["split", "--config", p(&config), "--manifest", p(&fx.manifest_path), "--out", p(&out)]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn config_file_supplies_manifest_fraction_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture(dir.path());
    let config = dir.path().join("pipeline.toml");
    std::fs::write(
        &config,
        format!("manifest = {:?}\n[split]\nfraction = 0.5\nseed = 3\n", p(&fx.manifest_path)),
    )
    .unwrap();
    let out = dir.path().join("split.json");
    assert_ok(&teleqa(&["split", "--config", p(&config), "--out", p(&out)]));
    let s = json(&out);
    assert_eq!(s["seed"], 3);
    assert_eq!(s["train"].as_array().unwrap().len(), 6);
}

#[test]
fn metrics_on_identical_clips() {
    let dir = tempfile::tempdir().unwrap();
    let clip = random_clip(64, 64, 4, 2);
    let path = dir.path().join("a.y4m");
    clip.write_y4m(std::fs::File::create(&path).unwrap()).unwrap();
    let out = dir.path().join("metrics.csv");
    assert_ok(&teleqa(&["metrics", "--reference", p(&path), "--distorted", p(&path), "--out", p(&out)]));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "frame_idx,psnr,ssim,ms_ssim");
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[5], "pooled,100,1,1");
}

#[test]
fn analyze_reports_compression_effect() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture(dir.path());
    let out = dir.path().join("analysis.json");
    let res = teleqa(&[
        "analyze", "--manifest", p(&fx.manifest_path), "--ratings", p(&fx.ratings_path),
        "--out", p(&out), "--table",
    ]);
    assert_ok(&res);
    let report = json(&out);
    assert_eq!(report["participants"], 15);
    assert_eq!(report["compression"]["groups"].as_array().unwrap().len(), 4);
    assert!(report["compression"]["omnibus_significant"].as_bool().unwrap());
    assert!(report["reliability"]["statistic"].as_f64().unwrap() > 0.5);
    assert_eq!(report["reflection"].as_object().unwrap().len(), 4);
    assert!(stdout(&res).contains("unit of analysis: asset"));
}

#[test]
fn jobs_bound_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_ok(&teleqa(&["features", "--jobs", "1", "--manifest", p(&fx.manifest_path), "--out-dir", p(&a)]));
    assert_ok(&teleqa(&["features", "--jobs", "4", "--manifest", p(&fx.manifest_path), "--out-dir", p(&b)]));
    let id = &fx.manifest.assets[5].asset_id;
    for ext in ["csv", "json"] {
        assert_eq!(
            std::fs::read(a.join(format!("{id}.{ext}"))).unwrap(),
            std::fs::read(b.join(format!("{id}.{ext}"))).unwrap()
        );
    }
    assert_eq!(teleqa(&["features", "--jobs", "0", "--manifest", p(&fx.manifest_path), "--out-dir", p(&a)]).status.code(), Some(2));
}
