//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use teleqa_cli::commands::ms_ssim_params_for;
use teleqa_core::alignment::{evaluate, outlier_report};
use teleqa_core::dataset::{split_by_scene, train_count, Category, DatasetManifest, SceneEntry};
use teleqa_core::features::{dlm, extract_clip_features, vif_scales, FeatureConfig};
use teleqa_core::metrics::{ms_ssim, ssim, MsSsimParams, SsimParams};
use teleqa_core::stats::hypothesis::mann_whitney_exact;
use teleqa_core::stats::report::Path as TestPath;
use teleqa_core::stats::special::{beta_inc, gamma_p};
use teleqa_core::stats::{anova_oneway, cliffs_delta, compression_effect_report, cronbach_alpha, holm_adjust, Group};
use teleqa_core::svr::{rbf_kernel, solve_smo, SvrHyperparams};
use teleqa_core::Plane;
use teleqa_study::SCENARIOS_PER_SESSION;
use teleqa_testkit::desk::run_desk_experiment;
use teleqa_testkit::study_fuzz::run_study_fuzz;
use teleqa_testkit::synth::{fixed_textures, motion_oracle, random_clip, DeskConfig, Family};
use teleqa_testkit::{brute, qp};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn metric_identities() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let config = FeatureConfig::default();
    let ssim_params = SsimParams::default();
    let mut frames = 0;
    for c in 0..20 {
        let w = 2 * rng.random_range(32..=80);
        let h = 2 * rng.random_range(32..=80);
        let n = rng.random_range(2..=5);
        let clip = random_clip(w, h, n, rng.random());
        let ms_params = ms_ssim_params_for(w, h);
        for f in clip.frames() {
            let p = f.luma();
            let s = ssim(&p, &p, &ssim_params).map_err(|e| e.to_string())?;
            check((s - 1.0).abs() <= 1e-9, || format!("clip {c}: SSIM {s}"))?;
            let m = ms_ssim(&p, &p, &ms_params).map_err(|e| e.to_string())?;
            check((m - 1.0).abs() <= 1e-9, || format!("clip {c}: MS-SSIM {m}"))?;
            let v = vif_scales(&p, &p, config.vif_sigma_nsq, config.vif_gain_limit).map_err(|e| e.to_string())?;
            check(v.scales.iter().all(|x| (x - 1.0).abs() <= 1e-6), || format!("clip {c}: VIF {:?}", v.scales))?;
            let d = dlm(&p, &p).map_err(|e| e.to_string())?.value;
            check((d - 1.0).abs() <= 1e-6, || format!("clip {c}: DLM {d}"))?;
            frames += 1;
        }
        let features = extract_clip_features(&clip, &clip, &config).map_err(|e| e.to_string())?;
        check(features.per_frame[0].motion == 0.0, || format!("clip {c}: first-frame motion"))?;
        for (i, fv) in features.per_frame.iter().enumerate().skip(1) {
            let want = motion_oracle(&clip.frames()[i - 1].luma(), &clip.frames()[i].luma(), config.motion_sigma);
            check((fv.motion - want).abs() <= 1e-9, || {
                format!("clip {c} frame {i}: motion {} vs oracle {want}", fv.motion)
            })?;
        }
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("20 clips, {frames} frames, {:.2} s", elapsed.as_secs_f64()))
}

fn monotonicity() -> Outcome {
    let ms_params = MsSsimParams {
        base: SsimParams { window: 7, ..SsimParams::default() },
        ..MsSsimParams::default()
    };
    let score = |r: &Plane, d: &Plane| -> Result<[f64; 3], String> {
        Ok([
            ms_ssim(r, d, &ms_params).map_err(|e| e.to_string())?,
            vif_scales(r, d, 2.0, 1.0).map_err(|e| e.to_string())?.scales[0],
            dlm(r, d).map_err(|e| e.to_string())?.value,
        ])
    };
    let names = ["MS-SSIM", "VIF0", "DLM"];
    let mut series_checked = 0;
    for (t, texture) in fixed_textures(128).iter().enumerate() {
        for family in Family::ALL {
            let series = family
                .levels()
                .iter()
                .map(|&level| score(texture, &family.apply(texture, level, 17)))
                .collect::<Result<Vec<_>, _>>()?;
            for k in 0..3 {
                for w in series.windows(2) {
                    check(w[1][k] <= w[0][k], || {
                        format!("texture {t} {family:?} {}: {:?}", names[k], series.iter().map(|s| s[k]).collect::<Vec<_>>())
                    })?;
                }
                series_checked += 1;
            }
        }
    }
    Ok(format!("{series_checked} severity series non-increasing"))
}

fn svr_against_dense_qp() -> Outcome {
    let mut worst_obj: f64 = 0.0;
    let mut worst_kkt: f64 = 0.0;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=8);
        let d = rng.random_range(1..=4);
        let points: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let params = SvrHyperparams {
            gamma: rng.random_range(0.5..4.0),
            c: [0.5, 2.0, 10.0, 50.0][rng.random_range(0..4)],
            epsilon: rng.random_range(0.0..2.0),
            tolerance: 1e-9,
            max_iterations: 100_000,
        };
        let kernel: Vec<Vec<f64>> = points
            .iter()
            .map(|a| points.iter().map(|b| rbf_kernel(a, b, params.gamma)).collect())
            .collect();
        let smo = solve_smo(&kernel, &y, &params).map_err(|e| format!("seed {seed}: {e}"))?;
        let reference = qp::solve_dense(&kernel, &y, params.c, params.epsilon)
            .ok_or_else(|| format!("seed {seed}: dense reference found no optimum"))?;
        let obj = qp::objective(&kernel, &y, params.epsilon, &smo.beta);
        let gap = (obj - reference.objective).abs();
        check(gap <= 1e-6, || format!("seed {seed}: objective gap {gap:e}"))?;
        let (kkt, eq) = qp::kkt_residual(&kernel, &y, params.c, params.epsilon, &smo.beta);
        check(kkt <= params.tolerance && eq <= 1e-9, || format!("seed {seed}: KKT {kkt:e}, sum {eq:e}"))?;
        worst_obj = worst_obj.max(gap);
        worst_kkt = worst_kkt.max(kkt);
    }
    Ok(format!("200 instances, max objective gap {worst_obj:.1e}, max KKT residual {worst_kkt:.1e}"))
}

fn manifest_with(sizes: &[(Category, usize)]) -> DatasetManifest {
    let mut scenes = Vec::new();
    for (category, n) in sizes {
        for i in 0..*n {
            scenes.push(SceneEntry {
                content_id: format!("{category}_{i:02}"),
                category: *category,
                reference_path: format!("{category}_{i:02}.mp4").into(),
                duration: 8.0,
                geometry: None,
            });
        }
    }
    DatasetManifest::new(scenes)
}

fn split_reproduction() -> Outcome {
    let m = manifest_with(&[(Category::DayGood, 18), (Category::DayBad, 10), (Category::NightGood, 11)]);
    let want = [(Category::DayGood, 15, 3), (Category::DayBad, 8, 2), (Category::NightGood, 9, 2)];
    for seed in 0..1000u64 {
        let s = split_by_scene(&m, 0.8, seed).map_err(|e| e.to_string())?;
        for (c, train, val) in want {
            let got = &s.per_category[&c];
            check(got.train == train && got.val == val, || {
                format!("seed {seed} {c}: {}/{}", got.train, got.val)
            })?;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..1000 {
        let sizes: Vec<(Category, usize)> = Category::ALL
            .iter()
            .filter_map(|&c| rng.random_bool(0.85).then(|| (c, rng.random_range(2..30))))
            .collect();
        if sizes.is_empty() {
            continue;
        }
        let m = manifest_with(&sizes);
        let fraction = rng.random_range(0.05..0.95);
        let s = split_by_scene(&m, fraction, rng.random()).map_err(|e| format!("case {case}: {e}"))?;
        check(s.train.is_disjoint(&s.val), || format!("case {case}: overlap"))?;
        let all: BTreeSet<String> = m.scenes.iter().map(|x| x.content_id.clone()).collect();
        let union: BTreeSet<String> = s.train.union(&s.val).cloned().collect();
        check(union == all, || format!("case {case}: split does not cover the manifest"))?;
        for (c, n) in &sizes {
            let got = &s.per_category[c];
            check(got.train == train_count(*n, fraction) && got.train + got.val == *n, || {
                format!("case {case} {c}: {}/{} of {n}", got.train, got.val)
            })?;
        }
    }
    Ok("15/3, 8/2, 9/2 for seeds 0..1000; disjoint and complete on 1,000 random manifests".into())
}

const DESK_SEED: u64 = 11;

fn desk_retraining() -> Outcome {
    let start = Instant::now();
    let outcome = run_desk_experiment(&DeskConfig::default(), DESK_SEED);
    let gain = outcome.rmse_gain();
    let elapsed = start.elapsed();
    let sweep_start = Instant::now();
    let sweep: Vec<f64> = (0..20).map(|s| run_desk_experiment(&DeskConfig::default(), s).rmse_gain()).collect();
    let passing = sweep.iter().filter(|g| **g >= 0.10).count();
    let detail = format!(
        "seed {DESK_SEED}: baseline RMSE {:.2}, retrained {:.2}, gain {:.1}% in {:.1} s; seeds 0..20: {passing}/20 reach 10% ({:.1} s)",
        outcome.baseline.rmse,
        outcome.retrained.rmse,
        100.0 * gain,
        elapsed.as_secs_f64(),
        sweep_start.elapsed().as_secs_f64()
    );
    check(gain >= 0.10 && elapsed < Duration::from_secs(300), || detail.clone())?;
    Ok(detail)
}

const BETA_TABLE: [(f64, f64, f64, f64); 10] = [
    (0.5, 0.5, 0.3, 0.36901011956554536),
    (2.0, 3.0, 0.4, 0.5247999999999999),
    (10.0, 5.0, 0.7, 0.5842011862193499),
    (0.1, 0.2, 0.05, 0.50953912153464),
    (50.0, 60.0, 0.45, 0.46423529143060444),
    (1.0, 1.0, 0.25, 0.25),
    (3.5, 1.5, 0.9, 0.8526158035593171),
    (7.0, 7.0, 0.5, 0.5),
    (100.0, 2.0, 0.98, 0.3978586676842591),
    (0.8, 12.0, 0.01, 0.18632807191787207),
];

const GAMMA_TABLE: [(f64, f64, f64); 10] = [
    (0.5, 0.2, 0.47291074313446196),
    (1.0, 1.0, 0.6321205588285577),
    (2.5, 3.0, 0.6937810815867212),
    (10.0, 7.0, 0.16950406276132673),
    (0.1, 0.01, 0.6626212599544796),
    (5.0, 12.0, 0.992399609318933),
    (30.0, 25.0, 0.1821039159774551),
    (1.5, 0.5, 0.19874804309879915),
    (100.0, 110.0, 0.8417213299399129),
    (3.0, 0.3, 0.003599493183089468),
];

fn statistics_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20240);
    let sample = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> { (0..n).map(|_| f64::from(rng.random_range(0..6u8))).collect() };
    for case in 0..500 {
        let (na, nb) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let a = sample(&mut rng, na);
        let b = sample(&mut rng, nb);
        let delta = cliffs_delta(&a, &b).map_err(|e| e.to_string())?.statistic;
        check(delta == brute::cliffs_delta(&a, &b), || format!("case {case}: Cliff's delta {delta}"))?;
        let (u, p) = brute::mann_whitney_exact(&a, &b);
        let exact = mann_whitney_exact(&a, &b).map_err(|e| e.to_string())?;
        check(exact.statistic == u && (exact.p() - p).abs() < 1e-12, || {
            format!("case {case}: U {} p {} vs {u} {p}", exact.statistic, exact.p())
        })?;
        let m = rng.random_range(1..=8);
        let ps: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
        let adjusted = holm_adjust(&ps).map_err(|e| e.to_string())?;
        check(adjusted.iter().zip(brute::holm(&ps)).all(|(x, y)| (x - y).abs() < 1e-15), || {
            format!("case {case}: Holm {ps:?}")
        })?;
    }
    let normal = Normal::new(50.0, 10.0).unwrap();
    for trial in 0..200 {
        let a: Vec<f64> = (0..rng.random_range(2..15)).map(|_| normal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..rng.random_range(2..15)).map(|_| normal.sample(&mut rng) + 5.0).collect();
        let f = anova_oneway(&[a.clone(), b.clone()]).map_err(|e| e.to_string())?.statistic;
        let t = brute::pooled_t(&a, &b);
        check((f - t * t).abs() <= 1e-9 * f.max(1.0), || format!("trial {trial}: F {f} vs t^2 {}", t * t))?;
    }
    let matrix = vec![vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0], vec![3.0, 4.0, 5.0], vec![4.0, 5.0, 5.0]];
    let hand = 1.5 * (1.0 - (5.0 / 3.0 + 5.0 / 3.0 + 11.0 / 12.0) / (147.0 / 12.0));
    let alpha = cronbach_alpha(&matrix).map_err(|e| e.to_string())?.statistic;
    check((alpha - hand).abs() < 1e-9, || format!("Cronbach alpha {alpha} vs {hand}"))?;
    for (a, b, x, want) in BETA_TABLE {
        let got = beta_inc(a, b, x);
        check(((got - want) / want).abs() < 1e-10, || format!("I_{x}({a},{b}) = {got}, want {want}"))?;
    }
    for (a, x, want) in GAMMA_TABLE {
        let got = gamma_p(a, x);
        check(((got - want) / want).abs() < 1e-10, || format!("P({a},{x}) = {got}, want {want}"))?;
    }
    Ok("500 rank-statistic cases, 200 F = t^2 trials, alpha, 20 tabulated special-function values".into())
}

fn compression_pattern() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let skew = Exp::new(1.0).unwrap();
    let groups: Vec<Group> = [(30, 72.0), (36, 62.0), (42, 52.0), (48, 42.0)]
        .iter()
        .map(|&(crf, mean): &(u32, f64)| {
            Group::new(
                format!("crf{crf}"),
                (0..39).map(|_| (mean + 10.0 * (skew.sample(&mut rng) - 1.0)).clamp(0.0, 100.0)).collect(),
            )
        })
        .collect();
    let report = compression_effect_report(&groups, "asset").map_err(|e| e.to_string())?;
    check(report.path == TestPath::Nonparametric, || "normality held; Holm path not exercised".into())?;
    for p in report.adjacent() {
        check(p.significant, || format!("{} vs {}: adjusted p {}", p.a, p.b, p.p_adjusted))?;
    }
    let labels: Vec<&str> = groups.iter().map(|g| g.label.as_str()).collect();
    for a in 0..labels.len() {
        let deltas: Vec<f64> = (a + 1..labels.len())
            .map(|b| report.pair(labels[a], labels[b]).map(|p| p.cliffs_delta).unwrap_or(f64::NAN))
            .collect();
        check(deltas.windows(2).all(|w| w[1] > w[0]), || format!("{} deltas by gap: {deltas:?}", labels[a]))?;
    }
    let adjacent: Vec<String> = report.adjacent().map(|p| format!("{:.2}", p.cliffs_delta)).collect();
    let widest = report.pair(labels[0], labels[3]).map(|p| p.cliffs_delta).unwrap_or(f64::NAN);
    Ok(format!("adjacent pairs significant after Holm; adjacent delta [{}], widest gap {widest:.2}", adjacent.join(", ")))
}

fn map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn alignment_fixtures() -> Outcome {
    let ids = ["a", "b", "c", "d", "e"];
    let fixture = |p: [f64; 5], l: [f64; 5]| {
        evaluate(
            &map(&ids.iter().copied().zip(p).collect::<Vec<_>>()),
            &map(&ids.iter().copied().zip(l).collect::<Vec<_>>()),
        )
    };
    let close = |got: f64, want: f64, what: &str| check((got - want).abs() <= 1e-9, || format!("{what}: {got} vs {want}"));
    let r = fixture([1.0, 2.0, 3.0, 4.0, 5.0], [2.0, 2.0, 4.0, 4.0, 6.0]).map_err(|e| e.to_string())?;
    close(r.mad, 0.6, "MAD")?;
    close(r.mse, 0.6, "MSE")?;
    close(r.rmse, 0.6f64.sqrt(), "RMSE")?;
    close(r.pearson_r, 10.0 / 112.0f64.sqrt(), "r")?;
    close(r.spearman_rho, 9.0 / 90.0f64.sqrt(), "rho")?;
    let r = fixture([10.0, 20.0, 30.0, 40.0, 50.0], [50.0, 40.0, 30.0, 20.0, 10.0]).map_err(|e| e.to_string())?;
    close(r.mad, 24.0, "MAD")?;
    close(r.mse, 800.0, "MSE")?;
    close(r.rmse, 800.0f64.sqrt(), "RMSE")?;
    close(r.pearson_r, -1.0, "r")?;
    close(r.spearman_rho, -1.0, "rho")?;
    let r = fixture([50.0; 5], [10.0, 20.0, 30.0, 40.0, 60.0]).map_err(|e| e.to_string())?;
    close(r.mad, 22.0, "MAD")?;
    check(r.correlation_undefined && r.pearson_r.is_nan(), || "constant predictions must flag correlation".into())?;

    let report = evaluate(
        &map(&[("over", 68.9), ("under", 46.2), ("exact", 50.0)]),
        &map(&[("over", 38.8), ("under", 55.8), ("exact", 50.0)]),
    )
    .map_err(|e| e.to_string())?;
    let outliers = outlier_report(&report, 3).map_err(|e| e.to_string())?;
    let delta = |id: &str| outliers.iter().find(|o| o.asset_id == id).map(|o| o.delta).unwrap_or(f64::NAN);
    close(delta("over"), -30.1, "delta for mos 38.8 / prediction 68.9")?;
    close(delta("under"), 9.6, "delta for mos 55.8 / prediction 46.2")?;
    check(outliers[0].asset_id == "over", || "largest outlier first".into())?;
    Ok(format!("3 five-point fixtures to 1e-9; delta {:.1} and {:+.1}", delta("over"), delta("under")))
}

fn study_fuzzing() -> Outcome {
    let start = Instant::now();
    let report = run_study_fuzz(10_000, 0x5eed);
    check(report.violations.is_empty(), || report.violations.join("; "))?;
    check(report.completed_sessions > 0, || "no sequence completed a session".into())?;
    Ok(format!(
        "{} sequences, {} calls ({} accepted), {} sessions completed all {SCENARIOS_PER_SESSION} scenarios, {} assignments checked, {:.1} s",
        report.sequences,
        report.operations,
        report.accepted,
        report.completed_sessions,
        report.assignments_checked,
        start.elapsed().as_secs_f64()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("metric identities", metric_identities),
        ("monotonicity", monotonicity),
        ("svr correctness", svr_against_dense_qp),
        ("split reproduction", split_reproduction),
        ("desk-scale retraining", desk_retraining),
        ("statistics oracles", statistics_oracles),
        ("compression effect pattern", compression_pattern),
        ("alignment evaluation", alignment_fixtures),
        ("study state machine fuzzing", study_fuzzing),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match std::panic::catch_unwind(run) {
            Ok(Ok(detail)) => println!("PASS {name}: {detail}"),
            Ok(Err(detail)) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL {name}: panicked");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
