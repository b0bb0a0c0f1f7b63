use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use teleqa_core::stats::hypothesis::{mann_whitney_exact, mann_whitney_normal};
use teleqa_core::stats::special::{beta_inc, gamma_p, studentized_range_sf};
use teleqa_core::stats::{
    anova_oneway, cliffs_delta, cronbach_alpha, holm_adjust, kruskal_wallis, mann_whitney,
    shapiro_wilk, tukey_hsd, welch_t,
};
use teleqa_testkit::brute;

fn small_sample(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| f64::from(rng.random_range(0..6u8))).collect()
}

#[test]
fn rank_statistics_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(20240);
    for case in 0..500 {
        let na = rng.random_range(1..=8);
        let nb = rng.random_range(1..=8);
        let a = small_sample(&mut rng, na);
        let b = small_sample(&mut rng, nb);

        let delta = cliffs_delta(&a, &b).unwrap().statistic;
        assert_eq!(delta, brute::cliffs_delta(&a, &b), "case {case}");
        assert_eq!(cliffs_delta(&b, &a).unwrap().statistic, -delta);

        let (u, p) = brute::mann_whitney_exact(&a, &b);
        let exact = mann_whitney_exact(&a, &b).unwrap();
        assert_eq!(exact.statistic, u, "case {case}: {a:?} {b:?}");
        assert!((exact.p() - p).abs() < 1e-12, "case {case}: {} vs {p}", exact.p());
        if na + nb <= 12 {
            assert_eq!(mann_whitney(&a, &b).unwrap(), exact);
        }

        let m = rng.random_range(1..=8);
        let ps: Vec<f64> = (0..m)
            .map(|_| match rng.random_range(0..4) {
                0 => 0.05,
                1 => 1.0,
                _ => rng.random_range(0.0..1.0),
            })
            .collect();
        let adjusted = holm_adjust(&ps).unwrap();
        for (x, y) in adjusted.iter().zip(brute::holm(&ps)) {
            assert!((x - y).abs() < 1e-15, "case {case}: {ps:?}");
        }
        for (x, p) in adjusted.iter().zip(&ps) {
            assert!(x >= p && *x <= 1.0);
        }
    }
}

#[test]
fn anova_on_two_groups_is_squared_pooled_t() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let normal = Normal::new(50.0, 10.0).unwrap();
    for _ in 0..200 {
        let na = rng.random_range(2..15);
        let nb = rng.random_range(2..15);
        let a: Vec<f64> = (0..na).map(|_| normal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..nb).map(|_| normal.sample(&mut rng) + 5.0).collect();
        let f = anova_oneway(&[a.clone(), b.clone()]).unwrap().statistic;
        let t = brute::pooled_t(&a, &b);
        assert!((f - t * t).abs() <= 1e-9 * f.max(1.0), "{f} vs {}", t * t);
    }
}

#[test]
fn anova_hand_example() {
    // SSB = 54 (df 1), SSW = 4 (df 4): F = 54, p equals the pooled t test
    // at t = sqrt(54) with 4 df.
    let r = anova_oneway(&[vec![1.0, 2.0, 3.0], vec![7.0, 8.0, 9.0]]).unwrap();
    assert!((r.statistic - 54.0).abs() < 1e-12);
    assert_eq!((r.df, r.df2), (Some(1.0), Some(4.0)));
    assert!((r.p() - 0.001826260668259983).abs() < 1e-10);
    let same = anova_oneway(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap();
    assert_eq!((same.statistic, same.p()), (0.0, 1.0));
    let groups: Vec<Vec<f64>> = (0..4).map(|g| (0..39).map(|i| (i * (g + 1)) as f64).collect()).collect();
    let r = anova_oneway(&groups).unwrap();
    assert_eq!((r.df, r.df2), (Some(3.0), Some(152.0)));
}

#[test]
fn cronbach_hand_matrix() {
    let m = vec![
        vec![1.0, 2.0, 3.0],
        vec![2.0, 3.0, 4.0],
        vec![3.0, 4.0, 5.0],
        vec![4.0, 5.0, 5.0],
    ];
    // Item variances 5/3, 5/3, 11/12; row-sum variance 147/12.
    let hand = 1.5 * (1.0 - (5.0 / 3.0 + 5.0 / 3.0 + 11.0 / 12.0) / (147.0 / 12.0));
    let alpha = cronbach_alpha(&m).unwrap().statistic;
    assert!((alpha - hand).abs() < 1e-9);
    assert!((alpha - 0.979591836734694).abs() < 1e-9);
}

#[test]
fn cronbach_of_independent_noise_is_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let m: Vec<Vec<f64>> = (0..1000)
        .map(|_| (0..5).map(|_| normal.sample(&mut rng)).collect())
        .collect();
    assert!(cronbach_alpha(&m).unwrap().statistic.abs() < 0.1);
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

#[test]
fn incomplete_beta_and_gamma_tables() {
    for (a, b, x, want) in BETA_TABLE {
        let got = beta_inc(a, b, x);
        assert!(((got - want) / want).abs() < 1e-10, "I_{x}({a}, {b}) = {got}, want {want}");
    }
    for (a, x, want) in GAMMA_TABLE {
        let got = gamma_p(a, x);
        assert!(((got - want) / want).abs() < 1e-10, "P({a}, {x}) = {got}, want {want}");
    }
}

#[test]
fn shapiro_reference_values() {
    let r = shapiro_wilk(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
    assert!(r.statistic > 0.9);
    assert!((r.statistic - 0.9748582563729324).abs() < 1e-6);
    assert!((r.p() - 0.9331651921064946).abs() < 1e-4);
    let r = shapiro_wilk(&[2.1, 3.4, 1.9, 5.6, 4.4, 3.3, 2.8, 3.9, 4.1, 6.2]).unwrap();
    assert!((r.statistic - 0.9586525101340807).abs() < 1e-6);
    assert!((r.p() - 0.770404728929781).abs() < 1e-4);
}

#[test]
fn shapiro_calibration_on_normal_samples() {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let passes = (0..100)
        .filter(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..50).map(|_| normal.sample(&mut rng)).collect();
            shapiro_wilk(&x).unwrap().p() > 0.05
        })
        .count();
    assert!(passes >= 90, "{passes} of 100");
}

#[test]
fn tukey_reference_values() {
    let groups = vec![
        vec![1.0, 2.0, 3.0, 4.0],
        vec![3.0, 4.0, 5.0, 6.0],
        vec![6.0, 7.0, 8.0, 10.0],
    ];
    let want = [
        (2.7712812921102032, 0.1780257053273242),
        (7.274613391789284, 0.001576669517675655),
        (4.50333209967908, 0.027137873600699303),
    ];
    let got = tukey_hsd(&groups).unwrap();
    for (g, (q, p)) in got.iter().zip(want) {
        assert!((g.result.statistic - q).abs() < 1e-6);
        assert!((g.result.p() - p).abs() < 1e-5, "{} vs {p}", g.result.p());
    }
    assert!((studentized_range_sf(3.5, 3.0, 9.0) - 0.08184539218985143).abs() < 1e-6);
    assert!((studentized_range_sf(4.2, 4.0, 20.0) - 0.03508850966821664).abs() < 1e-6);
}

#[test]
fn tukey_two_groups_matches_t() {
    let a = vec![1.0, 3.0, 2.0, 5.0, 4.0];
    let b = vec![4.0, 6.0, 5.0, 8.0, 9.0];
    let q = tukey_hsd(&[a.clone(), b.clone()]).unwrap()[0].result.clone();
    let t = brute::pooled_t(&a, &b).abs();
    assert!((q.statistic - t * 2f64.sqrt()).abs() < 1e-9);
    let pooled = anova_oneway(&[a, b]).unwrap().p();
    assert!((q.p() - pooled).abs() < 1e-3, "{} vs {pooled}", q.p());
}

#[test]
fn kruskal_examples() {
    let r = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
    assert!((r.statistic - 3.857142857142857).abs() < 1e-9);
    assert!((r.p() - 0.049534613435626915).abs() < 1e-9);
    let r = kruskal_wallis(&[vec![1.0, 4.0], vec![2.0, 3.0], vec![1.5, 3.5]]).unwrap();
    assert_eq!(r.df, Some(2.0));
    assert!(kruskal_wallis(&[vec![2.0; 3], vec![2.0; 3]]).is_err());
}

#[test]
fn mann_whitney_paths_agree_at_six_per_group() {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    for _ in 0..100 {
        let a: Vec<f64> = (0..6).map(|_| normal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..6).map(|_| normal.sample(&mut rng) + 0.7).collect();
        let exact = mann_whitney_exact(&a, &b).unwrap().p();
        let approx = mann_whitney_normal(&a, &b).unwrap().p();
        assert!((exact - approx).abs() <= 0.02, "{exact} vs {approx}");
    }
}

#[test]
fn mann_whitney_large_shift_is_significant() {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a: Vec<f64> = (0..40).map(|_| normal.sample(&mut rng)).collect();
    let b: Vec<f64> = (0..40).map(|_| normal.sample(&mut rng) + 2.0).collect();
    assert!(mann_whitney(&a, &b).unwrap().p() < 0.001);
    let same = [1.0, 2.0, 3.0];
    assert_eq!(mann_whitney(&same, &same).unwrap().statistic, 4.5);
}

#[test]
fn welch_examples() {
    let a = [1.0, 2.0, 3.0];
    let r = welch_t(&a, &a).unwrap();
    assert_eq!((r.statistic, r.p()), (0.0, 1.0));
    let b = [11.0, 12.0, 13.0];
    let r = welch_t(&a, &b).unwrap();
    assert!(r.p() < 0.01);
    assert!((r.df.unwrap() - 4.0).abs() < 1e-9);
}

proptest! {
    #[test]
    fn p_values_stay_in_unit_interval(
        a in prop::collection::vec(0.0f64..100.0, 2..20),
        b in prop::collection::vec(0.0f64..100.0, 2..20),
    ) {
        for r in [mann_whitney(&a, &b).unwrap(), cliffs_delta(&a, &b).unwrap()] {
            if let Some(p) = r.p_value {
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }
        let d = cliffs_delta(&a, &b).unwrap().statistic;
        prop_assert!(d.abs() <= 1.0);
        if let Ok(r) = welch_t(&a, &b) {
            prop_assert!((0.0..=1.0).contains(&r.p()));
        }
        if let Ok(r) = kruskal_wallis(&[a.clone(), b.clone()]) {
            prop_assert!((0.0..=1.0).contains(&r.p()));
        }
    }

    #[test]
    fn holm_is_monotone_in_sorted_order(ps in prop::collection::vec(0.0f64..=1.0, 1..12)) {
        let adj = holm_adjust(&ps).unwrap();
        let mut order: Vec<usize> = (0..ps.len()).collect();
        order.sort_by(|&i, &j| ps[i].total_cmp(&ps[j]));
        for w in order.windows(2) {
            prop_assert!(adj[w[0]] <= adj[w[1]]);
        }
    }
}
