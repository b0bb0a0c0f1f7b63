//! Hypothesis tests and effect sizes. All p-values are two-sided.

use serde::{Deserialize, Serialize};

use super::special::{
    chi2_sf, f_sf, normal_cdf, normal_quantile, normal_sf, studentized_range_sf, t_two_sided,
};
use super::{average_ranks, mean, tie_sizes, variance};
use crate::error::{Error, Result};

/// Outcome of one test. `df2` is only used by F tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    pub statistic: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub df2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
}

impl TestResult {
    fn new(name: &str, statistic: f64) -> Self {
        TestResult {
            name: name.to_string(),
            statistic,
            df: None,
            df2: None,
            p_value: None,
        }
    }

    fn with_df(mut self, df: f64) -> Self {
        self.df = Some(df);
        self
    }

    fn with_p(mut self, p: f64) -> Self {
        self.p_value = Some(p.clamp(0.0, 1.0));
        self
    }

    pub fn p(&self) -> f64 {
        self.p_value.unwrap_or(f64::NAN)
    }
}

/// One post hoc comparison between groups `a` and `b` (indices into the
/// input).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseResult {
    pub a: usize,
    pub b: usize,
    pub result: TestResult,
}

fn check_groups(groups: &[Vec<f64>], min_size: usize) -> Result<()> {
    if groups.len() < 2 {
        return Err(Error::Precondition("at least two groups are required".into()));
    }
    if let Some((i, g)) = groups.iter().enumerate().find(|(_, g)| g.len() < min_size) {
        return Err(Error::Precondition(format!(
            "group {i} has {} values, at least {min_size} required",
            g.len()
        )));
    }
    if groups.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("test input".into()));
    }
    Ok(())
}

/// Cronbach's alpha for a participants x items matrix without missing cells.
pub fn cronbach_alpha(matrix: &[Vec<f64>]) -> Result<TestResult> {
    let participants = matrix.len();
    let items = matrix.first().map_or(0, Vec::len);
    if participants < 2 || items < 2 {
        return Err(Error::Precondition(
            "Cronbach's alpha needs at least 2 participants and 2 items".into(),
        ));
    }
    if matrix.iter().any(|row| row.len() != items) {
        return Err(Error::Precondition("item matrix has missing cells".into()));
    }
    let item_var: f64 = (0..items)
        .map(|k| variance(&matrix.iter().map(|row| row[k]).collect::<Vec<_>>()))
        .sum();
    let totals: Vec<f64> = matrix.iter().map(|row| row.iter().sum()).collect();
    let total_var = variance(&totals);
    if total_var == 0.0 {
        return Err(Error::ZeroVariance("total score variance is zero".into()));
    }
    let k = items as f64;
    Ok(TestResult::new("alpha", k / (k - 1.0) * (1.0 - item_var / total_var)))
}

fn poly(coefficients: &[f64], x: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Shapiro-Wilk W with Royston's approximation for the p-value (AS R94),
/// valid for 3 <= n <= 5000.
pub fn shapiro_wilk(sample: &[f64]) -> Result<TestResult> {
    let n = sample.len();
    if !(3..=5000).contains(&n) {
        return Err(Error::Precondition(format!(
            "Shapiro-Wilk needs 3..=5000 values, got {n}"
        )));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Shapiro-Wilk input".into()));
    }
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let range = x[n - 1] - x[0];
    if range < 1e-19 {
        return Err(Error::ZeroVariance("Shapiro-Wilk sample is constant".into()));
    }

    const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
    const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
    const C3: [f64; 4] = [0.544, -0.39978, 0.025054, -6.714e-4];
    const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
    const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
    const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
    const G: [f64; 2] = [-2.273, 0.459];

    let half = n / 2;
    let an = n as f64;
    // Coefficients for the lower half, 1-based as in the reference algorithm.
    let mut a = vec![0.0; half + 1];
    if n == 3 {
        a[1] = 0.5f64.sqrt();
    } else {
        let an25 = an + 0.25;
        let mut summ2 = 0.0;
        for (i, ai) in a.iter_mut().enumerate().skip(1) {
            let m = normal_quantile((i as f64 - 0.375) / an25);
            *ai = m;
            summ2 += m * m;
        }
        summ2 *= 2.0;
        let ssumm2 = summ2.sqrt();
        let rsn = 1.0 / an.sqrt();
        let a1 = poly(&C1, rsn) - a[1] / ssumm2;
        let (first_scaled, fac) = if n > 5 {
            let a2 = -a[2] / ssumm2 + poly(&C2, rsn);
            let fac = ((summ2 - 2.0 * a[1] * a[1] - 2.0 * a[2] * a[2])
                / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
                .sqrt();
            a[2] = a2;
            (3, fac)
        } else {
            let fac = ((summ2 - 2.0 * a[1] * a[1]) / (1.0 - 2.0 * a1 * a1)).sqrt();
            (2, fac)
        };
        a[1] = a1;
        for ai in a.iter_mut().skip(first_scaled) {
            *ai /= -fac;
        }
    }

    // W as the squared correlation between the ordered sample and the
    // antisymmetric coefficient vector.
    let coef = |i: usize| -> f64 {
        let j = n - 1 - i;
        match i.cmp(&j) {
            std::cmp::Ordering::Less => -a[1 + i],
            std::cmp::Ordering::Greater => a[1 + j],
            std::cmp::Ordering::Equal => 0.0,
        }
    };
    let sa = (0..n).map(coef).sum::<f64>() / an;
    let sx = x.iter().map(|v| v / range).sum::<f64>() / an;
    let (mut ssa, mut ssx, mut sax) = (0.0, 0.0, 0.0);
    for (i, xi) in x.iter().enumerate() {
        let asa = coef(i) - sa;
        let xsx = xi / range - sx;
        ssa += asa * asa;
        ssx += xsx * xsx;
        sax += asa * xsx;
    }
    let ssassx = (ssa * ssx).sqrt();
    let w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
    let w = 1.0 - w1;

    let p = if n == 3 {
        let pi6 = 6.0 / std::f64::consts::PI;
        let stqr = std::f64::consts::FRAC_PI_3;
        (pi6 * (w.sqrt().asin() - stqr)).max(0.0)
    } else {
        let mut y = w1.ln();
        let (m, s) = if n <= 11 {
            let gamma = poly(&G, an);
            if y >= gamma {
                return Ok(TestResult::new("W", w).with_p(1e-99));
            }
            y = -(gamma - y).ln();
            (poly(&C3, an), poly(&C4, an).exp())
        } else {
            let ln_n = an.ln();
            (poly(&C5, ln_n), poly(&C6, ln_n).exp())
        };
        normal_sf((y - m) / s)
    };
    Ok(TestResult::new("W", w).with_p(p))
}

struct AnovaParts {
    means: Vec<f64>,
    sizes: Vec<f64>,
    ms_within: f64,
    df_within: f64,
    ms_between: f64,
    df_between: f64,
}

fn anova_parts(groups: &[Vec<f64>]) -> Result<AnovaParts> {
    check_groups(groups, 2)?;
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let grand = mean(&all);
    let means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
    let sizes: Vec<f64> = groups.iter().map(|g| g.len() as f64).collect();
    let ss_between: f64 = means
        .iter()
        .zip(&sizes)
        .map(|(m, n)| n * (m - grand) * (m - grand))
        .sum();
    let ss_within: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.iter().map(|x| (x - m) * (x - m)).sum::<f64>())
        .sum();
    if ss_within == 0.0 {
        return Err(Error::ZeroVariance(
            "all groups have zero within-group variance".into(),
        ));
    }
    let df_between = (groups.len() - 1) as f64;
    let df_within = (all.len() - groups.len()) as f64;
    Ok(AnovaParts {
        means,
        sizes,
        ms_within: ss_within / df_within,
        df_within,
        ms_between: ss_between / df_between,
        df_between,
    })
}

/// One-way ANOVA; F with (k - 1, N - k) degrees of freedom.
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<TestResult> {
    let parts = anova_parts(groups)?;
    let f = parts.ms_between / parts.ms_within;
    let mut r = TestResult::new("F", f)
        .with_df(parts.df_between)
        .with_p(f_sf(f, parts.df_between, parts.df_within));
    r.df2 = Some(parts.df_within);
    Ok(r)
}

/// Tukey-Kramer HSD for all pairs `a < b`.
pub fn tukey_hsd(groups: &[Vec<f64>]) -> Result<Vec<PairwiseResult>> {
    let parts = anova_parts(groups)?;
    let k = groups.len() as f64;
    let mut out = Vec::new();
    for a in 0..groups.len() {
        for b in a + 1..groups.len() {
            let harmonic = 2.0 / (1.0 / parts.sizes[a] + 1.0 / parts.sizes[b]);
            let q = (parts.means[a] - parts.means[b]).abs() / (parts.ms_within / harmonic).sqrt();
            let p = if q == 0.0 {
                1.0
            } else {
                studentized_range_sf(q, k, parts.df_within)
            };
            out.push(PairwiseResult {
                a,
                b,
                result: TestResult::new("q", q).with_df(parts.df_within).with_p(p),
            });
        }
    }
    Ok(out)
}

/// Kruskal-Wallis H with tie correction; chi-square p with k - 1 df.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<TestResult> {
    check_groups(groups, 1)?;
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = all.len() as f64;
    if all.len() < 5 {
        return Err(Error::Precondition(format!(
            "Kruskal-Wallis needs at least 5 observations, got {}",
            all.len()
        )));
    }
    let ranks = average_ranks(&all);
    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum += r * r / g.len() as f64;
        offset += g.len();
    }
    let h = 12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0);
    let ties: f64 = tie_sizes(&all)
        .iter()
        .map(|&t| (t * t * t - t) as f64)
        .sum();
    let correction = 1.0 - ties / (n * n * n - n);
    if correction <= 0.0 {
        return Err(Error::ZeroVariance("all observations are identical".into()));
    }
    let h = (h / correction).max(0.0);
    let df = (groups.len() - 1) as f64;
    Ok(TestResult::new("H", h).with_df(df).with_p(chi2_sf(h, df)))
}

/// Largest pooled sample handled by exact enumeration in [`mann_whitney`].
pub const MANN_WHITNEY_EXACT_MAX: usize = 12;

/// Mann-Whitney U (reported as `min(U_a, U_b)`). Exact permutation p-value
/// when `n_a + n_b <= 12`, otherwise the tie-corrected normal approximation
/// with continuity correction.
pub fn mann_whitney(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Precondition("Mann-Whitney needs two nonempty samples".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Mann-Whitney input".into()));
    }
    if a.len() + b.len() <= MANN_WHITNEY_EXACT_MAX {
        mann_whitney_exact(a, b)
    } else {
        mann_whitney_normal(a, b)
    }
}

fn u_statistic(a_ranks_sum: f64, na: usize) -> f64 {
    a_ranks_sum - (na * (na + 1)) as f64 / 2.0
}

/// Exact two-sided p: twice the smaller tail of the permutation
/// distribution of `U_a`, enumerated over all `C(n, n_a)` labelings of the
/// pooled midranks.
pub fn mann_whitney_exact(a: &[f64], b: &[f64]) -> Result<TestResult> {
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    if n > 20 {
        return Err(Error::Precondition(format!(
            "exact Mann-Whitney enumeration is limited to 20 observations, got {n}"
        )));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = average_ranks(&pooled);
    let observed = u_statistic(ranks[..na].iter().sum(), na);
    let mut total = 0u64;
    let mut below = 0u64;
    let mut above = 0u64;
    // Half-rank sums are exact in f64, so equality comparisons are safe.
    let mut combo: Vec<usize> = (0..na).collect();
    loop {
        let u = u_statistic(combo.iter().map(|&i| ranks[i]).sum(), na);
        total += 1;
        if u <= observed {
            below += 1;
        }
        if u >= observed {
            above += 1;
        }
        if !next_combination(&mut combo, n) {
            break;
        }
    }
    let tail = below.min(above) as f64 / total as f64;
    let u_min = observed.min((na * nb) as f64 - observed);
    Ok(TestResult::new("U", u_min).with_p((2.0 * tail).min(1.0)))
}

fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < n - k + i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

pub fn mann_whitney_normal(a: &[f64], b: &[f64]) -> Result<TestResult> {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = na + nb;
    let ranks = average_ranks(&pooled);
    let ua = u_statistic(ranks[..a.len()].iter().sum(), a.len());
    let u_min = ua.min(na * nb - ua);
    let ties: f64 = tie_sizes(&pooled)
        .iter()
        .map(|&t| (t * t * t - t) as f64)
        .sum();
    let var = na * nb / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = ((ua - na * nb / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
        2.0 * normal_sf(z)
    };
    Ok(TestResult::new("U", u_min).with_p(p.min(1.0)))
}

/// Holm step-down adjustment; results are in input order.
pub fn holm_adjust(p_values: &[f64]) -> Result<Vec<f64>> {
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Precondition(format!("p-value {p} outside [0, 1]")));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &i) in order.iter().enumerate() {
        let scaled = ((m - rank) as f64 * p_values[i]).min(1.0);
        running = running.max(scaled);
        adjusted[i] = running;
    }
    Ok(adjusted)
}

/// Cliff's delta `(#{a > b} - #{a < b}) / (n_a n_b)`, counted exactly via
/// binary search over the sorted second sample.
pub fn cliffs_delta(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Precondition("Cliff's delta needs two nonempty samples".into()));
    }
    let mut sorted = b.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut greater = 0i64;
    let mut less = 0i64;
    for &x in a {
        let lo = sorted.partition_point(|&y| y < x);
        let hi = sorted.partition_point(|&y| y <= x);
        greater += lo as i64;
        less += (sorted.len() - hi) as i64;
    }
    let delta = (greater - less) as f64 / (a.len() * b.len()) as f64;
    Ok(TestResult::new("delta", delta))
}

/// Welch's unequal-variance t test with Welch-Satterthwaite df.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Precondition("Welch's t needs at least 2 values per sample".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Welch input".into()));
    }
    let (va, vb) = (variance(a), variance(b));
    if va == 0.0 && vb == 0.0 {
        return Err(Error::ZeroVariance("both samples are constant".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let t = (mean(a) - mean(b)) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(TestResult::new("t", t).with_df(df).with_p(t_two_sided(t, df)))
}

/// Normal-approximation 95% half width for a mean of `n` values with
/// standard deviation `std`.
pub fn ci95_half_width(std: f64, n: usize) -> f64 {
    let z = normal_quantile(0.975);
    z * std / (n as f64).sqrt()
}

/// Probability that a standard normal exceeds `z` in absolute value.
pub fn two_sided_normal(z: f64) -> f64 {
    2.0 * (1.0 - normal_cdf(z.abs()))
}
