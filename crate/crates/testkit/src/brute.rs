//! Brute-force counterparts of the rank statistics, written directly from
//! their definitions with no shared code paths.

/// `#{a_i > b_j} - #{a_i < b_j}` over all pairs, divided by `n_a n_b`.
pub fn cliffs_delta(a: &[f64], b: &[f64]) -> f64 {
    let mut score = 0i64;
    for &x in a {
        for &y in b {
            if x > y {
                score += 1;
            } else if x < y {
                score -= 1;
            }
        }
    }
    score as f64 / (a.len() * b.len()) as f64
}

/// `U_a` by pair counting: wins count 1, ties 1/2. Returned doubled so the
/// value is an exact integer.
fn twice_u(a: &[f64], b: &[f64]) -> u64 {
    let mut u = 0;
    for &x in a {
        for &y in b {
            if x > y {
                u += 2;
            } else if x == y {
                u += 1;
            }
        }
    }
    u
}

/// Mann-Whitney `(min(U_a, U_b), exact two-sided p)`. The permutation
/// distribution enumerates every subset of the pooled sample of size `n_a`
/// as a bitmask; the p-value is twice the smaller tail, capped at 1.
pub fn mann_whitney_exact(a: &[f64], b: &[f64]) -> (f64, f64) {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let na = a.len();
    let observed = twice_u(a, b);
    let (mut total, mut le, mut ge) = (0u64, 0u64, 0u64);
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as usize != na {
            continue;
        }
        let (mut xa, mut xb) = (Vec::new(), Vec::new());
        for (i, &v) in pooled.iter().enumerate() {
            if mask & (1 << i) != 0 {
                xa.push(v);
            } else {
                xb.push(v);
            }
        }
        let u = twice_u(&xa, &xb);
        total += 1;
        if u <= observed {
            le += 1;
        }
        if u >= observed {
            ge += 1;
        }
    }
    let u_a = observed as f64 / 2.0;
    let u_min = u_a.min((a.len() * b.len()) as f64 - u_a);
    let p = (2.0 * le.min(ge) as f64 / total as f64).min(1.0);
    (u_min, p)
}

/// Holm adjustment from the definition: the adjusted value of the `i`-th
/// smallest p is `max_{j <= i} min(1, (m - j + 1) p_(j))`. Ties in the
/// input are ordered by position.
pub fn holm(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let rank_of = |i: usize| -> usize {
        (0..m)
            .filter(|&j| p[j] < p[i] || (p[j] == p[i] && j < i))
            .count()
    };
    let mut sorted: Vec<(usize, f64)> = (0..m).map(|i| (rank_of(i), p[i])).collect();
    sorted.sort_by_key(|&(r, _)| r);
    (0..m)
        .map(|i| {
            let r = rank_of(i);
            (0..=r)
                .map(|j| ((m - j) as f64 * sorted[j].1).min(1.0))
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Pooled two-sample t statistic (equal variances).
pub fn pooled_t(a: &[f64], b: &[f64]) -> f64 {
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let ss = |x: &[f64], m: f64| x.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
    let (ma, mb) = (mean(a), mean(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let sp2 = (ss(a, ma) + ss(b, mb)) / (na + nb - 2.0);
    (ma - mb) / (sp2 * (1.0 / na + 1.0 / nb)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_cases() {
        assert_eq!(cliffs_delta(&[1.0, 3.0], &[2.0, 4.0]), -0.5);
        let (u, p) = mann_whitney_exact(&[1.0, 2.0], &[3.0, 4.0]);
        assert_eq!(u, 0.0);
        assert!((p - 2.0 / 6.0).abs() < 1e-15);
        let h = holm(&[0.01, 0.02, 0.03]);
        for (got, want) in h.iter().zip([0.03, 0.04, 0.04]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert_eq!(holm(&[0.5, 0.9]), vec![1.0, 1.0]);
    }
}
