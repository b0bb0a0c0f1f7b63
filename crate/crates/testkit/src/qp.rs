//! Exhaustive active-set reference for the epsilon-SVR dual
//!
//! ```text
//! maximize   D(beta) = -1/2 beta' K beta - eps sum|beta_i| + sum y_i beta_i
//! subject to sum beta_i = 0,  -C <= beta_i <= C
//! ```
//!
//! Every point is assigned one of five states (zero, upper bound, lower
//! bound, free positive, free negative). For each assignment the free
//! coefficients and the bias follow from a bordered linear system; the first
//! assignment satisfying all KKT conditions is the optimum (the problem is
//! convex, so any KKT point attains the optimal objective).

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub beta: Vec<f64>,
    pub bias: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Zero,
    Upper,
    Lower,
    FreePos,
    FreeNeg,
}

const STATES: [State; 5] = [State::Zero, State::Upper, State::Lower, State::FreePos, State::FreeNeg];

pub fn objective(kernel: &[Vec<f64>], y: &[f64], epsilon: f64, beta: &[f64]) -> f64 {
    let n = beta.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += beta[i] * kernel[i][j] * beta[j];
        }
    }
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    let lin: f64 = y.iter().zip(beta).map(|(a, b)| a * b).sum();
    -0.5 * quad - epsilon * l1 + lin
}

/// Gaussian elimination with partial pivoting; `None` if singular.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Interval of biases `b` for which point `i` satisfies its KKT condition
/// given `g_i = (K beta)_i`.
pub fn bias_interval(beta_i: f64, g_i: f64, y_i: f64, c: f64, epsilon: f64, tol: f64) -> (f64, f64) {
    let at_upper = beta_i >= c - tol;
    let at_lower = beta_i <= -c + tol;
    if beta_i.abs() <= tol {
        (y_i - epsilon - g_i, y_i + epsilon - g_i)
    } else if at_upper {
        (f64::NEG_INFINITY, y_i - epsilon - g_i)
    } else if at_lower {
        (y_i + epsilon - g_i, f64::INFINITY)
    } else if beta_i > 0.0 {
        let b = y_i - epsilon - g_i;
        (b, b)
    } else {
        let b = y_i + epsilon - g_i;
        (b, b)
    }
}

/// Smallest achievable worst-case KKT violation over all biases: the gap
/// `max lo_i - min hi_i` of the per-point bias intervals, floored at 0.
/// Also returns the equality-constraint residual `|sum beta|`.
pub fn kkt_residual(kernel: &[Vec<f64>], y: &[f64], c: f64, epsilon: f64, beta: &[f64]) -> (f64, f64) {
    let n = beta.len();
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for i in 0..n {
        let g: f64 = (0..n).map(|j| kernel[i][j] * beta[j]).sum();
        let (l, h) = bias_interval(beta[i], g, y[i], c, epsilon, 1e-9 * c.max(1.0));
        lo = lo.max(l);
        hi = hi.min(h);
    }
    let gap = if lo.is_finite() && hi.is_finite() {
        (lo - hi).max(0.0)
    } else {
        0.0
    };
    (gap, beta.iter().sum::<f64>().abs())
}

fn try_assignment(
    kernel: &[Vec<f64>],
    y: &[f64],
    c: f64,
    epsilon: f64,
    states: &[State],
    tol: f64,
) -> Option<QpSolution> {
    let n = y.len();
    let mut beta = vec![0.0; n];
    let mut free = Vec::new();
    for (i, s) in states.iter().enumerate() {
        match s {
            State::Zero => {}
            State::Upper => beta[i] = c,
            State::Lower => beta[i] = -c,
            State::FreePos | State::FreeNeg => free.push(i),
        }
    }
    let fixed_sum: f64 = beta.iter().sum();
    if !free.is_empty() {
        let m = free.len();
        let mut a = vec![vec![0.0; m + 1]; m + 1];
        let mut rhs = vec![0.0; m + 1];
        for (r, &i) in free.iter().enumerate() {
            for (k, &j) in free.iter().enumerate() {
                a[r][k] = kernel[i][j];
            }
            a[r][m] = 1.0;
            let sign = if states[i] == State::FreePos { 1.0 } else { -1.0 };
            let fixed: f64 = (0..n).map(|j| kernel[i][j] * beta[j]).sum();
            rhs[r] = y[i] - sign * epsilon - fixed;
        }
        for k in 0..m {
            a[m][k] = 1.0;
        }
        rhs[m] = -fixed_sum;
        let x = solve_linear(a, rhs)?;
        for (r, &i) in free.iter().enumerate() {
            let v = x[r];
            let ok = match states[i] {
                State::FreePos => v >= -tol && v <= c + tol,
                _ => v <= tol && v >= -c - tol,
            };
            if !ok {
                return None;
            }
            beta[i] = v;
        }
    } else if fixed_sum.abs() > tol {
        return None;
    }
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for i in 0..n {
        let g: f64 = (0..n).map(|j| kernel[i][j] * beta[j]).sum();
        let (l, h) = match states[i] {
            State::Zero => (y[i] - epsilon - g, y[i] + epsilon - g),
            State::Upper => (f64::NEG_INFINITY, y[i] - epsilon - g),
            State::Lower => (y[i] + epsilon - g, f64::INFINITY),
            State::FreePos => (y[i] - epsilon - g, y[i] - epsilon - g),
            State::FreeNeg => (y[i] + epsilon - g, y[i] + epsilon - g),
        };
        lo = lo.max(l);
        hi = hi.min(h);
    }
    if lo > hi + tol {
        return None;
    }
    let bias = match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => 0.0,
    };
    Some(QpSolution {
        objective: objective(kernel, y, epsilon, &beta),
        beta,
        bias,
    })
}

/// Solves the dual by exhaustive enumeration of the `5^n` state
/// assignments. Intended for `n <= 8`.
pub fn solve_dense(kernel: &[Vec<f64>], y: &[f64], c: f64, epsilon: f64) -> Option<QpSolution> {
    let n = y.len();
    assert!(n <= 10, "enumeration is exponential in n");
    let tol = 1e-9 * c.max(1.0);
    let mut states = vec![State::Zero; n];
    let total = 5usize.pow(n as u32);
    for code in 0..total {
        let mut k = code;
        for s in states.iter_mut() {
            *s = STATES[k % 5];
            k /= 5;
        }
        if let Some(sol) = try_assignment(kernel, y, c, epsilon, &states, tol) {
            return Some(sol);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_closed_form() {
        // K = I, y = (0, 4), eps = 1, C large: beta = (-1, 1), f = (-1, 3)+b
        // with b = 2 -> predictions (1, 3), both on the tube edge.
        let k = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let s = solve_dense(&k, &[0.0, 4.0], 100.0, 1.0).unwrap();
        assert!((s.beta[0] + 1.0).abs() < 1e-12 && (s.beta[1] - 1.0).abs() < 1e-12);
        assert!((s.bias - 2.0).abs() < 1e-12);
        assert!((s.objective - 1.0).abs() < 1e-12);
        let (gap, eq) = kkt_residual(&k, &[0.0, 4.0], 100.0, 1.0, &s.beta);
        assert!(gap < 1e-12 && eq < 1e-12);
    }

    #[test]
    fn targets_inside_tube_give_zero() {
        let k = vec![vec![1.0, 0.5], vec![0.5, 1.0]];
        let s = solve_dense(&k, &[1.0, 1.5], 10.0, 1.0).unwrap();
        assert_eq!(s.beta, vec![0.0, 0.0]);
        assert_eq!(s.objective, 0.0);
    }

    #[test]
    fn box_constraint_binds() {
        let k = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let s = solve_dense(&k, &[0.0, 40.0], 2.0, 1.0).unwrap();
        assert_eq!(s.beta, vec![-2.0, 2.0]);
    }
}
