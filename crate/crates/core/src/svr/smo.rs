//! Sequential minimal optimization for the epsilon-SVR dual.
//!
//! The dual is written over `2n` variables `a = (alpha, alpha*)` with labels
//! `s_t = +1` for the first half and `-1` for the second:
//!
//! ```text
//! min f(a) = 1/2 a^T Q a + p^T a
//! s.t. s^T a = 0, 0 <= a_t <= C
//! Q_tu = s_t s_u K(x_t, x_u),  p_t = eps - y_t (first half), eps + y_t (second half)
//! ```
//!
//! Each iteration picks the maximal violating pair (first-order working set
//! selection) and solves the two-variable subproblem in closed form. The
//! regression coefficients are `beta_i = alpha_i - alpha*_i`.

use crate::error::{Error, Result};

use super::SvrHyperparams;

/// Curvature floor for non-positive-definite pairs.
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution {
    /// `alpha_i - alpha*_i` per training point.
    pub beta: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    /// Maximal KKT violation (`m(a) - M(a)`) at termination.
    pub violation: f64,
    /// Dual objective evaluated at `beta`, see [`dual_objective`].
    pub objective: f64,
}

pub fn rbf_kernel(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// Dual objective to be maximized:
/// `-1/2 beta^T K beta - eps * sum|beta| + sum y * beta`.
pub fn dual_objective(kernel: &[Vec<f64>], targets: &[f64], epsilon: f64, beta: &[f64]) -> f64 {
    let mut quad = 0.0;
    for (i, row) in kernel.iter().enumerate() {
        for (j, k) in row.iter().enumerate() {
            quad += beta[i] * beta[j] * k;
        }
    }
    let linear: f64 = beta
        .iter()
        .zip(targets)
        .map(|(b, y)| y * b - epsilon * b.abs())
        .sum();
    linear - 0.5 * quad
}

struct State<'a> {
    n: usize,
    kernel: &'a [Vec<f64>],
    c: f64,
    alpha: Vec<f64>,
    grad: Vec<f64>,
    linear: Vec<f64>,
}

impl State<'_> {
    fn sign(&self, t: usize) -> f64 {
        if t < self.n {
            1.0
        } else {
            -1.0
        }
    }

    fn q(&self, t: usize, u: usize) -> f64 {
        self.sign(t) * self.sign(u) * self.kernel[t % self.n][u % self.n]
    }

    fn in_up(&self, t: usize) -> bool {
        if t < self.n {
            self.alpha[t] < self.c
        } else {
            self.alpha[t] > 0.0
        }
    }

    fn in_low(&self, t: usize) -> bool {
        if t < self.n {
            self.alpha[t] > 0.0
        } else {
            self.alpha[t] < self.c
        }
    }

    /// Maximal violating pair and the violation `m - M`.
    fn select_pair(&self) -> Option<(usize, usize, f64)> {
        let mut g_max = f64::NEG_INFINITY;
        let mut g_min = f64::INFINITY;
        let mut up = None;
        let mut low = None;
        for t in 0..2 * self.n {
            let v = -self.sign(t) * self.grad[t];
            if self.in_up(t) && v > g_max {
                g_max = v;
                up = Some(t);
            }
            if self.in_low(t) && v < g_min {
                g_min = v;
                low = Some(t);
            }
        }
        Some((up?, low?, g_max - g_min))
    }

    /// Primal-form objective `f(a)`; the solver keeps it non-increasing.
    fn objective(&self) -> f64 {
        0.5 * self
            .alpha
            .iter()
            .zip(self.grad.iter().zip(&self.linear))
            .map(|(a, (g, p))| a * (g + p))
            .sum::<f64>()
    }

    fn update_pair(&mut self, i: usize, j: usize) {
        let c = self.c;
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        let q_ii = self.q(i, i);
        let q_jj = self.q(j, j);
        let q_ij = self.q(i, j);
        if self.sign(i) != self.sign(j) {
            let mut quad = q_ii + q_jj + 2.0 * q_ij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let mut quad = q_ii + q_jj - 2.0 * q_ij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        for t in 0..2 * self.n {
            self.grad[t] += self.q(t, i) * di + self.q(t, j) * dj;
        }
    }

    fn bias(&self) -> f64 {
        let mut upper = f64::INFINITY;
        let mut lower = f64::NEG_INFINITY;
        let mut free_sum = 0.0;
        let mut free = 0usize;
        for t in 0..2 * self.n {
            let yg = self.sign(t) * self.grad[t];
            let at_upper = self.alpha[t] >= self.c;
            let at_lower = self.alpha[t] <= 0.0;
            let positive = self.sign(t) > 0.0;
            if at_upper {
                if positive {
                    lower = lower.max(yg);
                } else {
                    upper = upper.min(yg);
                }
            } else if at_lower {
                if positive {
                    upper = upper.min(yg);
                } else {
                    lower = lower.max(yg);
                }
            } else {
                free += 1;
                free_sum += yg;
            }
        }
        let rho = if free > 0 {
            free_sum / free as f64
        } else {
            (upper + lower) / 2.0
        };
        -rho
    }
}

/// Solves the epsilon-SVR dual for a precomputed kernel matrix.
pub fn solve_smo(kernel: &[Vec<f64>], targets: &[f64], params: &SvrHyperparams) -> Result<SmoSolution> {
    params.validate()?;
    let n = targets.len();
    if kernel.len() != n || kernel.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "kernel matrix does not match {n} targets"
        )));
    }
    if n == 0 {
        return Err(Error::Empty("no training points".into()));
    }
    if targets.iter().any(|y| !y.is_finite()) {
        return Err(Error::NonFinite("SVR targets".into()));
    }
    let linear: Vec<f64> = (0..2 * n)
        .map(|t| {
            if t < n {
                params.epsilon - targets[t]
            } else {
                params.epsilon + targets[t - n]
            }
        })
        .collect();
    let mut state = State {
        n,
        kernel,
        c: params.c,
        alpha: vec![0.0; 2 * n],
        grad: linear.clone(),
        linear,
    };

    let mut iterations = 0;
    let mut last_objective = state.objective();
    let violation = loop {
        let (i, j, violation) = state
            .select_pair()
            .expect("up and low sets are never both empty for C > 0");
        if violation <= params.tolerance {
            break violation;
        }
        if iterations >= params.max_iterations {
            return Err(Error::NoConvergence {
                iterations,
                violation,
            });
        }
        state.update_pair(i, j);
        iterations += 1;
        if cfg!(debug_assertions) {
            let objective = state.objective();
            debug_assert!(
                objective <= last_objective + 1e-9 * (1.0 + last_objective.abs()),
                "SMO objective increased: {last_objective} -> {objective}"
            );
            last_objective = objective;
        }
    };

    let beta: Vec<f64> = (0..n).map(|i| state.alpha[i] - state.alpha[i + n]).collect();
    let bias = state.bias();
    let objective = dual_objective(kernel, targets, params.epsilon, &beta);
    Ok(SmoSolution {
        beta,
        bias,
        iterations,
        violation,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gram(points: &[f64], gamma: f64) -> Vec<Vec<f64>> {
        points
            .iter()
            .map(|&a| points.iter().map(|&b| rbf_kernel(&[a], &[b], gamma)).collect())
            .collect()
    }

    #[test]
    fn constant_targets_need_no_support_vectors() {
        let k = gram(&[0.0, 0.3, 0.6, 1.0], 1.0);
        let sol = solve_smo(&k, &[42.0; 4], &SvrHyperparams::default()).unwrap();
        assert!(sol.beta.iter().all(|&b| b == 0.0));
        assert_eq!(sol.bias, 42.0);
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn dual_feasibility() {
        let xs = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
        let ys = [0.0, 8.0, 1.0, 9.0, 3.0, 10.0];
        let p = SvrHyperparams {
            c: 5.0,
            epsilon: 0.5,
            gamma: 2.0,
            tolerance: 1e-9,
            ..SvrHyperparams::default()
        };
        let sol = solve_smo(&gram(&xs, 2.0), &ys, &p).unwrap();
        assert!(sol.beta.iter().sum::<f64>().abs() < 1e-9);
        assert!(sol.beta.iter().all(|b| b.abs() <= p.c + 1e-12));
        assert!(sol.violation <= p.tolerance);
    }

    #[test]
    fn iteration_cap_reports_violation() {
        let xs = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
        let ys = [0.0, 8.0, 1.0, 9.0, 3.0, 10.0];
        let p = SvrHyperparams {
            max_iterations: 1,
            tolerance: 1e-12,
            ..SvrHyperparams::default()
        };
        match solve_smo(&gram(&xs, 1.0), &ys, &p) {
            Err(Error::NoConvergence {
                iterations: 1,
                violation,
            }) => assert!(violation > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_non_finite_targets() {
        let k = gram(&[0.0, 1.0], 1.0);
        assert!(matches!(
            solve_smo(&k, &[1.0, f64::NAN], &SvrHyperparams::default()),
            Err(Error::NonFinite(_))
        ));
    }
}
