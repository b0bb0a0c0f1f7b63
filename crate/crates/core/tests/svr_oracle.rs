use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use teleqa_core::svr::{dual_objective, rbf_kernel, solve_smo, SvrHyperparams};
use teleqa_testkit::qp;

struct Instance {
    kernel: Vec<Vec<f64>>,
    y: Vec<f64>,
    params: SvrHyperparams,
}

fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=8);
    let d = rng.random_range(1..=4);
    let points: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
    let params = SvrHyperparams {
        gamma: rng.random_range(0.5..4.0),
        c: [0.5, 2.0, 10.0, 50.0][rng.random_range(0..4)],
        epsilon: rng.random_range(0.0..2.0),
        tolerance: 1e-9,
        max_iterations: 100_000,
    };
    let kernel = points
        .iter()
        .map(|a| points.iter().map(|b| rbf_kernel(a, b, params.gamma)).collect())
        .collect();
    Instance { kernel, y, params }
}

#[test]
fn smo_matches_enumerated_qp() {
    for seed in 0..200 {
        let inst = instance(seed);
        let smo = solve_smo(&inst.kernel, &inst.y, &inst.params).unwrap();
        let reference = qp::solve_dense(&inst.kernel, &inst.y, inst.params.c, inst.params.epsilon)
            .unwrap_or_else(|| panic!("oracle found no KKT point for seed {seed}"));
        let smo_obj = qp::objective(&inst.kernel, &inst.y, inst.params.epsilon, &smo.beta);
        assert!(
            (smo_obj - reference.objective).abs() <= 1e-6,
            "seed {seed}: smo {smo_obj} vs qp {}",
            reference.objective
        );
        assert!((smo.objective - smo_obj).abs() <= 1e-9 * smo_obj.abs().max(1.0));
        let (gap, eq) = qp::kkt_residual(&inst.kernel, &inst.y, inst.params.c, inst.params.epsilon, &smo.beta);
        assert!(gap <= inst.params.tolerance, "seed {seed}: KKT gap {gap}");
        assert!(eq <= 1e-9, "seed {seed}: sum of beta {eq}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dual_solution_is_feasible(seed in any::<u64>()) {
        let inst = instance(seed);
        let smo = solve_smo(&inst.kernel, &inst.y, &inst.params).unwrap();
        let sum: f64 = smo.beta.iter().sum();
        prop_assert!(sum.abs() <= 1e-9);
        for b in &smo.beta {
            prop_assert!(b.abs() <= inst.params.c * (1.0 + 1e-12));
        }
        prop_assert!(smo.violation <= inst.params.tolerance);
        // Zero is always feasible, so the optimum is never below it.
        prop_assert!(dual_objective(&inst.kernel, &inst.y, inst.params.epsilon, &smo.beta) >= -1e-12);
    }
}
