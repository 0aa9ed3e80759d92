mod common;

use common::{matrix, random_instance};
use polvote::lasso::{fit, predict, predict_proba, soft_threshold, FitConfig};
use proptest::prelude::*;

const GRID: [f64; 9] = [0.0, 0.5, 1.0, 2.0, 3.0, 5.0, 8.0, 10.0, 15.0];

fn cfg(lambda: f64) -> FitConfig {
    FitConfig {
        lambda,
        max_iters: 20_000,
        tol: 1e-10,
        ..FitConfig::default()
    }
}

#[test]
fn huge_penalty_predicts_class_priors() {
    for seed in 0..10 {
        let inst = random_instance(seed);
        let (x, y) = matrix(&inst);
        let fr = fit(&x, &y, &FitConfig { tol: 1e-15, ..cfg(1e6) }).unwrap();
        assert_eq!(fr.nonzero_features(), 0);
        let n = inst.y.len() as f64;
        let mut prior = vec![0.0; inst.k];
        for &c in &inst.y {
            prior[c] += 1.0 / n;
        }
        let p = predict_proba(&fr, &x).unwrap();
        for row in p.rows() {
            for (a, &v) in row.iter().enumerate() {
                assert!((v - prior[a]).abs() < 1e-6, "seed {seed} class {a}: {v} vs {}", prior[a]);
            }
        }
    }
}

#[test]
fn unpenalized_fit_separates_separable_data() {
    let inst = common::separable_instance();
    assert_eq!(common::gradient_descent_accuracy(&inst, 20_000, 0.05), 1.0);
    let (x, y) = matrix(&inst);
    let fr = fit(&x, &y, &cfg(0.0)).unwrap();
    assert_eq!(predict(&fr, &x).unwrap(), inst.y);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sparsity_nonincreasing_in_lambda(seed in 0u64..10_000) {
        let inst = random_instance(seed);
        let (x, y) = matrix(&inst);
        let counts: Vec<usize> = GRID.iter().map(|&l| fit(&x, &y, &cfg(l)).unwrap().nonzero_features()).collect();
        for i in 0..counts.len() {
            for j in i + 1..counts.len() {
                prop_assert!(counts[j] <= counts[i] + 2, "{:?}", counts);
            }
        }
    }

    #[test]
    fn objective_trace_never_rises(seed in 0u64..10_000) {
        let inst = random_instance(seed);
        let (x, y) = matrix(&inst);
        let c = cfg(inst.lambda);
        let fr = fit(&x, &y, &c).unwrap();
        for pair in fr.objective_trace.windows(2) {
            prop_assert!(pair[1] <= pair[0] + c.tol * pair[0].abs().max(1.0));
        }
    }

    #[test]
    fn zero_threshold_is_identity(z in -1e6f64..1e6) {
        prop_assert_eq!(soft_threshold(z, 0.0), z);
    }

    #[test]
    fn soft_threshold_shrinks_toward_zero(z in -100.0f64..100.0, t in 0.0f64..50.0) {
        let s = soft_threshold(z, t);
        prop_assert!(s.abs() <= z.abs());
        prop_assert!(s == 0.0 || s.signum() == z.signum());
        prop_assert!((z - s).abs() <= t + 1e-12);
    }
}
