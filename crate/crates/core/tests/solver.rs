mod common;

use common::{matrix, random_instance, subgradient_oracle};
use ndarray::{Array1, Array2};
use polvote::lasso::{fit, multinomial_nll, nll_and_gradient, FitConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn objective_matches_subgradient_oracle() {
    for seed in 0..8 {
        let inst = random_instance(seed);
        let (x, y) = matrix(&inst);
        let cfg = FitConfig {
            lambda: inst.lambda,
            max_iters: 100_000,
            tol: 1e-14,
            ..FitConfig::default()
        };
        let fr = fit(&x, &y, &cfg).unwrap();
        let oracle = subgradient_oracle(&inst, 100_000);
        assert!((fr.objective - oracle).abs() <= 1e-4, "seed {seed}: {} vs {}", fr.objective, oracle);
    }
}

#[test]
fn twenty_rows_at_half_penalty_reach_oracle() {
    let mut inst = random_instance(77);
    inst.x.truncate(20);
    inst.y = (0..20).map(|i| i % inst.k).collect();
    inst.lambda = 0.5;
    let (x, y) = matrix(&inst);
    let fr = fit(&x, &y, &FitConfig { lambda: 0.5, max_iters: 100_000, tol: 1e-14, ..FitConfig::default() }).unwrap();
    assert!(fr.objective <= subgradient_oracle(&inst, 100_000) + 1e-4);
}

#[test]
fn gradient_matches_central_differences() {
    for seed in 0..25 {
        let inst = random_instance(100 + seed);
        let (x, _) = matrix(&inst);
        let z = x.values.view();
        let d = z.ncols();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Array2::from_shape_fn((inst.k, d), |_| rng.random_range(-1.0..1.0));
        let b = Array1::from_shape_fn(inst.k, |_| rng.random_range(-1.0..1.0));
        let (f, gw, gb) = nll_and_gradient(z, &inst.y, w.view(), b.view());
        assert!((f - multinomial_nll(z, &inst.y, w.view(), b.view())).abs() < 1e-9);
        let h = 1e-5;
        let rel = |analytic: f64, numeric: f64| (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0);
        for a in 0..inst.k {
            for j in 0..d {
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp[[a, j]] += h;
                wm[[a, j]] -= h;
                let num = (multinomial_nll(z, &inst.y, wp.view(), b.view()) - multinomial_nll(z, &inst.y, wm.view(), b.view())) / (2.0 * h);
                assert!(rel(gw[[a, j]], num) < 1e-5, "seed {seed} w[{a},{j}]: {} vs {num}", gw[[a, j]]);
            }
            let (mut bp, mut bm) = (b.clone(), b.clone());
            bp[a] += h;
            bm[a] -= h;
            let num = (multinomial_nll(z, &inst.y, w.view(), bp.view()) - multinomial_nll(z, &inst.y, w.view(), bm.view())) / (2.0 * h);
            assert!(rel(gb[a], num) < 1e-5, "seed {seed} b[{a}]: {} vs {num}", gb[a]);
        }
    }
}
