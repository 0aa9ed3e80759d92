//! Test-side oracles shared by the integration and acceptance suites.

#![allow(dead_code)]

use ndarray::Array2;
use polvote::features::{FeatureMatrix, LabelVector, ModelKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
    pub k: usize,
    pub lambda: f64,
}

pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(15..=60);
    let d = rng.random_range(1..=8);
    let k = rng.random_range(3..=9);
    let centers: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        // Every class appears at least once.
        let c = if i < k { i } else { rng.random_range(0..k) };
        x.push((0..d).map(|j| centers[c][j] + rng.random_range(-1.5..1.5)).collect());
        y.push(c);
    }
    let lambda = rng.random_range(0.05..4.0);
    Instance { x, y, k, lambda }
}

pub fn matrix(inst: &Instance) -> (FeatureMatrix, LabelVector) {
    let n = inst.x.len();
    let d = inst.x[0].len();
    let flat: Vec<f64> = inst.x.iter().flatten().copied().collect();
    let fm = FeatureMatrix {
        kind: ModelKind::AllLikes,
        columns: (0..d).map(|j| format!("x{j}")).collect(),
        row_ids: (0..n).map(|i| format!("r{i}")).collect(),
        values: Array2::from_shape_vec((n, d), flat).unwrap(),
    };
    (fm, LabelVector::new(inst.y.clone(), inst.k).unwrap())
}

/// Columns centered and divided by the population sd.
pub fn standardized(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = x.len() as f64;
    let d = x[0].len();
    let mut z = x.to_vec();
    for j in 0..d {
        let m = x.iter().map(|r| r[j]).sum::<f64>() / n;
        let sd = (x.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n).sqrt();
        let s = if sd > 1e-12 { sd } else { 1.0 };
        for r in z.iter_mut() {
            r[j] = (r[j] - m) / s;
        }
    }
    z
}

/// Objective and one subgradient; zero coefficients take the minimum-norm choice.
pub fn objective_and_subgradient(z: &[Vec<f64>], y: &[usize], k: usize, lambda: f64, w: &[f64], b: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let d = z[0].len();
    let mut f = 0.0;
    let mut gw = vec![0.0; k * d];
    let mut gb = vec![0.0; k];
    for (row, &c) in z.iter().zip(y) {
        let logits: Vec<f64> = (0..k)
            .map(|a| b[a] + (0..d).map(|j| w[a * d + j] * row[j]).sum::<f64>())
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = logits.iter().map(|l| (l - m).exp()).sum();
        f += m + s.ln() - logits[c];
        for a in 0..k {
            let p = (logits[a] - m).exp() / s - if a == c { 1.0 } else { 0.0 };
            gb[a] += p;
            for j in 0..d {
                gw[a * d + j] += p * row[j];
            }
        }
    }
    f += lambda * w.iter().map(|v| v.abs()).sum::<f64>();
    for (g, &v) in gw.iter_mut().zip(w) {
        *g = if v != 0.0 {
            *g + lambda * v.signum()
        } else if g.abs() <= lambda {
            0.0
        } else {
            *g - lambda * g.signum()
        };
    }
    (f, gw, gb)
}

/// Best objective seen over `iters` normalized subgradient steps.
pub fn subgradient_oracle(inst: &Instance, iters: usize) -> f64 {
    let z = standardized(&inst.x);
    let d = z[0].len();
    let k = inst.k;
    let mut w = vec![0.0; k * d];
    let mut b = vec![0.0; k];
    let mut best = f64::INFINITY;
    for t in 0..iters {
        let (f, gw, gb) = objective_and_subgradient(&z, &inst.y, k, inst.lambda, &w, &b);
        best = best.min(f);
        let norm = (gw.iter().chain(&gb).map(|g| g * g).sum::<f64>()).sqrt();
        if norm == 0.0 {
            break;
        }
        let step = 0.5 / (norm * ((t + 1) as f64).sqrt());
        for (v, g) in w.iter_mut().zip(&gw) {
            let next = *v - step * g;
            // Crossing zero lands on zero: the L1 kink is where sparse optima sit.
            *v = if *v != 0.0 && next.signum() != v.signum() { 0.0 } else { next };
        }
        for (v, g) in b.iter_mut().zip(&gb) {
            *v -= step * g;
        }
    }
    best
}

/// Accuracy, macro precision and macro recall read off a confusion matrix
/// `m[gold][pred]`. Precision averages over classes seen in gold or pred,
/// recall over classes seen in gold.
pub fn confusion_metrics(m: &[Vec<u64>]) -> (f64, f64, f64) {
    let k = m.len();
    let n: u64 = m.iter().flatten().sum();
    let diag: u64 = (0..k).map(|c| m[c][c]).sum();
    let row = |c: usize| m[c].iter().sum::<u64>();
    let col = |c: usize| (0..k).map(|g| m[g][c]).sum::<u64>();
    let (mut p_sum, mut p_n, mut r_sum, mut r_n) = (0.0, 0, 0.0, 0);
    for c in 0..k {
        if row(c) > 0 || col(c) > 0 {
            p_n += 1;
            if col(c) > 0 {
                p_sum += m[c][c] as f64 / col(c) as f64;
            }
        }
        if row(c) > 0 {
            r_n += 1;
            r_sum += m[c][c] as f64 / row(c) as f64;
        }
    }
    (diag as f64 / n as f64, p_sum / p_n as f64, r_sum / r_n as f64)
}

/// Probability that a random positive outscores a random negative, ties half.
pub fn rank_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let pos: Vec<f64> = scores.iter().zip(positive).filter(|p| *p.1).map(|p| *p.0).collect();
    let neg: Vec<f64> = scores.iter().zip(positive).filter(|p| !*p.1).map(|p| *p.0).collect();
    let mut wins = 0.0;
    for &a in &pos {
        for &b in &neg {
            wins += if a > b {
                1.0
            } else if a == b {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

/// Random scores in [0, 1] rounded to the 1e-4 ROC grid, rows summing to
/// roughly one, with uniform random gold labels.
pub fn random_scores(n: usize, k: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Array2::from_shape_fn((n, k), |_| rng.random_range(0.0..1.0));
    for mut row in s.rows_mut() {
        let t: f64 = row.sum();
        row.mapv_inplace(|v| (v / t * 1e4).round() / 1e4);
    }
    let gold = (0..n).map(|_| rng.random_range(0..k)).collect();
    (s, gold)
}

/// Plain unregularized gradient descent on standardized features; returns
/// the training accuracy reached after `iters` steps.
pub fn gradient_descent_accuracy(inst: &Instance, iters: usize, step: f64) -> f64 {
    let z = standardized(&inst.x);
    let d = z[0].len();
    let k = inst.k;
    let mut w = vec![0.0; k * d];
    let mut b = vec![0.0; k];
    for _ in 0..iters {
        let (_, gw, gb) = objective_and_subgradient(&z, &inst.y, k, 0.0, &w, &b);
        for (v, g) in w.iter_mut().zip(&gw) {
            *v -= step * g;
        }
        for (v, g) in b.iter_mut().zip(&gb) {
            *v -= step * g;
        }
    }
    let hits = z
        .iter()
        .zip(&inst.y)
        .filter(|(row, &c)| {
            let logit = |a: usize| b[a] + (0..d).map(|j| w[a * d + j] * row[j]).sum::<f64>();
            (0..k).all(|a| a == c || logit(a) < logit(c))
        })
        .count();
    hits as f64 / inst.y.len() as f64
}

/// 30 points, 3 classes, 2 features: each class is a tight cluster at a
/// corner of a triangle.
pub fn separable_instance() -> Instance {
    let corners = [[0.0, 0.0], [4.0, 0.0], [2.0, 4.0]];
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..30 {
        let c = i % 3;
        x.push(corners[c].iter().map(|v| v + rng.random_range(-0.5..0.5)).collect());
        y.push(c);
    }
    Instance { x, y, k: 3, lambda: 0.0 }
}
