//! Penalty selection by stratified k-fold cross-validation.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax_rows, fit_from, predict_proba, FitConfig, FitResult};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, LabelVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub grid: Vec<f64>,
    /// `fold_accuracies[g][f]`: accuracy of grid point `g` on fold `f`.
    pub fold_accuracies: Vec<Vec<f64>>,
    pub mean_accuracies: Vec<f64>,
    pub chosen_lambda: f64,
    pub chosen_index: usize,
    /// Normal-approximation half-width over the chosen penalty's fold accuracies.
    pub ci_95: f64,
    pub folds: usize,
    pub seed: u64,
}

impl CvResult {
    pub fn chosen_accuracy(&self) -> f64 {
        self.mean_accuracies[self.chosen_index]
    }
}

/// Held-out class probabilities of the chosen penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct OutOfFold {
    pub fold_of: Vec<usize>,
    pub proba: Array2<f64>,
}

/// Fold index per row: each class is shuffled with `seed` and dealt round-robin,
/// continuing where the previous class stopped.
pub fn stratified_folds(labels: &[usize], n_classes: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0; labels.len()];
    let mut offset = 0;
    for class in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for (j, &i) in members.iter().enumerate() {
            fold_of[i] = (offset + j) % k;
        }
        offset = (offset + members.len()) % k;
    }
    fold_of
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn cross_validate(
    x: &FeatureMatrix,
    y: &LabelVector,
    grid: &[f64],
    k: usize,
    seed: u64,
    base: &FitConfig,
) -> Result<CvResult> {
    cross_validate_with_predictions(x, y, grid, k, seed, base).map(|(cv, _)| cv)
}

/// Cross-validates every penalty in `grid`.
///
/// Within a fold the grid is walked from the largest penalty down, each fit
/// starting from the previous solution. Folds run in parallel; results are
/// assembled by fold index so they do not depend on scheduling.
pub fn cross_validate_with_predictions(
    x: &FeatureMatrix,
    y: &LabelVector,
    grid: &[f64],
    k: usize,
    seed: u64,
    base: &FitConfig,
) -> Result<(CvResult, OutOfFold)> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("lambda grid is empty".into()));
    }
    if k < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 folds, got {k}")));
    }
    let n = x.n_rows();
    if y.len() != n {
        return Err(Error::LengthMismatch { left: n, right: y.len() });
    }
    if n < k {
        return Err(Error::TooFewSamples(format!("{n} rows for {k} folds")));
    }
    let fold_of = stratified_folds(&y.labels, y.n_classes, k, seed);

    let mut path: Vec<usize> = (0..grid.len()).collect();
    path.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));

    // Per fold: (held-out row indices, per-grid-point (accuracy, probabilities)).
    type FoldOut = (Vec<usize>, Vec<(f64, Array2<f64>)>);
    let per_fold: Vec<Result<FoldOut>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
            let (xtr, ytr) = (x.select_rows(&train), y.select(&train));
            let (xte, yte) = (x.select_rows(&test), y.select(&test));
            let mut out: Vec<Option<(f64, Array2<f64>)>> = vec![None; grid.len()];
            let mut prev: Option<FitResult> = None;
            for &g in &path {
                let cfg = FitConfig { lambda: grid[g], ..*base };
                let fr = fit_from(&xtr, &ytr, &cfg, prev.as_ref())?;
                let p = predict_proba(&fr, &xte)?;
                let pred = argmax_rows(p.view());
                let hits = pred.iter().zip(&yte.labels).filter(|(a, b)| a == b).count();
                let acc = if test.is_empty() { 0.0 } else { hits as f64 / test.len() as f64 };
                out[g] = Some((acc, p));
                prev = Some(fr);
            }
            Ok((test, out.into_iter().map(|o| o.expect("every grid point fitted")).collect()))
        })
        .collect();
    let per_fold: Vec<FoldOut> = per_fold.into_iter().collect::<Result<_>>()?;

    let fold_accuracies: Vec<Vec<f64>> = (0..grid.len())
        .map(|g| per_fold.iter().map(|(_, r)| r[g].0).collect())
        .collect();
    let mean_accuracies: Vec<f64> = fold_accuracies.iter().map(|a| mean(a)).collect();

    // Highest mean accuracy; ties go to the smaller penalty.
    let mut by_lambda: Vec<usize> = (0..grid.len()).collect();
    by_lambda.sort_by(|&a, &b| grid[a].total_cmp(&grid[b]));
    let mut chosen = by_lambda[0];
    for &g in &by_lambda[1..] {
        if mean_accuracies[g] > mean_accuracies[chosen] {
            chosen = g;
        }
    }
    let ci_95 = 1.96 * sample_sd(&fold_accuracies[chosen]) / (k as f64).sqrt();

    let mut proba = Array2::zeros((n, y.n_classes));
    for (test, results) in &per_fold {
        let p = &results[chosen].1;
        for (r, &i) in test.iter().enumerate() {
            proba.row_mut(i).assign(&p.row(r));
        }
    }

    Ok((
        CvResult {
            grid: grid.to_vec(),
            fold_accuracies,
            mean_accuracies,
            chosen_lambda: grid[chosen],
            chosen_index: chosen,
            ci_95,
            folds: k,
            seed,
        },
        OutOfFold { fold_of, proba },
    ))
}
