//! L1-penalized multinomial logistic regression.
//!
//! The objective is the summed multinomial negative log-likelihood plus
//! `lambda * sum(|W|)` over the non-intercept coefficients. Features are
//! standardized inside [`fit`] and coefficients are reported on that scale.
//!
//! The optimizer is accelerated proximal gradient with backtracking: a
//! gradient step on the smooth likelihood followed by [`soft_threshold`] of
//! every non-intercept coefficient. Whenever an extrapolated step would raise
//! the objective the momentum is dropped and a plain proximal step is taken
//! from the last iterate, so the recorded objective never increases.

mod cv;

pub use cv::{cross_validate, cross_validate_with_predictions, stratified_folds, CvResult, OutOfFold};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, LabelVector};

/// Penalties swept by default during cross-validation.
pub const DEFAULT_LAMBDA_GRID: [f64; 9] = [0.0, 0.5, 1.0, 2.0, 3.0, 5.0, 8.0, 10.0, 15.0];

const STEP_GROWTH: f64 = 1.25;

/// `sign(z) * max(|z| - t, 0)`, the proximal map of `t * |.|`.
#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Plain proximal gradient with a constant step and no acceleration.
    FixedStep(f64),
    BacktrackingLineSearch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub lambda: f64,
    pub max_iters: usize,
    pub step_rule: StepRule,
    /// Stop once the relative objective change falls below this.
    pub tol: f64,
    /// Must stay false: intercepts are never penalized.
    pub penalize_intercept: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            lambda: 0.0,
            max_iters: 5000,
            step_rule: StepRule::BacktrackingLineSearch,
            tol: 1e-9,
            penalize_intercept: false,
        }
    }
}

impl FitConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        FitConfig {
            lambda,
            ..FitConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::InvalidConfig(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if self.max_iters == 0 || !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("max_iters and tol must be positive".into()));
        }
        if let StepRule::FixedStep(eta) = self.step_rule {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::InvalidConfig("fixed step must be positive".into()));
            }
        }
        if self.penalize_intercept {
            return Err(Error::InvalidConfig("intercepts are never penalized".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub columns: Vec<String>,
    pub n_classes: usize,
    pub lambda_used: f64,
    pub intercepts: Vec<f64>,
    /// `n_classes` rows of one coefficient per column, standardized scale.
    pub coefficients: Vec<Vec<f64>>,
    pub feature_means: Vec<f64>,
    pub feature_scales: Vec<f64>,
    /// Nonzero coefficients, intercepts included.
    pub included: usize,
    /// All coefficients, intercepts included.
    pub total: usize,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<f64>,
}

impl FitResult {
    /// Nonzero coefficients excluding intercepts.
    pub fn nonzero_features(&self) -> usize {
        self.coefficients
            .iter()
            .flatten()
            .filter(|&&w| w != 0.0)
            .count()
    }

    fn weights(&self) -> (Array2<f64>, Array1<f64>) {
        let d = self.columns.len();
        let flat: Vec<f64> = self.coefficients.iter().flatten().copied().collect();
        (
            Array2::from_shape_vec((self.n_classes, d), flat).expect("coefficient shape"),
            Array1::from(self.intercepts.clone()),
        )
    }
}

/// Class logits `Z W^T + b`.
fn logits(z: ArrayView2<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let mut l = z.dot(&w.t());
    l += &b;
    l
}

/// Softmax in place, row by row; returns the summed log-normalizers.
fn softmax_rows(l: &mut Array2<f64>) -> Vec<f64> {
    let mut lse = Vec::with_capacity(l.nrows());
    for mut row in l.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        let mut s = 0.0;
        row.mapv_inplace(|v| {
            let e = (v - m).exp();
            s += e;
            e
        });
        row.mapv_inplace(|e| e / s);
        lse.push(m + s.ln());
    }
    lse
}

/// Summed multinomial negative log-likelihood.
pub fn multinomial_nll(z: ArrayView2<f64>, y: &[usize], w: ArrayView2<f64>, b: ArrayView1<f64>) -> f64 {
    let l = logits(z, w, b);
    let mut total = 0.0;
    for (row, &label) in l.rows().into_iter().zip(y) {
        let m = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        let s: f64 = row.iter().map(|&v| (v - m).exp()).sum();
        total += m + s.ln() - row[label];
    }
    total
}

/// Negative log-likelihood with its gradient in the coefficients and intercepts.
pub fn nll_and_gradient(
    z: ArrayView2<f64>,
    y: &[usize],
    w: ArrayView2<f64>,
    b: ArrayView1<f64>,
) -> (f64, Array2<f64>, Array1<f64>) {
    let mut p = logits(z, w, b);
    let raw: Vec<f64> = y.iter().enumerate().map(|(i, &c)| p[[i, c]]).collect();
    let lse = softmax_rows(&mut p);
    let nll = lse.iter().zip(&raw).map(|(a, r)| a - r).sum();
    for (i, &c) in y.iter().enumerate() {
        p[[i, c]] -= 1.0;
    }
    let gw = p.t().dot(&z);
    let gb = p.sum_axis(Axis(0));
    (nll, gw, gb)
}

fn l1(w: &Array2<f64>) -> f64 {
    w.iter().map(|v| v.abs()).sum()
}

struct Solution {
    w: Array2<f64>,
    b: Array1<f64>,
    objective: f64,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn prox_step(
    yw: &Array2<f64>,
    yb: &Array1<f64>,
    gw: &Array2<f64>,
    gb: &Array1<f64>,
    eta: f64,
    lambda: f64,
) -> (Array2<f64>, Array1<f64>) {
    let mut w = Array2::zeros(yw.raw_dim());
    let t = eta * lambda;
    Zip::from(&mut w)
        .and(yw)
        .and(gw)
        .for_each(|o, &v, &g| *o = soft_threshold(v - eta * g, t));
    let b = yb - &(gb * eta);
    (w, b)
}

/// Core proximal-gradient loop on already standardized features.
fn solve(
    z: ArrayView2<f64>,
    y: &[usize],
    n_classes: usize,
    cfg: &FitConfig,
    init: Option<(Array2<f64>, Array1<f64>)>,
) -> Solution {
    let n = z.nrows();
    let d = z.ncols();
    let lambda = cfg.lambda;
    let (mut xw, mut xb) = init.unwrap_or_else(|| (Array2::zeros((n_classes, d)), Array1::zeros(n_classes)));
    let mut fx = multinomial_nll(z, y, xw.view(), xb.view()) + lambda * l1(&xw);
    let mut trace = vec![fx];
    let mut converged = false;
    let mut iterations = 0;

    if let StepRule::FixedStep(eta) = cfg.step_rule {
        while iterations < cfg.max_iters {
            iterations += 1;
            let (_, gw, gb) = nll_and_gradient(z, y, xw.view(), xb.view());
            let (w, b) = prox_step(&xw, &xb, &gw, &gb, eta, lambda);
            let f_new = multinomial_nll(z, y, w.view(), b.view()) + lambda * l1(&w);
            let rel = (fx - f_new).abs() / f_new.abs().max(1.0);
            xw = w;
            xb = b;
            fx = f_new;
            trace.push(fx);
            if rel <= cfg.tol {
                converged = true;
                break;
            }
        }
        return Solution { w: xw, b: xb, objective: fx, trace, iterations, converged };
    }

    // Optimistic first step; each iteration tries a slightly longer step
    // before the line search shrinks it.
    let mut eta = 4.0 / n.max(1) as f64;
    let mut yw = xw.clone();
    let mut yb = xb.clone();
    let mut momentum = 1.0_f64;
    let mut at_iterate = true;
    while iterations < cfg.max_iters {
        iterations += 1;
        let (fy, gw, gb) = nll_and_gradient(z, y, yw.view(), yb.view());
        eta *= STEP_GROWTH;
        let (cw, cb, f_smooth) = loop {
            let (cw, cb) = prox_step(&yw, &yb, &gw, &gb, eta, lambda);
            let f_c = multinomial_nll(z, y, cw.view(), cb.view());
            let dw = &cw - &yw;
            let db = &cb - &yb;
            let lin = (&dw * &gw).sum() + (&db * &gb).sum();
            let sq = dw.iter().map(|v| v * v).sum::<f64>() + db.iter().map(|v| v * v).sum::<f64>();
            let bound = fy + lin + sq / (2.0 * eta);
            if f_c <= bound + 1e-12 * fy.abs().max(1.0) || eta < 1e-300 {
                break (cw, cb, f_c);
            }
            eta *= 0.5;
        };
        let f_new = f_smooth + lambda * l1(&cw);
        if f_new > fx && !at_iterate {
            // Extrapolation overshot: restart momentum from the last iterate.
            yw.assign(&xw);
            yb.assign(&xb);
            momentum = 1.0;
            at_iterate = true;
            continue;
        }
        let next_momentum = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        let beta = (momentum - 1.0) / next_momentum;
        yw = &cw + &((&cw - &xw) * beta);
        yb = &cb + &((&cb - &xb) * beta);
        at_iterate = beta == 0.0;
        momentum = next_momentum;
        let rel = (fx - f_new).abs() / f_new.abs().max(1.0);
        xw = cw;
        xb = cb;
        fx = f_new;
        trace.push(fx);
        if rel <= cfg.tol {
            converged = true;
            break;
        }
    }
    Solution { w: xw, b: xb, objective: fx, trace, iterations, converged }
}

fn validate_inputs(x: &FeatureMatrix, y: &LabelVector) -> Result<()> {
    let n = x.n_rows();
    if y.len() != n {
        return Err(Error::LengthMismatch { left: n, right: y.len() });
    }
    if x.columns.len() != x.n_cols() {
        return Err(Error::SchemaMismatch("column names do not match matrix width".into()));
    }
    if n < 2 {
        return Err(Error::TooFewSamples(format!("fit needs at least 2 rows, got {n}")));
    }
    if y.n_classes < 2 {
        return Err(Error::SingleClass);
    }
    if let Some(&bad) = y.labels.iter().find(|&&l| l >= y.n_classes) {
        return Err(Error::InvalidData(format!("label {bad} out of range")));
    }
    if y.labels.iter().all(|&l| l == y.labels[0]) {
        return Err(Error::SingleClass);
    }
    if x.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature matrix"));
    }
    Ok(())
}

/// Row order that depends only on row contents, so fits are invariant to
/// how the caller ordered the training set.
fn canonical_order(x: ArrayView2<f64>, y: &[usize]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..y.len()).collect();
    idx.sort_by(|&a, &b| {
        y[a].cmp(&y[b]).then_with(|| {
            x.row(a)
                .iter()
                .zip(x.row(b).iter())
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    idx
}

/// Column means and population standard deviations; constant columns get scale 1.
fn standardization(x: ArrayView2<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    let mut means = Vec::with_capacity(x.ncols());
    let mut scales = Vec::with_capacity(x.ncols());
    for col in x.columns() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        means.push(mean);
        scales.push(if sd > 1e-12 { sd } else { 1.0 });
    }
    (means, scales)
}

fn standardize(x: ArrayView2<f64>, means: &[f64], scales: &[f64]) -> Array2<f64> {
    let mut z = x.to_owned();
    for (j, mut col) in z.columns_mut().into_iter().enumerate() {
        let (m, s) = (means[j], scales[j]);
        col.mapv_inplace(|v| (v - m) / s);
    }
    z
}

/// Fits from all-zero coefficients.
pub fn fit(x: &FeatureMatrix, y: &LabelVector, cfg: &FitConfig) -> Result<FitResult> {
    fit_from(x, y, cfg, None)
}

/// Fits starting from `init` (same columns and classes) when given.
pub(crate) fn fit_from(
    x: &FeatureMatrix,
    y: &LabelVector,
    cfg: &FitConfig,
    init: Option<&FitResult>,
) -> Result<FitResult> {
    cfg.validate()?;
    validate_inputs(x, y)?;
    let order = canonical_order(x.values.view(), &y.labels);
    let xs = x.values.select(Axis(0), &order);
    let ys: Vec<usize> = order.iter().map(|&i| y.labels[i]).collect();
    let (means, scales) = standardization(xs.view());
    let z = standardize(xs.view(), &means, &scales);
    let start = init.map(|r| r.weights());
    let sol = solve(z.view(), &ys, y.n_classes, cfg, start);
    let coefficients: Vec<Vec<f64>> = sol.w.rows().into_iter().map(|r| r.to_vec()).collect();
    let intercepts = sol.b.to_vec();
    let included = coefficients.iter().flatten().chain(&intercepts).filter(|&&v| v != 0.0).count();
    let total = y.n_classes * (x.n_cols() + 1);
    Ok(FitResult {
        columns: x.columns.clone(),
        n_classes: y.n_classes,
        lambda_used: cfg.lambda,
        intercepts,
        coefficients,
        feature_means: means,
        feature_scales: scales,
        included,
        total,
        iterations: sol.iterations,
        converged: sol.converged,
        objective: sol.objective,
        objective_trace: sol.trace,
    })
}

/// Class probabilities, one row per input row.
pub fn predict_proba(fr: &FitResult, x: &FeatureMatrix) -> Result<Array2<f64>> {
    if fr.columns != x.columns {
        return Err(Error::SchemaMismatch(format!(
            "model has {} columns, input has {}",
            fr.columns.len(),
            x.columns.len()
        )));
    }
    let z = standardize(x.values.view(), &fr.feature_means, &fr.feature_scales);
    let (w, b) = fr.weights();
    let mut p = logits(z.view(), w.view(), b.view());
    softmax_rows(&mut p);
    Ok(p)
}

/// Most probable class per row; ties go to the lowest class index.
pub fn argmax_rows(p: ArrayView2<f64>) -> Vec<usize> {
    p.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

pub fn predict(fr: &FitResult, x: &FeatureMatrix) -> Result<Vec<usize>> {
    Ok(argmax_rows(predict_proba(fr, x)?.view()))
}
