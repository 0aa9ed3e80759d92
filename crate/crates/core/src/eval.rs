//! Classification metrics: global accuracy, macro precision/recall,
//! threshold-swept one-vs-rest AUC and the left/right bloc collapse.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lasso::argmax_rows;
use crate::model::{Bloc, PartySpace};

/// Threshold increment of the ROC sweep.
pub const DEFAULT_ROC_STEP: f64 = 0.0001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub auc_macro: Option<f64>,
    pub left_right_accuracy: f64,
    pub left_right_auc: Option<f64>,
    pub ci_95: f64,
    pub n: usize,
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch { left: a, right: b });
    }
    if a == 0 {
        return Err(Error::TooFewSamples("metrics need at least one row".into()));
    }
    Ok(())
}

/// Fraction of rows where the prediction equals the gold label.
pub fn accuracy(pred: &[usize], gold: &[usize]) -> Result<f64> {
    check_len(pred.len(), gold.len())?;
    let hits = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Unweighted per-class means of precision and recall.
///
/// Precision averages over classes that occur in either `gold` or `pred`; a
/// class that is never predicted contributes 0. Recall averages over classes
/// present in `gold`.
pub fn macro_precision_recall(pred: &[usize], gold: &[usize], n_classes: usize) -> Result<(f64, f64)> {
    if pred.len() != gold.len() {
        return Err(Error::LengthMismatch { left: pred.len(), right: gold.len() });
    }
    let mut tp = vec![0usize; n_classes];
    let mut predicted = vec![0usize; n_classes];
    let mut actual = vec![0usize; n_classes];
    for (&p, &g) in pred.iter().zip(gold) {
        if p >= n_classes || g >= n_classes {
            return Err(Error::InvalidData(format!("label out of range for {n_classes} classes")));
        }
        predicted[p] += 1;
        actual[g] += 1;
        if p == g {
            tp[p] += 1;
        }
    }
    let (mut psum, mut pcount, mut rsum, mut rcount) = (0.0, 0usize, 0.0, 0usize);
    for c in 0..n_classes {
        if actual[c] > 0 || predicted[c] > 0 {
            pcount += 1;
            if predicted[c] > 0 {
                psum += tp[c] as f64 / predicted[c] as f64;
            }
        }
        if actual[c] > 0 {
            rcount += 1;
            rsum += tp[c] as f64 / actual[c] as f64;
        }
    }
    let precision = if pcount == 0 { 0.0 } else { psum / pcount as f64 };
    let recall = if rcount == 0 { 0.0 } else { rsum / rcount as f64 };
    Ok((precision, recall))
}

/// Largest grid index `j` with `j / last <= score`, clamped to the grid.
/// Thresholds are `j / last` rather than `j * step` so grid points are the
/// correctly rounded decimals.
fn threshold_index(score: f64, last: usize) -> usize {
    if !(score > 0.0) {
        return 0;
    }
    let t = |j: usize| j as f64 / last as f64;
    let mut j = ((score * last as f64).floor() as usize).min(last);
    while j < last && t(j + 1) <= score {
        j += 1;
    }
    while j > 0 && t(j) > score {
        j -= 1;
    }
    j
}

/// Binary ROC area by sweeping thresholds `0, step, 2*step, ..., 1`, with
/// `1 / step` rounded to a whole number of increments; a score
/// at or above the threshold counts as positive. `None` when either class is
/// empty.
pub fn binary_auc(scores: ArrayView1<f64>, positive: &[bool], step: f64) -> Option<f64> {
    let last = (1.0 / step).round() as usize;
    let mut pos_hist = vec![0usize; last + 1];
    let mut neg_hist = vec![0usize; last + 1];
    for (&s, &is_pos) in scores.iter().zip(positive) {
        let j = threshold_index(s, last);
        if is_pos {
            pos_hist[j] += 1;
        } else {
            neg_hist[j] += 1;
        }
    }
    let n_pos: usize = pos_hist.iter().sum();
    let n_neg: usize = neg_hist.iter().sum();
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    // Walk thresholds from high to low: (fpr, tpr) rises from (0, 0) to (1, 1).
    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut prev_x, mut prev_y) = (0.0, 0.0);
    let mut area = 0.0;
    for j in (0..=last).rev() {
        tp += pos_hist[j];
        fp += neg_hist[j];
        let x = fp as f64 / n_neg as f64;
        let y = tp as f64 / n_pos as f64;
        area += (x - prev_x) * (y + prev_y) / 2.0;
        prev_x = x;
        prev_y = y;
    }
    Some(area)
}

/// Macro-averaged one-vs-rest AUC over classes with at least one positive
/// and one negative row.
pub fn auc_ovr(scores: ArrayView2<f64>, gold: &[usize], step: f64) -> Result<f64> {
    check_len(scores.nrows(), gold.len())?;
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidConfig(format!("ROC step must lie in (0, 1], got {step}")));
    }
    let mut total = 0.0;
    let mut used = 0;
    for c in 0..scores.ncols() {
        let positive: Vec<bool> = gold.iter().map(|&g| g == c).collect();
        if let Some(a) = binary_auc(scores.column(c), &positive, step) {
            total += a;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::DegenerateGold);
    }
    Ok(total / used as f64)
}

/// Summed class probabilities per bloc: column 0 left, column 1 right.
pub fn bloc_probabilities(scores: ArrayView2<f64>, parties: &PartySpace) -> Array2<f64> {
    let mut out = Array2::zeros((scores.nrows(), 2));
    for (i, row) in scores.rows().into_iter().enumerate() {
        for (c, &p) in row.iter().enumerate() {
            let col = match parties.bloc_of(c) {
                Bloc::Left => 0,
                Bloc::Right => 1,
            };
            out[[i, col]] += p;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeftRight {
    pub accuracy: f64,
    pub auc: Option<f64>,
}

/// Left/right accuracy of the collapsed party predictions and, when class
/// scores are given, the binary AUC of the summed left-bloc probability.
pub fn left_right_metrics(
    pred: &[usize],
    scores: Option<ArrayView2<f64>>,
    gold: &[usize],
    parties: &PartySpace,
    step: f64,
) -> Result<LeftRight> {
    check_len(pred.len(), gold.len())?;
    let hits = pred
        .iter()
        .zip(gold)
        .filter(|(&p, &g)| parties.bloc_of(p) == parties.bloc_of(g))
        .count();
    let accuracy = hits as f64 / pred.len() as f64;
    let auc = match scores {
        Some(s) => {
            check_len(s.nrows(), gold.len())?;
            let blocs = bloc_probabilities(s, parties);
            let is_left: Vec<bool> = gold.iter().map(|&g| parties.bloc_of(g) == Bloc::Left).collect();
            binary_auc(blocs.column(0), &is_left, step)
        }
        None => None,
    };
    Ok(LeftRight { accuracy, auc })
}

/// All metrics for one set of predictions. `ci_95` is supplied by the caller.
pub fn evaluate(
    pred: &[usize],
    scores: Option<ArrayView2<f64>>,
    gold: &[usize],
    parties: &PartySpace,
    ci_95: f64,
) -> Result<EvalReport> {
    let acc = accuracy(pred, gold)?;
    let (macro_precision, macro_recall) = macro_precision_recall(pred, gold, parties.len())?;
    let auc_macro = match scores {
        Some(s) => match auc_ovr(s, gold, DEFAULT_ROC_STEP) {
            Ok(a) => Some(a),
            Err(Error::DegenerateGold) => None,
            Err(e) => return Err(e),
        },
        None => None,
    };
    let lr = left_right_metrics(pred, scores, gold, parties, DEFAULT_ROC_STEP)?;
    Ok(EvalReport {
        accuracy: acc,
        macro_precision,
        macro_recall,
        auc_macro,
        left_right_accuracy: lr.accuracy,
        left_right_auc: lr.auc,
        ci_95,
        n: pred.len(),
    })
}

fn mean_opt(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let vals: Vec<f64> = xs.flatten().collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Cross-validated report: metrics computed on each held-out fold, then averaged.
pub fn evaluate_folds(
    proba: ArrayView2<f64>,
    gold: &[usize],
    fold_of: &[usize],
    parties: &PartySpace,
    ci_95: f64,
) -> Result<EvalReport> {
    check_len(proba.nrows(), gold.len())?;
    check_len(fold_of.len(), gold.len())?;
    let k = fold_of.iter().max().map_or(0, |m| m + 1);
    let mut reports = Vec::with_capacity(k);
    for f in 0..k {
        let rows: Vec<usize> = (0..gold.len()).filter(|&i| fold_of[i] == f).collect();
        if rows.is_empty() {
            continue;
        }
        let p = proba.select(ndarray::Axis(0), &rows);
        let g: Vec<usize> = rows.iter().map(|&i| gold[i]).collect();
        let pred = argmax_rows(p.view());
        reports.push(evaluate(&pred, Some(p.view()), &g, parties, ci_95)?);
    }
    let m = reports.len() as f64;
    let avg = |f: fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / m;
    Ok(EvalReport {
        accuracy: avg(|r| r.accuracy),
        macro_precision: avg(|r| r.macro_precision),
        macro_recall: avg(|r| r.macro_recall),
        auc_macro: mean_opt(reports.iter().map(|r| r.auc_macro)),
        left_right_accuracy: avg(|r| r.left_right_accuracy),
        left_right_auc: mean_opt(reports.iter().map(|r| r.left_right_auc)),
        ci_95,
        n: gold.len(),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

/// Renders reports as a metrics-by-model text table.
pub fn render_table(models: &[(&str, &EvalReport)]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<22}", "");
    for (name, _) in models {
        let _ = write!(out, "{name:>16}");
    }
    out.push('\n');
    let rows: [(&str, Box<dyn Fn(&EvalReport) -> String>); 8] = [
        ("Sample size", Box::new(|r| r.n.to_string())),
        ("± 95% CI", Box::new(|r| format!("{:.3}", r.ci_95))),
        ("Precision", Box::new(|r| format!("{:.3}", r.macro_precision))),
        ("Recall", Box::new(|r| format!("{:.3}", r.macro_recall))),
        ("Accuracy", Box::new(|r| format!("{:.3}", r.accuracy))),
        ("Left/Right Acc.", Box::new(|r| format!("{:.3}", r.left_right_accuracy))),
        ("Left/Right AUC", Box::new(|r| fmt_opt(r.left_right_auc))),
        ("AUC", Box::new(|r| fmt_opt(r.auc_macro))),
    ];
    for (label, f) in rows.iter() {
        let _ = write!(out, "{label:<22}");
        for (_, r) in models {
            let _ = write!(out, "{:>16}", f(r));
        }
        out.push('\n');
    }
    out
}
