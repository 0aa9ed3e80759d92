//! End-to-end comparison of the five model specifications.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::{FitSettings, SurveySchema};
use crate::error::Result;
use crate::eval::{evaluate_folds, EvalReport};
use crate::features::{FeatureBuilder, ModelKind};
use crate::lasso::{cross_validate_with_predictions, fit, CvResult};
use crate::model::{Dataset, FilterRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub kind: ModelKind,
    pub cv: CvResult,
    /// Metrics of the chosen penalty, averaged over held-out folds.
    pub report: EvalReport,
    /// Nonzero coefficients of the full-data fit at the chosen penalty.
    pub included: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub models: Vec<ModelReport>,
}

impl Replication {
    pub fn get(&self, kind: ModelKind) -> Option<&ModelReport> {
        self.models.iter().find(|m| m.kind == kind)
    }
}

/// Respondents with a vote intent and at least one post like.
pub fn analysis_sample(ds: &Dataset) -> Dataset {
    ds.filter(FilterRule::HasVoteIntent)
        .filter(FilterRule::MinPoliticalLikes(1))
}

/// Cross-validates and evaluates every kind in `kinds` on the analysis sample of `ds`.
pub fn replicate(
    ds: &Dataset,
    schema: &SurveySchema,
    settings: &FitSettings,
    kinds: &[ModelKind],
    seed: u64,
) -> Result<Replication> {
    let sample = analysis_sample(ds);
    let builder = FeatureBuilder::new(&sample.party_space, schema);
    let base = settings.fit_config(0.0);
    let mut models = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let (x, y) = builder.build_matrix(&sample, kind)?;
        let (cv, oof) = cross_validate_with_predictions(&x, &y, &settings.lambda_grid, settings.folds, seed, &base)?;
        let report = evaluate_folds(oof.proba.view(), &y.labels, &oof.fold_of, &sample.party_space, cv.ci_95)?;
        let full = fit(&x, &y, &settings.fit_config(cv.chosen_lambda))?;
        models.push(ModelReport {
            kind,
            cv,
            report,
            included: full.included,
            total: full.total,
        });
    }
    Ok(Replication { models })
}

type Row = (&'static str, fn(&ModelReport) -> String);

const ROWS: [Row; 11] = [
    ("Sample size", |m| m.report.n.to_string()),
    ("L1-Penalty", |m| format!("{}", m.cv.chosen_lambda)),
    ("Incl./excl. Coefficients", |m| format!("{}/{}", m.included, m.total)),
    ("± 95% CI", |m| format!("{:.3}", m.report.ci_95)),
    ("Precision", |m| format!("{:.3}", m.report.macro_precision)),
    ("Recall", |m| format!("{:.3}", m.report.macro_recall)),
    ("Accuracy", |m| format!("{:.3}", m.report.accuracy)),
    ("Left/Right Acc.", |m| format!("{:.3}", m.report.left_right_accuracy)),
    ("Left/Right AUC", |m| opt3(m.report.left_right_auc)),
    ("AUC", |m| opt3(m.report.auc_macro)),
    ("CV accuracy", |m| format!("{:.3}", m.cv.chosen_accuracy())),
];

fn opt3(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.3}"))
}

/// Metrics-by-model text table.
pub fn render(rep: &Replication) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<26}", "");
    for m in &rep.models {
        let _ = write!(out, "{:>16}", m.kind.name());
    }
    out.push('\n');
    for (label, f) in ROWS {
        let _ = write!(out, "{label:<26}");
        for m in &rep.models {
            let _ = write!(out, "{:>16}", f(m));
        }
        out.push('\n');
    }
    out
}

/// One row per model with raw (unrounded) metrics.
pub fn write_csv<W: Write>(w: W, rep: &Replication) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "model",
        "n",
        "lambda",
        "included",
        "total",
        "ci_95",
        "precision",
        "recall",
        "accuracy",
        "left_right_accuracy",
        "left_right_auc",
        "auc",
        "cv_accuracy",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for m in &rep.models {
        let r = &m.report;
        out.write_record([
            m.kind.name().to_string(),
            r.n.to_string(),
            m.cv.chosen_lambda.to_string(),
            m.included.to_string(),
            m.total.to_string(),
            r.ci_95.to_string(),
            r.macro_precision.to_string(),
            r.macro_recall.to_string(),
            r.accuracy.to_string(),
            r.left_right_accuracy.to_string(),
            opt(r.left_right_auc),
            opt(r.auc_macro),
            m.cv.chosen_accuracy().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
