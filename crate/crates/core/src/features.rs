//! Feature construction for the baseline survey model and the four like-based models.
//!
//! Column names follow a fixed schema:
//!
//! * `survey:<field>=<category>` for one-hot survey categories,
//! * `survey:<item>` for centered ordinal opinion items,
//! * `latest_like:<party>` for the single-latest-like indicator,
//! * `like_share:<party>` for normalized post-like shares.

use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::config::{CategoricalField, OrdinalEncoding, SurveySchema};
use crate::error::{Error, Result};
use crate::model::{
    post_like_counts, Dataset, LikeKind, PartyCountVector, PartySpace, Respondent, SurveyResponse,
    NUM_PARTIES,
};

/// Minimum post likes for the restricted all-likes model.
pub const MIN7_THRESHOLD: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Baseline,
    SingleLike,
    AllLikes,
    Combined,
    AllLikesMin7,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Baseline,
        ModelKind::SingleLike,
        ModelKind::AllLikes,
        ModelKind::Combined,
        ModelKind::AllLikesMin7,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Baseline => "baseline",
            ModelKind::SingleLike => "single_like",
            ModelKind::AllLikes => "all_likes",
            ModelKind::Combined => "combined",
            ModelKind::AllLikesMin7 => "all_likes_min7",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        ModelKind::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn description(self) -> &'static str {
        match self {
            ModelKind::Baseline => "Sociodemographics, values, issues",
            ModelKind::SingleLike => "Single latest political like",
            ModelKind::AllLikes => "All political likes",
            ModelKind::Combined => "All likes + baseline",
            ModelKind::AllLikesMin7 => "All likes, min likes 7",
        }
    }

    /// Best guess from column names. Min-7 matrices are indistinguishable
    /// from all-likes matrices and come back as [`ModelKind::AllLikes`].
    pub fn infer(columns: &[String]) -> Option<Self> {
        let has = |prefix: &str| columns.iter().any(|c| c.starts_with(prefix));
        match (has("survey:"), has("latest_like:"), has("like_share:")) {
            (true, false, false) => Some(ModelKind::Baseline),
            (false, true, false) => Some(ModelKind::SingleLike),
            (false, false, true) => Some(ModelKind::AllLikes),
            (true, false, true) => Some(ModelKind::Combined),
            _ => None,
        }
    }
}

/// Post-like shares summing to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedLikeVector {
    pub shares: [f64; NUM_PARTIES],
}

impl NormalizedLikeVector {
    pub const ZERO: NormalizedLikeVector = NormalizedLikeVector {
        shares: [0.0; NUM_PARTIES],
    };
}

pub fn normalize_likes(v: &PartyCountVector) -> Result<NormalizedLikeVector> {
    let total = v.total();
    if total == 0 {
        return Err(Error::ZeroTotal);
    }
    let total = total as f64;
    let mut shares = [0.0; NUM_PARTIES];
    for (s, &c) in shares.iter_mut().zip(&v.counts) {
        *s = f64::from(c) / total;
    }
    Ok(NormalizedLikeVector { shares })
}

/// One-hot indicator of the party of the most recent post like.
///
/// Histories are sorted by timestamp, so among equal timestamps the event
/// appearing last wins.
pub fn single_latest_like(r: &Respondent, parties: &PartySpace) -> Result<[f64; NUM_PARTIES]> {
    let last = r
        .like_history
        .iter()
        .rev()
        .find(|e| e.kind == LikeKind::PostLike)
        .ok_or(Error::NoPoliticalLikes)?;
    let idx = parties
        .index_of(&last.page_party)
        .ok_or_else(|| Error::InvalidData(format!("unknown page party `{}`", last.page_party)))?;
    let mut v = [0.0; NUM_PARTIES];
    v[idx] = 1.0;
    Ok(v)
}

/// Dense feature matrix with named columns, one row per respondent.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub kind: ModelKind,
    pub columns: Vec<String>,
    pub row_ids: Vec<String>,
    pub values: Array2<f64>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    /// Rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            kind: self.kind,
            columns: self.columns.clone(),
            row_ids: indices.iter().map(|&i| self.row_ids[i].clone()).collect(),
            values: self.values.select(ndarray::Axis(0), indices),
        }
    }
}

/// Class indices with the number of classes they range over.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::InvalidData(format!("label {bad} out of range for {n_classes} classes")));
        }
        Ok(LabelVector { labels, n_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> LabelVector {
        LabelVector {
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }
}

/// Encodes respondents under one party space and survey schema.
#[derive(Debug, Clone)]
pub struct FeatureBuilder<'a> {
    parties: &'a PartySpace,
    schema: &'a SurveySchema,
}

impl<'a> FeatureBuilder<'a> {
    pub fn new(parties: &'a PartySpace, schema: &'a SurveySchema) -> Self {
        FeatureBuilder { parties, schema }
    }

    pub fn survey_columns(&self) -> Vec<String> {
        let mut cols = Vec::new();
        for f in CategoricalField::ALL {
            for c in self.schema.categories(f) {
                cols.push(format!("survey:{}={c}", f.name()));
            }
        }
        for item in &self.schema.opinion_items {
            match self.schema.ordinal_encoding {
                OrdinalEncoding::Centered => cols.push(format!("survey:{item}")),
                OrdinalEncoding::OneHot => {
                    for v in self.schema.opinion_min..=self.schema.opinion_max {
                        cols.push(format!("survey:{item}={v}"));
                    }
                }
            }
        }
        cols
    }

    fn party_columns(&self, prefix: &str) -> Vec<String> {
        self.parties
            .parties()
            .iter()
            .map(|p| format!("{prefix}:{p}"))
            .collect()
    }

    pub fn columns(&self, kind: ModelKind) -> Vec<String> {
        match kind {
            ModelKind::Baseline => self.survey_columns(),
            ModelKind::SingleLike => self.party_columns("latest_like"),
            ModelKind::AllLikes | ModelKind::AllLikesMin7 => self.party_columns("like_share"),
            ModelKind::Combined => {
                let mut cols = self.survey_columns();
                cols.extend(self.party_columns("like_share"));
                cols
            }
        }
    }

    pub fn encode_survey(&self, s: &SurveyResponse) -> Result<Vec<f64>> {
        let schema = self.schema;
        let mut row = Vec::with_capacity(32);
        let values = [&s.gender, &s.age_band, &s.geography, &s.education];
        for (f, value) in CategoricalField::ALL.into_iter().zip(values) {
            let cats = schema.categories(f);
            let idx = cats.iter().position(|c| c == value).ok_or_else(|| Error::UnknownCategory {
                field: f.name().to_string(),
                value: value.clone(),
            })?;
            row.extend((0..cats.len()).map(|i| if i == idx { 1.0 } else { 0.0 }));
        }
        if s.opinions.len() != schema.opinion_items.len() {
            return Err(Error::InvalidData(format!(
                "expected {} opinion items, got {}",
                schema.opinion_items.len(),
                s.opinions.len()
            )));
        }
        let mid = f64::from(schema.opinion_min + schema.opinion_max) / 2.0;
        for (item, &v) in schema.opinion_items.iter().zip(&s.opinions) {
            if v < schema.opinion_min || v > schema.opinion_max {
                return Err(Error::UnknownCategory {
                    field: item.clone(),
                    value: v.to_string(),
                });
            }
            match schema.ordinal_encoding {
                OrdinalEncoding::Centered => row.push(f64::from(v) - mid),
                OrdinalEncoding::OneHot => {
                    row.extend((schema.opinion_min..=schema.opinion_max).map(|p| if p == v { 1.0 } else { 0.0 }))
                }
            }
        }
        Ok(row)
    }

    fn like_shares(&self, r: &Respondent) -> Result<[f64; NUM_PARTIES]> {
        let counts = post_like_counts(r, self.parties);
        Ok(normalize_likes(&counts)?.shares)
    }

    fn encode_row(&self, r: &Respondent, kind: ModelKind) -> Result<Vec<f64>> {
        Ok(match kind {
            ModelKind::Baseline => self.encode_survey(&r.survey)?,
            ModelKind::SingleLike => single_latest_like(r, self.parties)?.to_vec(),
            ModelKind::AllLikes | ModelKind::AllLikesMin7 => self.like_shares(r)?.to_vec(),
            ModelKind::Combined => {
                let mut row = self.encode_survey(&r.survey)?;
                row.extend(self.like_shares(r)?);
                row
            }
        })
    }

    /// Encodes `ds` for `kind`. Labels are vote-intent indices.
    ///
    /// [`ModelKind::AllLikesMin7`] keeps only respondents with at least
    /// [`MIN7_THRESHOLD`] post likes; every other kind encodes all rows and
    /// fails on the first respondent that cannot be encoded.
    pub fn build_matrix(&self, ds: &Dataset, kind: ModelKind) -> Result<(FeatureMatrix, LabelVector)> {
        let columns = self.columns(kind);
        let mut flat = Vec::with_capacity(ds.len() * columns.len());
        let mut row_ids = Vec::with_capacity(ds.len());
        let mut labels = Vec::with_capacity(ds.len());
        for r in &ds.respondents {
            if kind == ModelKind::AllLikesMin7 && r.count_kind(LikeKind::PostLike) < MIN7_THRESHOLD {
                continue;
            }
            let wrap = |e: Error| Error::Respondent {
                id: r.respondent_id.clone(),
                source: Box::new(e),
            };
            let label = r.vote_index(self.parties).ok_or_else(|| Error::MissingVoteIntent {
                id: r.respondent_id.clone(),
            })?;
            let row = self.encode_row(r, kind).map_err(wrap)?;
            debug_assert_eq!(row.len(), columns.len());
            flat.extend(row);
            row_ids.push(r.respondent_id.clone());
            labels.push(label);
        }
        let values = Array2::from_shape_vec((row_ids.len(), columns.len()), flat)
            .expect("row widths match the column schema");
        Ok((
            FeatureMatrix {
                kind,
                columns,
                row_ids,
                values,
            },
            LabelVector {
                labels,
                n_classes: NUM_PARTIES,
            },
        ))
    }
}

/// Writes `respondent_id,label,<columns...>` with party names as labels.
pub fn write_matrix_csv<W: Write>(
    w: W,
    x: &FeatureMatrix,
    y: &LabelVector,
    parties: &PartySpace,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["respondent_id".to_string(), "label".to_string()];
    header.extend(x.columns.iter().cloned());
    out.write_record(&header)?;
    for (i, row) in x.values.outer_iter().enumerate() {
        let mut rec = Vec::with_capacity(header.len());
        rec.push(x.row_ids[i].clone());
        rec.push(parties.party(y.labels[i]).to_string());
        rec.extend(row.iter().map(|v| v.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a matrix written by [`write_matrix_csv`]. `kind` defaults to the
/// one inferred from the column names.
pub fn read_matrix_csv<R: Read>(
    r: R,
    parties: &PartySpace,
    kind: Option<ModelKind>,
) -> Result<(FeatureMatrix, LabelVector)> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.len() < 2 || &header[0] != "respondent_id" || &header[1] != "label" {
        return Err(Error::InvalidData("matrix CSV must start with respondent_id,label".into()));
    }
    let columns: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let kind = match kind.or_else(|| ModelKind::infer(&columns)) {
        Some(k) => k,
        None => return Err(Error::InvalidData("cannot infer model kind from columns".into())),
    };
    let mut flat = Vec::new();
    let mut row_ids = Vec::new();
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        row_ids.push(rec[0].to_string());
        let label = parties
            .index_of(&rec[1])
            .ok_or_else(|| Error::InvalidData(format!("unknown label `{}`", &rec[1])))?;
        labels.push(label);
        for cell in rec.iter().skip(2) {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::InvalidData(format!("bad number `{cell}`")))?;
            flat.push(v);
        }
    }
    let values = Array2::from_shape_vec((row_ids.len(), columns.len()), flat)
        .map_err(|_| Error::InvalidData("ragged matrix CSV".into()))?;
    Ok((
        FeatureMatrix {
            kind,
            columns,
            row_ids,
            values,
        },
        LabelVector {
            labels,
            n_classes: NUM_PARTIES,
        },
    ))
}
