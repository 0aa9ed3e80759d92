//! Skew detection for filtered subsamples by permutation tests of
//! chi-squared scores against the full survey.

use std::collections::HashMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{CategoricalField, SurveySchema};
use crate::error::{Error, Result};
use crate::model::{Dataset, Respondent, NUM_PARTIES};

/// A survey variable whose distribution is compared between samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SurveyFeature {
    /// Party of the vote intent, with "no intent" as an extra category.
    VoteIntent,
    Categorical(CategoricalField),
    /// Index into the schema's opinion items.
    Opinion(usize),
}

impl SurveyFeature {
    /// Every feature of `schema`: vote intent, the categoricals, then the opinion items.
    pub fn all(schema: &SurveySchema) -> Vec<SurveyFeature> {
        let mut out = vec![SurveyFeature::VoteIntent];
        out.extend(CategoricalField::ALL.iter().map(|&f| SurveyFeature::Categorical(f)));
        out.extend((0..schema.opinion_items.len()).map(SurveyFeature::Opinion));
        out
    }

    pub fn name(&self, schema: &SurveySchema) -> String {
        match self {
            SurveyFeature::VoteIntent => "vote_intent".into(),
            SurveyFeature::Categorical(f) => f.name().into(),
            SurveyFeature::Opinion(i) => format!("opinion:{}", schema.opinion_items[*i]),
        }
    }

    pub fn parse(s: &str, schema: &SurveySchema) -> Option<SurveyFeature> {
        if s == "vote_intent" {
            return Some(SurveyFeature::VoteIntent);
        }
        if let Some(f) = CategoricalField::ALL.iter().find(|f| f.name() == s) {
            return Some(SurveyFeature::Categorical(*f));
        }
        let item = s.strip_prefix("opinion:")?;
        schema.opinion_items.iter().position(|x| x == item).map(SurveyFeature::Opinion)
    }

    pub fn n_categories(&self, schema: &SurveySchema) -> usize {
        match self {
            SurveyFeature::VoteIntent => NUM_PARTIES + 1,
            SurveyFeature::Categorical(f) => schema.categories(*f).len(),
            SurveyFeature::Opinion(_) => schema.scale_len(),
        }
    }

    /// Category index of one respondent.
    pub fn category(&self, r: &Respondent, ds: &Dataset, schema: &SurveySchema) -> Result<usize> {
        let s = &r.survey;
        match self {
            SurveyFeature::VoteIntent => Ok(r.vote_index(&ds.party_space).unwrap_or(NUM_PARTIES)),
            SurveyFeature::Categorical(f) => {
                let value = match f {
                    CategoricalField::Gender => &s.gender,
                    CategoricalField::AgeBand => &s.age_band,
                    CategoricalField::Geography => &s.geography,
                    CategoricalField::Education => &s.education,
                };
                schema
                    .categories(*f)
                    .iter()
                    .position(|c| c == value)
                    .ok_or_else(|| Error::UnknownCategory {
                        field: f.name().into(),
                        value: value.clone(),
                    })
            }
            SurveyFeature::Opinion(i) => {
                let v = *s.opinions.get(*i).ok_or_else(|| {
                    Error::InvalidData(format!("missing opinion item {}", schema.opinion_items[*i]))
                })?;
                if v < schema.opinion_min || v > schema.opinion_max {
                    return Err(Error::InvalidData(format!("opinion value {v} out of range")));
                }
                Ok((v - schema.opinion_min) as usize)
            }
        }
    }
}

/// Pearson chi-squared of `b`'s counts against expected counts scaled from
/// `a`'s proportions. Categories with zero expectation are skipped.
pub fn chi_squared(a: &[u64], b: &[u64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCategorySet);
    }
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    let ta: u64 = a.iter().sum();
    let tb: u64 = b.iter().sum();
    if ta == 0 || tb == 0 {
        return Err(Error::InvalidData("chi-squared needs nonzero totals".into()));
    }
    let scale = tb as f64 / ta as f64;
    Ok(a.iter()
        .zip(b)
        .filter(|(&ai, _)| ai > 0)
        .map(|(&ai, &bi)| {
            let e = ai as f64 * scale;
            let d = bi as f64 - e;
            d * d / e
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkewGrade {
    NotSignificant,
    Small,
    Medium,
    Large,
}

impl SkewGrade {
    pub fn name(self) -> &'static str {
        match self {
            SkewGrade::NotSignificant => "not_significant",
            SkewGrade::Small => "small",
            SkewGrade::Medium => "medium",
            SkewGrade::Large => "large",
        }
    }
}

/// Grade boundaries on `excess = x2_mean / null_q975`. Any excess above 1 is
/// significant; it is Small up to `medium`, Medium up to `large`, Large beyond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkewThresholds {
    pub medium: f64,
    pub large: f64,
}

impl Default for SkewThresholds {
    fn default() -> Self {
        SkewThresholds { medium: 2.0, large: 4.0 }
    }
}

impl SkewThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.medium >= 1.0 && self.large >= self.medium && self.large.is_finite()) {
            return Err(Error::InvalidConfig("skew thresholds need 1 <= medium <= large".into()));
        }
        Ok(())
    }

    pub fn grade(&self, x2_mean: f64, null_q975: f64) -> SkewGrade {
        if x2_mean <= null_q975 {
            return SkewGrade::NotSignificant;
        }
        let excess = x2_mean / null_q975;
        if excess > self.large {
            SkewGrade::Large
        } else if excess > self.medium {
            SkewGrade::Medium
        } else {
            SkewGrade::Small
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewReport {
    pub feature: String,
    pub sample_size: usize,
    pub x2_mean: f64,
    pub q025: f64,
    pub q975: f64,
    pub null_q975: f64,
    pub skew: SkewGrade,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn tally(codes: &[usize], idx: impl Iterator<Item = usize>, k: usize) -> Vec<u64> {
    let mut c = vec![0u64; k];
    for i in idx {
        c[codes[i]] += 1;
    }
    c
}

/// Permutation test of `sub` against `full` on one feature.
///
/// Every iteration draws samples of size `s = min(|sub|, |full| / 2)` without
/// replacement. The null statistic compares two disjoint samples of `full`;
/// the observed statistic compares a sample of `sub` with a sample of the
/// remaining members of `full`. Iteration `i` uses its own stream of the
/// seeded generator, so results do not depend on thread scheduling.
pub fn permutation_skew(
    full: &Dataset,
    sub: &Dataset,
    feature: SurveyFeature,
    schema: &SurveySchema,
    n_perm: usize,
    seed: u64,
    thresholds: &SkewThresholds,
) -> Result<SkewReport> {
    if n_perm == 0 {
        return Err(Error::InvalidConfig("n_perm must be positive".into()));
    }
    let pos: HashMap<&str, usize> = full
        .respondents
        .iter()
        .enumerate()
        .map(|(i, r)| (r.respondent_id.as_str(), i))
        .collect();
    let sub_pos: Vec<usize> = sub
        .respondents
        .iter()
        .map(|r| {
            pos.get(r.respondent_id.as_str())
                .copied()
                .ok_or_else(|| Error::SubNotSubset(r.respondent_id.clone()))
        })
        .collect::<Result<_>>()?;
    let k = feature.n_categories(schema);
    let codes: Vec<usize> = full
        .respondents
        .iter()
        .map(|r| feature.category(r, full, schema))
        .collect::<Result<_>>()?;
    let n = codes.len();
    let s = sub_pos.len().min(n / 2);
    if s == 0 {
        return Err(Error::TooFewSamples(format!("sample size 0 (full {n}, sub {})", sub_pos.len())));
    }

    let stats: Vec<(f64, f64)> = (0..n_perm)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut pool: Vec<usize> = (0..n).collect();
            partial_shuffle(&mut pool, 2 * s, &mut rng);
            let a = tally(&codes, pool[..s].iter().copied(), k);
            let b = tally(&codes, pool[s..2 * s].iter().copied(), k);
            let null = chi_squared(&a, &b).expect("nonempty samples");

            let mut sp = sub_pos.clone();
            partial_shuffle(&mut sp, s, &mut rng);
            let mut drawn = vec![false; n];
            for &j in &sp[..s] {
                drawn[j] = true;
            }
            let mut pool: Vec<usize> = (0..n).filter(|&j| !drawn[j]).collect();
            partial_shuffle(&mut pool, s, &mut rng);
            let from_full = tally(&codes, pool[..s].iter().copied(), k);
            let from_sub = tally(&codes, sp[..s].iter().copied(), k);
            let obs = chi_squared(&from_full, &from_sub).expect("nonempty samples");
            (null, obs)
        })
        .collect();

    let mut null: Vec<f64> = stats.iter().map(|p| p.0).collect();
    let mut obs: Vec<f64> = stats.iter().map(|p| p.1).collect();
    let x2_mean = obs.iter().sum::<f64>() / n_perm as f64;
    null.sort_by(f64::total_cmp);
    obs.sort_by(f64::total_cmp);
    let null_q975 = quantile(&null, 0.975);
    Ok(SkewReport {
        feature: feature.name(schema),
        sample_size: s,
        x2_mean,
        q025: quantile(&obs, 0.025),
        q975: quantile(&obs, 0.975),
        null_q975,
        skew: thresholds.grade(x2_mean, null_q975),
    })
}

/// Moves a uniform random `m`-subset of `v` to its front.
fn partial_shuffle(v: &mut [usize], m: usize, rng: &mut impl Rng) {
    for j in 0..m.min(v.len()) {
        let r = rng.random_range(j..v.len());
        v.swap(j, r);
    }
}

/// Runs [`permutation_skew`] for every feature in `features`, in order.
pub fn skew_table(
    full: &Dataset,
    sub: &Dataset,
    features: &[SurveyFeature],
    schema: &SurveySchema,
    n_perm: usize,
    seed: u64,
    thresholds: &SkewThresholds,
) -> Result<Vec<SkewReport>> {
    features
        .iter()
        .map(|&f| permutation_skew(full, sub, f, schema, n_perm, seed, thresholds))
        .collect()
}

/// CSV with columns `subsample,feature,n,x2_mean,q025,q975,null_q975,skew`.
pub fn write_skew_csv<W: Write>(w: W, rows: &[(String, SkewReport)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["subsample", "feature", "n", "x2_mean", "q025", "q975", "null_q975", "skew"])?;
    for (name, r) in rows {
        out.write_record([
            name.clone(),
            r.feature.clone(),
            r.sample_size.to_string(),
            r.x2_mean.to_string(),
            r.q025.to_string(),
            r.q975.to_string(),
            r.null_q975.to_string(),
            r.skew.name().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
