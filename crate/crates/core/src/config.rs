//! Study configuration: party space, survey schema, collection window and
//! the tunables of every pipeline stage, loaded from a TOML document.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lasso::{FitConfig, DEFAULT_LAMBDA_GRID};
use crate::model::{PartySpace, Window};
use crate::nonresponse::SkewThresholds;
use crate::synth::GenConfig;

/// How ordinal opinion items enter the feature matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrdinalEncoding {
    /// One column per item holding `value - midpoint`.
    #[default]
    Centered,
    /// One indicator column per scale point.
    OneHot,
}

/// Closed category sets of the questionnaire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurveySchema {
    pub gender: Vec<String>,
    pub age_band: Vec<String>,
    pub geography: Vec<String>,
    pub education: Vec<String>,
    pub opinion_items: Vec<String>,
    pub opinion_min: i32,
    pub opinion_max: i32,
    pub ordinal_encoding: OrdinalEncoding,
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl Default for SurveySchema {
    fn default() -> Self {
        SurveySchema {
            gender: strings(&["female", "male"]),
            age_band: strings(&["18-34", "35-53", "54-74"]),
            geography: strings(&["capital", "zealand", "southern", "central", "northern"]),
            education: strings(&[
                "primary",
                "upper_secondary",
                "vocational",
                "short_tertiary",
                "bachelor",
                "master",
            ]),
            opinion_items: strings(&[
                "individual_vs_public_responsibility",
                "entitlement_vs_job_choice",
                "social_security_reforms",
                "competition_is_healthy",
                "corporate_freedom",
                "high_salary_tax",
                "income_inequality",
                "harsher_violent_crime_sentences",
                "border_control",
                "protect_national_heritage",
                "counseling_over_punishment",
                "environment_vs_expansion",
                "equal_rights",
                "gasoline_tax",
                "extremist_assembly_rights",
            ]),
            opinion_min: 1,
            opinion_max: 5,
            ordinal_encoding: OrdinalEncoding::Centered,
        }
    }
}

/// The four categorical survey fields, in encoding order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CategoricalField {
    Gender,
    AgeBand,
    Geography,
    Education,
}

impl CategoricalField {
    pub const ALL: [CategoricalField; 4] = [
        CategoricalField::Gender,
        CategoricalField::AgeBand,
        CategoricalField::Geography,
        CategoricalField::Education,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CategoricalField::Gender => "gender",
            CategoricalField::AgeBand => "age_band",
            CategoricalField::Geography => "geography",
            CategoricalField::Education => "education",
        }
    }
}

impl SurveySchema {
    pub fn categories(&self, field: CategoricalField) -> &[String] {
        match field {
            CategoricalField::Gender => &self.gender,
            CategoricalField::AgeBand => &self.age_band,
            CategoricalField::Geography => &self.geography,
            CategoricalField::Education => &self.education,
        }
    }

    pub fn scale_len(&self) -> usize {
        (self.opinion_max - self.opinion_min + 1) as usize
    }

    pub fn validate(&self) -> Result<()> {
        for f in CategoricalField::ALL {
            let cats = self.categories(f);
            if cats.is_empty() {
                return Err(Error::InvalidConfig(format!("survey field `{}` has no categories", f.name())));
            }
            let mut sorted = cats.to_vec();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != cats.len() {
                return Err(Error::InvalidConfig(format!("duplicate category in `{}`", f.name())));
            }
        }
        if self.opinion_max <= self.opinion_min {
            return Err(Error::InvalidConfig("opinion scale must span at least two points".into()));
        }
        Ok(())
    }
}

/// Model-fitting settings used by the `fit` and `replicate` stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSettings {
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    pub max_iters: usize,
    pub tol: f64,
}

/// Looser than [`FitConfig::default`]: cross-validation fits many paths and
/// only needs predictions, not coefficients to the last digit.
impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            folds: 10,
            max_iters: 1000,
            tol: 1e-6,
        }
    }
}

impl FitSettings {
    pub fn fit_config(&self, lambda: f64) -> FitConfig {
        FitConfig {
            lambda,
            max_iters: self.max_iters,
            tol: self.tol,
            ..FitConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSettings {
    pub min_likes: Vec<u32>,
    pub plc: Vec<f64>,
}

impl Default for GridSettings {
    fn default() -> Self {
        GridSettings {
            min_likes: vec![1, 2, 3, 5, 7, 9],
            plc: vec![0.0, 0.5, 0.7, 0.8, 0.9],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NonresponseSettings {
    pub n_perm: usize,
    pub thresholds: SkewThresholds,
}

impl Default for NonresponseSettings {
    fn default() -> Self {
        NonresponseSettings {
            n_perm: 10_000,
            thresholds: SkewThresholds::default(),
        }
    }
}

/// Everything a run needs besides its input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub party_space: PartySpace,
    pub survey: SurveySchema,
    pub window: Window,
    pub synth: GenConfig,
    pub fit: FitSettings,
    pub grid: GridSettings,
    pub nonresponse: NonresponseSettings,
}

/// 2015-01-01T00:00:00Z .. 2017-01-01T00:00:00Z
pub const DEFAULT_WINDOW: Window = Window {
    start: 1_420_070_400,
    end: 1_483_228_800,
};

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            party_space: PartySpace::synthetic(),
            survey: SurveySchema::default(),
            window: DEFAULT_WINDOW,
            synth: GenConfig::default(),
            fit: FitSettings::default(),
            grid: GridSettings::default(),
            nonresponse: NonresponseSettings::default(),
        }
    }
}

impl StudyConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: StudyConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("study config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.survey.validate()?;
        if self.window.start > self.window.end {
            return Err(Error::InvalidConfig("window start after end".into()));
        }
        self.synth.validate()?;
        if self.fit.lambda_grid.is_empty() {
            return Err(Error::InvalidConfig("lambda grid is empty".into()));
        }
        if self.fit.lambda_grid.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::InvalidConfig("lambda values must be finite and nonnegative".into()));
        }
        if self.fit.folds < 2 {
            return Err(Error::InvalidConfig("need at least 2 folds".into()));
        }
        if self.fit.max_iters == 0 || !(self.fit.tol > 0.0) {
            return Err(Error::InvalidConfig("max_iters and tol must be positive".into()));
        }
        if self.grid.min_likes.iter().any(|&m| m == 0) {
            return Err(Error::InvalidConfig("min likes must be at least 1".into()));
        }
        if self.grid.plc.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidConfig("party like caps must lie in [0, 1]".into()));
        }
        if self.nonresponse.n_perm == 0 {
            return Err(Error::InvalidConfig("n_perm must be positive".into()));
        }
        self.nonresponse.thresholds.validate()?;
        Ok(())
    }
}
