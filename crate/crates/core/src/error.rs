use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("like vector has zero total")]
    ZeroTotal,

    #[error("respondent has no political post likes")]
    NoPoliticalLikes,

    #[error("unknown category `{value}` for survey field `{field}`")]
    UnknownCategory { field: String, value: String },

    #[error("respondent `{id}` has no vote intent")]
    MissingVoteIntent { id: String },

    #[error("respondent `{id}`: {source}")]
    Respondent {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("feature columns do not match the fitted model: {0}")]
    SchemaMismatch(String),

    #[error("training labels contain a single class")]
    SingleClass,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("too few samples: {0}")]
    TooFewSamples(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("no class has both positive and negative examples")]
    DegenerateGold,

    #[error("post `{0}` cannot be scored")]
    Unscorable(String),

    #[error("need at least 4 scorable posts, got {0}")]
    TooFewPosts(usize),

    #[error("category set is empty")]
    EmptyCategorySet,

    #[error("respondent `{0}` in the subsample is missing from the full sample")]
    SubNotSubset(String),

    #[error("user list is empty")]
    EmptyUserList,

    #[error("weight vector has no mass on any counted party")]
    ZeroWeightMass,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// True for errors caused by bad user-supplied configuration or data
    /// rather than a failure while computing.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Respondent { source, .. } => source.is_validation(),
            Error::InvalidConfig(_)
            | Error::InvalidData(_)
            | Error::UnknownCategory { .. }
            | Error::MissingVoteIntent { .. }
            | Error::SchemaMismatch(_)
            | Error::NonFinite(_)
            | Error::LengthMismatch { .. }
            | Error::SubNotSubset(_)
            | Error::Json(_)
            | Error::Csv(_)
            | Error::Toml(_) => true,
            _ => false,
        }
    }

    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid_config",
            Error::InvalidData(_) => "invalid_data",
            Error::ZeroTotal => "zero_total",
            Error::NoPoliticalLikes => "no_political_likes",
            Error::UnknownCategory { .. } => "unknown_category",
            Error::MissingVoteIntent { .. } => "missing_vote_intent",
            Error::Respondent { source, .. } => source.kind(),
            Error::SchemaMismatch(_) => "schema_mismatch",
            Error::SingleClass => "single_class",
            Error::NonFinite(_) => "non_finite",
            Error::TooFewSamples(_) => "too_few_samples",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::DegenerateGold => "degenerate_gold",
            Error::Unscorable(_) => "unscorable",
            Error::TooFewPosts(_) => "too_few_posts",
            Error::EmptyCategorySet => "empty_category_set",
            Error::SubNotSubset(_) => "sub_not_subset",
            Error::EmptyUserList => "empty_user_list",
            Error::ZeroWeightMass => "zero_weight_mass",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
            Error::Toml(_) => "toml",
        }
    }
}
