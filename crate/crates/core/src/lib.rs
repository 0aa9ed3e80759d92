//! Predicting party choice from political likes: feature construction, sparse
//! multinomial logistic regression, threshold rules, evaluation, non-response
//! analysis, social propagation and poll-weighted forecasting.

pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod forecast;
pub mod lasso;
pub mod model;
pub mod nonresponse;
pub mod propagation;
pub mod replicate;
pub mod rule;
pub mod synth;

pub use error::{Error, Result};
