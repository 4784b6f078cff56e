//! Language and dialect identification with back-off character n-gram
//! models and unsupervised language-model adaptation.
//!
//! ```
//! use heli_core::{corpus::Dataset, models::{ModelConfig, ModelSet}, scorer};
//!
//! let train = Dataset::labeled([("guete morge mitenand", "BE"), ("hoi zäme", "ZH")]);
//! let config = ModelConfig::standard(vec!["BE".into(), "ZH".into()], 4, 1.15);
//! let models = ModelSet::train(&train, config).unwrap();
//! let id = scorer::score_text(&models, "hoi");
//! assert_eq!(id.best_label(&models), "ZH");
//! ```

pub mod adapt;
pub mod confidence;
pub mod config;
pub mod corpus;
mod error;
pub mod eval;
pub mod models;
pub mod parallel;
pub mod scorer;

pub use adapt::{adapt_epoch, adapt_iterative, AdaptOutcome, AdaptPlan, AdaptState, EpochMode};
pub use confidence::ConfidenceMeasure;
pub use corpus::{Dataset, Instance, PreprocScheme};
pub use error::{Error, Result};
pub use models::{FeatureKind, Gram, ModelConfig, ModelSet};
pub use scorer::{identify_batch, score_text, Identification};
