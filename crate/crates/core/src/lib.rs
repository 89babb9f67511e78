//! Annotation error modeling toolkit.
//!
//! The pipeline goes from an audited annotation log to a ranked audit queue:
//!
//! * [`annotation_log`]: event schema, validation, file I/O and holdout splits.
//! * [`synthgen`]: synthetic logs with a known latent error process.
//! * [`featurize`]: task, past-performance, session and task-completion features.
//! * [`preprocess`]: mean imputation, standard scaling and one-hot encoding.
//! * [`gbdt`]: second-order gradient boosted trees with logistic loss.
//! * [`model_selection`]: metrics, randomized search and cross-application evaluation.
//! * [`explain`]: exact path-dependent tree SHAP and importance summaries.
//! * [`audit_sim`]: flip-rate and coverage curves for model-ranked audits.

pub mod annotation_log;
pub mod audit_sim;
pub mod error;
pub mod explain;
pub mod featurize;
pub mod gbdt;
pub mod model_selection;
pub mod preprocess;
pub mod synthgen;

pub use error::{Error, Result};
