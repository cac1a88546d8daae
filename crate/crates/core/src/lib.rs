//! Quantile treatment effects on the treated for two-period
//! difference-in-differences designs.
//!
//! The counterfactual untreated distribution of the treated group is built
//! under a distributional parallel-trends condition plus invariance of the
//! copula between the pre-period level and the change in untreated outcomes.
//! Inference uses the exchangeable bootstrap.

pub mod cli;
pub mod data;
pub mod empirical;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod simulation;

pub use data::{build_cells, CellSample, CovariateCell, Dataset, Mode, PanelDataset, RcsDataset};
pub use empirical::{rank_transform, StepDistribution};
pub use error::{Error, Result};
pub use estimators::{CounterfactualResult, CqttProcess, Estimator, TauGrid};
pub use inference::{BootstrapConfig, BootstrapScheme, InferenceReport};
