//! Classification of sparsely observed functional data.
//!
//! The pipeline: estimate functional principal component (FPC) scores for
//! irregular, noisy curves by conditional expectation ([`fpca`]), train
//! probability-emitting classifiers on those scores ([`classifiers`]),
//! resample the whole fit across bootstrap replicas and aggregate the
//! replica predictions by majority vote, out-of-bag weighting, or a
//! Bayesian-calibrated probability average ([`ensemble`]). [`simgen`]
//! generates the synthetic two-group benchmark datasets and [`experiment`]
//! drives seeded Monte Carlo studies over both synthetic and real data.

pub mod classifiers;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod fpca;
pub mod seed;
pub mod simgen;

pub use classifiers::{ClassifierKind, ClassifierModel, TrainingMatrix, TuningConfig};
pub use data::{FunctionalDataset, SparseCurve, SplitSpec};
pub use ensemble::{AggregationRule, CalibrationMode, CalibrationModel, EnsembleModel};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, ExperimentSource, ResultsTable};
pub use fpca::{EvaluationGrid, FpcaConfig, FpcaModel, ScoreVector};
pub use simgen::{ScenarioConfig, ScoreDist, SimModel};
