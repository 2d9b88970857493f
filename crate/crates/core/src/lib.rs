//! Pool-based active learning with confidence- and diversity-driven batch
//! selection.
//!
//! The pieces, bottom up: [`pool`] tracks which samples are labeled,
//! [`scoring`] turns posteriors into confidence scores, [`clustering`] ranks
//! candidates by distance to their k-means centroid, [`strategies`] combines
//! the two into batch selection, [`learner`] is the built-in classifier and
//! [`experiment`] runs the loop.

pub mod clustering;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod learner;
pub mod output;
pub mod pool;
pub mod scoring;
pub mod seed;
pub mod strategies;
pub mod util;

pub use clustering::{diversity_rank, kmeans_fit, Clustering, KMeansConfig};
pub use config::{RunConfig, StrategySettings};
pub use data::{load_csv, make_blobs, BlobSpec, Dataset, DatasetSpec};
pub use error::{Error, Result};
pub use experiment::{
    ablate_dsal, compare, run_active_learning, ComparisonTable, CurvePoint, LearningCurve,
    RunFailure, RunManifest, RunResult,
};
pub use learner::{train, LearnerConfig, Model};
pub use pool::Pool;
pub use scoring::{least_confidence, max_confidence, ProbabilityMatrix, ScoreVector};
pub use strategies::{select, SelectionBatch, StrategyConfig, StrategyKind};
