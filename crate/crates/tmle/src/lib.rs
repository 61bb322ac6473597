//! Targeted minimum loss-based estimation of the mean of an outcome
//! missing at random, with first-order and kernel-smoothed second-order
//! targeting, a one-step second-order comparator, and a seeded Monte Carlo
//! harness for perturbation-grid studies.
//!
//! The replicate, fold, and bootstrap loops are data-parallel via rayon
//! under the `parallel` feature (on by default); the sequential fallback
//! produces bitwise-identical results.

pub mod bandwidth;
pub mod data;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod fluctuation;
pub mod influence;
pub mod kernel;
pub mod learners;
pub mod math;
pub mod nuisance;
pub mod seeding;
pub mod simulation;

pub use data::{Dataset, Observation};
pub use error::{Error, Result};
pub use estimators::{
    ate, estimate, estimate_with_learners, robins_so, tmle1, tmle1star, tmle2, AteData,
    AteReport, AteRow, BandwidthPolicy, EstimateReport, EstimatorConfig, EstimatorName,
    VarianceMode,
};
pub use fluctuation::FluctuationMode;
pub use kernel::{Bandwidth, KernelFamily, KernelSpec};
pub use learners::{LearnerPair, LearnerSpec};
pub use nuisance::{NuisancePair, Predictor, PredictorRef, Truncation};
pub use simulation::{DgpSpec, KnownVariance, MetricsRow, SimGridConfig};
