//! Accuracy and decision-time statistics of groups of sequential decision
//! makers fused by a q-out-of-N vote threshold.

pub mod aggregate;
pub mod asymptotics;
pub mod calibration;
pub mod error;
pub mod io;
pub mod oracle;
pub mod profile;
pub mod special;
pub mod sprt;

pub use aggregate::{aggregate, AggregateOptions, GroupMetrics, GroupOutcome};
pub use error::{Result, SdaError};
pub use profile::{DecisionProfile, ExpectedTime, GroupSpec, Hypothesis, HypothesisProfile, DEFAULT_TAIL_TOL, FP_EPS};
pub use sprt::{sprt_hypothesis_profile, sprt_profile, ObservationModel, ProfileOptions, SprtModel};
