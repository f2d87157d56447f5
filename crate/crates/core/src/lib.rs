//! Photon-number resolvability of superconducting nanowire single-photon
//! detectors.
//!
//! Arrival-time histograms of multi-photon pulses are modeled as a
//! Poisson-weighted mixture of exponentially-modified Gaussian peaks whose
//! centers move earlier as `1/sqrt(n)`. On top of that model the crate
//! computes the largest photon number whose peak separation still exceeds the
//! peak's FWHM, simulates and fits histograms, and builds threshold
//! classifiers.
//!
//! All times are in picoseconds.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod discrimination;
pub mod emg;
pub mod error;
pub mod fitting;
pub mod io;
pub mod model;
pub mod montecarlo;
pub mod optim;
pub mod resolvability;

pub use discrimination::{classify_tags, confusion, optimal_thresholds, ConfusionMatrix, DecisionRule};
pub use emg::{EmgParams, FwhmResult, GAUSSIAN_FWHM_FACTOR};
pub use error::{Error, Result};
pub use fitting::{fit_histogram, goodness_of_fit, FitConfig, FitParameter, FitResult, GoodnessOfFit};
pub use model::{JitterBudget, Mixture, ModelConfig, PerPhotonRule, PhotonSource, PnrModel, ScalingLaw};
pub use montecarlo::{histogram, simulate_tags, Histogram, TagRecord, TagStream};
pub use resolvability::{figure2_curves, resolve_exact, resolve_gaussian, ResolvabilityReport};
