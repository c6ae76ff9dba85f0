//! Single-source transfer learning for EEG classification.
//!
//! A linear projection `W` (d x D) of log-PSD features is evolved with a
//! many-objective differential-evolution optimizer so that a linear SVM
//! trained on a source subject's projected features classifies a target
//! subject's projected features well.
//!
//! Pipeline: [`dsp`] (band-pass, small Laplacian, epoching) ->
//! [`features`] (Welch PSD) -> [`data`] (hold-out split) -> [`transfer`]
//! (fitness, [`maoo`] run, decision) -> [`classifier`] (train/test) ->
//! [`stats`] / [`report`].

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod config;
pub mod data;
pub mod dsp;
pub mod error;
pub mod features;
pub mod io;
pub mod maoo;
pub mod pipeline;
pub mod report;
pub mod stats;
pub mod synth;
pub mod transfer;

pub use classifier::{ConfusionMatrix, LinearSvmModel, MetricsVector, SvmParams};
pub use config::Config;
pub use data::{FeatureMatrix, HoldoutSets, Label, SplitSpec, TrialSet, WeightMatrix};
pub use dsp::{NeighborMap, SosFilter};
pub use error::{DataError, Error, Result};
pub use features::{BandSpec, WelchConfig};
pub use maoo::MaooConfig;
pub use synth::SynthSpec;
pub use transfer::{LearnedProjection, TransferProblem};
