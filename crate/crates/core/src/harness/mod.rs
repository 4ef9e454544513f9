//! Evaluation harness: dataset loading, repeated train/test trials,
//! ablation sweeps, synthetic datasets and feature export.

mod ablation;
mod dataset;
mod export;
mod synth;
mod trials;

pub use ablation::{ablate, AblationRow, AblationTable, Sweep};
pub use dataset::{load_dataset, Dataset};
pub use export::{write_features, FeatureFormat};
pub use synth::{generate, write_dataset, SynthSpec};
pub use trials::{evaluate, split_trial, StageTimings, TrialReport, TrialSpec, TrialSplit};
