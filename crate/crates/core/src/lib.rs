//! Face recognition by spatial pyramid pooling of raw local patches.
//!
//! Images are densely cut into small overlapping patches at one or more
//! scales. Each patch is contrast-normalized, projected onto a per-scale PCA
//! basis and split into positive and negative parts; the resulting vectors
//! are max- or average-pooled over a deep spatial pyramid. Pooled features
//! from all scales are concatenated, standardized, and classified by a
//! closed-form ridge-regression classifier.
//!
//! ```no_run
//! use patchpool::{fit, load_gray, resize, PipelineConfig, TrainingSet};
//!
//! # fn main() -> patchpool::Result<()> {
//! let cfg = PipelineConfig::for_image_size(32);
//! let images = vec![
//!     resize(&load_gray("a/1.png")?, 32),
//!     resize(&load_gray("b/1.png")?, 32),
//! ];
//! let train = TrainingSet::new(vec!["a".into(), "b".into()], images, vec![0, 1])?;
//! let model = fit(&cfg, &train)?;
//! let (label, _scores) = model.predict_image(&resize(&load_gray("probe.png")?, 32))?;
//! println!("{}", model.classes()[label]);
//! # Ok(())
//! # }
//! ```

pub mod classifier;
pub mod cli;
pub mod error;
pub mod harness;
pub mod imageio;
pub mod model_file;
pub mod numerics;
pub mod patches;
pub mod pipeline;
pub mod pooling;
pub mod seeding;

pub use classifier::{RidgeClassifier, Standardizer};
pub use error::{Error, Result};
pub use imageio::{load_gray, resize, scan_dataset, DatasetIndex, GrayImage};
pub use patches::{PatchExtractionConfig, PatchSet, PcaModel, PcaTarget};
pub use pipeline::{fit, PcaSetting, PipelineConfig, PipelineModel, TrainingSet};
pub use pooling::{PoolMode, PoolingPyramid};
