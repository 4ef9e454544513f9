//! End-to-end training and inference.
//!
//! For every patch size: extract patches, contrast-normalize, project with a
//! per-scale PCA basis, split polarity and pool over the pyramid. Pooled
//! vectors from all scales are concatenated, standardized with training
//! statistics and scored by the ridge classifier.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rayon::prelude::*;

use crate::classifier::{RidgeClassifier, Standardizer, DEFAULT_EPSILON_S, DEFAULT_LAMBDA};
use crate::error::{Error, Result};
use crate::imageio::GrayImage;
use crate::model_file;
use crate::numerics::DenseMatrix;
use crate::patches::{
    fit_pca_from_accumulator, grid_len, normalized_patches, preprocess_image,
    CovarianceAccumulator, PatchExtractionConfig, PatchStages, PcaModel, PcaTarget,
    DEFAULT_EPSILON_V,
};
use crate::pooling::{concat_scales, pool, PoolMode, PoolingPyramid};
use crate::seeding::stream_rng;

pub const DEFAULT_IMAGE_SIZE: usize = 64;
pub const DEFAULT_PCA_DIM: usize = 10;
pub const DEFAULT_MAX_PCA_PATCHES: usize = 200_000;

/// Patch projection applied before polarity splitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PcaSetting {
    Reduce(PcaTarget),
    /// Keep the (normalized) raw patch.
    Raw,
}

impl fmt::Display for PcaSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PcaSetting::Reduce(PcaTarget::Components(p)) => write!(f, "{p}"),
            PcaSetting::Reduce(PcaTarget::Energy(e)) => write!(f, "energy:{e}"),
            PcaSetting::Raw => f.write_str("raw"),
        }
    }
}

impl FromStr for PcaSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("raw") {
            return Ok(PcaSetting::Raw);
        }
        if let Some(e) = s.strip_prefix("energy:") {
            let e: f64 = e
                .parse()
                .map_err(|_| Error::ConfigInvalid(format!("bad PCA energy {e:?}")))?;
            return Ok(PcaSetting::Reduce(PcaTarget::Energy(e)));
        }
        s.parse::<usize>()
            .map(|p| PcaSetting::Reduce(PcaTarget::Components(p)))
            .map_err(|_| Error::ConfigInvalid(format!("bad PCA setting {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Images are `image_size x image_size`.
    pub image_size: usize,
    /// Patch sides, kept sorted ascending.
    pub patch_sizes: Vec<usize>,
    pub stride: usize,
    pub pca: PcaSetting,
    pub whiten: bool,
    pub pyramid: PoolingPyramid,
    pub pool_mode: PoolMode,
    pub lambda: f64,
    pub seed: u64,
    pub contrast_normalization: bool,
    pub polarity_splitting: bool,
    pub standardization: bool,
    pub epsilon_v: f64,
    pub epsilon_s: f64,
    /// Upper bound on patches sampled per scale for PCA fitting.
    pub max_pca_patches: usize,
}

impl PipelineConfig {
    /// Defaults for a given image side: patch sizes {4, 6, 8}, or {4} for
    /// images of 32 pixels or less.
    pub fn for_image_size(image_size: usize) -> Self {
        let patch_sizes = if image_size <= 32 { vec![4] } else { vec![4, 6, 8] };
        Self {
            image_size,
            patch_sizes,
            stride: 1,
            pca: PcaSetting::Reduce(PcaTarget::Components(DEFAULT_PCA_DIM)),
            whiten: false,
            pyramid: PoolingPyramid::default(),
            pool_mode: PoolMode::Max,
            lambda: DEFAULT_LAMBDA,
            seed: 0,
            contrast_normalization: true,
            polarity_splitting: true,
            standardization: true,
            epsilon_v: DEFAULT_EPSILON_V,
            epsilon_s: DEFAULT_EPSILON_S,
            max_pca_patches: DEFAULT_MAX_PCA_PATCHES,
        }
    }

    pub fn stages(&self) -> PatchStages {
        PatchStages {
            contrast_normalization: self.contrast_normalization,
            polarity_splitting: self.polarity_splitting,
        }
    }

    pub fn extraction(&self, patch_size: usize) -> PatchExtractionConfig {
        PatchExtractionConfig {
            size: patch_size,
            stride: self.stride,
            epsilon_v: self.epsilon_v,
        }
    }

    /// Checks every invariant, including that the finest pyramid level fits
    /// the patch grid of every scale.
    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 {
            return Err(Error::ConfigInvalid("image size must be positive".into()));
        }
        if self.patch_sizes.is_empty() {
            return Err(Error::ConfigInvalid("at least one patch size is required".into()));
        }
        if self.patch_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::ConfigInvalid(format!(
                "patch sizes must be distinct and ascending, got {:?}",
                self.patch_sizes
            )));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::ConfigInvalid(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.epsilon_s > 0.0) {
            return Err(Error::ConfigInvalid("epsilon_s must be positive".into()));
        }
        if self.max_pca_patches < 2 {
            return Err(Error::ConfigInvalid("PCA sample bound must be at least 2".into()));
        }
        if let PcaSetting::Reduce(t) = self.pca {
            t.validate()?;
        }
        for &r in &self.patch_sizes {
            self.extraction(r).validate(self.image_size)?;
            let l = grid_len(self.image_size, r, self.stride);
            if self.pyramid.finest() > l {
                return Err(Error::PyramidTooDeep {
                    patch: r,
                    cells: self.pyramid.finest(),
                    grid: l,
                });
            }
        }
        Ok(())
    }

    /// Per-patch length after projection and splitting, when known before fitting.
    pub fn patch_feature_len(&self, patch_size: usize) -> Option<usize> {
        let projected = match self.pca {
            PcaSetting::Raw => patch_size * patch_size,
            PcaSetting::Reduce(PcaTarget::Components(p)) => p.min(patch_size * patch_size),
            PcaSetting::Reduce(PcaTarget::Energy(_)) => return None,
        };
        Some(if self.polarity_splitting { 2 * projected } else { projected })
    }

    /// `cell_count * Σ_r q_r`, when it does not depend on the data.
    pub fn expected_feature_dim(&self) -> Option<usize> {
        let per_cell: Option<usize> = self
            .patch_sizes
            .iter()
            .map(|&r| self.patch_feature_len(r))
            .sum();
        per_cell.map(|q| q * self.pyramid.cell_count())
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::for_image_size(DEFAULT_IMAGE_SIZE)
    }
}

/// Labeled training images. `labels[i]` indexes `classes`.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub classes: Vec<String>,
    pub images: Vec<GrayImage>,
    pub labels: Vec<usize>,
}

impl TrainingSet {
    pub fn new(classes: Vec<String>, images: Vec<GrayImage>, labels: Vec<usize>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "training labels",
                expected: images.len(),
                actual: labels.len(),
            });
        }
        if classes.len() < 2 {
            return Err(Error::InsufficientSamples(format!(
                "training needs at least 2 classes, got {}",
                classes.len()
            )));
        }
        let mut counts = vec![0usize; classes.len()];
        for &l in &labels {
            *counts.get_mut(l).ok_or_else(|| {
                Error::ConfigInvalid(format!("label index {l} out of range"))
            })? += 1;
        }
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::InsufficientSamples(format!(
                "class {:?} has no training image",
                classes[c]
            )));
        }
        Ok(Self {
            classes,
            images,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// PCA basis (if any) for one patch size.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleModel {
    pub patch_size: usize,
    pub pca: Option<PcaModel>,
}

/// Everything needed to featurize and classify new images.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineModel {
    pub(crate) config: PipelineConfig,
    pub(crate) scales: Vec<ScaleModel>,
    pub(crate) standardizer: Option<Standardizer>,
    pub(crate) classifier: RidgeClassifier,
    pub(crate) feature_dim: usize,
}

impl PipelineModel {
    pub(crate) fn from_parts(
        config: PipelineConfig,
        scales: Vec<ScaleModel>,
        standardizer: Option<Standardizer>,
        classifier: RidgeClassifier,
        feature_dim: usize,
    ) -> Result<Self> {
        config.validate()?;
        let sizes: Vec<usize> = scales.iter().map(|s| s.patch_size).collect();
        if sizes != config.patch_sizes {
            return Err(Error::InconsistentConfig(format!(
                "model scales {sizes:?} differ from configured patch sizes {:?}",
                config.patch_sizes
            )));
        }
        let mut per_cell = 0;
        for s in &scales {
            let projected = match &s.pca {
                Some(p) => {
                    if p.input_dim() != s.patch_size * s.patch_size {
                        return Err(Error::InconsistentConfig(format!(
                            "PCA for r={} expects {} inputs",
                            s.patch_size,
                            p.input_dim()
                        )));
                    }
                    p.output_dim()
                }
                None => s.patch_size * s.patch_size,
            };
            per_cell += if config.polarity_splitting { 2 * projected } else { projected };
        }
        let expect = per_cell * config.pyramid.cell_count();
        if expect != feature_dim || classifier.feature_dim() != feature_dim {
            return Err(Error::InconsistentConfig(format!(
                "feature dimension {feature_dim} disagrees with components ({expect}, classifier {})",
                classifier.feature_dim()
            )));
        }
        if let Some(st) = &standardizer {
            if st.dim() != feature_dim {
                return Err(Error::InconsistentConfig("standardizer dimension".into()));
            }
        }
        Ok(Self {
            config,
            scales,
            standardizer,
            classifier,
            feature_dim,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn scales(&self) -> &[ScaleModel] {
        &self.scales
    }

    pub fn standardizer(&self) -> Option<&Standardizer> {
        self.standardizer.as_ref()
    }

    pub fn classifier(&self) -> &RidgeClassifier {
        &self.classifier
    }

    pub fn classes(&self) -> &[String] {
        self.classifier.classes()
    }

    /// Length `D` of every feature vector this model produces.
    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Pooled multi-scale feature before standardization.
    pub fn raw_feature(&self, img: &GrayImage) -> Result<Vec<f64>> {
        let side = self.config.image_size;
        if !img.is_square(side) {
            return Err(Error::DimensionMismatch {
                context: "image side",
                expected: side,
                actual: if img.width() != side { img.width() } else { img.height() },
            });
        }
        pooled_feature(&self.config, &self.scales, img)
    }

    /// Standardized feature, as fed to the classifier.
    pub fn featurize(&self, img: &GrayImage) -> Result<Vec<f64>> {
        let mut f = self.raw_feature(img)?;
        if let Some(st) = &self.standardizer {
            st.apply_in_place(&mut f)?;
        }
        Ok(f)
    }

    /// Class index with the highest score, and all scores.
    pub fn predict_image(&self, img: &GrayImage) -> Result<(usize, Vec<f64>)> {
        self.classifier.predict(&self.featurize(img)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        model_file::save(self, path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        model_file::load(path.as_ref())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        model_file::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        model_file::decode(bytes)
    }
}

fn pooled_feature(config: &PipelineConfig, scales: &[ScaleModel], img: &GrayImage) -> Result<Vec<f64>> {
    let mut parts = Vec::with_capacity(scales.len());
    for scale in scales {
        let set = preprocess_image(
            img,
            &config.extraction(scale.patch_size),
            config.stages(),
            scale.pca.as_ref(),
        )?;
        parts.push((scale.patch_size, pool(&set, &config.pyramid, config.pool_mode)?));
    }
    concat_scales(&config.pyramid, parts)
}

fn fit_scale(config: &PipelineConfig, images: &[GrayImage], patch_size: usize) -> Result<ScaleModel> {
    let target = match config.pca {
        PcaSetting::Raw => {
            return Ok(ScaleModel {
                patch_size,
                pca: None,
            })
        }
        PcaSetting::Reduce(t) => t,
    };
    let cfg = config.extraction(patch_size);
    let l = cfg.grid_len(config.image_size);
    let per_image = l * l;
    let total = images.len() * per_image;

    // Sorted patch indices to keep; None keeps every patch.
    let chosen: Option<Vec<usize>> = (total > config.max_pca_patches).then(|| {
        let mut rng = stream_rng(config.seed, &format!("pca-subsample/r{patch_size}"));
        let mut idx = index::sample(&mut rng, total, config.max_pca_patches).into_vec();
        idx.sort_unstable();
        idx
    });

    let partials: Vec<CovarianceAccumulator> = images
        .par_iter()
        .enumerate()
        .map(|(i, img)| -> Result<CovarianceAccumulator> {
            let grid = normalized_patches(img, &cfg, config.contrast_normalization)?;
            let mut acc = CovarianceAccumulator::new(grid.dim());
            match &chosen {
                None => grid.iter().for_each(|p| acc.push(p)),
                Some(idx) => {
                    let lo = idx.partition_point(|&k| k < i * per_image);
                    let hi = idx.partition_point(|&k| k < (i + 1) * per_image);
                    let flat = grid.as_slice();
                    let dim = grid.dim();
                    for &k in &idx[lo..hi] {
                        let j = k - i * per_image;
                        acc.push(&flat[j * dim..(j + 1) * dim]);
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut acc = CovarianceAccumulator::new(patch_size * patch_size);
    for p in &partials {
        acc.merge(p);
    }
    let pca = fit_pca_from_accumulator(&acc, target, config.whiten)?;
    log::debug!(
        "r={patch_size}: PCA on {} patches keeps {} of {} dims ({:.1}% energy)",
        acc.count(),
        pca.output_dim(),
        pca.input_dim(),
        100.0 * pca.retained_energy()
    );
    Ok(ScaleModel {
        patch_size,
        pca: Some(pca),
    })
}

/// Pooled features of `images`, one row each.
pub fn feature_matrix(model: &PipelineModel, images: &[GrayImage], standardized: bool) -> Result<DenseMatrix> {
    let rows: Vec<Vec<f64>> = images
        .par_iter()
        .map(|img| {
            if standardized {
                model.featurize(img)
            } else {
                model.raw_feature(img)
            }
        })
        .collect::<Result<_>>()?;
    let mut values = Vec::with_capacity(rows.len() * model.feature_dim());
    rows.into_iter().for_each(|r| values.extend(r));
    DenseMatrix::from_row_major(images.len(), model.feature_dim(), values)
}

/// Fits PCA per scale, the standardizer and the classifier on `train`.
pub fn fit(config: &PipelineConfig, train: &TrainingSet) -> Result<PipelineModel> {
    config.validate()?;
    let side = config.image_size;
    if let Some(bad) = train.images.iter().find(|img| !img.is_square(side)) {
        return Err(Error::DimensionMismatch {
            context: "training image side",
            expected: side,
            actual: bad.width().max(bad.height()),
        });
    }
    let scales = config
        .patch_sizes
        .iter()
        .map(|&r| fit_scale(config, &train.images, r))
        .collect::<Result<Vec<_>>>()?;

    let rows: Vec<Vec<f64>> = train
        .images
        .par_iter()
        .map(|img| pooled_feature(config, &scales, img))
        .collect::<Result<_>>()?;
    let dim = rows.first().map_or(0, Vec::len);
    let mut values = Vec::with_capacity(rows.len() * dim);
    rows.into_iter().for_each(|r| values.extend(r));
    let mut features = DenseMatrix::from_row_major(train.len(), dim, values)?;

    let standardizer = if config.standardization {
        let st = Standardizer::fit(&features)?.with_epsilon(config.epsilon_s);
        for i in 0..features.rows() {
            st.apply_in_place(features.row_mut(i))?;
        }
        Some(st)
    } else {
        None
    };
    let classifier =
        RidgeClassifier::fit(&features, &train.labels, train.classes.clone(), config.lambda)?;
    PipelineModel::from_parts(config.clone(), scales, standardizer, classifier, dim)
}
