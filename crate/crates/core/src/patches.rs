//! Dense patch extraction and per-patch pre-processing.
//!
//! A `d x d` image sampled with patch side `r` and stride `s` yields an
//! `l x l` grid of patches, `l = floor((d - r) / s + 1)`. Each patch is
//! flattened row-major, optionally contrast-normalized, projected onto a PCA
//! basis and split into positive and negative parts.

use crate::error::{Error, Result};
use crate::imageio::GrayImage;
use crate::numerics::{dot, sym_eig, DenseMatrix};

pub const DEFAULT_EPSILON_V: f64 = 1e-5;
pub const DEFAULT_EPSILON_W: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchExtractionConfig {
    /// Patch side `r` in pixels.
    pub size: usize,
    /// Step `s` between top-left corners.
    pub stride: usize,
    /// Added to the per-patch standard deviation.
    pub epsilon_v: f64,
}

impl PatchExtractionConfig {
    pub fn new(size: usize, stride: usize) -> Self {
        Self {
            size,
            stride,
            epsilon_v: DEFAULT_EPSILON_V,
        }
    }

    pub fn validate(&self, side: usize) -> Result<()> {
        if self.size == 0 || self.stride == 0 {
            return Err(Error::ConfigInvalid(format!(
                "patch size and stride must be positive (r={}, s={})",
                self.size, self.stride
            )));
        }
        if !(self.epsilon_v > 0.0 && self.epsilon_v.is_finite()) {
            return Err(Error::ConfigInvalid(format!(
                "epsilon_v must be positive, got {}",
                self.epsilon_v
            )));
        }
        if self.size > side {
            return Err(Error::PatchLargerThanImage {
                patch: self.size,
                side,
            });
        }
        Ok(())
    }

    /// Patches per image dimension for a `side x side` image.
    pub fn grid_len(&self, side: usize) -> usize {
        grid_len(side, self.size, self.stride)
    }
}

/// `floor((d - r) / s + 1)`, or 0 when the patch does not fit.
pub fn grid_len(side: usize, size: usize, stride: usize) -> usize {
    if size > side || stride == 0 {
        0
    } else {
        (side - size) / stride + 1
    }
}

/// `l x l` grid of equal-length vectors stored contiguously, grid row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    grid: usize,
    dim: usize,
    data: Vec<f64>,
}

impl PatchGrid {
    pub fn from_vec(grid: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid * grid * dim {
            return Err(Error::DimensionMismatch {
                context: "patch grid buffer",
                expected: grid * grid * dim,
                actual: data.len(),
            });
        }
        Ok(Self { grid, dim, data })
    }

    pub fn grid_len(&self) -> usize {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid * self.grid
    }

    pub fn is_empty(&self) -> bool {
        self.grid == 0
    }

    /// Vector at grid position (`a` = row, `b` = column).
    pub fn at(&self, a: usize, b: usize) -> &[f64] {
        let start = (a * self.grid + b) * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1)).take(self.len())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Applies `f` to every vector, producing a grid with vectors of length `out_dim`.
    fn map(&self, out_dim: usize, mut f: impl FnMut(&[f64], &mut [f64])) -> PatchGrid {
        let mut data = vec![0.0; self.len() * out_dim];
        for (src, dst) in self.iter().zip(data.chunks_exact_mut(out_dim.max(1))) {
            f(src, dst);
        }
        PatchGrid {
            grid: self.grid,
            dim: out_dim,
            data,
        }
    }
}

/// Pre-processed patches of one image at one patch scale.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    pub patch_size: usize,
    pub patches: PatchGrid,
}

impl PatchSet {
    pub fn grid_len(&self) -> usize {
        self.patches.grid_len()
    }

    /// Per-patch feature length `q`.
    pub fn dim(&self) -> usize {
        self.patches.dim()
    }
}

/// Extracts every `r x r` patch; position `(a, b)` has top-left pixel `(a*s, b*s)`.
pub fn extract_patches(img: &GrayImage, cfg: &PatchExtractionConfig) -> Result<PatchGrid> {
    if img.width() != img.height() {
        return Err(Error::DimensionMismatch {
            context: "square image expected for patch extraction",
            expected: img.width(),
            actual: img.height(),
        });
    }
    let side = img.width();
    cfg.validate(side)?;
    let (r, s) = (cfg.size, cfg.stride);
    let l = cfg.grid_len(side);
    let dim = r * r;
    let mut data = Vec::with_capacity(l * l * dim);
    let pixels = img.pixels();
    for a in 0..l {
        for b in 0..l {
            for dy in 0..r {
                let start = (a * s + dy) * side + b * s;
                data.extend_from_slice(&pixels[start..start + r]);
            }
        }
    }
    Ok(PatchGrid { grid: l, dim, data })
}

/// `(x - mean) / (std + epsilon_v)` with the population standard deviation.
pub fn contrast_normalize(x: &[f64], epsilon_v: f64) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    contrast_normalize_into(x, epsilon_v, &mut out);
    out
}

pub fn contrast_normalize_into(x: &[f64], epsilon_v: f64, out: &mut [f64]) {
    let n = x.len() as f64;
    let x0 = x.first().copied().unwrap_or(0.0);
    let mean = x0 + x.iter().map(|v| v - x0).sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let denom = var.sqrt() + epsilon_v;
    for (o, v) in out.iter_mut().zip(x) {
        *o = (v - mean) / denom;
    }
}

/// `max(v, 0)` followed by `max(-v, 0)`.
pub fn polarity_split(v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; 2 * v.len()];
    polarity_split_into(v, &mut out);
    out
}

pub fn polarity_split_into(v: &[f64], out: &mut [f64]) {
    let (pos, neg) = out.split_at_mut(v.len());
    for ((p, n), &x) in pos.iter_mut().zip(neg.iter_mut()).zip(v) {
        *p = x.max(0.0);
        *n = (-x).max(0.0);
    }
}

/// How many principal components to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PcaTarget {
    /// Keep exactly `p` components (capped at the input dimension).
    Components(usize),
    /// Keep the fewest components whose eigenvalues reach this share of the total.
    Energy(f64),
}

impl PcaTarget {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PcaTarget::Components(0) => Err(Error::ConfigInvalid(
                "PCA dimension must be at least 1".into(),
            )),
            PcaTarget::Energy(e) if !(e > 0.0 && e <= 1.0) => Err(Error::ConfigInvalid(
                format!("PCA energy fraction must lie in (0, 1], got {e}"),
            )),
            _ => Ok(()),
        }
    }
}

/// Streaming mean and scatter-matrix accumulator.
///
/// Updates use the running-mean form so that large patch counts do not
/// lose precision to cancellation; partial accumulators merge exactly.
#[derive(Debug, Clone)]
pub struct CovarianceAccumulator {
    dim: usize,
    count: u64,
    mean: Vec<f64>,
    /// Upper triangle (row-major, including diagonal) of the scatter matrix.
    scatter: Vec<f64>,
    delta: Vec<f64>,
}

impl CovarianceAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            count: 0,
            mean: vec![0.0; dim],
            scatter: vec![0.0; dim * (dim + 1) / 2],
            delta: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        self.count += 1;
        let inv = 1.0 / self.count as f64;
        for ((d, m), &v) in self.delta.iter_mut().zip(self.mean.iter_mut()).zip(x) {
            *d = v - *m;
            *m += *d * inv;
        }
        // scatter += (x - old_mean)(x - new_mean)^T
        let mut k = 0;
        for i in 0..self.dim {
            let di = self.delta[i];
            for j in i..self.dim {
                self.scatter[k] += di * (x[j] - self.mean[j]);
                k += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &CovarianceAccumulator) {
        assert_eq!(self.dim, other.dim);
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for (d, (a, b)) in self.delta.iter_mut().zip(self.mean.iter().zip(&other.mean)) {
            *d = b - a;
        }
        let w = na * nb / n;
        let mut k = 0;
        for i in 0..self.dim {
            for j in i..self.dim {
                self.scatter[k] += other.scatter[k] + w * self.delta[i] * self.delta[j];
                k += 1;
            }
        }
        for (m, d) in self.mean.iter_mut().zip(&self.delta) {
            *m += d * nb / n;
        }
        self.count += other.count;
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Sample covariance (divides by `count - 1`).
    pub fn covariance(&self) -> DenseMatrix {
        let mut cov = DenseMatrix::zeros(self.dim, self.dim);
        let denom = (self.count.max(2) - 1) as f64;
        let mut k = 0;
        for i in 0..self.dim {
            for j in i..self.dim {
                let c = self.scatter[k] / denom;
                cov[(i, j)] = c;
                cov[(j, i)] = c;
                k += 1;
            }
        }
        cov
    }
}

/// Mean and principal axes of a set of patches.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    input_dim: usize,
    mean: Vec<f64>,
    /// `output_dim` rows of `input_dim`; row `k` is the `k`-th principal axis.
    components: Vec<f64>,
    /// Full spectrum, non-increasing.
    eigenvalues: Vec<f64>,
    whiten: bool,
    epsilon_w: f64,
}

impl PcaModel {
    /// Assembles a model from stored parts, checking shapes.
    pub fn from_parts(
        input_dim: usize,
        mean: Vec<f64>,
        components: Vec<f64>,
        eigenvalues: Vec<f64>,
        whiten: bool,
        epsilon_w: f64,
    ) -> Result<Self> {
        if mean.len() != input_dim
            || input_dim == 0
            || components.len() % input_dim != 0
            || components.is_empty()
            || eigenvalues.len() != input_dim
            || components.len() / input_dim > input_dim
        {
            return Err(Error::DimensionMismatch {
                context: "PCA model parts",
                expected: input_dim,
                actual: mean.len(),
            });
        }
        Ok(Self {
            input_dim,
            mean,
            components,
            eigenvalues,
            whiten,
            epsilon_w,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.components.len() / self.input_dim
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn component(&self, k: usize) -> &[f64] {
        &self.components[k * self.input_dim..(k + 1) * self.input_dim]
    }

    pub fn whiten(&self) -> bool {
        self.whiten
    }

    pub fn epsilon_w(&self) -> f64 {
        self.epsilon_w
    }

    /// Share of the total eigenvalue energy kept by the retained components.
    pub fn retained_energy(&self) -> f64 {
        let total: f64 = self.eigenvalues.iter().map(|v| v.max(0.0)).sum();
        let kept: f64 = self.eigenvalues[..self.output_dim()]
            .iter()
            .map(|v| v.max(0.0))
            .sum();
        if total > 0.0 {
            kept / total
        } else {
            1.0
        }
    }

    /// `Bᵀ(x − μ)`, divided per coordinate by `sqrt(λ + ε_w)` when whitening.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                context: "PCA projection input",
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        let mut out = vec![0.0; self.output_dim()];
        let mut centered = vec![0.0; self.input_dim];
        self.project_into(x, &mut centered, &mut out);
        Ok(out)
    }

    pub(crate) fn project_into(&self, x: &[f64], centered: &mut [f64], out: &mut [f64]) {
        for ((c, v), m) in centered.iter_mut().zip(x).zip(&self.mean) {
            *c = v - m;
        }
        for (k, o) in out.iter_mut().enumerate() {
            let mut v = dot(self.component(k), centered);
            if self.whiten {
                v /= (self.eigenvalues[k].max(0.0) + self.epsilon_w).sqrt();
            }
            *o = v;
        }
    }
}

/// Number of components kept for `target` given a non-increasing spectrum.
pub fn select_components(eigenvalues: &[f64], target: PcaTarget) -> usize {
    let n = eigenvalues.len();
    match target {
        PcaTarget::Components(p) => p.clamp(1, n),
        PcaTarget::Energy(e) => {
            let total: f64 = eigenvalues.iter().map(|v| v.max(0.0)).sum();
            let mut cum = 0.0;
            for (k, v) in eigenvalues.iter().enumerate() {
                cum += v.max(0.0);
                if cum >= e * total {
                    return k + 1;
                }
            }
            n
        }
    }
}

/// Fits PCA to a set of patch vectors of length `dim`.
pub fn fit_pca<'a>(
    patches: impl IntoIterator<Item = &'a [f64]>,
    dim: usize,
    target: PcaTarget,
    whiten: bool,
) -> Result<PcaModel> {
    let mut acc = CovarianceAccumulator::new(dim);
    for p in patches {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "PCA training patch",
                expected: dim,
                actual: p.len(),
            });
        }
        acc.push(p);
    }
    fit_pca_from_accumulator(&acc, target, whiten)
}

pub fn fit_pca_from_accumulator(
    acc: &CovarianceAccumulator,
    target: PcaTarget,
    whiten: bool,
) -> Result<PcaModel> {
    target.validate()?;
    if acc.count() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            actual: acc.count() as usize,
        });
    }
    let cov = acc.covariance();
    let eig = sym_eig(&cov)?;
    let top = eig.values.first().copied().unwrap_or(0.0);
    if !(top > 1e-14) {
        return Err(Error::DegenerateData(
            "all PCA training patches are identical".into(),
        ));
    }
    let dim = acc.dim();
    let keep = select_components(&eig.values, target);
    let mut components = Vec::with_capacity(keep * dim);
    for k in 0..keep {
        components.extend(eig.vectors.column(k));
    }
    PcaModel::from_parts(
        dim,
        acc.mean().to_vec(),
        components,
        eig.values,
        whiten,
        DEFAULT_EPSILON_W,
    )
}

/// Which optional per-patch stages run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchStages {
    pub contrast_normalization: bool,
    pub polarity_splitting: bool,
}

impl Default for PatchStages {
    fn default() -> Self {
        Self {
            contrast_normalization: true,
            polarity_splitting: true,
        }
    }
}

/// Extracted patches, contrast-normalized when enabled. This is what PCA is fit on.
pub fn normalized_patches(
    img: &GrayImage,
    cfg: &PatchExtractionConfig,
    contrast_normalization: bool,
) -> Result<PatchGrid> {
    let raw = extract_patches(img, cfg)?;
    if !contrast_normalization {
        return Ok(raw);
    }
    let eps = cfg.epsilon_v;
    Ok(raw.map(raw.dim(), |src, dst| contrast_normalize_into(src, eps, dst)))
}

/// extract → contrast-normalize → project → polarity-split for every patch.
///
/// With `pca` set to `None` the normalized patch is used as is.
pub fn preprocess_image(
    img: &GrayImage,
    cfg: &PatchExtractionConfig,
    stages: PatchStages,
    pca: Option<&PcaModel>,
) -> Result<PatchSet> {
    let normalized = normalized_patches(img, cfg, stages.contrast_normalization)?;
    let projected = match pca {
        Some(model) => {
            if model.input_dim() != normalized.dim() {
                return Err(Error::DimensionMismatch {
                    context: "PCA model input vs patch length",
                    expected: model.input_dim(),
                    actual: normalized.dim(),
                });
            }
            let mut centered = vec![0.0; model.input_dim()];
            normalized.map(model.output_dim(), |src, dst| {
                model.project_into(src, &mut centered, dst)
            })
        }
        None => normalized,
    };
    let patches = if stages.polarity_splitting {
        projected.map(2 * projected.dim(), polarity_split_into)
    } else {
        projected
    };
    Ok(PatchSet {
        patch_size: cfg.size,
        patches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::oracle;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn ramp(side: usize) -> GrayImage {
        GrayImage::from_fn(side, side, |r, c| ((r * 31 + c * 17) % 23) as f64 / 23.0)
    }

    #[test]
    fn default_grid_has_3721_patches() {
        let grid = extract_patches(&ramp(64), &PatchExtractionConfig::new(4, 1)).unwrap();
        assert_eq!(grid.grid_len(), 61);
        assert_eq!(grid.len(), 3721);
        assert_eq!(grid.dim(), 16);
    }

    #[test]
    fn grid_of_32_by_4() {
        let grid = extract_patches(&ramp(32), &PatchExtractionConfig::new(4, 1)).unwrap();
        assert_eq!((grid.grid_len(), grid.len()), (29, 841));
    }

    #[test]
    fn full_size_patch_is_the_image() {
        let img = ramp(8);
        let grid = extract_patches(&img, &PatchExtractionConfig::new(8, 1)).unwrap();
        assert_eq!(grid.len(), 1);
        assert_eq!(grid.at(0, 0), img.pixels());
    }

    #[test]
    fn patch_position_uses_top_left_pixel() {
        let img = ramp(10);
        let cfg = PatchExtractionConfig::new(3, 2);
        let grid = extract_patches(&img, &cfg).unwrap();
        assert_eq!(grid.grid_len(), 4);
        let p = grid.at(2, 1);
        for dy in 0..3 {
            for dx in 0..3 {
                assert_eq!(p[dy * 3 + dx], img.get(4 + dy, 2 + dx));
            }
        }
    }

    #[test]
    fn oversize_patch_is_rejected() {
        let err = extract_patches(&ramp(4), &PatchExtractionConfig::new(5, 1)).unwrap_err();
        assert!(matches!(err, Error::PatchLargerThanImage { patch: 5, side: 4 }));
    }

    #[test]
    fn constant_patch_normalizes_to_zero() {
        assert!(contrast_normalize(&[0.7; 16], DEFAULT_EPSILON_V)
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn two_point_patch() {
        // m = 1, population std = 1
        assert_eq!(contrast_normalize(&[0.0, 2.0], 0.0), vec![-1.0, 1.0]);
    }

    #[test]
    fn normalized_moments() {
        let x: Vec<f64> = (1..=16).map(|v| v as f64).collect();
        let eps = 0.3;
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = (x.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / n).sqrt();
        let y = contrast_normalize(&x, eps);
        let ym = y.iter().sum::<f64>() / n;
        let ys = (y.iter().map(|a| (a - ym) * (a - ym)).sum::<f64>() / n).sqrt();
        assert!(ym.abs() < 1e-10);
        assert!((ys - v / (v + eps)).abs() < 1e-10);
    }

    #[test]
    fn polarity_examples() {
        assert_eq!(polarity_split(&[1.0, -2.0]), vec![1.0, 0.0, 0.0, 2.0]);
        assert_eq!(polarity_split(&[0.0; 3]), vec![0.0; 6]);
    }

    fn subspace_patches(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
        let u: Vec<f64> = (0..16).map(|i| (i as f64 * 0.3).sin()).collect();
        let w: Vec<f64> = (0..16).map(|i| (i as f64 * 0.7).cos()).collect();
        let mu: Vec<f64> = (0..16).map(|i| i as f64 * 0.01).collect();
        (0..n)
            .map(|_| {
                let (a, b): (f64, f64) = (rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0));
                (0..16).map(|i| mu[i] + a * u[i] + b * w[i]).collect()
            })
            .collect()
    }

    #[test]
    fn rank_two_subspace_needs_two_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = subspace_patches(&mut rng, 500);
        let model = fit_pca(data.iter().map(Vec::as_slice), 16, PcaTarget::Energy(0.999), false)
            .unwrap();
        assert_eq!(model.output_dim(), 2);
    }

    #[test]
    fn full_basis_is_a_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..16).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let model =
            fit_pca(data.iter().map(Vec::as_slice), 16, PcaTarget::Components(16), false).unwrap();
        for x in data.iter().take(20) {
            let y = model.project(x).unwrap();
            // reconstruct: μ + B y
            let mut rec = model.mean().to_vec();
            for (k, yk) in y.iter().enumerate() {
                for (r, b) in rec.iter_mut().zip(model.component(k)) {
                    *r += yk * b;
                }
            }
            let err: f64 = rec.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(err < 1e-8);
            let centered_norm: f64 = x
                .iter()
                .zip(model.mean())
                .map(|(a, m)| (a - m).powi(2))
                .sum::<f64>()
                .sqrt();
            let proj_norm: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((centered_norm - proj_norm).abs() < 1e-8);
        }
        let basis_orthonormal = (0..16).all(|i| {
            (0..16).all(|j| {
                let d = dot(model.component(i), model.component(j));
                (d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8
            })
        });
        assert!(basis_orthonormal);
    }

    #[test]
    fn energy_rule_matches_explicit_covariance_oracle() {
        let scales = [8.0, 4.0, 2.0, 1.0, 0.5, 0.25, 0.1, 0.1, 0.05, 0.05, 0.02, 0.02, 0.01, 0.01, 0.01, 0.01];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data: Vec<Vec<f64>> = (0..1000)
            .map(|_| {
                scales
                    .iter()
                    .map(|s: &f64| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        s.sqrt() * z
                    })
                    .collect()
            })
            .collect();
        let model = fit_pca(data.iter().map(Vec::as_slice), 16, PcaTarget::Energy(0.90), false)
            .unwrap();

        // explicit two-pass covariance + Jacobi eigenvalues
        let n = data.len() as f64;
        let mean: Vec<f64> = (0..16).map(|j| data.iter().map(|x| x[j]).sum::<f64>() / n).collect();
        let mut cov = DenseMatrix::zeros(16, 16);
        for i in 0..16 {
            for j in 0..16 {
                cov[(i, j)] = data
                    .iter()
                    .map(|x| (x[i] - mean[i]) * (x[j] - mean[j]))
                    .sum::<f64>()
                    / (n - 1.0);
            }
        }
        let spectrum = oracle::jacobi_eigenvalues(&cov);
        let total: f64 = spectrum.iter().sum();
        let mut cum = 0.0;
        let mut expect = 0;
        for (k, v) in spectrum.iter().enumerate() {
            cum += v;
            if cum >= 0.9 * total {
                expect = k + 1;
                break;
            }
        }
        assert_eq!(model.output_dim(), expect);
        for (a, b) in model.eigenvalues().iter().zip(&spectrum) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn component_count_is_capped() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let model =
            fit_pca(data.iter().map(Vec::as_slice), 4, PcaTarget::Components(10), false).unwrap();
        assert_eq!(model.output_dim(), 4);
    }

    #[test]
    fn identical_patches_are_degenerate() {
        let data = vec![vec![0.25; 9]; 20];
        let err = fit_pca(data.iter().map(Vec::as_slice), 9, PcaTarget::Components(3), false)
            .unwrap_err();
        assert!(matches!(err, Error::DegenerateData(_)));
    }

    #[test]
    fn project_hand_values() {
        let model = PcaModel::from_parts(
            2,
            vec![1.0, 1.0],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![2.0, 1.0],
            false,
            DEFAULT_EPSILON_W,
        )
        .unwrap();
        assert_eq!(model.project(&[3.0, 1.0]).unwrap(), vec![2.0, 0.0]);
        assert_eq!(model.project(&[1.0, 1.0]).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(
            model.project(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn whitening_scales_by_eigenvalue() {
        let model = PcaModel::from_parts(
            2,
            vec![0.0, 0.0],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![4.0, 1.0],
            true,
            0.0,
        )
        .unwrap();
        assert_eq!(model.project(&[2.0, 3.0]).unwrap(), vec![1.0, 3.0]);
    }

    #[test]
    fn merged_accumulators_match_single_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..5).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let mut whole = CovarianceAccumulator::new(5);
        data.iter().for_each(|x| whole.push(x));
        let mut a = CovarianceAccumulator::new(5);
        let mut b = CovarianceAccumulator::new(5);
        data[..73].iter().for_each(|x| a.push(x));
        data[73..].iter().for_each(|x| b.push(x));
        a.merge(&b);
        assert_eq!(a.count(), 200);
        assert!(a.covariance().sub(&whole.covariance()).frobenius_norm() < 1e-12);
        for (x, y) in a.mean().iter().zip(whole.mean()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    fn fitted_model(side: usize, cfg: &PatchExtractionConfig, p: usize) -> PcaModel {
        let img = GrayImage::from_fn(side, side, |r, c| {
            0.5 + 0.4 * ((r as f64 * 0.9).sin() * (c as f64 * 0.4).cos())
        });
        let grid = normalized_patches(&img, cfg, true).unwrap();
        fit_pca(grid.iter(), grid.dim(), PcaTarget::Components(p), false).unwrap()
    }

    #[test]
    fn preprocess_dimensions() {
        let cfg = PatchExtractionConfig::new(4, 1);
        let model = fitted_model(64, &cfg, 10);
        let set = preprocess_image(&ramp(64), &cfg, PatchStages::default(), Some(&model)).unwrap();
        assert_eq!(set.grid_len(), 61);
        assert_eq!(set.dim(), 20);
        assert!(set.patches.as_slice().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn constant_image_without_pca_gives_zero_patches() {
        let cfg = PatchExtractionConfig::new(4, 1);
        let set =
            preprocess_image(&GrayImage::constant(16, 16, 0.4), &cfg, PatchStages::default(), None)
                .unwrap();
        assert!(set.patches.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_image_with_pca_gives_projected_zero_patch() {
        let cfg = PatchExtractionConfig::new(4, 1);
        let model = fitted_model(20, &cfg, 5);
        let set = preprocess_image(
            &GrayImage::constant(16, 16, 0.4),
            &cfg,
            PatchStages::default(),
            Some(&model),
        )
        .unwrap();
        let expect = polarity_split(&model.project(&[0.0; 16]).unwrap());
        assert!(set.patches.iter().all(|p| p == expect.as_slice()));
    }

    #[test]
    fn preprocess_equals_stagewise_composition() {
        let cfg = PatchExtractionConfig::new(5, 2);
        let model = fitted_model(24, &cfg, 6);
        let img = ramp(24);
        let set = preprocess_image(&img, &cfg, PatchStages::default(), Some(&model)).unwrap();
        let raw = extract_patches(&img, &cfg).unwrap();
        for (got, x) in set.patches.iter().zip(raw.iter()) {
            let expect =
                polarity_split(&model.project(&contrast_normalize(x, cfg.epsilon_v)).unwrap());
            assert_eq!(got, expect.as_slice());
        }
    }

    #[test]
    fn disabled_stages_pass_through() {
        let cfg = PatchExtractionConfig::new(3, 1);
        let img = ramp(9);
        let stages = PatchStages {
            contrast_normalization: false,
            polarity_splitting: false,
        };
        let set = preprocess_image(&img, &cfg, stages, None).unwrap();
        assert_eq!(set.patches, extract_patches(&img, &cfg).unwrap());
    }

    proptest! {
        #[test]
        fn patch_count_law(d in 1usize..80, r in 1usize..12, s in 1usize..6) {
            prop_assume!(r <= d);
            let img = GrayImage::constant(d, d, 0.5);
            let grid = extract_patches(&img, &PatchExtractionConfig::new(r, s)).unwrap();
            let l = ((d - r) as f64 / s as f64 + 1.0).floor() as usize;
            prop_assert_eq!(grid.len(), l * l);
        }

        #[test]
        fn brightness_invariance(x in prop::collection::vec(-1.0f64..1.0, 2..40), c in -5.0f64..5.0) {
            let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
            let a = contrast_normalize(&x, DEFAULT_EPSILON_V);
            let b = contrast_normalize(&shifted, DEFAULT_EPSILON_V);
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((u - v).abs() < 1e-10);
            }
        }

        #[test]
        fn contrast_invariance(x in prop::collection::vec(-1.0f64..1.0, 2..40), scale in 0.1f64..10.0) {
            let n = x.len() as f64;
            let m = x.iter().sum::<f64>() / n;
            let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
            prop_assume!(sd > 1e-2);
            let scaled: Vec<f64> = x.iter().map(|v| v * scale).collect();
            let a = contrast_normalize(&x, 1e-8);
            let b = contrast_normalize(&scaled, 1e-8);
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((u - v).abs() < 1e-5);
            }
        }

        #[test]
        fn polarity_reconstruction(v in prop::collection::vec(-10.0f64..10.0, 0..30)) {
            let s = polarity_split(&v);
            let (pos, neg) = s.split_at(v.len());
            for i in 0..v.len() {
                prop_assert_eq!(pos[i] - neg[i], v[i]);
                prop_assert_eq!(pos[i] * neg[i], 0.0);
                prop_assert!(pos[i] >= 0.0 && neg[i] >= 0.0);
            }
        }
    }
}
