//! Binary model file (`.ppm.model`).
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "PATCHPM\0"
//! version      u32
//! config       image_size, patch sizes, stride, PCA setting, whitening,
//!              pyramid, pool mode, lambda, seed, stage toggles, epsilons,
//!              PCA sample bound
//! scales       count, then per scale: r, PCA flag, [in, out, whiten,
//!              epsilon_w, mean[in], eigenvalues[in], components[out*in]]
//! feature_dim  u64
//! standardizer flag, [dim, epsilon_s, mean[dim], std[dim]]
//! classifier   lambda, class labels, rows, cols, weights[rows*cols]
//! crc32        u32 over every preceding byte
//! ```
//!
//! Floats are stored as `f64`; usize values as `u64`; booleans and enum tags
//! as `u8`; strings as `u64` length plus UTF-8 bytes.

use std::fs;
use std::path::Path;

use crate::classifier::{RidgeClassifier, Standardizer};
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;
use crate::patches::{PcaModel, PcaTarget};
use crate::pipeline::{PcaSetting, PipelineConfig, PipelineModel, ScaleModel};
use crate::pooling::{PoolMode, PoolingPyramid};

pub const MAGIC: &[u8; 8] = b"PATCHPM\0";
pub const FORMAT_VERSION: u32 = 1;
pub const EXTENSION: &str = "ppm.model";

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    fn bool(&mut self, v: bool) {
        self.u8(v as u8);
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, v: &[f64]) {
        v.iter().for_each(|x| self.f64(*x));
    }

    fn str(&mut self, s: &str) {
        self.usize(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptModel(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(corrupt("unexpected end of data"));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("length overflows usize"))
    }

    /// A count of items of `item_size` bytes that must still fit in the buffer.
    fn len(&mut self, item_size: usize) -> Result<usize> {
        let n = self.usize()?;
        if n.saturating_mul(item_size) > self.buf.len() - self.pos {
            return Err(corrupt(format!("declared length {n} exceeds remaining data")));
        }
        Ok(n)
    }

    fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(corrupt(format!("invalid boolean byte {b}"))),
        }
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if n.saturating_mul(8) > self.buf.len() - self.pos {
            return Err(corrupt("array exceeds remaining data"));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    fn str(&mut self) -> Result<String> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("label is not UTF-8"))
    }
}

fn write_config(w: &mut Writer, c: &PipelineConfig) {
    w.usize(c.image_size);
    w.usize(c.patch_sizes.len());
    c.patch_sizes.iter().for_each(|&r| w.usize(r));
    w.usize(c.stride);
    match c.pca {
        PcaSetting::Reduce(PcaTarget::Components(p)) => {
            w.u8(0);
            w.usize(p);
        }
        PcaSetting::Reduce(PcaTarget::Energy(e)) => {
            w.u8(1);
            w.f64(e);
        }
        PcaSetting::Raw => w.u8(2),
    }
    w.bool(c.whiten);
    w.usize(c.pyramid.depth());
    c.pyramid.levels().iter().for_each(|&l| w.usize(l));
    w.u8(match c.pool_mode {
        PoolMode::Max => 0,
        PoolMode::Average => 1,
    });
    w.f64(c.lambda);
    w.u64(c.seed);
    w.bool(c.contrast_normalization);
    w.bool(c.polarity_splitting);
    w.bool(c.standardization);
    w.f64(c.epsilon_v);
    w.f64(c.epsilon_s);
    w.usize(c.max_pca_patches);
}

fn read_config(r: &mut Reader) -> Result<PipelineConfig> {
    let image_size = r.usize()?;
    let n = r.len(8)?;
    let patch_sizes = (0..n).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let stride = r.usize()?;
    let pca = match r.u8()? {
        0 => PcaSetting::Reduce(PcaTarget::Components(r.usize()?)),
        1 => PcaSetting::Reduce(PcaTarget::Energy(r.f64()?)),
        2 => PcaSetting::Raw,
        t => return Err(corrupt(format!("unknown PCA tag {t}"))),
    };
    let whiten = r.bool()?;
    let depth = r.len(8)?;
    let levels = (0..depth).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let pyramid = PoolingPyramid::new(levels).map_err(|e| corrupt(e.to_string()))?;
    let pool_mode = match r.u8()? {
        0 => PoolMode::Max,
        1 => PoolMode::Average,
        t => return Err(corrupt(format!("unknown pool mode tag {t}"))),
    };
    Ok(PipelineConfig {
        image_size,
        patch_sizes,
        stride,
        pca,
        whiten,
        pyramid,
        pool_mode,
        lambda: r.f64()?,
        seed: r.u64()?,
        contrast_normalization: r.bool()?,
        polarity_splitting: r.bool()?,
        standardization: r.bool()?,
        epsilon_v: r.f64()?,
        epsilon_s: r.f64()?,
        max_pca_patches: r.usize()?,
    })
}

/// Serializes a model, checksum included.
pub fn encode(model: &PipelineModel) -> Vec<u8> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    write_config(&mut w, &model.config);

    w.usize(model.scales.len());
    for s in &model.scales {
        w.usize(s.patch_size);
        match &s.pca {
            None => w.bool(false),
            Some(p) => {
                w.bool(true);
                w.usize(p.input_dim());
                w.usize(p.output_dim());
                w.bool(p.whiten());
                w.f64(p.epsilon_w());
                w.f64s(p.mean());
                w.f64s(p.eigenvalues());
                w.f64s(p.components());
            }
        }
    }
    w.usize(model.feature_dim);

    match &model.standardizer {
        None => w.bool(false),
        Some(st) => {
            w.bool(true);
            w.usize(st.dim());
            w.f64(st.epsilon_s());
            w.f64s(st.mean());
            w.f64s(st.std());
        }
    }

    let clf = &model.classifier;
    w.f64(clf.lambda());
    w.usize(clf.classes().len());
    clf.classes().iter().for_each(|c| w.str(c));
    w.usize(clf.weights().rows());
    w.usize(clf.weights().cols());
    w.f64s(clf.weights().values());

    let crc = crc32fast::hash(&w.buf);
    w.u32(crc);
    w.buf
}

/// Parses and validates a serialized model.
pub fn decode(bytes: &[u8]) -> Result<PipelineModel> {
    if bytes.len() < MAGIC.len() + 8 {
        return Err(corrupt("file too short"));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(corrupt("bad magic; not a patchpool model"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(corrupt(format!(
            "unsupported format version {version} (this build reads version {FORMAT_VERSION})"
        )));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(corrupt("checksum mismatch (truncated or modified file)"));
    }

    let mut r = Reader { buf: body, pos: 12 };
    let config = read_config(&mut r)?;

    let n_scales = r.len(9)?;
    let mut scales = Vec::with_capacity(n_scales);
    for _ in 0..n_scales {
        let patch_size = r.usize()?;
        let pca = if r.bool()? {
            let input = r.len(8)?;
            let output = r.len(8)?;
            let whiten = r.bool()?;
            let epsilon_w = r.f64()?;
            let mean = r.f64s(input)?;
            let eigenvalues = r.f64s(input)?;
            let components = r.f64s(input.saturating_mul(output))?;
            Some(
                PcaModel::from_parts(input, mean, components, eigenvalues, whiten, epsilon_w)
                    .map_err(|e| corrupt(e.to_string()))?,
            )
        } else {
            None
        };
        scales.push(ScaleModel { patch_size, pca });
    }
    let feature_dim = r.usize()?;

    let standardizer = if r.bool()? {
        let dim = r.len(16)?;
        let eps = r.f64()?;
        let mean = r.f64s(dim)?;
        let std = r.f64s(dim)?;
        Some(Standardizer::from_parts(mean, std, eps).map_err(|e| corrupt(e.to_string()))?)
    } else {
        None
    };

    let lambda = r.f64()?;
    let n_classes = r.len(8)?;
    let classes = (0..n_classes).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let rows = r.usize()?;
    let cols = r.usize()?;
    let values = r.f64s(rows.saturating_mul(cols))?;
    let weights = DenseMatrix::from_row_major(rows, cols, values).map_err(|e| corrupt(e.to_string()))?;
    let classifier =
        RidgeClassifier::from_parts(weights, classes, lambda).map_err(|e| corrupt(e.to_string()))?;

    if r.pos != body.len() {
        return Err(corrupt("trailing bytes after classifier"));
    }
    PipelineModel::from_parts(config, scales, standardizer, classifier, feature_dim)
        .map_err(|e| corrupt(e.to_string()))
}

pub fn save(model: &PipelineModel, path: &Path) -> Result<()> {
    fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<PipelineModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageio::GrayImage;
    use crate::pipeline::{fit, TrainingSet};

    fn small_model() -> PipelineModel {
        let images: Vec<GrayImage> = (0..6)
            .map(|i| {
                GrayImage::from_fn(16, 16, |r, c| {
                    0.5 + 0.4 * ((r * (i % 2 + 1)) as f64 * 0.5 + c as f64 * 0.3 + i as f64).sin()
                })
            })
            .collect();
        let labels = vec![0, 1, 0, 1, 0, 1];
        let train = TrainingSet::new(vec!["a".into(), "b".into()], images, labels).unwrap();
        let mut cfg = PipelineConfig::for_image_size(16);
        cfg.pyramid = PoolingPyramid::new(vec![1, 2, 4]).unwrap();
        fit(&cfg, &train).unwrap()
    }

    #[test]
    fn round_trip_preserves_model() {
        let model = small_model();
        let bytes = encode(&model);
        let back = decode(&bytes).unwrap();
        assert_eq!(back, model);
        assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn truncation_is_detected() {
        let bytes = encode(&small_model());
        for cut in [bytes.len() - 1, bytes.len() / 2, 13, 3] {
            assert!(matches!(decode(&bytes[..cut]), Err(Error::CorruptModel(_))), "cut {cut}");
        }
    }

    #[test]
    fn bumped_version_is_reported() {
        let mut bytes = encode(&small_model());
        bytes[8] += 1;
        match decode(&bytes) {
            Err(Error::CorruptModel(msg)) => assert!(msg.contains("version")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn flipped_payload_bit_fails_checksum() {
        let mut bytes = encode(&small_model());
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x10;
        match decode(&bytes) {
            Err(Error::CorruptModel(msg)) => assert!(msg.contains("checksum")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = encode(&small_model());
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::CorruptModel(_))));
    }
}
