use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::imageio::{resize, save_png, GrayImage};
use crate::seeding::stream_rng;

/// Parameters of a synthetic directory-per-class dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub n_per_class: usize,
    pub side: usize,
    /// Standard deviation of additive Gaussian pixel noise.
    pub noise: f64,
    /// Per-image contrast factor is drawn from `1 ± jitter`, brightness
    /// offset from `± jitter / 2`, and a linear illumination ramp of up to
    /// `± jitter / 2` across the image.
    pub jitter: f64,
    /// Largest translation in pixels along each axis.
    pub max_shift: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_classes: 15,
            n_per_class: 7,
            side: 32,
            noise: 0.01,
            jitter: 0.7,
            max_shift: 3,
            seed: 0,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.n_per_class == 0 || self.side == 0 {
            return Err(Error::ConfigInvalid(
                "class count, images per class and side must be positive".into(),
            ));
        }
        if !(self.noise >= 0.0 && self.jitter >= 0.0 && self.jitter < 1.0) {
            return Err(Error::ConfigInvalid(
                "noise must be >= 0 and jitter in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Smooth field: uniform values on a coarse `cells x cells` grid, bilinearly upsampled.
fn smooth_field(rng: &mut impl Rng, cells: usize, side: usize) -> GrayImage {
    let coarse = GrayImage::from_fn(cells, cells, |_, _| rng.random_range(0.0..1.0));
    resize(&coarse, side)
}

pub fn class_name(c: usize, n_classes: usize) -> String {
    let width = n_classes.saturating_sub(1).to_string().len().max(2);
    format!("class_{c:0width$}")
}

/// Class templates mix shared coarse and fine fields with class-specific
/// coarse and fine fields; each image is a translated crop with contrast
/// and illumination jitter and additive noise.
pub fn generate(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let canvas = spec.side + 2 * spec.max_shift;
    let fine = (canvas / 2).max(2);
    let mut shared = stream_rng(spec.seed, "synth/base");
    let base = smooth_field(&mut shared, 4, canvas);
    let texture = smooth_field(&mut shared, fine, canvas);
    let mut classes = Vec::with_capacity(spec.n_classes);
    let mut images = Vec::with_capacity(spec.n_classes);
    for c in 0..spec.n_classes {
        let mut rng = stream_rng(spec.seed, &format!("synth/class{c}"));
        let own = smooth_field(&mut rng, 8, canvas);
        let own_fine = smooth_field(&mut rng, fine, canvas);
        let template: Vec<f64> = (0..canvas * canvas)
            .map(|i| {
                let mix = 0.25 * base.pixels()[i]
                    + 0.25 * texture.pixels()[i]
                    + 0.25 * own.pixels()[i]
                    + 0.25 * own_fine.pixels()[i];
                0.15 + 0.7 * mix
            })
            .collect();
        let mut class_images = Vec::with_capacity(spec.n_per_class);
        for _ in 0..spec.n_per_class {
            let m = spec.max_shift as i64;
            let dy = rng.random_range(-m..=m);
            let dx = rng.random_range(-m..=m);
            let contrast = 1.0 + spec.jitter * rng.random_range(-1.0..=1.0);
            let brightness = 0.5 * spec.jitter * rng.random_range(-1.0..=1.0);
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let ramp = 0.5 * spec.jitter * rng.random_range(0.0..=1.0);
            let (gy, gx) = (ramp * angle.sin(), ramp * angle.cos());
            let top = (m + dy) as usize;
            let left = (m + dx) as usize;
            let half = (spec.side as f64 - 1.0) / 2.0;
            let scale = 1.0 / spec.side.max(2) as f64;
            let img = GrayImage::from_fn(spec.side, spec.side, |r, col| {
                let t = template[(top + r) * canvas + left + col];
                let light = brightness
                    + scale * (gy * (r as f64 - half) + gx * (col as f64 - half));
                let z: f64 = StandardNormal.sample(&mut rng);
                0.5 + contrast * (t - 0.5) + light + spec.noise * z
            });
            class_images.push(img);
        }
        classes.push(class_name(c, spec.n_classes));
        images.push(class_images);
    }
    Ok(Dataset::from_images(classes, images))
}

/// Writes `out/<class>/img_NNN.png`; returns the number of files written.
pub fn write_dataset(ds: &Dataset, out: impl AsRef<Path>) -> Result<usize> {
    let out = out.as_ref();
    let mut written = 0;
    for (name, imgs) in ds.classes.iter().zip(&ds.images) {
        let dir = out.join(name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let width = imgs.len().saturating_sub(1).to_string().len().max(3);
        for (i, img) in imgs.iter().enumerate() {
            save_png(img, dir.join(format!("img_{i:0width$}.png")))?;
            written += 1;
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_determinism() {
        let spec = SynthSpec {
            n_classes: 3,
            n_per_class: 4,
            side: 16,
            ..SynthSpec::default()
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.num_images(), 12);
        assert_eq!(a.images, b.images);
        assert_eq!(a.classes, vec!["class_00", "class_01", "class_02"]);
        assert!(a.images.iter().flatten().all(|img| img.is_square(16)));
    }

    #[test]
    fn noiseless_unjittered_unshifted_images_repeat() {
        let spec = SynthSpec {
            n_classes: 2,
            n_per_class: 3,
            side: 12,
            noise: 0.0,
            jitter: 0.0,
            max_shift: 0,
            seed: 4,
        };
        let ds = generate(&spec).unwrap();
        for imgs in &ds.images {
            assert!(imgs.iter().all(|img| img == &imgs[0]));
        }
        assert_ne!(ds.images[0][0], ds.images[1][0]);
    }

    #[test]
    fn rejects_bad_spec() {
        let spec = SynthSpec {
            n_classes: 0,
            ..SynthSpec::default()
        };
        assert!(generate(&spec).is_err());
    }
}
