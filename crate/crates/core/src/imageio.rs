//! Image decoding, grayscale conversion, resizing and dataset enumeration.
//!
//! Datasets are laid out as `root/<class-name>/<image files>`. Everything in
//! here is stateless; decoded images are plain values.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageReader};

use crate::error::{Error, Result};

/// Luminance weights (ITU-R BT.601) for RGB to gray conversion.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

const IMAGE_EXTENSIONS: &[&str] = &["png", "pgm", "pnm", "bmp", "jpg", "jpeg"];

/// Grayscale image with row-major intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ConfigInvalid(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch {
                context: "image pixel buffer",
                expected: width * height,
                actual: pixels.len(),
            });
        }
        if let Some(bad) = pixels.iter().find(|p| !p.is_finite() || **p < 0.0 || **p > 1.0) {
            return Err(Error::ConfigInvalid(format!(
                "pixel intensity {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image by evaluating `f(row, col)`, clamping into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut pixels = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                let v = f(row, col);
                pixels.push(if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn is_square(&self, side: usize) -> bool {
        self.width == side && self.height == side
    }
}

fn is_image_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

/// Decodes a PNG, PGM, BMP or JPEG file into a grayscale image.
///
/// Color inputs are reduced with [`LUMA_WEIGHTS`]; 8-bit samples are divided
/// by 255 and 16-bit samples by 65535.
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let unreadable = |reason: String| Error::UnreadableFile {
        path: path.to_path_buf(),
        reason,
    };
    let reader = ImageReader::open(path)
        .map_err(|e| unreadable(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| unreadable(e.to_string()))?;
    if reader.format().is_none() {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
        });
    }
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::Unsupported(_) => Error::UnsupportedFormat {
            path: path.to_path_buf(),
        },
        other => unreadable(other.to_string()),
    })?;
    Ok(to_gray(&decoded))
}

fn to_gray(img: &DynamicImage) -> GrayImage {
    let (width, height) = (img.width() as usize, img.height() as usize);
    let color = img.color();
    let wide = color.bytes_per_pixel() / color.channel_count() > 1;
    let luma = |r: f64, g: f64, b: f64| {
        LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b
    };
    let pixels: Vec<f64> = match (color.has_color(), wide) {
        (false, false) => img
            .to_luma8()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 255.0)
            .collect(),
        (false, true) => img
            .to_luma16()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
        (true, false) => img
            .to_rgb8()
            .into_raw()
            .chunks_exact(3)
            .map(|c| luma(c[0] as f64, c[1] as f64, c[2] as f64) / 255.0)
            .collect(),
        (true, true) => img
            .to_rgb16()
            .into_raw()
            .chunks_exact(3)
            .map(|c| luma(c[0] as f64, c[1] as f64, c[2] as f64) / 65535.0)
            .collect(),
    };
    GrayImage {
        width,
        height,
        pixels: pixels.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
    }
}

/// Writes an image as 8-bit grayscale PNG.
pub fn save_png(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = img
        .pixels
        .iter()
        .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let buf = image::GrayImage::from_raw(img.width as u32, img.height as u32, bytes)
        .expect("buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::io(path, std::io::Error::other(other.to_string())),
        })
}

/// Bilinear resize to `side x side` with half-pixel-centered sampling.
///
/// Non-square inputs are scaled anisotropically. An input that already has
/// the target size is returned unchanged.
pub fn resize(img: &GrayImage, side: usize) -> GrayImage {
    assert!(side >= 1, "target side must be positive");
    if img.is_square(side) {
        return img.clone();
    }
    let sx = img.width as f64 / side as f64;
    let sy = img.height as f64 / side as f64;
    let taps = |out: usize, scale: f64, len: usize| {
        let src = ((out as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let lo = src.floor() as usize;
        let hi = (lo + 1).min(len - 1);
        (lo, hi, src - lo as f64)
    };
    let cols: Vec<_> = (0..side).map(|x| taps(x, sx, img.width)).collect();
    let mut pixels = Vec::with_capacity(side * side);
    for y in 0..side {
        let (y0, y1, fy) = taps(y, sy, img.height);
        for &(x0, x1, fx) in &cols {
            let top = img.get(y0, x0) * (1.0 - fx) + img.get(y0, x1) * fx;
            let bottom = img.get(y1, x0) * (1.0 - fx) + img.get(y1, x1) * fx;
            pixels.push((top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0));
        }
    }
    GrayImage {
        width: side,
        height: side,
        pixels,
    }
}

/// Directory-per-class listing of a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub classes: Vec<String>,
    pub samples: Vec<Vec<PathBuf>>,
    /// Non-image files that were ignored.
    pub skipped_files: usize,
    /// Class directories that held no images and were dropped.
    pub empty_classes: Vec<String>,
}

impl DatasetIndex {
    pub fn num_images(&self) -> usize {
        self.samples.iter().map(Vec::len).sum()
    }
}

/// Lists `root/<class>/<image>` in lexicographic order.
pub fn scan_dataset(root: impl AsRef<Path>) -> Result<DatasetIndex> {
    let root = root.as_ref();
    let mut class_dirs: Vec<(String, PathBuf)> = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if path.is_dir() {
            class_dirs.push((entry.file_name().to_string_lossy().into_owned(), path));
        }
    }
    class_dirs.sort();

    let mut index = DatasetIndex {
        root: root.to_path_buf(),
        classes: Vec::new(),
        samples: Vec::new(),
        skipped_files: 0,
        empty_classes: Vec::new(),
    };
    for (name, dir) in class_dirs {
        let mut files = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if !path.is_file() {
                continue;
            }
            if is_image_file(&path) {
                files.push(path);
            } else {
                index.skipped_files += 1;
            }
        }
        files.sort();
        if files.is_empty() {
            log::warn!("class directory {} has no images; skipping", dir.display());
            index.empty_classes.push(name);
        } else {
            index.classes.push(name);
            index.samples.push(files);
        }
    }
    if index.skipped_files > 0 {
        log::warn!(
            "skipped {} non-image files under {}",
            index.skipped_files,
            root.display()
        );
    }
    if index.classes.is_empty() {
        return Err(Error::EmptyDataset {
            root: root.to_path_buf(),
        });
    }
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_bytes(path: &Path, bytes: &[u8]) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, bytes).unwrap();
    }

    #[test]
    fn pgm_bytes_scale_to_unit_range() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255, 255, 0]);
        write_bytes(&path, &bytes);
        let img = load_gray(&path).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.pixels(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn ascii_pgm_is_supported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        write_bytes(&path, b"P2\n2 1\n255\n0 51\n");
        let img = load_gray(&path).unwrap();
        assert_eq!(img.pixels(), &[0.0, 0.2]);
    }

    #[test]
    fn pure_red_uses_bt601_weight() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("red.png");
        image::RgbImage::from_pixel(1, 1, image::Rgb([255, 0, 0]))
            .save(&path)
            .unwrap();
        let img = load_gray(&path).unwrap();
        assert!((img.pixels()[0] - 0.299).abs() < 1e-12);
    }

    #[test]
    fn truncated_png_is_unreadable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        image::GrayImage::from_pixel(16, 16, image::Luma([7]))
            .save(&path)
            .unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_gray(&path), Err(Error::UnreadableFile { .. })));
    }

    #[test]
    fn missing_file_is_unreadable() {
        let err = load_gray("/nonexistent/x.png").unwrap_err();
        assert!(matches!(err, Error::UnreadableFile { .. }));
    }

    #[test]
    fn garbage_is_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.dat");
        write_bytes(&path, b"this is not an image at all");
        assert!(matches!(load_gray(&path), Err(Error::UnsupportedFormat { .. })));
    }

    #[test]
    fn garbage_with_image_extension_is_unreadable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        write_bytes(&path, b"this is not an image at all");
        assert!(matches!(load_gray(&path), Err(Error::UnreadableFile { .. })));
    }

    #[test]
    fn resize_identity_is_bit_identical() {
        let img = GrayImage::from_fn(64, 64, |r, c| ((r * 7 + c * 13) % 17) as f64 / 17.0);
        assert_eq!(resize(&img, 64), img);
    }

    #[test]
    fn resize_constant_upsample() {
        let img = GrayImage::constant(2, 2, 0.5);
        let out = resize(&img, 4);
        assert_eq!(out.width(), 4);
        assert!(out.pixels().iter().all(|&v| v == 0.5));
    }

    /// Direct bilinear evaluation: output (y, x) samples source coordinate
    /// ((x + 0.5) * 2 - 0.5, (y + 0.5) * 2 - 0.5) = (2x + 0.5, 2y + 0.5),
    /// the midpoint of a 2x2 block, i.e. the block average.
    #[test]
    fn resize_checkerboard_downsample_matches_hand_values() {
        let img = GrayImage::from_fn(4, 4, |r, c| if (r + c) % 2 == 0 { 1.0 } else { 0.0 });
        let out = resize(&img, 2);
        for y in 0..2 {
            for x in 0..2 {
                let (sy, sx) = (2.0 * y as f64 + 0.5, 2.0 * x as f64 + 0.5);
                let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
                let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
                let expect = img.get(y0, x0) * (1.0 - fy) * (1.0 - fx)
                    + img.get(y0, x0 + 1) * (1.0 - fy) * fx
                    + img.get(y0 + 1, x0) * fy * (1.0 - fx)
                    + img.get(y0 + 1, x0 + 1) * fy * fx;
                assert_eq!(expect, 0.5);
                assert!((out.get(y, x) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn resize_non_square_to_square() {
        let img = GrayImage::from_fn(10, 5, |r, c| (r + c) as f64 / 14.0);
        let out = resize(&img, 8);
        assert!(out.is_square(8));
        assert_eq!(resize(&out, 8), out);
    }

    fn tiny_png(path: &Path) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        image::GrayImage::from_pixel(2, 2, image::Luma([9])).save(path).unwrap();
    }

    #[test]
    fn scan_sorts_classes_lexicographically() {
        let dir = tempfile::tempdir().unwrap();
        tiny_png(&dir.path().join("b/2.png"));
        tiny_png(&dir.path().join("a/1.png"));
        let idx = scan_dataset(dir.path()).unwrap();
        assert_eq!(idx.classes, vec!["a", "b"]);
        assert_eq!(idx.num_images(), 2);
        assert_eq!(idx, scan_dataset(dir.path()).unwrap());
    }

    #[test]
    fn scan_skips_empty_classes_and_non_images() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("empty")).unwrap();
        tiny_png(&dir.path().join("full/1.png"));
        write_bytes(&dir.path().join("full/notes.txt"), b"hi");
        let idx = scan_dataset(dir.path()).unwrap();
        assert_eq!(idx.classes, vec!["full"]);
        assert_eq!(idx.empty_classes, vec!["empty"]);
        assert_eq!(idx.skipped_files, 1);
    }

    #[test]
    fn scan_without_images_is_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("a")).unwrap();
        assert!(matches!(
            scan_dataset(dir.path()),
            Err(Error::EmptyDataset { .. })
        ));
    }

    #[test]
    fn scan_missing_root_names_path() {
        let err = scan_dataset("/no/such/root").unwrap_err();
        assert!(err.to_string().contains("/no/such/root"));
    }
}
