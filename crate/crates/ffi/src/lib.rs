//! C ABI for the patchpool pipeline.
//!
//! # Objects
//!
//! `PpConfig` and `PpModel` are opaque. Constructors hand ownership to the
//! caller, who must release it with the matching `*_free` function. Freeing
//! `NULL` is a no-op.
//!
//! # Errors
//!
//! Every fallible function returns a `PpStatus`. On failure a description is
//! stored per thread and can be copied out with `pp_last_error_message`.
//! Panics never cross the boundary; they are reported as `PP_STATUS_PANIC`.
//!
//! # Images
//!
//! Pixels are passed as `width * height` row-major `double` values in
//! `[0, 1]`. Models only accept images of their configured side; callers
//! resize beforehand (or use the path-based entry points, which do).

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use patchpool::harness::load_dataset;
use patchpool::{
    fit, load_gray, resize, scan_dataset, Error, GrayImage, PcaSetting, PcaTarget,
    PipelineConfig, PipelineModel, PoolMode, PoolingPyramid, TrainingSet,
};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    IoError = 3,
    CorruptModel = 4,
    DimensionMismatch = 5,
    ConfigInvalid = 6,
    DataError = 7,
    NumericError = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PpPoolMode {
    Max = 0,
    Average = 1,
}

/// Pipeline settings under construction.
pub struct PpConfig {
    inner: PipelineConfig,
}

/// A trained pipeline.
pub struct PpModel {
    inner: PipelineModel,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> PpStatus {
    match err {
        Error::Io { .. } | Error::UnreadableFile { .. } | Error::UnsupportedFormat { .. } => {
            PpStatus::IoError
        }
        Error::CorruptModel(_) => PpStatus::CorruptModel,
        Error::DimensionMismatch { .. } => PpStatus::DimensionMismatch,
        Error::ConfigInvalid(_)
        | Error::InconsistentConfig(_)
        | Error::PyramidTooDeep { .. }
        | Error::PatchLargerThanImage { .. } => PpStatus::ConfigInvalid,
        Error::NotSymmetric(_)
        | Error::DidNotConverge
        | Error::NotPositiveDefinite
        | Error::DegenerateData(_) => PpStatus::NumericError,
        _ => PpStatus::DataError,
    }
}

fn fail(status: PpStatus, msg: impl Into<String>) -> PpStatus {
    set_error(msg);
    status
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), PpStatus>) -> PpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PpStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(PpStatus::Panic, "internal panic"),
    }
}

fn lib_err(err: Error) -> PpStatus {
    fail(status_of(&err), err.to_string())
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, PpStatus> {
    if p.is_null() {
        return Err(fail(PpStatus::NullPointer, "path is NULL"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| fail(PpStatus::InvalidArgument, "path is not valid UTF-8"))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], PpStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(PpStatus::NullPointer, format!("{what} is NULL")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn model_ref<'a>(m: *const PpModel) -> Result<&'a PpModel, PpStatus> {
    m.as_ref().ok_or_else(|| fail(PpStatus::NullPointer, "model is NULL"))
}

unsafe fn config_mut<'a>(c: *mut PpConfig) -> Result<&'a mut PpConfig, PpStatus> {
    c.as_mut().ok_or_else(|| fail(PpStatus::NullPointer, "config is NULL"))
}

unsafe fn image_arg(pixels: *const f64, width: usize, height: usize) -> Result<GrayImage, PpStatus> {
    let data = slice_arg(pixels, width.saturating_mul(height), "pixels")?;
    GrayImage::new(width, height, data.to_vec()).map_err(lib_err)
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string, truncating to `len - 1` bytes. Returns the full
/// message length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be NULL or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pp_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Default settings for `image_size x image_size` inputs. Returns NULL if
/// `image_size` is 0.
#[no_mangle]
pub extern "C" fn pp_config_new(image_size: usize) -> *mut PpConfig {
    if image_size == 0 {
        set_error("image_size must be positive");
        return ptr::null_mut();
    }
    Box::into_raw(Box::new(PpConfig {
        inner: PipelineConfig::for_image_size(image_size),
    }))
}

/// # Safety
/// `config` must be NULL or come from `pp_config_new` and not be freed yet.
#[no_mangle]
pub unsafe extern "C" fn pp_config_free(config: *mut PpConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// # Safety
/// `config` must be a live config; `sizes` must point to `len` values.
#[no_mangle]
pub unsafe extern "C" fn pp_config_set_patch_sizes(
    config: *mut PpConfig,
    sizes: *const usize,
    len: usize,
) -> PpStatus {
    guard(|| {
        let cfg = config_mut(config)?;
        let mut v = slice_arg(sizes, len, "sizes")?.to_vec();
        if v.is_empty() {
            return Err(fail(PpStatus::InvalidArgument, "no patch sizes given"));
        }
        v.sort_unstable();
        v.dedup();
        cfg.inner.patch_sizes = v;
        Ok(())
    })
}

/// # Safety
/// `config` must be a live config.
#[no_mangle]
pub unsafe extern "C" fn pp_config_set_stride(config: *mut PpConfig, stride: usize) -> PpStatus {
    guard(|| {
        config_mut(config)?.inner.stride = stride;
        Ok(())
    })
}

/// Sets the PCA output dimension; 0 keeps raw (unprojected) patches.
///
/// # Safety
/// `config` must be a live config.
#[no_mangle]
pub unsafe extern "C" fn pp_config_set_pca_dim(config: *mut PpConfig, dim: usize) -> PpStatus {
    guard(|| {
        config_mut(config)?.inner.pca = match dim {
            0 => PcaSetting::Raw,
            p => PcaSetting::Reduce(PcaTarget::Components(p)),
        };
        Ok(())
    })
}

/// # Safety
/// `config` must be a live config; `levels` must point to `len` values.
#[no_mangle]
pub unsafe extern "C" fn pp_config_set_pyramid(
    config: *mut PpConfig,
    levels: *const usize,
    len: usize,
) -> PpStatus {
    guard(|| {
        let cfg = config_mut(config)?;
        let levels = slice_arg(levels, len, "levels")?.to_vec();
        cfg.inner.pyramid = PoolingPyramid::new(levels).map_err(lib_err)?;
        Ok(())
    })
}

/// # Safety
/// `config` must be a live config.
#[no_mangle]
pub unsafe extern "C" fn pp_config_set_pool_mode(config: *mut PpConfig, mode: PpPoolMode) -> PpStatus {
    guard(|| {
        config_mut(config)?.inner.pool_mode = match mode {
            PpPoolMode::Max => PoolMode::Max,
            PpPoolMode::Average => PoolMode::Average,
        };
        Ok(())
    })
}

/// # Safety
/// `config` must be a live config.
#[no_mangle]
pub unsafe extern "C" fn pp_config_set_lambda(config: *mut PpConfig, lambda: f64) -> PpStatus {
    guard(|| {
        config_mut(config)?.inner.lambda = lambda;
        Ok(())
    })
}

/// # Safety
/// `config` must be a live config.
#[no_mangle]
pub unsafe extern "C" fn pp_config_set_seed(config: *mut PpConfig, seed: u64) -> PpStatus {
    guard(|| {
        config_mut(config)?.inner.seed = seed;
        Ok(())
    })
}

/// Enables or disables contrast normalization, polarity splitting and
/// feature standardization.
///
/// # Safety
/// `config` must be a live config.
#[no_mangle]
pub unsafe extern "C" fn pp_config_set_stages(
    config: *mut PpConfig,
    contrast_normalization: bool,
    polarity_splitting: bool,
    standardization: bool,
) -> PpStatus {
    guard(|| {
        let cfg = &mut config_mut(config)?.inner;
        cfg.contrast_normalization = contrast_normalization;
        cfg.polarity_splitting = polarity_splitting;
        cfg.standardization = standardization;
        Ok(())
    })
}

/// Checks the configuration without training.
///
/// # Safety
/// `config` must be a live config.
#[no_mangle]
pub unsafe extern "C" fn pp_config_validate(config: *const PpConfig) -> PpStatus {
    guard(|| {
        let cfg = config
            .as_ref()
            .ok_or_else(|| fail(PpStatus::NullPointer, "config is NULL"))?;
        cfg.inner.validate().map_err(lib_err)
    })
}

/// Trains on a `root/<class>/<images>` directory; images are resized to
/// the configured side. On success `*out` owns a new model.
///
/// # Safety
/// `config` must be a live config, `dataset_dir` a NUL-terminated string and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pp_model_train_dir(
    config: *const PpConfig,
    dataset_dir: *const c_char,
    out: *mut *mut PpModel,
) -> PpStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(PpStatus::NullPointer, "out is NULL"));
        }
        *out = ptr::null_mut();
        let cfg = &config
            .as_ref()
            .ok_or_else(|| fail(PpStatus::NullPointer, "config is NULL"))?
            .inner;
        let root = path_arg(dataset_dir)?;
        let index = scan_dataset(&root).map_err(lib_err)?;
        let ds = load_dataset(&index, cfg.image_size).map_err(lib_err)?;
        let (images, labels) = ds.flatten();
        let train = TrainingSet::new(ds.classes, images, labels).map_err(lib_err)?;
        let model = fit(cfg, &train).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(PpModel { inner: model }));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pp_model_load(path: *const c_char, out: *mut *mut PpModel) -> PpStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(PpStatus::NullPointer, "out is NULL"));
        }
        *out = ptr::null_mut();
        let model = PipelineModel::load(path_arg(path)?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(PpModel { inner: model }));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live model and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pp_model_save(model: *const PpModel, path: *const c_char) -> PpStatus {
    guard(|| {
        let m = model_ref(model)?;
        m.inner.save(path_arg(path)?).map_err(lib_err)
    })
}

/// # Safety
/// `model` must be NULL or a model not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pp_model_free(model: *mut PpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Feature vector length `D`; 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live model.
#[no_mangle]
pub unsafe extern "C" fn pp_model_feature_dim(model: *const PpModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.feature_dim())
}

/// # Safety
/// `model` must be NULL or a live model.
#[no_mangle]
pub unsafe extern "C" fn pp_model_class_count(model: *const PpModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.classes().len())
}

/// Side length of the images the model accepts; 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live model.
#[no_mangle]
pub unsafe extern "C" fn pp_model_image_size(model: *const PpModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.config().image_size)
}

/// Copies the label of class `index` into `buf` (NUL-terminated).
///
/// # Safety
/// `model` must be a live model; `buf` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pp_model_class_label(
    model: *const PpModel,
    index: usize,
    buf: *mut c_char,
    len: usize,
) -> PpStatus {
    guard(|| {
        let m = model_ref(model)?;
        let label = m
            .inner
            .classes()
            .get(index)
            .ok_or_else(|| fail(PpStatus::InvalidArgument, format!("class index {index} out of range")))?;
        if buf.is_null() {
            return Err(fail(PpStatus::NullPointer, "buf is NULL"));
        }
        if label.len() + 1 > len {
            return Err(fail(
                PpStatus::BufferTooSmall,
                format!("label needs {} bytes", label.len() + 1),
            ));
        }
        ptr::copy_nonoverlapping(label.as_ptr(), buf as *mut u8, label.len());
        *buf.add(label.len()) = 0;
        Ok(())
    })
}

/// Writes the standardized feature of one image into `out` (`out_len >= D`).
///
/// # Safety
/// `model` must be a live model, `pixels` must hold `width * height` values
/// and `out` must point to `out_len` writable values.
#[no_mangle]
pub unsafe extern "C" fn pp_model_featurize(
    model: *const PpModel,
    pixels: *const f64,
    width: usize,
    height: usize,
    out: *mut f64,
    out_len: usize,
) -> PpStatus {
    guard(|| {
        let m = model_ref(model)?;
        let img = image_arg(pixels, width, height)?;
        let f = m.inner.featurize(&img).map_err(lib_err)?;
        if out.is_null() {
            return Err(fail(PpStatus::NullPointer, "out is NULL"));
        }
        if out_len < f.len() {
            return Err(fail(
                PpStatus::BufferTooSmall,
                format!("feature needs {} values", f.len()),
            ));
        }
        ptr::copy_nonoverlapping(f.as_ptr(), out, f.len());
        Ok(())
    })
}

/// Classifies one image. `scores` may be NULL; otherwise it receives the
/// first `min(scores_len, K)` class scores.
///
/// # Safety
/// `model` must be a live model, `pixels` must hold `width * height` values,
/// `label` must be valid and `scores` NULL or `scores_len` writable values.
#[no_mangle]
pub unsafe extern "C" fn pp_model_predict(
    model: *const PpModel,
    pixels: *const f64,
    width: usize,
    height: usize,
    label: *mut usize,
    scores: *mut f64,
    scores_len: usize,
) -> PpStatus {
    guard(|| {
        let m = model_ref(model)?;
        if label.is_null() {
            return Err(fail(PpStatus::NullPointer, "label is NULL"));
        }
        let img = image_arg(pixels, width, height)?;
        let (best, all) = m.inner.predict_image(&img).map_err(lib_err)?;
        *label = best;
        if !scores.is_null() {
            let n = scores_len.min(all.len());
            ptr::copy_nonoverlapping(all.as_ptr(), scores, n);
        }
        Ok(())
    })
}

/// Loads an image file, resizes it to the model's side and classifies it.
///
/// # Safety
/// `model` must be a live model, `path` a NUL-terminated string and `label`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pp_model_predict_file(
    model: *const PpModel,
    path: *const c_char,
    label: *mut usize,
) -> PpStatus {
    guard(|| {
        let m = model_ref(model)?;
        if label.is_null() {
            return Err(fail(PpStatus::NullPointer, "label is NULL"));
        }
        let img = load_gray(path_arg(path)?).map_err(lib_err)?;
        let img = resize(&img, m.inner.config().image_size);
        *label = m.inner.predict_image(&img).map_err(lib_err)?.0;
        Ok(())
    })
}
