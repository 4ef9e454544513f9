use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::pipeline::{fit, PipelineConfig, TrainingSet};
use crate::seeding::stream_rng;

/// Per-class split sizes and trial count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialSpec {
    pub n_train: usize,
    pub n_test: usize,
    pub n_trials: usize,
    pub base_seed: u64,
}

impl Default for TrialSpec {
    fn default() -> Self {
        Self {
            n_train: 5,
            n_test: 2,
            n_trials: 5,
            base_seed: 0,
        }
    }
}

impl TrialSpec {
    fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_trials == 0 {
            return Err(Error::ConfigInvalid(
                "n_train and the trial count must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.base_seed.wrapping_add(trial as u64)
    }
}

/// Indices into `Dataset::images[class]` for one trial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialSplit {
    /// Dataset class index of each retained class.
    pub classes: Vec<usize>,
    pub train: Vec<Vec<usize>>,
    pub test: Vec<Vec<usize>>,
}

/// Classes with at least `n_train + n_test` images, and how many were dropped.
fn retained_classes(ds: &Dataset, spec: &TrialSpec) -> Result<(Vec<usize>, usize)> {
    let need = spec.n_train + spec.n_test;
    let kept: Vec<usize> = (0..ds.classes.len())
        .filter(|&c| ds.images[c].len() >= need)
        .collect();
    let dropped = ds.classes.len() - kept.len();
    if dropped > 0 {
        log::warn!("{dropped} classes have fewer than {need} images and are excluded");
    }
    if kept.len() < 2 {
        return Err(Error::InsufficientSamples(format!(
            "only {} classes have at least {need} images (n_train={} + n_test={}); need 2",
            kept.len(),
            spec.n_train,
            spec.n_test
        )));
    }
    Ok((kept, dropped))
}

/// Random per-class split for trial `trial`, seeded by `base_seed + trial`.
pub fn split_trial(ds: &Dataset, spec: &TrialSpec, trial: usize) -> Result<TrialSplit> {
    spec.validate()?;
    let (classes, _) = retained_classes(ds, spec)?;
    let mut rng = stream_rng(spec.trial_seed(trial), "split");
    let mut train = Vec::with_capacity(classes.len());
    let mut test = Vec::with_capacity(classes.len());
    for &c in &classes {
        let mut order: Vec<usize> = (0..ds.images[c].len()).collect();
        order.shuffle(&mut rng);
        train.push(order[..spec.n_train].to_vec());
        test.push(order[spec.n_train..spec.n_train + spec.n_test].to_vec());
    }
    Ok(TrialSplit {
        classes,
        train,
        test,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub fit_secs: f64,
    pub predict_secs: f64,
}

/// Accuracy per trial and its summary.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub config: String,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over trials.
    pub std: f64,
    pub feature_dim: usize,
    pub classes_used: usize,
    pub classes_excluded: usize,
    /// Wall-clock per trial; excluded from the rendered report.
    pub timings: Vec<StageTimings>,
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Short human-readable summary of the settings that affect accuracy.
pub fn describe_config(cfg: &PipelineConfig) -> String {
    format!(
        "d={} r={:?} s={} pca={}{} pyramid={} pool={} lambda={} cn={} ps={} std={} seed={}",
        cfg.image_size,
        cfg.patch_sizes,
        cfg.stride,
        cfg.pca,
        if cfg.whiten { "+whiten" } else { "" },
        cfg.pyramid,
        cfg.pool_mode,
        cfg.lambda,
        on_off(cfg.contrast_normalization),
        on_off(cfg.polarity_splitting),
        on_off(cfg.standardization),
        cfg.seed,
    )
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

impl TrialReport {
    pub fn from_accuracies(
        config: String,
        accuracies: Vec<f64>,
        feature_dim: usize,
        classes_used: usize,
        classes_excluded: usize,
        timings: Vec<StageTimings>,
    ) -> Self {
        let (mean, std) = mean_std(&accuracies);
        Self {
            config,
            accuracies,
            mean,
            std,
            feature_dim,
            classes_used,
            classes_excluded,
            timings,
        }
    }

    /// Aligned text table; depends only on the inputs, never on timing.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "config: {}", self.config).unwrap();
        writeln!(
            s,
            "classes: {} used, {} excluded; feature dim {}",
            self.classes_used, self.classes_excluded, self.feature_dim
        )
        .unwrap();
        writeln!(s, "{:>6}  {:>9}", "trial", "accuracy").unwrap();
        for (t, a) in self.accuracies.iter().enumerate() {
            writeln!(s, "{:>6}  {:>8.2}%", t, 100.0 * a).unwrap();
        }
        writeln!(
            s,
            "  mean  {:>8.2}% ± {:.2}",
            100.0 * self.mean,
            100.0 * self.std
        )
        .unwrap();
        s
    }

    /// `trial,accuracy` rows followed by `mean` and `std` rows.
    pub fn render_csv(&self) -> String {
        let mut s = String::from("trial,accuracy\n");
        for (t, a) in self.accuracies.iter().enumerate() {
            writeln!(s, "{t},{a}").unwrap();
        }
        writeln!(s, "mean,{}", self.mean).unwrap();
        writeln!(s, "std,{}", self.std).unwrap();
        s
    }
}

fn run_trial(
    ds: &Dataset,
    spec: &TrialSpec,
    config: &PipelineConfig,
    trial: usize,
) -> Result<(f64, usize, StageTimings)> {
    let split = split_trial(ds, spec, trial)?;
    let names: Vec<String> = split.classes.iter().map(|&c| ds.classes[c].clone()).collect();
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (k, &c) in split.classes.iter().enumerate() {
        for &i in &split.train[k] {
            images.push(ds.images[c][i].clone());
            labels.push(k);
        }
    }
    let mut cfg = config.clone();
    cfg.seed = spec.trial_seed(trial);

    let start = Instant::now();
    let model = fit(&cfg, &TrainingSet::new(names, images, labels)?)?;
    let fit_secs = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let mut correct = 0usize;
    let mut total = 0usize;
    for (k, &c) in split.classes.iter().enumerate() {
        let predictions: Vec<usize> = split.test[k]
            .par_iter()
            .map(|&i| model.predict_image(&ds.images[c][i]).map(|(label, _)| label))
            .collect::<Result<_>>()?;
        correct += predictions.iter().filter(|&&p| p == k).count();
        total += predictions.len();
    }
    let predict_secs = start.elapsed().as_secs_f64();
    let accuracy = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
    Ok((
        accuracy,
        model.feature_dim(),
        StageTimings {
            fit_secs,
            predict_secs,
        },
    ))
}

/// Runs `spec.n_trials` independent splits, up to `jobs` at a time.
///
/// Results are ordered by trial index and are a pure function of the data,
/// the configuration and `spec.base_seed`.
pub fn evaluate(
    ds: &Dataset,
    spec: &TrialSpec,
    config: &PipelineConfig,
    jobs: usize,
) -> Result<TrialReport> {
    spec.validate()?;
    config.validate()?;
    let (kept, dropped) = retained_classes(ds, spec)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::ConfigInvalid(format!("thread pool: {e}")))?;
    let results: Vec<(f64, usize, StageTimings)> = pool.install(|| {
        (0..spec.n_trials)
            .into_par_iter()
            .map(|t| run_trial(ds, spec, config, t))
            .collect::<Result<_>>()
    })?;
    let feature_dim = results.first().map_or(0, |r| r.1);
    let accuracies = results.iter().map(|r| r.0).collect();
    let timings = results.iter().map(|r| r.2).collect();
    Ok(TrialReport::from_accuracies(
        describe_config(config),
        accuracies,
        feature_dim,
        kept.len(),
        dropped,
        timings,
    ))
}
