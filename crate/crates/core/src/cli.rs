//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::harness::{
    ablate, evaluate, generate, load_dataset, write_dataset, write_features, FeatureFormat,
    Sweep, SynthSpec, TrialSpec,
};
use crate::imageio::{load_gray, resize, scan_dataset};
use crate::patches::PcaTarget;
use crate::pipeline::{fit, PcaSetting, PipelineConfig, PipelineModel, TrainingSet};
use crate::pooling::{PoolMode, PoolingPyramid};

pub const JOBS_ENV: &str = "PATCHPOOL_JOBS";

#[derive(Debug, Parser)]
#[command(name = "patchpool", version, about = "Face recognition by pooling raw local patches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model on a whole dataset and write it to disk.
    Train {
        dataset: PathBuf,
        /// Output model file (conventionally *.ppm.model).
        #[arg(long, short = 'o')]
        model: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Repeated random train/test splits; reports mean ± std accuracy.
    Evaluate {
        dataset: PathBuf,
        #[command(flatten)]
        trials: TrialArgs,
        #[command(flatten)]
        config: ConfigArgs,
        /// Also write the report as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a grid of settings around the given configuration.
    Ablate {
        dataset: PathBuf,
        /// pyramid-depth, patch-sizes, stride, pca-dim or preprocessing-toggles.
        #[arg(long)]
        sweep: String,
        #[command(flatten)]
        trials: TrialArgs,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic directory-per-class dataset of PNG files.
    Synth {
        out_dir: PathBuf,
        #[arg(long, default_value_t = 15)]
        classes: usize,
        #[arg(long, default_value_t = 7)]
        per_class: usize,
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
        #[arg(long, default_value_t = 0.7)]
        jitter: f64,
        #[arg(long, default_value_t = 3)]
        max_shift: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write standardized features of every dataset image.
    Extract {
        dataset: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Classify individual image files with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ConfigArgs {
    #[arg(long, default_value_t = 64)]
    image_size: usize,
    /// Comma-separated patch sides; defaults to 4,6,8 (or 4 for images of 32 px or less).
    #[arg(long, value_delimiter = ',')]
    patch_sizes: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// PCA output dimension, or "raw" to skip PCA.
    #[arg(long, conflicts_with = "pca_energy")]
    pca_dim: Option<String>,
    /// Keep the fewest components reaching this eigenvalue-energy fraction.
    #[arg(long)]
    pca_energy: Option<f64>,
    #[arg(long)]
    whiten: bool,
    /// Comma-separated cells per level, e.g. 1,2,4,6,8,10,12,15.
    #[arg(long)]
    pyramid: Option<String>,
    #[arg(long, default_value = "max")]
    pool: String,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_contrast_norm: bool,
    #[arg(long)]
    no_polarity_split: bool,
    #[arg(long)]
    no_standardize: bool,
    #[arg(long)]
    max_pca_patches: Option<usize>,
}

impl ConfigArgs {
    fn to_config(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::for_image_size(self.image_size);
        if let Some(sizes) = &self.patch_sizes {
            let mut sizes = sizes.clone();
            sizes.sort_unstable();
            sizes.dedup();
            cfg.patch_sizes = sizes;
        }
        cfg.stride = self.stride;
        if let Some(p) = &self.pca_dim {
            cfg.pca = p.parse()?;
        }
        if let Some(e) = self.pca_energy {
            cfg.pca = PcaSetting::Reduce(PcaTarget::Energy(e));
        }
        cfg.whiten = self.whiten;
        if let Some(p) = &self.pyramid {
            cfg.pyramid = p.parse::<PoolingPyramid>()?;
        }
        cfg.pool_mode = self.pool.parse::<PoolMode>()?;
        cfg.lambda = self.lambda;
        cfg.seed = self.seed;
        cfg.contrast_normalization = !self.no_contrast_norm;
        cfg.polarity_splitting = !self.no_polarity_split;
        cfg.standardization = !self.no_standardize;
        if let Some(m) = self.max_pca_patches {
            cfg.max_pca_patches = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct TrialArgs {
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long, default_value_t = 5)]
    n_train: usize,
    #[arg(long, default_value_t = 2)]
    n_test: usize,
    /// Concurrent trials; defaults to the available parallelism.
    #[arg(long, env = JOBS_ENV)]
    jobs: Option<usize>,
}

impl TrialArgs {
    fn spec(&self, seed: u64) -> TrialSpec {
        TrialSpec {
            n_train: self.n_train,
            n_test: self.n_test,
            n_trials: self.trials,
            base_seed: seed,
        }
    }

    fn jobs(&self) -> usize {
        self.jobs.unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn out_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn load_training_set(dataset: &Path, side: usize) -> Result<TrainingSet> {
    let index = scan_dataset(dataset)?;
    let ds = load_dataset(&index, side)?;
    let (images, labels) = ds.flatten();
    TrainingSet::new(ds.classes, images, labels)
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Train {
            dataset,
            model,
            config,
        } => {
            let cfg = config.to_config()?;
            let train = load_training_set(&dataset, cfg.image_size)?;
            let start = Instant::now();
            let fitted = fit(&cfg, &train)?;
            let secs = start.elapsed().as_secs_f64();
            fitted.save(&model)?;
            writeln!(
                out,
                "trained on {} images of {} classes; feature dim D = {}; fit {:.2}s; model written to {}",
                train.len(),
                train.classes.len(),
                fitted.feature_dim(),
                secs,
                model.display()
            )
            .map_err(out_err)?;
        }
        Command::Evaluate {
            dataset,
            trials,
            config,
            out: csv,
        } => {
            let cfg = config.to_config()?;
            let ds = load_dataset(&scan_dataset(&dataset)?, cfg.image_size)?;
            let report = evaluate(&ds, &trials.spec(cfg.seed), &cfg, trials.jobs())?;
            out.write_all(report.render_text().as_bytes()).map_err(out_err)?;
            for (t, timing) in report.timings.iter().enumerate() {
                eprintln!(
                    "trial {t}: fit {:.2}s, predict {:.2}s",
                    timing.fit_secs, timing.predict_secs
                );
            }
            if let Some(path) = csv {
                write_file(&path, &report.render_csv())?;
            }
        }
        Command::Ablate {
            dataset,
            sweep,
            trials,
            config,
            out: csv,
        } => {
            let sweep: Sweep = sweep.parse()?;
            let cfg = config.to_config()?;
            let ds = load_dataset(&scan_dataset(&dataset)?, cfg.image_size)?;
            let table = ablate(&ds, &trials.spec(cfg.seed), &cfg, sweep, trials.jobs())?;
            out.write_all(table.render_text().as_bytes()).map_err(out_err)?;
            if let Some(path) = csv {
                write_file(&path, &table.render_csv())?;
            }
        }
        Command::Synth {
            out_dir,
            classes,
            per_class,
            size,
            noise,
            jitter,
            max_shift,
            seed,
        } => {
            let spec = SynthSpec {
                n_classes: classes,
                n_per_class: per_class,
                side: size,
                noise,
                jitter,
                max_shift,
                seed,
            };
            let n = write_dataset(&generate(&spec)?, &out_dir)?;
            writeln!(out, "wrote {n} images in {classes} classes to {}", out_dir.display())
                .map_err(out_err)?;
        }
        Command::Extract {
            dataset,
            model,
            out: path,
            format,
        } => {
            let format: FeatureFormat = format.parse()?;
            let model = PipelineModel::load(&model)?;
            let ds = load_dataset(&scan_dataset(&dataset)?, model.config().image_size)?;
            let (n, d) = write_features(&model, &ds, &path, format)?;
            writeln!(out, "wrote {n} x {d} features to {}", path.display()).map_err(out_err)?;
        }
        Command::Predict { model, images } => {
            let model = PipelineModel::load(&model)?;
            for path in images {
                let img = resize(&load_gray(&path)?, model.config().image_size);
                let (label, scores) = model.predict_image(&img)?;
                writeln!(
                    out,
                    "{}\t{}\t{:.6}",
                    path.display(),
                    model.classes()[label],
                    scores[label]
                )
                .map_err(out_err)?;
            }
        }
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            if code == 0 {
                let _ = write!(out, "{e}");
            } else {
                eprintln!("{e}");
            }
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
