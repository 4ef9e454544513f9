use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::pipeline::{feature_matrix, PipelineModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    /// Header `label,f0,…,f{D-1}`, one row per image.
    Csv,
    /// `n` and `D` as little-endian `u64`, then row-major little-endian `f32`.
    /// Labels go to a `<path>.labels` sidecar, one per line.
    Bin,
}

impl FromStr for FeatureFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(FeatureFormat::Csv),
            "bin" => Ok(FeatureFormat::Bin),
            other => Err(Error::ConfigInvalid(format!("unknown feature format {other:?}"))),
        }
    }
}

pub fn labels_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".labels");
    PathBuf::from(s)
}

/// Featurizes every image of `ds` and writes the standardized features.
/// Returns `(n, D)`.
pub fn write_features(
    model: &PipelineModel,
    ds: &Dataset,
    path: impl AsRef<Path>,
    format: FeatureFormat,
) -> Result<(usize, usize)> {
    let path = path.as_ref();
    let (images, labels) = ds.flatten();
    let features = feature_matrix(model, &images, true)?;
    let (n, d) = (features.rows(), features.cols());
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
    match format {
        FeatureFormat::Csv => {
            write!(w, "label").map_err(io)?;
            for j in 0..d {
                write!(w, ",f{j}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
            for (i, &label) in labels.iter().enumerate() {
                write!(w, "{}", ds.classes[label]).map_err(io)?;
                for v in features.row(i) {
                    write!(w, ",{v}").map_err(io)?;
                }
                writeln!(w).map_err(io)?;
            }
        }
        FeatureFormat::Bin => {
            w.write_all(&(n as u64).to_le_bytes()).map_err(io)?;
            w.write_all(&(d as u64).to_le_bytes()).map_err(io)?;
            for v in features.values() {
                w.write_all(&(*v as f32).to_le_bytes()).map_err(io)?;
            }
            let sidecar = labels_sidecar(path);
            let text: String = labels.iter().map(|&l| format!("{}\n", ds.classes[l])).collect();
            fs::write(&sidecar, text).map_err(|e| Error::io(&sidecar, e))?;
        }
    }
    w.flush().map_err(io)?;
    Ok((n, d))
}
