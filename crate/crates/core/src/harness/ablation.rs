use std::fmt::{self, Write as _};
use std::str::FromStr;

use super::dataset::Dataset;
use super::trials::{evaluate, TrialReport, TrialSpec};
use crate::error::{Error, Result};
use crate::patches::{grid_len, PcaTarget};
use crate::pipeline::{PcaSetting, PipelineConfig};

/// Which setting an ablation varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    PyramidDepth,
    PatchSizes,
    Stride,
    PcaDim,
    Preprocessing,
}

impl fmt::Display for Sweep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sweep::PyramidDepth => "pyramid-depth",
            Sweep::PatchSizes => "patch-sizes",
            Sweep::Stride => "stride",
            Sweep::PcaDim => "pca-dim",
            Sweep::Preprocessing => "preprocessing-toggles",
        })
    }
}

impl FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pyramid-depth" => Ok(Sweep::PyramidDepth),
            "patch-sizes" => Ok(Sweep::PatchSizes),
            "stride" => Ok(Sweep::Stride),
            "pca-dim" => Ok(Sweep::PcaDim),
            "preprocessing-toggles" | "preprocessing" => Ok(Sweep::Preprocessing),
            other => Err(Error::ConfigInvalid(format!("unknown sweep {other:?}"))),
        }
    }
}

pub const PATCH_SIZE_SETS: [&[usize]; 7] = [&[4], &[6], &[8], &[4, 6], &[4, 8], &[6, 8], &[4, 6, 8]];
pub const STRIDES: [usize; 3] = [1, 2, 4];
pub const PCA_DIMS: [Option<usize>; 6] = [Some(2), Some(5), Some(10), Some(20), Some(40), None];

/// One sweep point: the varied setting, derived columns, and the outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub point: String,
    /// Extra `(header, value)` columns describing the point.
    pub columns: Vec<(String, String)>,
    pub config: PipelineConfig,
    pub report: Option<TrialReport>,
    /// Why the point was skipped, when it was.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub sweep: Sweep,
    pub rows: Vec<AblationRow>,
}

fn sweep_points(sweep: Sweep, base: &PipelineConfig) -> Vec<(String, Vec<(String, String)>, PipelineConfig)> {
    let mut points = Vec::new();
    match sweep {
        Sweep::PyramidDepth => {
            for depth in 1..=base.pyramid.depth() {
                let mut cfg = base.clone();
                cfg.pyramid = base.pyramid.prefix(depth).expect("depth in range");
                let cols = vec![
                    ("levels".to_string(), cfg.pyramid.to_string()),
                    ("cells".to_string(), cfg.pyramid.cell_count().to_string()),
                ];
                points.push((format!("{depth}-level"), cols, cfg));
            }
        }
        Sweep::PatchSizes => {
            for set in PATCH_SIZE_SETS {
                let mut cfg = base.clone();
                cfg.patch_sizes = set.to_vec();
                let name = set.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
                points.push((format!("{{{name}}}"), vec![], cfg));
            }
        }
        Sweep::Stride => {
            for s in STRIDES {
                let mut cfg = base.clone();
                cfg.stride = s;
                let r = cfg.patch_sizes[0];
                let l = grid_len(cfg.image_size, r, s);
                let cols = vec![("patches".to_string(), format!("{}", l * l))];
                points.push((format!("{s}px"), cols, cfg));
            }
        }
        Sweep::PcaDim => {
            for p in PCA_DIMS {
                let mut cfg = base.clone();
                cfg.pca = match p {
                    Some(p) => PcaSetting::Reduce(PcaTarget::Components(p)),
                    None => PcaSetting::Raw,
                };
                points.push((cfg.pca.to_string(), vec![], cfg));
            }
        }
        Sweep::Preprocessing => {
            let variants: [(&str, fn(&mut PipelineConfig)); 4] = [
                ("no contrast norm", |c| c.contrast_normalization = false),
                ("no polarity split", |c| c.polarity_splitting = false),
                ("no standardization", |c| c.standardization = false),
                ("all on", |_| {}),
            ];
            for (name, apply) in variants {
                let mut cfg = base.clone();
                cfg.contrast_normalization = true;
                cfg.polarity_splitting = true;
                cfg.standardization = true;
                apply(&mut cfg);
                let cols = vec![
                    ("cn".to_string(), mark(cfg.contrast_normalization)),
                    ("ps".to_string(), mark(cfg.polarity_splitting)),
                    ("std".to_string(), mark(cfg.standardization)),
                ];
                points.push((name.to_string(), cols, cfg));
            }
        }
    }
    points
}

fn mark(on: bool) -> String {
    if on { "+" } else { "-" }.to_string()
}

/// Evaluates every point of `sweep` around `base`.
///
/// Points whose pyramid is finer than the patch grid are skipped with a note.
pub fn ablate(
    ds: &Dataset,
    spec: &TrialSpec,
    base: &PipelineConfig,
    sweep: Sweep,
    jobs: usize,
) -> Result<AblationTable> {
    let mut rows = Vec::new();
    for (point, columns, cfg) in sweep_points(sweep, base) {
        let (report, note) = match cfg.validate() {
            Err(e @ Error::PyramidTooDeep { .. }) | Err(e @ Error::PatchLargerThanImage { .. }) => {
                log::warn!("skipping {sweep} point {point}: {e}");
                (None, Some(format!("skipped: {e}")))
            }
            Err(e) => return Err(e),
            Ok(()) => (Some(evaluate(ds, spec, &cfg, jobs)?), None),
        };
        rows.push(AblationRow {
            point,
            columns,
            config: cfg,
            report,
            note,
        });
    }
    Ok(AblationTable { sweep, rows })
}

impl AblationTable {
    pub fn row(&self, point: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.point == point)
    }

    fn headers(&self) -> Vec<String> {
        let mut h = vec![self.sweep.to_string()];
        if let Some(first) = self.rows.first() {
            h.extend(first.columns.iter().map(|(k, _)| k.clone()));
        }
        h.extend(["dim", "mean%", "std%", "trials"].map(String::from));
        h
    }

    fn cells(row: &AblationRow) -> Vec<String> {
        let mut c = vec![row.point.clone()];
        c.extend(row.columns.iter().map(|(_, v)| v.clone()));
        match &row.report {
            Some(r) => {
                c.push(r.feature_dim.to_string());
                c.push(format!("{:.2}", 100.0 * r.mean));
                c.push(format!("{:.2}", 100.0 * r.std));
                c.push(r.accuracies.len().to_string());
            }
            None => c.extend(["-", "-", "-", "0"].map(String::from)),
        }
        c
    }

    /// Aligned text table, with skip notes listed underneath.
    pub fn render_text(&self) -> String {
        let headers = self.headers();
        let body: Vec<Vec<String>> = self.rows.iter().map(Self::cells).collect();
        let widths: Vec<usize> = (0..headers.len())
            .map(|i| {
                body.iter()
                    .map(|r| r[i].chars().count())
                    .chain([headers[i].chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect::<Vec<_>>()
                .join("  ")
        };
        let mut s = String::new();
        writeln!(s, "{}", line(&headers)).unwrap();
        for r in &body {
            writeln!(s, "{}", line(r)).unwrap();
        }
        for row in &self.rows {
            if let Some(note) = &row.note {
                writeln!(s, "note: {}: {note}", row.point).unwrap();
            }
        }
        s
    }

    pub fn render_csv(&self) -> String {
        let mut s = self.headers().join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = Self::cells(row)
                .into_iter()
                .map(|c| if c.contains(',') { format!("\"{c}\"") } else { c })
                .collect();
            writeln!(s, "{}", cells.join(",")).unwrap();
        }
        s
    }
}
