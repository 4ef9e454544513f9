//! Spatial pyramid pooling over the patch grid.
//!
//! Level `c` splits the `l x l` patch grid into `c x c` cells; grid index `a`
//! falls in band `floor(a * c / l)`. Output is level-major, then cell
//! row-major, then feature coordinate.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::patches::PatchSet;

/// The 8-level default pyramid.
pub const DEFAULT_PYRAMID: [usize; 8] = [1, 2, 4, 6, 8, 10, 12, 15];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PoolingPyramid {
    levels: Vec<usize>,
}

impl PoolingPyramid {
    /// Levels must be non-empty, positive and strictly increasing.
    pub fn new(levels: Vec<usize>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::ConfigInvalid("pyramid needs at least one level".into()));
        }
        if levels[0] == 0 {
            return Err(Error::ConfigInvalid("pyramid levels must be positive".into()));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::ConfigInvalid(format!(
                "pyramid levels must be strictly increasing, got {levels:?}"
            )));
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Finest level `c_L`.
    pub fn finest(&self) -> usize {
        *self.levels.last().expect("non-empty")
    }

    pub fn cell_count(&self) -> usize {
        self.levels.iter().map(|c| c * c).sum()
    }

    /// The first `depth` levels.
    pub fn prefix(&self, depth: usize) -> Option<Self> {
        (1..=self.depth()).contains(&depth).then(|| Self {
            levels: self.levels[..depth].to_vec(),
        })
    }
}

impl Default for PoolingPyramid {
    fn default() -> Self {
        Self {
            levels: DEFAULT_PYRAMID.to_vec(),
        }
    }
}

impl fmt::Display for PoolingPyramid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.levels.iter().map(usize::to_string).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

impl FromStr for PoolingPyramid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim().trim_start_matches(['{', '[']).trim_end_matches(['}', ']']);
        let levels = trimmed
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::ConfigInvalid(format!("bad pyramid level {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(levels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PoolMode {
    Max,
    Average,
}

impl fmt::Display for PoolMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolMode::Max => "max",
            PoolMode::Average => "avg",
        })
    }
}

impl FromStr for PoolMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "max" => Ok(PoolMode::Max),
            "avg" | "average" | "mean" => Ok(PoolMode::Average),
            other => Err(Error::ConfigInvalid(format!("unknown pool mode {other:?}"))),
        }
    }
}

/// Number of pooling cells in a pyramid.
pub fn cell_count(pyr: &PoolingPyramid) -> usize {
    pyr.cell_count()
}

/// Band of grid index `a` when `l` positions are split into `c` bands.
#[inline]
pub fn assign_cell(a: usize, l: usize, c: usize) -> usize {
    a * c / l
}

/// Pools a patch set over every cell of every pyramid level.
pub fn pool(ps: &PatchSet, pyr: &PoolingPyramid, mode: PoolMode) -> Result<Vec<f64>> {
    let l = ps.grid_len();
    let q = ps.dim();
    if pyr.finest() > l {
        return Err(Error::PyramidTooDeep {
            patch: ps.patch_size,
            cells: pyr.finest(),
            grid: l,
        });
    }
    let mut out = vec![0.0; pyr.cell_count() * q];
    let mut offset = 0;
    let mut bands = vec![0usize; l];
    for &c in pyr.levels() {
        for (a, band) in bands.iter_mut().enumerate() {
            *band = assign_cell(a, l, c);
        }
        let level = &mut out[offset..offset + c * c * q];
        match mode {
            PoolMode::Max => level.fill(f64::NEG_INFINITY),
            PoolMode::Average => level.fill(0.0),
        }
        for a in 0..l {
            let row_base = bands[a] * c;
            for b in 0..l {
                let cell = row_base + bands[b];
                let dst = &mut level[cell * q..(cell + 1) * q];
                let src = ps.patches.at(a, b);
                match mode {
                    PoolMode::Max => {
                        for (d, &s) in dst.iter_mut().zip(src) {
                            if s > *d {
                                *d = s;
                            }
                        }
                    }
                    PoolMode::Average => {
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
            }
        }
        if mode == PoolMode::Average {
            let mut band_sizes = vec![0usize; c];
            for &band in &bands {
                band_sizes[band] += 1;
            }
            for (cell, chunk) in level.chunks_exact_mut(q.max(1)).enumerate() {
                let count = (band_sizes[cell / c] * band_sizes[cell % c]) as f64;
                for v in chunk {
                    *v /= count;
                }
            }
        }
        offset += c * c * q;
    }
    Ok(out)
}

/// Concatenates per-scale pooled vectors in ascending patch-size order.
pub fn concat_scales(pyr: &PoolingPyramid, mut parts: Vec<(usize, Vec<f64>)>) -> Result<Vec<f64>> {
    parts.sort_by_key(|(r, _)| *r);
    if parts.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::InconsistentConfig(
            "patch size listed twice in multi-scale concatenation".into(),
        ));
    }
    let cells = pyr.cell_count();
    if let Some((r, v)) = parts.iter().find(|(_, v)| v.is_empty() || v.len() % cells != 0) {
        return Err(Error::InconsistentConfig(format!(
            "pooled vector for r={r} has length {}, not a multiple of {cells} cells",
            v.len()
        )));
    }
    Ok(parts.into_iter().flat_map(|(_, v)| v).collect())
}
