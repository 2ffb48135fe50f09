//! Pointwise error statistics and their slope / land-cover breakdowns.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Grid;

/// Error statistics over `n` valid cells, with `e = recon - reference`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mae: f64,
    pub rmse: f64,
    /// Population standard deviation of `e`.
    pub std: f64,
    pub mean_error: f64,
    pub n: usize,
}

impl ErrorStats {
    fn from_errors(errors: &[f64]) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::EmptyDomain("no valid cells to compare".into()));
        }
        let n = errors.len() as f64;
        let mae = errors.iter().map(|e| e.abs()).sum::<f64>() / n;
        let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
        let mean_error = errors.iter().sum::<f64>() / n;
        let std = (errors.iter().map(|e| (e - mean_error).powi(2)).sum::<f64>() / n).sqrt();
        Ok(Self { mae, rmse, std, mean_error, n: errors.len() })
    }
}

fn check_aligned(a: &Grid, b: &Grid, what: &str) -> Result<()> {
    if !a.same_geometry(b) {
        return Err(Error::Dimension(format!(
            "{what}: {}x{} @ {} vs {}x{} @ {}",
            a.nrows, a.ncols, a.cell_size, b.nrows, b.ncols, b.cell_size
        )));
    }
    Ok(())
}

fn errors_where(recon: &Grid, reference: &Grid, mut keep: impl FnMut(usize, usize) -> bool) -> Vec<f64> {
    let mut out = Vec::new();
    for r in 0..reference.nrows {
        for c in 0..reference.ncols {
            if recon.is_valid_at(r, c) && reference.is_valid_at(r, c) && keep(r, c) {
                out.push(recon.get(r, c) - reference.get(r, c));
            }
        }
    }
    out
}

/// MAE, RMSE and STD over cells valid in both grids and accepted by `mask`.
pub fn error_stats(
    recon: &Grid,
    reference: &Grid,
    mask: Option<&dyn Fn(usize, usize) -> bool>,
) -> Result<ErrorStats> {
    check_aligned(recon, reference, "reconstruction and reference differ in shape")?;
    let errors = errors_where(recon, reference, |r, c| mask.is_none_or(|m| m(r, c)));
    ErrorStats::from_errors(&errors)
}

/// One bin of a [`BinnedReport`]. `stats` is `None` for an empty bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinEntry {
    pub label: String,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub count: usize,
    pub frequency: f64,
    pub stats: Option<ErrorStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedReport {
    pub binning: String,
    pub bins: Vec<BinEntry>,
    /// Stats over every cell that fell in some bin.
    pub overall: ErrorStats,
    /// Unweighted means over the populated bins.
    pub mean_mae: f64,
    pub mean_rmse: f64,
    pub mean_std: f64,
    pub averaging: String,
    pub empty_bins: Vec<String>,
}

impl BinnedReport {
    fn build(binning: &str, recon: &Grid, reference: &Grid, labels: Vec<(String, Option<f64>, Option<f64>)>, bin_of: &dyn Fn(usize, usize) -> Option<usize>) -> Result<Self> {
        let mut per_bin: Vec<Vec<f64>> = vec![Vec::new(); labels.len()];
        let mut all = Vec::new();
        for r in 0..reference.nrows {
            for c in 0..reference.ncols {
                if !(recon.is_valid_at(r, c) && reference.is_valid_at(r, c)) {
                    continue;
                }
                if let Some(b) = bin_of(r, c) {
                    let e = recon.get(r, c) - reference.get(r, c);
                    per_bin[b].push(e);
                    all.push(e);
                }
            }
        }
        let overall = ErrorStats::from_errors(&all)?;
        let total = all.len() as f64;
        let mut bins = Vec::with_capacity(labels.len());
        let mut empty_bins = Vec::new();
        for ((label, lower, upper), errs) in labels.into_iter().zip(&per_bin) {
            let stats = if errs.is_empty() {
                empty_bins.push(label.clone());
                None
            } else {
                Some(ErrorStats::from_errors(errs)?)
            };
            bins.push(BinEntry { label, lower, upper, count: errs.len(), frequency: errs.len() as f64 / total, stats });
        }
        let populated: Vec<&ErrorStats> = bins.iter().filter_map(|b| b.stats.as_ref()).collect();
        let k = populated.len() as f64;
        Ok(Self {
            binning: binning.into(),
            mean_mae: populated.iter().map(|s| s.mae).sum::<f64>() / k,
            mean_rmse: populated.iter().map(|s| s.rmse).sum::<f64>() / k,
            mean_std: populated.iter().map(|s| s.std).sum::<f64>() / k,
            bins,
            overall,
            averaging: "unweighted mean over populated bins".into(),
            empty_bins,
        })
    }

    /// Writes one CSV row per bin, prefixed by `method`.
    pub fn write_csv<W: Write>(&self, method: &str, sink: W, header: bool) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
        if header {
            w.write_record(["method", "binning", "bin", "lower", "upper", "count", "frequency", "mae", "rmse", "std"])?;
        }
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for b in &self.bins {
            w.write_record([
                method.to_string(),
                self.binning.clone(),
                b.label.clone(),
                opt(b.lower),
                opt(b.upper),
                b.count.to_string(),
                b.frequency.to_string(),
                opt(b.stats.map(|s| s.mae)),
                opt(b.stats.map(|s| s.rmse)),
                opt(b.stats.map(|s| s.std)),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Ten slope ranges in percent, the last one open-ended at 100 %.
pub const DEFAULT_SLOPE_EDGES: [f64; 11] = [0.0, 5.0, 10.0, 15.0, 20.0, 30.0, 45.0, 60.0, 80.0, 100.0, f64::INFINITY];

/// Partitions cells by slope: bin `i` holds `edges[i] <= slope < edges[i+1]`.
/// Cells with nodata slope or slope outside the edges are ignored.
pub fn slope_binned_stats(recon: &Grid, reference: &Grid, slope: &Grid, edges: &[f64]) -> Result<BinnedReport> {
    check_aligned(recon, reference, "reconstruction and reference differ in shape")?;
    check_aligned(slope, reference, "slope grid is not aligned with the reference")?;
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Parameter(format!("slope edges must be strictly increasing, got {edges:?}")));
    }
    let labels = edges
        .windows(2)
        .map(|w| {
            let label = if w[1].is_infinite() { format!(">={}", w[0]) } else { format!("{}-{}", w[0], w[1]) };
            (label, Some(w[0]), w[1].is_finite().then_some(w[1]))
        })
        .collect();
    let bin_of = |r: usize, c: usize| {
        if !slope.is_valid_at(r, c) {
            return None;
        }
        let s = slope.get(r, c);
        edges.windows(2).position(|w| s >= w[0] && s < w[1])
    };
    BinnedReport::build("slope_percent", recon, reference, labels, &bin_of)
}

/// The five land-cover classes, coded 1 to 5 in land-cover grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandCover {
    Road = 1,
    Building = 2,
    Natural = 3,
    MultiSurface = 4,
    Other = 5,
}

impl LandCover {
    pub const ALL: [LandCover; 5] =
        [LandCover::Road, LandCover::Building, LandCover::Natural, LandCover::MultiSurface, LandCover::Other];

    pub fn code(self) -> f64 {
        self as u8 as f64
    }

    pub fn from_code(v: f64) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.code() == v)
    }

    pub fn label(self) -> &'static str {
        match self {
            LandCover::Road => "road",
            LandCover::Building => "building",
            LandCover::Natural => "natural",
            LandCover::MultiSurface => "multi_surface",
            LandCover::Other => "other",
        }
    }
}

pub fn landcover_binned_stats(recon: &Grid, reference: &Grid, landcover: &Grid) -> Result<BinnedReport> {
    check_aligned(recon, reference, "reconstruction and reference differ in shape")?;
    check_aligned(landcover, reference, "land-cover grid is not aligned with the reference")?;
    for r in 0..landcover.nrows {
        for c in 0..landcover.ncols {
            let v = landcover.get(r, c);
            if !landcover.is_nodata(v) && LandCover::from_code(v).is_none() {
                return Err(Error::Validation(format!("unknown land-cover code {v} at ({r}, {c})")));
            }
        }
    }
    let labels = LandCover::ALL.iter().map(|c| (c.label().to_string(), None, None)).collect();
    let bin_of = |r: usize, c: usize| {
        let v = landcover.get(r, c);
        LandCover::from_code(v).map(|k| k as usize - 1)
    };
    BinnedReport::build("landcover", recon, reference, labels, &bin_of)
}
