//! Single-band elevation rasters.
//!
//! A [`Grid`] stores values row-major with rows top-to-bottom, georeferenced
//! by the world coordinates of its lower-left corner. Cell `(row, col)` has
//! its center at `(xll + (col + 0.5) * cell_size, yll + (nrows - 1 - row + 0.5) * cell_size)`.

mod ascii;
mod ops;
mod tiling;

pub use ascii::{read_ascii_grid, read_ascii_grid_file, write_ascii_grid, write_ascii_grid_file};
pub use ops::{compute_slope, downsample_nn};
pub use tiling::{ownership_map, split_into_tiles, stitch_tiles, tile_offsets, GridShape, Tile};

use crate::error::{Error, Result};

/// Nodata sentinel used when a grid file does not declare one.
pub const DEFAULT_NODATA: f64 = -9999.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub ncols: usize,
    pub nrows: usize,
    pub cell_size: f64,
    pub xll: f64,
    pub yll: f64,
    pub nodata_value: f64,
    values: Vec<f64>,
}

impl Grid {
    pub fn new(
        ncols: usize,
        nrows: usize,
        cell_size: f64,
        xll: f64,
        yll: f64,
        nodata_value: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if ncols == 0 || nrows == 0 {
            return Err(Error::Dimension(format!(
                "grid must have at least one cell, got {ncols}x{nrows}"
            )));
        }
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(Error::Parameter(format!("cell size must be > 0, got {cell_size}")));
        }
        if values.len() != ncols * nrows {
            return Err(Error::Dimension(format!(
                "expected {} values for a {ncols}x{nrows} grid, got {}",
                ncols * nrows,
                values.len()
            )));
        }
        Ok(Self { ncols, nrows, cell_size, xll, yll, nodata_value, values })
    }

    /// A grid at the origin with the default nodata sentinel.
    pub fn from_values(ncols: usize, nrows: usize, cell_size: f64, values: Vec<f64>) -> Result<Self> {
        Self::new(ncols, nrows, cell_size, 0.0, 0.0, DEFAULT_NODATA, values)
    }

    pub fn filled(ncols: usize, nrows: usize, cell_size: f64, value: f64) -> Result<Self> {
        Self::from_values(ncols, nrows, cell_size, vec![value; ncols * nrows])
    }

    /// Builds a grid by evaluating `f(row, col)` for every cell.
    pub fn from_fn(
        ncols: usize,
        nrows: usize,
        cell_size: f64,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(ncols * nrows);
        for r in 0..nrows {
            for c in 0..ncols {
                values.push(f(r, c));
            }
        }
        Self::from_values(ncols, nrows, cell_size, values)
    }

    /// Same georeferencing and nodata sentinel, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.ncols, self.nrows, self.cell_size, self.xll, self.yll, self.nodata_value, values)
    }

    /// Same extent and origin, different shape and cell size.
    pub fn resampled_frame(&self, ncols: usize, nrows: usize, cell_size: f64, values: Vec<f64>) -> Result<Self> {
        Self::new(ncols, nrows, cell_size, self.xll, self.yll, self.nodata_value, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.ncols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.ncols + col] = v;
    }

    #[inline]
    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata_value || v.is_nan()
    }

    #[inline]
    pub fn is_valid_at(&self, row: usize, col: usize) -> bool {
        !self.is_nodata(self.get(row, col))
    }

    pub fn has_nodata(&self) -> bool {
        self.values.iter().any(|&v| self.is_nodata(v))
    }

    pub fn shape(&self) -> GridShape {
        GridShape { nrows: self.nrows, ncols: self.ncols }
    }

    pub fn width(&self) -> f64 {
        self.ncols as f64 * self.cell_size
    }

    pub fn height(&self) -> f64 {
        self.nrows as f64 * self.cell_size
    }

    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.xll + (col as f64 + 0.5) * self.cell_size,
            self.yll + ((self.nrows - 1 - row) as f64 + 0.5) * self.cell_size,
        )
    }

    /// Cell containing world point `(x, y)`. Points on the upper/right extent
    /// edge belong to the last row/column.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = (x - self.xll) / self.cell_size;
        let fy = (y - self.yll) / self.cell_size;
        if !(fx >= 0.0 && fy >= 0.0 && fx <= self.ncols as f64 && fy <= self.nrows as f64) {
            return None;
        }
        let col = (fx.floor() as usize).min(self.ncols - 1);
        let row_from_bottom = (fy.floor() as usize).min(self.nrows - 1);
        Some((self.nrows - 1 - row_from_bottom, col))
    }

    pub fn same_geometry(&self, other: &Grid) -> bool {
        self.ncols == other.ncols
            && self.nrows == other.nrows
            && (self.cell_size - other.cell_size).abs() <= 1e-9 * self.cell_size
    }

    /// Minimum and maximum over valid cells.
    pub fn value_range(&self) -> Option<(f64, f64)> {
        self.values.iter().filter(|&&v| !self.is_nodata(v)).fold(None, |acc, &v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    /// Copies the `nrows x ncols` window starting at `(row_off, col_off)`.
    pub fn window(&self, row_off: usize, col_off: usize, nrows: usize, ncols: usize) -> Result<Grid> {
        if row_off + nrows > self.nrows || col_off + ncols > self.ncols || nrows == 0 || ncols == 0 {
            return Err(Error::Dimension(format!(
                "window {nrows}x{ncols} at ({row_off}, {col_off}) exceeds {}x{} grid",
                self.nrows, self.ncols
            )));
        }
        let mut values = Vec::with_capacity(nrows * ncols);
        for r in row_off..row_off + nrows {
            let start = r * self.ncols + col_off;
            values.extend_from_slice(&self.values[start..start + ncols]);
        }
        Grid::new(
            ncols,
            nrows,
            self.cell_size,
            self.xll + col_off as f64 * self.cell_size,
            self.yll + (self.nrows - row_off - nrows) as f64 * self.cell_size,
            self.nodata_value,
            values,
        )
    }
}

pub(crate) fn check_factor(factor: usize) -> Result<()> {
    if factor < 2 || !factor.is_power_of_two() {
        return Err(Error::Parameter(format!("factor must be a power of two >= 2, got {factor}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_center_and_lookup_agree() {
        let g = Grid::new(4, 3, 2.0, 100.0, 50.0, DEFAULT_NODATA, vec![0.0; 12]).unwrap();
        for r in 0..3 {
            for c in 0..4 {
                let (x, y) = g.cell_center(r, c);
                assert_eq!(g.cell_at(x, y), Some((r, c)));
            }
        }
        assert_eq!(g.cell_center(2, 0), (101.0, 51.0));
        assert_eq!(g.cell_at(99.9, 51.0), None);
        assert_eq!(g.cell_at(108.0, 56.0), Some((0, 3)));
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(matches!(Grid::from_values(2, 2, 1.0, vec![0.0; 3]), Err(Error::Dimension(_))));
        assert!(matches!(Grid::from_values(2, 2, 0.0, vec![0.0; 4]), Err(Error::Parameter(_))));
    }

    #[test]
    fn window_keeps_georeference() {
        let g = Grid::from_fn(6, 5, 1.0, |r, c| (r * 10 + c) as f64).unwrap();
        let w = g.window(1, 2, 3, 2).unwrap();
        assert_eq!(w.values(), &[12.0, 13.0, 22.0, 23.0, 32.0, 33.0]);
        assert_eq!(w.cell_center(0, 0), g.cell_center(1, 2));
    }
}
