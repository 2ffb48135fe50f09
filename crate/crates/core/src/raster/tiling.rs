//! Overlapping block decomposition and nearest-center stitching.

use super::Grid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridShape {
    pub nrows: usize,
    pub ncols: usize,
}

/// A window of a parent grid. `row_off`/`col_off` are cell offsets into the
/// parent; `grid` carries its own georeferencing.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub row_off: usize,
    pub col_off: usize,
    pub grid: Grid,
}

impl Tile {
    pub fn nrows(&self) -> usize {
        self.grid.nrows
    }

    pub fn ncols(&self) -> usize {
        self.grid.ncols
    }
}

/// Start offsets along one axis: stride `block - overlap` from 0, last one
/// clamped to end exactly at `len`.
pub fn tile_offsets(len: usize, block: usize, overlap: usize) -> Result<Vec<usize>> {
    if block == 0 || overlap >= block || block > len {
        return Err(Error::Parameter(format!(
            "need 0 <= overlap < block <= extent, got overlap {overlap}, block {block}, extent {len}"
        )));
    }
    let stride = block - overlap;
    let mut offs = Vec::new();
    let mut p = 0;
    loop {
        offs.push(p.min(len - block));
        if p + block >= len {
            break;
        }
        p += stride;
    }
    Ok(offs)
}

pub fn split_into_tiles(g: &Grid, block: usize, overlap: usize) -> Result<Vec<Tile>> {
    let rows = tile_offsets(g.nrows, block, overlap)?;
    let cols = tile_offsets(g.ncols, block, overlap)?;
    let mut tiles = Vec::with_capacity(rows.len() * cols.len());
    for &r in &rows {
        for &c in &cols {
            tiles.push(Tile { row_off: r, col_off: c, grid: g.window(r, c, block, block)? });
        }
    }
    Ok(tiles)
}

/// For every output cell, the index of the tile owning it: the covering tile
/// whose center is nearest in Chebyshev distance, ties broken by the
/// distance along the other axis and then towards the smaller
/// `(row_off, col_off)`. On a lattice of tiles this picks the nearest center
/// along each axis separately.
pub fn ownership_map(
    tiles: &[(usize, usize, usize, usize)],
    shape: GridShape,
) -> Vec<Option<usize>> {
    let mut order: Vec<usize> = (0..tiles.len()).collect();
    order.sort_by_key(|&i| (tiles[i].0, tiles[i].1));
    let mut owner = vec![None; shape.nrows * shape.ncols];
    for r in 0..shape.nrows {
        for c in 0..shape.ncols {
            let mut best: Option<((usize, usize), usize)> = None;
            for &i in &order {
                let (ro, co, th, tw) = tiles[i];
                if r < ro || r >= ro + th || c < co || c >= co + tw {
                    continue;
                }
                // doubled coordinates keep centers integral
                let dr = (2 * r + 1).abs_diff(2 * ro + th);
                let dc = (2 * c + 1).abs_diff(2 * co + tw);
                let d = (dr.max(dc), dr.min(dc));
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, i));
                }
            }
            owner[r * shape.ncols + c] = best.map(|(_, i)| i);
        }
    }
    owner
}

/// Reassembles tiles into a grid of `shape`; each cell is copied from its
/// owning tile. Georeferencing is recovered from the first tile.
pub fn stitch_tiles(tiles: &[Tile], shape: GridShape) -> Result<Grid> {
    let first = tiles
        .first()
        .ok_or_else(|| Error::Parameter("no tiles to stitch".into()))?;
    let cs = first.grid.cell_size;
    for t in tiles {
        if t.row_off + t.nrows() > shape.nrows || t.col_off + t.ncols() > shape.ncols {
            return Err(Error::Dimension(format!(
                "tile at ({}, {}) extends past {}x{} output",
                t.row_off, t.col_off, shape.nrows, shape.ncols
            )));
        }
        if (t.grid.cell_size - cs).abs() > 1e-9 * cs {
            return Err(Error::Dimension("tiles have differing cell sizes".into()));
        }
    }
    let geom: Vec<_> = tiles.iter().map(|t| (t.row_off, t.col_off, t.nrows(), t.ncols())).collect();
    let owner = ownership_map(&geom, shape);
    let mut values = vec![0.0; shape.nrows * shape.ncols];
    for r in 0..shape.nrows {
        for c in 0..shape.ncols {
            let i = owner[r * shape.ncols + c].ok_or(Error::Coverage { row: r, col: c })?;
            let t = &tiles[i];
            values[r * shape.ncols + c] = t.grid.get(r - t.row_off, c - t.col_off);
        }
    }
    let xll = first.grid.xll - first.col_off as f64 * cs;
    let yll = first.grid.yll - (shape.nrows - first.row_off - first.nrows()) as f64 * cs;
    Grid::new(shape.ncols, shape.nrows, cs, xll, yll, first.grid.nodata_value, values)
}
