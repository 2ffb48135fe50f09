use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::msm::MsmModel;
use crate::nn::Tensor;
use crate::raster::{split_into_tiles, stitch_tiles, Grid, GridShape, Tile};

pub const TILE_BLOCK: usize = 250;
pub const TILE_OVERLAP: usize = 125;

/// Tile geometry actually used for a grid: the block is clamped to the
/// grid's shorter side and the overlap to half the block.
pub fn tile_geometry(g: &Grid, block: usize, overlap: usize) -> (usize, usize) {
    let b = block.min(g.nrows).min(g.ncols).max(1);
    (b, overlap.min(b / 2))
}

/// Runs `k` stages on a whole grid without tiling.
pub fn forward_grid(g: &Grid, m: &MsmModel, stage: usize, k: usize) -> Result<Grid> {
    if g.has_nodata() {
        let f = 1usize << k;
        return g.resampled_frame(
            g.ncols * f,
            g.nrows * f,
            g.cell_size / f as f64,
            vec![g.nodata_value; g.len() * f * f],
        );
    }
    let x = Tensor::from_vec([1, 1, g.nrows, g.ncols], g.values().to_vec())?;
    let out = m.forward_stages(&x, stage, k)?.pop().expect("k >= 1");
    let f = 1usize << k;
    g.resampled_frame(g.ncols * f, g.nrows * f, g.cell_size / f as f64, out.into_data())
}

fn stages_for(g: &Grid, m: &MsmModel, factor: usize) -> Result<(usize, usize)> {
    if factor < 2 || !factor.is_power_of_two() {
        return Err(Error::Parameter(format!("reconstruction factor must be a power of two >= 2, got {factor}")));
    }
    let k = factor.trailing_zeros() as usize;
    let stage = m.entry_stage(g.cell_size)?;
    if stage + k > m.n() {
        return Err(Error::Stage(format!(
            "a {}x reconstruction entering at stage {stage} needs {} stages, the model has {}",
            factor,
            stage + k,
            m.n()
        )));
    }
    Ok((stage, k))
}

/// Tiled super-resolution of `g` by `factor`, entering the chain at the stage
/// matching `g.cell_size`.
pub fn reconstruct(g: &Grid, m: &MsmModel, factor: usize) -> Result<Grid> {
    reconstruct_tiled(g, m, factor, TILE_BLOCK, TILE_OVERLAP)
}

pub fn reconstruct_tiled(g: &Grid, m: &MsmModel, factor: usize, block: usize, overlap: usize) -> Result<Grid> {
    let (stage, k) = stages_for(g, m, factor)?;
    let (b, o) = tile_geometry(g, block, overlap);
    let tiles = split_into_tiles(g, b, o)?;
    let outs = tiles
        .par_iter()
        .map(|t| {
            Ok(Tile {
                row_off: t.row_off * factor,
                col_off: t.col_off * factor,
                grid: forward_grid(&t.grid, m, stage, k)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let shape = GridShape { nrows: g.nrows * factor, ncols: g.ncols * factor };
    let mut out = stitch_tiles(&outs, shape)?;
    out.xll = g.xll;
    out.yll = g.yll;
    Ok(out)
}

/// Untiled reconstruction, used as the reference for tiling checks.
pub fn reconstruct_whole(g: &Grid, m: &MsmModel, factor: usize) -> Result<Grid> {
    let (stage, k) = stages_for(g, m, factor)?;
    forward_grid(g, m, stage, k)
}
