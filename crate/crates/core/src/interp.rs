//! Classical upsampling baselines: nearest neighbour, bilinear, cubic
//! convolution and inverse distance weighting.
//!
//! All methods share the cell-centred alignment of [`Grid`]: the coarse and
//! fine grids cover the same extent, so fine column `c` has its center at
//! coarse fractional index `(c + 0.5) / f - 0.5` (coarse centers sit at
//! integer indices). Any output whose support touches a nodata cell is nodata.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{check_factor, Grid};

/// Cubic-convolution kernel parameter.
pub const CUBIC_A: f64 = -0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Nn,
    Bi,
    Cc,
    Idw { power: f64, k: usize },
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Nn => "nn",
            Method::Bi => "bi",
            Method::Cc => "cc",
            Method::Idw { .. } => "idw",
        }
    }
}

pub fn upsample(g: &Grid, method: Method, factor: usize) -> Result<Grid> {
    match method {
        Method::Nn => upsample_nn(g, factor),
        Method::Bi => upsample_bilinear(g, factor),
        Method::Cc => upsample_bicubic(g, factor),
        Method::Idw { power, k } => upsample_idw(g, factor, power, k),
    }
}

#[inline]
fn coarse_coord(fine: usize, factor: usize) -> f64 {
    (fine as f64 + 0.5) / factor as f64 - 0.5
}

fn fine_frame(g: &Grid, factor: usize, values: Vec<f64>) -> Result<Grid> {
    g.resampled_frame(g.ncols * factor, g.nrows * factor, g.cell_size / factor as f64, values)
}

/// Replicates each coarse cell into a `factor x factor` block.
pub fn upsample_nn(g: &Grid, factor: usize) -> Result<Grid> {
    check_factor(factor)?;
    let nc = g.ncols * factor;
    let mut values = Vec::with_capacity(nc * g.nrows * factor);
    for r in 0..g.nrows * factor {
        let src = &g.values()[(r / factor) * g.ncols..(r / factor + 1) * g.ncols];
        for c in 0..nc {
            values.push(src[c / factor]);
        }
    }
    fine_frame(g, factor, values)
}

pub fn upsample_bilinear(g: &Grid, factor: usize) -> Result<Grid> {
    check_factor(factor)?;
    if g.ncols < 2 || g.nrows < 2 {
        return Err(Error::Dimension("bilinear needs at least 2x2 cells".into()));
    }
    let (fr, fc) = (g.nrows * factor, g.ncols * factor);
    let axis = |fine: usize, n: usize| -> (usize, f64) {
        let u = coarse_coord(fine, factor).clamp(0.0, (n - 1) as f64);
        let i0 = (u.floor() as usize).min(n - 2);
        (i0, u - i0 as f64)
    };
    let cols: Vec<_> = (0..fc).map(|c| axis(c, g.ncols)).collect();
    let mut values = Vec::with_capacity(fr * fc);
    for r in 0..fr {
        let (r0, ty) = axis(r, g.nrows);
        for &(c0, tx) in &cols {
            let z00 = g.get(r0, c0);
            let z01 = g.get(r0, c0 + 1);
            let z10 = g.get(r0 + 1, c0);
            let z11 = g.get(r0 + 1, c0 + 1);
            if [z00, z01, z10, z11].iter().any(|&z| g.is_nodata(z)) {
                values.push(g.nodata_value);
                continue;
            }
            let top = z00 + tx * (z01 - z00);
            let bot = z10 + tx * (z11 - z10);
            values.push(top + ty * (bot - top));
        }
    }
    fine_frame(g, factor, values)
}

/// Keys cubic-convolution kernel with parameter `a`.
pub fn cubic_kernel(x: f64, a: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

pub fn upsample_bicubic(g: &Grid, factor: usize) -> Result<Grid> {
    check_factor(factor)?;
    if g.ncols < 4 || g.nrows < 4 {
        return Err(Error::Dimension("bicubic needs at least 4x4 cells".into()));
    }
    let (fr, fc) = (g.nrows * factor, g.ncols * factor);
    // (clamped source indices, weights) per fine position along an axis
    let axis = |fine: usize, n: usize| -> ([usize; 4], [f64; 4]) {
        let u = coarse_coord(fine, factor);
        let i0 = u.floor();
        let t = u - i0;
        let mut idx = [0; 4];
        let mut w = [0.0; 4];
        for k in 0..4 {
            let i = i0 as isize + k as isize - 1;
            idx[k] = i.clamp(0, n as isize - 1) as usize;
            w[k] = cubic_kernel(t - (k as f64 - 1.0), CUBIC_A);
        }
        (idx, w)
    };
    let cols: Vec<_> = (0..fc).map(|c| axis(c, g.ncols)).collect();
    let mut values = Vec::with_capacity(fr * fc);
    for r in 0..fr {
        let (ri, rw) = axis(r, g.nrows);
        'cell: for (ci, cw) in &cols {
            let mut acc = 0.0;
            for a in 0..4 {
                let mut row_acc = 0.0;
                for b in 0..4 {
                    let z = g.get(ri[a], ci[b]);
                    if g.is_nodata(z) {
                        values.push(g.nodata_value);
                        continue 'cell;
                    }
                    row_acc += cw[b] * z;
                }
                acc += rw[a] * row_acc;
            }
            values.push(acc);
        }
    }
    fine_frame(g, factor, values)
}

/// IDW estimate at coarse fractional index `(u, v)` (row, col) from the `k`
/// nearest coarse centers. Distance ties are broken by `(row, col)`.
pub fn idw_at(g: &Grid, u: f64, v: f64, power: f64, k: usize) -> f64 {
    let radius = ((k as f64).sqrt().ceil() as isize) + 1;
    let (ru, cv) = (u.round() as isize, v.round() as isize);
    let mut cand: Vec<(f64, usize, usize)> = Vec::with_capacity(((2 * radius + 1) * (2 * radius + 1)) as usize);
    let kk = k.min(g.len());
    let mut rad = radius;
    loop {
        cand.clear();
        for r in (ru - rad).max(0)..=(ru + rad).min(g.nrows as isize - 1) {
            for c in (cv - rad).max(0)..=(cv + rad).min(g.ncols as isize - 1) {
                let d2 = (r as f64 - u).powi(2) + (c as f64 - v).powi(2);
                cand.push((d2, r as usize, c as usize));
            }
        }
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        // cells outside the window are at least rad + 0.5 away
        let whole = cand.len() == g.len();
        if whole || (cand.len() >= kk && cand[kk - 1].0 < (rad as f64 + 0.5).powi(2)) {
            break;
        }
        rad *= 2;
    }
    let nearest = &cand[..kk];
    if nearest[0].0 == 0.0 {
        return g.get(nearest[0].1, nearest[0].2);
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &(d2, r, c) in nearest {
        let z = g.get(r, c);
        if g.is_nodata(z) {
            return g.nodata_value;
        }
        let w = d2.powf(-power / 2.0);
        num += w * z;
        den += w;
    }
    num / den
}

pub fn upsample_idw(g: &Grid, factor: usize, power: f64, k: usize) -> Result<Grid> {
    check_factor(factor)?;
    if k == 0 || !(power > 0.0) {
        return Err(Error::Parameter(format!("IDW needs k >= 1 and power > 0, got k={k}, power={power}")));
    }
    let (fr, fc) = (g.nrows * factor, g.ncols * factor);
    let mut values = Vec::with_capacity(fr * fc);
    for r in 0..fr {
        let u = coarse_coord(r, factor);
        for c in 0..fc {
            values.push(idw_at(g, u, coarse_coord(c, factor), power, k));
        }
    }
    fine_frame(g, factor, values)
}
