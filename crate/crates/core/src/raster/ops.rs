use super::{check_factor, Grid};
use crate::error::{Error, Result};

/// Nearest-neighbour downsampling: coarse cell `(I, J)` takes the fine value at
/// `(I*f + f/2, J*f + f/2)`. The lower-left corner is shared.
pub fn downsample_nn(g: &Grid, factor: usize) -> Result<Grid> {
    check_factor(factor)?;
    if g.ncols % factor != 0 || g.nrows % factor != 0 {
        return Err(Error::Dimension(format!(
            "factor {factor} does not divide {}x{} grid",
            g.nrows, g.ncols
        )));
    }
    let (nc, nr) = (g.ncols / factor, g.nrows / factor);
    let half = factor / 2;
    let mut values = Vec::with_capacity(nc * nr);
    for r in 0..nr {
        for c in 0..nc {
            values.push(g.get(r * factor + half, c * factor + half));
        }
    }
    g.resampled_frame(nc, nr, g.cell_size * factor as f64, values)
}

/// Slope in percent from Horn's 3x3 finite-difference stencil. Borders use
/// edge-replicated neighbours; any nodata in the stencil yields nodata.
pub fn compute_slope(g: &Grid) -> Result<Grid> {
    if g.ncols < 3 || g.nrows < 3 {
        return Err(Error::Dimension(format!(
            "slope needs at least 3x3 cells, got {}x{}",
            g.nrows, g.ncols
        )));
    }
    let (nr, nc) = (g.nrows as isize, g.ncols as isize);
    let at = |r: isize, c: isize| g.get(r.clamp(0, nr - 1) as usize, c.clamp(0, nc - 1) as usize);
    let mut out = vec![g.nodata_value; g.len()];
    for r in 0..nr {
        'cell: for c in 0..nc {
            let mut z = [0.0; 9];
            for (k, (dr, dc)) in [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 0), (0, 1), (1, -1), (1, 0), (1, 1)]
                .into_iter()
                .enumerate()
            {
                let v = at(r + dr, c + dc);
                if g.is_nodata(v) {
                    continue 'cell;
                }
                z[k] = v;
            }
            // a b c / d e f / g h i
            let dzdx = ((z[2] + 2.0 * z[5] + z[8]) - (z[0] + 2.0 * z[3] + z[6])) / (8.0 * g.cell_size);
            let dzdy = ((z[6] + 2.0 * z[7] + z[8]) - (z[0] + 2.0 * z[1] + z[2])) / (8.0 * g.cell_size);
            out[(r * nc + c) as usize] = 100.0 * (dzdx * dzdx + dzdy * dzdy).sqrt();
        }
    }
    g.with_values(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::DEFAULT_NODATA;

    #[test]
    fn constant_grid_downsamples_to_constant() {
        let g = Grid::filled(16, 8, 0.5, 3.25).unwrap();
        let d = downsample_nn(&g, 4).unwrap();
        assert_eq!((d.ncols, d.nrows, d.cell_size), (4, 2, 2.0));
        assert!(d.values().iter().all(|&v| v == 3.25));
    }

    #[test]
    fn paper_resolutions_from_half_metre() {
        let g = Grid::filled(32, 32, 0.5, 0.0).unwrap();
        let sizes: Vec<f64> = [4, 8, 16].iter().map(|&f| downsample_nn(&g, f).unwrap().cell_size).collect();
        assert_eq!(sizes, vec![2.0, 4.0, 8.0]);
    }

    #[test]
    fn picks_block_offsets() {
        let g = Grid::from_fn(4, 4, 1.0, |r, c| (r * 4 + c) as f64).unwrap();
        let d = downsample_nn(&g, 2).unwrap();
        // fine (1,1)=5, (1,3)=7, (3,1)=13, (3,3)=15
        assert_eq!(d.values(), &[5.0, 7.0, 13.0, 15.0]);
        assert_eq!((d.xll, d.yll), (g.xll, g.yll));
    }

    #[test]
    fn non_dividing_factor_is_rejected() {
        let g = Grid::filled(6, 6, 1.0, 0.0).unwrap();
        assert!(matches!(downsample_nn(&g, 4), Err(Error::Dimension(_))));
        assert!(matches!(downsample_nn(&g, 3), Err(Error::Parameter(_))));
    }

    #[test]
    fn slope_of_flat_and_ramp() {
        let flat = Grid::filled(5, 5, 1.0, 7.0).unwrap();
        assert!(compute_slope(&flat).unwrap().values().iter().all(|&v| v == 0.0));

        // z = x with 1 m cells: interior slope is exactly 100 %.
        let ramp = Grid::from_fn(6, 6, 1.0, |_, c| c as f64).unwrap();
        let s = compute_slope(&ramp).unwrap();
        for r in 0..6 {
            for c in 1..5 {
                assert!((s.get(r, c) - 100.0).abs() < 1e-12);
            }
        }
        // edge replication halves the difference on the border columns
        assert!((s.get(2, 0) - 50.0).abs() < 1e-12);
    }

    #[test]
    fn slope_propagates_nodata() {
        let mut g = Grid::filled(5, 5, 1.0, 1.0).unwrap();
        g.set(2, 2, DEFAULT_NODATA);
        let s = compute_slope(&g).unwrap();
        for r in 0..5usize {
            for c in 0..5usize {
                let near = r.abs_diff(2) <= 1 && c.abs_diff(2) <= 1;
                assert_eq!(s.is_nodata(s.get(r, c)), near, "cell ({r},{c})");
            }
        }
    }

    #[test]
    fn slope_needs_three_by_three() {
        let g = Grid::filled(2, 5, 1.0, 0.0).unwrap();
        assert!(matches!(compute_slope(&g), Err(Error::Dimension(_))));
    }

    #[test]
    fn slope_is_translation_invariant() {
        let g = Grid::from_fn(7, 6, 0.5, |r, c| ((r * 31 + c * 17) % 11) as f64 * 0.37).unwrap();
        let shifted = g.with_values(g.values().iter().map(|v| v + 123.456).collect()).unwrap();
        let (a, b) = (compute_slope(&g).unwrap(), compute_slope(&shifted).unwrap());
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0) * 1e2, "{x} vs {y}");
        }
    }
}
