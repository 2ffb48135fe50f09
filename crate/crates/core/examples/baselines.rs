//! Downsamples a synthetic DEM by 4 and compares the classical upsampling
//! baselines against the original.

use demsr::eval::error_stats;
use demsr::interp::{upsample, Method};
use demsr::raster::downsample_nn;
use demsr::synth::{generate_scene, SynthConfig};

fn main() -> demsr::Result<()> {
    let scene = generate_scene(&SynthConfig { size: 256, seed: 3, ..Default::default() })?;
    let lo = downsample_nn(&scene.dem, 4)?;
    println!("{}x{} at {} m -> {}x{} at {} m", scene.dem.nrows, scene.dem.ncols, scene.dem.cell_size, lo.nrows, lo.ncols, lo.cell_size);
    println!("{:<6} {:>8} {:>8} {:>8}", "method", "MAE", "RMSE", "STD");
    for m in [Method::Nn, Method::Bi, Method::Cc, Method::Idw { power: 2.0, k: 4 }] {
        let up = upsample(&lo, m, 4)?;
        let s = error_stats(&up, &scene.dem, None)?;
        println!("{:<6} {:>8.4} {:>8.4} {:>8.4}", m.label(), s.mae, s.rmse, s.std);
    }
    Ok(())
}
