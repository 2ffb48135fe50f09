//! Whole-area, slope-binned and land-cover-binned error statistics of a
//! bilinear reconstruction.

use demsr::eval::{error_stats, landcover_binned_stats, slope_binned_stats, DEFAULT_SLOPE_EDGES};
use demsr::interp::upsample_bilinear;
use demsr::raster::{compute_slope, downsample_nn};
use demsr::synth::{generate_scene, SynthConfig};

fn main() -> demsr::Result<()> {
    let scene = generate_scene(&SynthConfig { size: 256, seed: 5, ..Default::default() })?;
    let recon = upsample_bilinear(&downsample_nn(&scene.dem, 4)?, 4)?;

    let s = error_stats(&recon, &scene.dem, None)?;
    println!("all cells: MAE {:.4} RMSE {:.4} STD {:.4} mean error {:+.4} (n={})", s.mae, s.rmse, s.std, s.mean_error, s.n);

    let slope = compute_slope(&scene.dem)?;
    let by_slope = slope_binned_stats(&recon, &scene.dem, &slope, &DEFAULT_SLOPE_EDGES)?;
    let by_class = landcover_binned_stats(&recon, &scene.dem, &scene.landcover)?;
    for rep in [&by_slope, &by_class] {
        println!("\n{} ({})", rep.binning, rep.averaging);
        for b in &rep.bins {
            match b.stats {
                Some(s) => println!("  {:<14} {:>6.2} %  MAE {:.4}  RMSE {:.4}", b.label, 100.0 * b.frequency, s.mae, s.rmse),
                None => println!("  {:<14}   empty", b.label),
            }
        }
        println!("  average        MAE {:.4}  RMSE {:.4}", rep.mean_mae, rep.mean_rmse);
    }
    by_slope.write_csv("bi", std::io::stdout(), true)?;
    Ok(())
}
