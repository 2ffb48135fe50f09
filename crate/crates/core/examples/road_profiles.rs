//! Pearson correlation between reconstructed and reference elevation
//! profiles along the scene's roads.

use demsr::eval::road_profile_report;
use demsr::interp::{upsample, Method};
use demsr::raster::downsample_nn;
use demsr::synth::{generate_scene, SynthConfig};

fn main() -> demsr::Result<()> {
    let scene = generate_scene(&SynthConfig { size: 256, seed: 6, ..Default::default() })?;
    let lo = downsample_nn(&scene.dem, 4)?;
    for m in [Method::Nn, Method::Bi, Method::Cc] {
        let rep = road_profile_report(&upsample(&lo, m, 4)?, &scene.dem, &scene.roads)?;
        println!(
            "{:<3} mean PCC {:.7}  std {:.2e}  ({} roads, {} skipped)",
            m.label(),
            rep.mean_pcc.unwrap_or(f64::NAN),
            rep.std_pcc.unwrap_or(f64::NAN),
            rep.evaluated,
            rep.skipped
        );
    }
    Ok(())
}
