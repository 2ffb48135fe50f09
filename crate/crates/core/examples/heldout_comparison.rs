//! Trains on synthetic scenes and compares the model with the baselines on
//! an unseen scene: MAE, mean road-profile PCC and 1-cell boundary ratio.
//!
//!     cargo run --release --example heldout_comparison -- <iterations> <features> <train scenes>

use demsr::eval::*;
use demsr::interp::{upsample, Method};
use demsr::pipeline::{build_blocks, reconstruct, train_with, TrainConfig};
use demsr::raster::{downsample_nn, Grid};
use demsr::synth::{generate_scene, SynthConfig, SynthScene};

fn row(name: &str, g: &Grid, test: &SynthScene, reference: &CellSet) -> demsr::Result<()> {
    let s = error_stats(g, &test.dem, None)?;
    let p = road_profile_report(g, &test.dem, &test.roads)?;
    let b = boundary_match_report(&extract_dem_boundaries(g, &EdgeConfig::default())?, reference, &DEFAULT_BUFFERS)?;
    println!("{name:<10} {:>8.4} {:>8.4} {:>11.7} {:>8.4}", s.mae, s.rmse, p.mean_pcc.unwrap_or(f64::NAN), b.ratio_at(1).unwrap());
    Ok(())
}

fn main() -> demsr::Result<()> {
    let arg = |i: usize, d: usize| std::env::args().nth(i).map_or(d, |s| s.parse().expect("integer argument"));
    let (iters, features, ntrain) = (arg(1, 3000), arg(2, 16), arg(3, 4) as u64);

    let test = generate_scene(&SynthConfig { size: 512, seed: 1, ..Default::default() })?;
    let lo = downsample_nn(&test.dem, 4)?;
    let reference = reference_boundary_raster(&test.buildings, &test.dem, MIN_BUILDING_AREA)?.boundary;
    println!("{:<10} {:>8} {:>8} {:>11} {:>8}", "method", "MAE", "RMSE", "road PCC", "b1");
    for m in [Method::Nn, Method::Bi, Method::Cc] {
        row(m.label(), &upsample(&lo, m, 4)?, &test, &reference)?;
    }

    let areas = (0..ntrain)
        .map(|s| generate_scene(&SynthConfig { size: 512, seed: 100 + s, ..Default::default() }).map(|s| s.dem))
        .collect::<demsr::Result<Vec<_>>>()?;
    let cfg = TrainConfig {
        batch_size: 4,
        patch_size: 16,
        lr: 1e-3,
        lr_drop_after: iters * 3 / 4,
        total_iters: iters,
        seed: 7,
        block: 512,
        block_overlap: 256,
        features,
        checkpoint_every: (iters / 4).max(1),
        ..Default::default()
    };
    let store = build_blocks(&areas, &cfg)?;
    let t = std::time::Instant::now();
    train_with(&store, &cfg, |it, m, _| {
        row(&format!("msm@{it}"), &reconstruct(&lo, m, 4)?, &test, &reference)?;
        eprintln!("  {:.0} s", t.elapsed().as_secs_f64());
        Ok(())
    })?;
    Ok(())
}
