//! Building boundaries extracted from reconstructed DEMs, scored by the
//! share of reference boundary cells within 0..3 cell buffers.

use demsr::eval::{boundary_match_report, extract_dem_boundaries, reference_boundary_raster, EdgeConfig, DEFAULT_BUFFERS, MIN_BUILDING_AREA};
use demsr::interp::{upsample, Method};
use demsr::raster::downsample_nn;
use demsr::synth::{generate_scene, SynthConfig};

fn main() -> demsr::Result<()> {
    let scene = generate_scene(&SynthConfig { size: 256, seed: 8, ..Default::default() })?;
    let reference = reference_boundary_raster(&scene.buildings, &scene.dem, MIN_BUILDING_AREA)?;
    println!(
        "{} footprints -> {} components ({} too small), {} boundary cells",
        scene.buildings.len(),
        reference.components,
        reference.removed_components,
        reference.count
    );
    let lo = downsample_nn(&scene.dem, 4)?;
    let candidates = [("truth", scene.dem.clone()), ("nn", upsample(&lo, Method::Nn, 4)?), ("bi", upsample(&lo, Method::Bi, 4)?)];
    for (name, g) in &candidates {
        let edges = extract_dem_boundaries(g, &EdgeConfig::default())?;
        let rep = boundary_match_report(&edges, &reference.boundary, &DEFAULT_BUFFERS)?;
        let ratios: Vec<String> = rep.buffers.iter().map(|b| format!("{}:{:.3}", b.buffer, b.ratio)).collect();
        println!("{name:<6} {} edge cells, ratios {}", rep.extracted_count, ratios.join(" "));
    }
    Ok(())
}
