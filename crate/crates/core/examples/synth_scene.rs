//! Generates a procedural urban scene and writes it to a directory.
//!
//!     cargo run --release --example synth_scene -- out/scene 512 7

use demsr::eval::LandCover;
use demsr::synth::{generate_scene, SynthConfig};

fn main() -> demsr::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "scene".into());
    let size = args.next().map_or(256, |s| s.parse().expect("size"));
    let seed = args.next().map_or(0, |s| s.parse().expect("seed"));

    let scene = generate_scene(&SynthConfig { size, seed, ..Default::default() })?;
    scene.write(&out)?;

    let (lo, hi) = scene.dem.value_range().unwrap();
    println!("{size}x{size} at {} m, elevations {lo:.2}..{hi:.2} m", scene.config.cell_size);
    println!("{} roads, {} buildings", scene.roads.len(), scene.buildings.len());
    for class in LandCover::ALL {
        let n = scene.landcover.values().iter().filter(|&&v| v == class.code() as f64).count();
        println!("  {:<14} {:>6.2} %", class.label(), 100.0 * n as f64 / scene.landcover.len() as f64);
    }
    println!("written to {out}/");
    Ok(())
}
