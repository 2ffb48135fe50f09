//! Trains a small model on synthetic scenes, writing the checkpoint and the
//! loss history.
//!
//!     cargo run --release --example train -- 500 out/

use std::fs::File;
use std::path::PathBuf;

use demsr::msm::save_model_file;
use demsr::pipeline::{build_blocks, train_with, write_loss_csv, TrainConfig};
use demsr::synth::{generate_scene, SynthConfig};

fn main() -> demsr::Result<()> {
    let mut args = std::env::args().skip(1);
    let iters = args.next().map_or(300, |s| s.parse().expect("iterations"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "train_out".into()));
    std::fs::create_dir_all(&out)?;

    let areas = (0..2)
        .map(|seed| generate_scene(&SynthConfig { size: 256, seed, ..Default::default() }).map(|s| s.dem))
        .collect::<demsr::Result<Vec<_>>>()?;
    let cfg = TrainConfig {
        batch_size: 4,
        patch_size: 16,
        lr: 1e-3,
        total_iters: iters,
        block: 256,
        block_overlap: 128,
        features: 16,
        checkpoint_every: (iters / 5).max(1),
        ..Default::default()
    };
    let store = build_blocks(&areas, &cfg)?;
    println!("{} blocks, normalization {:?}", store.len(), store.normalization());

    let (model, history) = train_with(&store, &cfg, |it, _, h| {
        let w = &h[h.len().saturating_sub(cfg.checkpoint_every)..];
        println!("iteration {it:>6}: mean loss {:.4}", w.iter().map(|r| r.loss).sum::<f64>() / w.len() as f64);
        Ok(())
    })?;
    save_model_file(&model, out.join("model.ckpt"))?;
    write_loss_csv(&history, File::create(out.join("loss.csv"))?)?;
    println!("checkpoint and loss history in {}", out.display());
    Ok(())
}
