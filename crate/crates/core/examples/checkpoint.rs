//! Saves a model, reads it back and shows the textual manifest line of the
//! checkpoint.

use demsr::msm::{load_model, save_model, ModelConfig, MsmModel};
use demsr::nn::seeded_rng;

fn main() -> demsr::Result<()> {
    let model = MsmModel::new(ModelConfig { n: 2, features: 8, ..Default::default() }, &mut seeded_rng(3))?;
    let mut bytes = Vec::new();
    save_model(&model, &mut bytes)?;
    let header_end = bytes.iter().enumerate().filter(|(_, &b)| b == b'\n').nth(1).map(|(i, _)| i).unwrap();
    let header = String::from_utf8_lossy(&bytes[..header_end]);
    println!("{}...", &header[..header.len().min(300)]);
    println!("{} bytes total, {} weights", bytes.len(), model.num_weights());
    let back = load_model(bytes.as_slice())?;
    println!("round-trip identical: {}", back == model);
    println!("truncated load: {}", load_model(&bytes[..bytes.len() - 8]).unwrap_err());
    Ok(())
}
