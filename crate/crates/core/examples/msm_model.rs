//! Builds a multi-scale network, runs the eager forward pass and shows that
//! a model with a zero residual branch reproduces nearest-neighbour
//! upsampling at every scale.

use demsr::interp::upsample_nn;
use demsr::msm::{msm_forward, ModelConfig, MsmModel};
use demsr::nn::{seeded_rng, Tensor};
use demsr::pipeline::reconstruct_whole;
use demsr::raster::Grid;

fn main() -> demsr::Result<()> {
    let cfg = ModelConfig { n: 3, features: 16, source_cell_size: 4.0, ..Default::default() };
    let model = MsmModel::new(cfg.clone(), &mut seeded_rng(0))?;
    println!("n={} features={} split={}: {} weights", model.n(), cfg.features, cfg.s, model.num_weights());
    for p in model.parameters().iter().take(4) {
        println!("  {:<28} {:?}", p.name, p.value.shape());
    }

    let x = Tensor::from_vec([1, 1, 8, 8], (0..64).map(|i| (i % 8) as f64).collect())?;
    for (k, out) in msm_forward(&x, &model)?.iter().enumerate() {
        println!("scale {}: {:?}", k + 1, out.shape());
    }

    let zero = MsmModel::zeros(cfg)?;
    let g = Grid::from_fn(10, 10, 4.0, |r, c| (r * 10 + c) as f64)?;
    for f in [2, 4, 8] {
        let same = reconstruct_whole(&g, &zero, f)?.values() == upsample_nn(&g, f)?.values();
        println!("zero residual, x{f}: equals NN upsampling: {same}");
    }
    Ok(())
}
