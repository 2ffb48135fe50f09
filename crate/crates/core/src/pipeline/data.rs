//! Training blocks and random patch batches.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::msm::{ModelConfig, Normalization, DEFAULT_FEATURES, DEFAULT_SPLIT};
use crate::nn::{SeededRng, Tensor};
use crate::raster::{downsample_nn, tile_offsets, Grid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n_scales: usize,
    pub batch_size: usize,
    /// Patch edge at input (coarsest) resolution, in cells.
    pub patch_size: usize,
    pub lr: f64,
    pub lr_drop_factor: f64,
    /// The learning rate is divided by `lr_drop_factor` for iterations
    /// strictly after this one.
    pub lr_drop_after: usize,
    pub weight_decay: f64,
    pub total_iters: usize,
    pub seed: u64,
    pub block: usize,
    pub block_overlap: usize,
    pub features: usize,
    pub split: usize,
    /// Pick a training area uniformly first, then a block within it.
    pub stratified: bool,
    /// Standardise elevations entering the residual branch with the
    /// training-data mean and standard deviation.
    pub normalize: bool,
    /// Checkpoint every this many iterations; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_scales: 2,
            batch_size: 64,
            patch_size: 32,
            lr: 1e-4,
            lr_drop_factor: 10.0,
            lr_drop_after: 250_000,
            weight_decay: 1e-4,
            total_iters: 1000,
            seed: 0,
            block: 500,
            block_overlap: 250,
            features: DEFAULT_FEATURES,
            split: DEFAULT_SPLIT,
            stratified: false,
            normalize: true,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    /// High-resolution patch edge, `patch_size * 2^n`.
    pub fn hr_patch(&self) -> usize {
        self.patch_size << self.n_scales
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_scales == 0 || self.n_scales > 8 {
            return Err(Error::Config(format!("n_scales must be in 1..=8, got {}", self.n_scales)));
        }
        if self.batch_size == 0 || self.patch_size == 0 {
            return Err(Error::Config("batch_size and patch_size must be at least 1".into()));
        }
        if self.hr_patch() > self.block {
            return Err(Error::Config(format!(
                "patch {} x 2^{} = {} exceeds the block size {}",
                self.patch_size,
                self.n_scales,
                self.hr_patch(),
                self.block
            )));
        }
        if self.block_overlap >= self.block {
            return Err(Error::Config("block overlap must be smaller than the block".into()));
        }
        if !(self.lr > 0.0) || !(self.lr_drop_factor > 0.0) || self.weight_decay < 0.0 {
            return Err(Error::Config("lr and lr_drop_factor must be positive, weight_decay non-negative".into()));
        }
        if self.features == 0 || self.split == 0 || self.features % self.split != 0 {
            return Err(Error::Config(format!("split {} must divide features {}", self.split, self.features)));
        }
        Ok(())
    }

    pub fn lr_at(&self, iteration: usize) -> f64 {
        if iteration > self.lr_drop_after {
            self.lr / self.lr_drop_factor
        } else {
            self.lr
        }
    }

    pub fn model_config(&self, hr_cell_size: f64, normalization: Normalization) -> ModelConfig {
        ModelConfig {
            n: self.n_scales,
            s: self.split,
            features: self.features,
            source_cell_size: hr_cell_size * (1u64 << self.n_scales) as f64,
            normalization,
        }
    }
}

/// High-resolution training blocks, each tagged with the index of the area
/// it was cut from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BlockStore {
    pub blocks: Vec<Grid>,
    pub area_ids: Vec<usize>,
    pub skipped_areas: Vec<usize>,
}

impl BlockStore {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn cell_size(&self) -> Option<f64> {
        self.blocks.first().map(|b| b.cell_size)
    }

    /// Mean and standard deviation over every block cell.
    pub fn elevation_moments(&self) -> (f64, f64) {
        let n: usize = self.blocks.iter().map(|b| b.len()).sum();
        if n == 0 {
            return (0.0, 1.0);
        }
        let mean = self.blocks.iter().flat_map(|b| b.values()).sum::<f64>() / n as f64;
        let var = self.blocks.iter().flat_map(|b| b.values()).map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        (mean, var.sqrt())
    }

    pub fn normalization(&self) -> Normalization {
        let (mean, std) = self.elevation_moments();
        Normalization { offset: mean, scale: if std > 1e-6 { std } else { 1.0 } }
    }
}

/// Cuts `block x block` windows at stride `block - overlap` from each area
/// and drops any containing nodata. Areas smaller than a block are skipped.
pub fn build_blocks(areas: &[Grid], cfg: &TrainConfig) -> Result<BlockStore> {
    if cfg.block == 0 || cfg.block_overlap >= cfg.block {
        return Err(Error::Config("block overlap must be smaller than the block".into()));
    }
    let mut store = BlockStore::default();
    let cs = areas.first().map(|a| a.cell_size);
    for (id, area) in areas.iter().enumerate() {
        if cs.is_some_and(|cs| (area.cell_size - cs).abs() > 1e-9 * cs) {
            return Err(Error::Dimension(format!("area {id} has cell size {}, expected {}", area.cell_size, cs.unwrap())));
        }
        if area.nrows < cfg.block || area.ncols < cfg.block {
            log::warn!(
                "area {id} ({}x{}) is smaller than one {}x{} block; skipped",
                area.nrows,
                area.ncols,
                cfg.block,
                cfg.block
            );
            store.skipped_areas.push(id);
            continue;
        }
        for r in tile_offsets(area.nrows, cfg.block, cfg.block_overlap)? {
            for c in tile_offsets(area.ncols, cfg.block, cfg.block_overlap)? {
                let b = area.window(r, c, cfg.block, cfg.block)?;
                if !b.has_nodata() {
                    store.blocks.push(b);
                    store.area_ids.push(id);
                }
            }
        }
    }
    Ok(store)
}

/// One training batch: the coarse input and the truths at scales 1..=n.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub input: Tensor,
    pub targets: Vec<Tensor>,
}

fn stack(grids: &[Grid]) -> Result<Tensor> {
    let (h, w) = (grids[0].nrows, grids[0].ncols);
    let mut data = Vec::with_capacity(grids.len() * h * w);
    for g in grids {
        data.extend_from_slice(g.values());
    }
    Tensor::from_vec([grids.len(), 1, h, w], data)
}

fn pick_block(store: &BlockStore, cfg: &TrainConfig, rng: &mut SeededRng) -> usize {
    if !cfg.stratified {
        return rng.random_range(0..store.len());
    }
    let mut areas: Vec<usize> = store.area_ids.clone();
    areas.dedup();
    let area = areas[rng.random_range(0..areas.len())];
    let members: Vec<usize> = (0..store.len()).filter(|&i| store.area_ids[i] == area).collect();
    members[rng.random_range(0..members.len())]
}

pub fn sample_batch(store: &BlockStore, cfg: &TrainConfig, rng: &mut SeededRng) -> Result<Batch> {
    if store.is_empty() {
        return Err(Error::Config("the block store is empty".into()));
    }
    let hp = cfg.hr_patch();
    let n = cfg.n_scales;
    let mut inputs = Vec::with_capacity(cfg.batch_size);
    let mut targets: Vec<Vec<Grid>> = vec![Vec::with_capacity(cfg.batch_size); n];
    for _ in 0..cfg.batch_size {
        let b = &store.blocks[pick_block(store, cfg, rng)];
        if hp > b.nrows || hp > b.ncols {
            return Err(Error::Config(format!("patch {hp} is larger than the {}x{} block", b.nrows, b.ncols)));
        }
        let r = rng.random_range(0..=b.nrows - hp);
        let c = rng.random_range(0..=b.ncols - hp);
        let patch = b.window(r, c, hp, hp)?;
        for (i, t) in targets.iter_mut().enumerate() {
            let f = 1usize << (n - 1 - i);
            t.push(if f == 1 { patch.clone() } else { downsample_nn(&patch, f)? });
        }
        inputs.push(downsample_nn(&patch, 1 << n)?);
    }
    Ok(Batch { input: stack(&inputs)?, targets: targets.iter().map(|t| stack(t)).collect::<Result<_>>()? })
}
