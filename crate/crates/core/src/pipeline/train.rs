use std::io::Write;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::data::{sample_batch, Batch, BlockStore, TrainConfig};
use crate::error::{Error, Result};
use crate::msm::{multiscale_loss_tape, MsmModel, Normalization, TrainingMeta};
use crate::nn::{adam_step, AdamConfig, SeededRng, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub lr: f64,
    pub loss: f64,
}

pub fn write_loss_csv<W: Write>(history: &[LossRecord], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for rec in history {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Forward, multi-scale loss, backward and one Adam update. Returns the
/// loss before the update.
pub fn train_step(model: &mut MsmModel, batch: &Batch, adam: &mut AdamConfig, iteration: usize) -> Result<f64> {
    let mut tape = Tape::new();
    let x = tape.leaf(batch.input.clone(), false);
    let nodes: Vec<_> = model.parameters().iter().map(|p| tape.leaf(p.value.clone(), true)).collect();
    let outs = model.forward_graph(&mut tape, &x, &nodes, 0, model.n())?;
    let loss = multiscale_loss_tape(&mut tape, &outs, &batch.targets)?;
    let value = tape.get(loss).data()[0];
    if !value.is_finite() {
        return Err(Error::Diverged { iter: iteration, loss: value });
    }
    let mut grads = tape.backward(loss)?;
    drop(tape);
    for (p, v) in model.parameters_mut().into_iter().zip(&nodes) {
        if let Some(g) = grads.take(*v) {
            p.accumulate_grad(&g)?;
        }
    }
    adam_step(model.parameters_mut(), adam);
    Ok(value)
}

fn streams(seed: u64) -> (SeededRng, SeededRng) {
    let init = SeededRng::seed_from_u64(seed);
    let mut sampling = SeededRng::seed_from_u64(seed);
    sampling.set_stream(1);
    (init, sampling)
}

/// He-initialised model for `store` and `cfg`, before any update.
pub fn init_model(store: &BlockStore, cfg: &TrainConfig) -> Result<MsmModel> {
    cfg.validate()?;
    let cs = store.cell_size().ok_or_else(|| Error::Config("the block store is empty".into()))?;
    let norm = if cfg.normalize { store.normalization() } else { Normalization::default() };
    let (mut init, _) = streams(cfg.seed);
    MsmModel::new(cfg.model_config(cs, norm), &mut init)
}

pub fn train(store: &BlockStore, cfg: &TrainConfig) -> Result<(MsmModel, Vec<LossRecord>)> {
    train_with(store, cfg, |_, _, _| Ok(()))
}

/// Like [`train`], calling `observe(iteration, model, history)` every
/// `cfg.checkpoint_every` iterations.
pub fn train_with(
    store: &BlockStore,
    cfg: &TrainConfig,
    mut observe: impl FnMut(usize, &MsmModel, &[LossRecord]) -> Result<()>,
) -> Result<(MsmModel, Vec<LossRecord>)> {
    let mut model = init_model(store, cfg)?;
    let (_, mut sampling) = streams(cfg.seed);
    let mut adam = AdamConfig { lr: cfg.lr, weight_decay: cfg.weight_decay, ..Default::default() };
    adam.validate()?;
    let mut history = Vec::with_capacity(cfg.total_iters);
    for it in 1..=cfg.total_iters {
        adam.lr = cfg.lr_at(it);
        let batch = sample_batch(store, cfg, &mut sampling)?;
        let loss = train_step(&mut model, &batch, &mut adam, it)?;
        history.push(LossRecord { iteration: it, lr: adam.lr, loss });
        log::debug!("iteration {it}: loss {loss}");
        if cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0 {
            model.manifest.training = Some(meta(store, cfg, it, Some(loss)));
            observe(it, &model, &history)?;
        }
    }
    model.manifest.training = Some(meta(store, cfg, cfg.total_iters, history.last().map(|r| r.loss)));
    Ok((model, history))
}

fn meta(store: &BlockStore, cfg: &TrainConfig, iterations: usize, final_loss: Option<f64>) -> TrainingMeta {
    TrainingMeta {
        iterations,
        seed: cfg.seed,
        batch_size: cfg.batch_size,
        patch_size: cfg.patch_size,
        lr: cfg.lr,
        lr_drop_after: cfg.lr_drop_after,
        weight_decay: cfg.weight_decay,
        blocks: store.len(),
        final_loss,
    }
}
