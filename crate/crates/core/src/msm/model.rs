//! The multi-scale chain of subnetworks and its loss.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::blocks::{subnet_graph, Normalization, SubnetParams, SUBNET_PARAMS};
use crate::error::{Error, Result};
use crate::nn::{Eager, Graph, Parameter, SeededRng, Tape, Tensor, Var};

pub const DEFAULT_SPLIT: usize = 4;
pub const DEFAULT_FEATURES: usize = 64;

/// Structural hyper-parameters of a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of 2x subnetworks.
    pub n: usize,
    /// IDB split divisor.
    pub s: usize,
    /// Trunk channel width.
    pub features: usize,
    /// Cell size of the grids subnetwork 0 consumes.
    pub source_cell_size: f64,
    pub normalization: Normalization,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n: 2,
            s: DEFAULT_SPLIT,
            features: DEFAULT_FEATURES,
            source_cell_size: 2.0,
            normalization: Normalization::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::Parameter("a model needs at least one subnetwork".into()));
        }
        if self.features == 0 || self.s == 0 || self.features % self.s != 0 {
            return Err(Error::Parameter(format!(
                "split divisor {} must divide feature width {}",
                self.s, self.features
            )));
        }
        if !(self.source_cell_size > 0.0 && self.source_cell_size.is_finite()) {
            return Err(Error::Parameter(format!("source cell size {} must be positive", self.source_cell_size)));
        }
        let nm = self.normalization;
        if !(nm.scale > 0.0 && nm.scale.is_finite() && nm.offset.is_finite()) {
            return Err(Error::Parameter(format!("invalid normalization {nm:?}")));
        }
        Ok(())
    }
}

/// Provenance of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainingMeta {
    pub iterations: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub patch_size: usize,
    pub lr: f64,
    pub lr_drop_after: usize,
    pub weight_decay: f64,
    pub blocks: usize,
    pub final_loss: Option<f64>,
}

/// Self-description stored alongside the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub n: usize,
    pub s: usize,
    pub features: usize,
    pub source_cell_size: f64,
    pub normalization: Normalization,
    /// Subnetworks are independent, so the chain may be entered at any stage
    /// whose input cell size matches; entry `i` expects
    /// `source_cell_size / 2^i`.
    pub stage_input_cell_sizes: Vec<f64>,
    pub training: Option<TrainingMeta>,
}

pub const FORMAT_VERSION: u32 = 1;

impl Manifest {
    pub fn from_config(cfg: &ModelConfig) -> Self {
        Self {
            version: FORMAT_VERSION,
            n: cfg.n,
            s: cfg.s,
            features: cfg.features,
            source_cell_size: cfg.source_cell_size,
            normalization: cfg.normalization,
            stage_input_cell_sizes: (0..cfg.n).map(|i| cfg.source_cell_size / (1u64 << i) as f64).collect(),
            training: None,
        }
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            n: self.n,
            s: self.s,
            features: self.features,
            source_cell_size: self.source_cell_size,
            normalization: self.normalization,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsmModel {
    pub subnets: Vec<SubnetParams>,
    pub manifest: Manifest,
}

impl MsmModel {
    /// He-initialised model with zero biases.
    pub fn new(cfg: ModelConfig, rng: &mut SeededRng) -> Result<Self> {
        Self::build(cfg, Some(rng))
    }

    /// All parameters zero: every output is NN upsampling of the input.
    pub fn zeros(cfg: ModelConfig) -> Result<Self> {
        Self::build(cfg, None)
    }

    fn build(cfg: ModelConfig, mut rng: Option<&mut SeededRng>) -> Result<Self> {
        cfg.validate()?;
        let subnets = (0..cfg.n)
            .map(|i| SubnetParams::new(&format!("subnet{i}"), cfg.features, cfg.s, cfg.normalization, rng.as_deref_mut()))
            .collect::<Result<_>>()?;
        Ok(Self { subnets, manifest: Manifest::from_config(&cfg) })
    }

    pub fn n(&self) -> usize {
        self.subnets.len()
    }

    pub fn config(&self) -> ModelConfig {
        self.manifest.config()
    }

    pub fn normalization(&self) -> Normalization {
        self.manifest.normalization
    }

    pub fn set_normalization(&mut self, norm: Normalization) {
        self.manifest.normalization = norm;
        for s in &mut self.subnets {
            s.norm = norm;
        }
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        self.subnets.iter().flat_map(|s| s.parameters()).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.subnets.iter_mut().flat_map(|s| s.parameters_mut()).collect()
    }

    pub fn num_weights(&self) -> usize {
        self.parameters().iter().map(|p| p.value.len()).sum()
    }

    /// Stage at which a grid of `cell_size` enters the chain.
    pub fn entry_stage(&self, cell_size: f64) -> Result<usize> {
        let ratio = self.manifest.source_cell_size / cell_size;
        let stage = ratio.log2().round();
        if !(ratio.is_finite() && stage >= 0.0 && (ratio - stage.exp2()).abs() <= 1e-9 * ratio) {
            return Err(Error::Stage(format!(
                "cell size {cell_size} is not the model's source cell size {} divided by a power of two",
                self.manifest.source_cell_size
            )));
        }
        let stage = stage as usize;
        if stage >= self.n() {
            return Err(Error::Stage(format!(
                "cell size {cell_size} enters at stage {stage}, model has {} stages",
                self.n()
            )));
        }
        Ok(stage)
    }

    /// Runs stages `start .. start + count` on a graph; `nodes` holds every
    /// model parameter in [`MsmModel::parameters`] order.
    pub fn forward_graph<G: Graph>(
        &self,
        g: &mut G,
        x: &G::Node,
        nodes: &[G::Node],
        start: usize,
        count: usize,
    ) -> Result<Vec<G::Node>> {
        if count == 0 || start + count > self.n() {
            return Err(Error::Stage(format!(
                "stages {start}..{} requested from a {}-stage model",
                start + count,
                self.n()
            )));
        }
        let mut outs = Vec::with_capacity(count);
        let mut cur = x.clone();
        for i in start..start + count {
            let p = &nodes[i * SUBNET_PARAMS..(i + 1) * SUBNET_PARAMS];
            let sub = &self.subnets[i];
            cur = subnet_graph(g, &cur, p, sub.split(), sub.norm)?;
            outs.push(cur.clone());
        }
        Ok(outs)
    }

    /// Eager forward through `count` stages starting at `start`.
    pub fn forward_stages(&self, x: &Tensor, start: usize, count: usize) -> Result<Vec<Tensor>> {
        let mut g = Eager;
        let nodes: Vec<_> = self.parameters().into_iter().map(|p| g.constant(p.value.clone())).collect();
        let xn = g.constant(x.clone());
        let outs = self.forward_graph(&mut g, &xn, &nodes, start, count)?;
        drop(nodes);
        drop(xn);
        Ok(outs.into_iter().map(|t| Rc::try_unwrap(t).unwrap_or_else(|rc| (*rc).clone())).collect())
    }
}

/// All `n` reconstructions at 2x, 4x, ..., 2^n x.
pub fn msm_forward(x: &Tensor, m: &MsmModel) -> Result<Vec<Tensor>> {
    if m.n() < 1 {
        return Err(Error::Parameter("a model needs at least one subnetwork".into()));
    }
    if x.h() < 4 || x.w() < 4 {
        return Err(Error::Shape(format!("input {}x{} is smaller than 4x4", x.h(), x.w())));
    }
    m.forward_stages(x, 0, m.n())
}

fn check_pairs(recons: &[[usize; 4]], truths: &[Tensor]) -> Result<()> {
    if recons.len() != truths.len() || recons.is_empty() {
        return Err(Error::Shape(format!(
            "{} reconstructions against {} truths",
            recons.len(),
            truths.len()
        )));
    }
    for (i, (r, t)) in recons.iter().zip(truths).enumerate() {
        if *r != t.shape() {
            return Err(Error::Shape(format!("scale {i}: reconstruction {r:?} vs truth {:?}", t.shape())));
        }
    }
    Ok(())
}

/// Equal-weight sum over scales of the mean absolute error.
pub fn multiscale_loss(recons: &[Tensor], truths: &[Tensor]) -> Result<f64> {
    let shapes: Vec<_> = recons.iter().map(|r| r.shape()).collect();
    check_pairs(&shapes, truths)?;
    Ok(recons
        .iter()
        .zip(truths)
        .map(|(r, t)| r.data().iter().zip(t.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / r.len() as f64)
        .sum())
}

/// Recording variant of [`multiscale_loss`].
pub fn multiscale_loss_tape(tape: &mut Tape, recons: &[Var], truths: &[Tensor]) -> Result<Var> {
    let shapes: Vec<_> = recons.iter().map(|&r| tape.get(r).shape()).collect();
    check_pairs(&shapes, truths)?;
    let terms = recons.iter().zip(truths).map(|(&r, t)| tape.mean_abs_error(r, t)).collect::<Result<Vec<_>>>()?;
    tape.sum_scalars(&terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_entries;
    use crate::nn::{seeded_rng, upsample_nearest};
    use rand::Rng;

    fn random(shape: [usize; 4], rng: &mut SeededRng, amp: f64) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-amp..amp)).collect()).unwrap()
    }

    fn small(n: usize) -> ModelConfig {
        ModelConfig { n, features: 8, ..Default::default() }
    }

    #[test]
    fn output_shapes_recurse() {
        let m = MsmModel::new(small(3), &mut seeded_rng(1)).unwrap();
        let outs = msm_forward(&Tensor::zeros([1, 1, 8, 8]), &m).unwrap();
        let sizes: Vec<_> = outs.iter().map(|t| t.h()).collect();
        assert_eq!(sizes, vec![16, 32, 64]);
        let m1 = MsmModel::zeros(small(1)).unwrap();
        assert_eq!(msm_forward(&Tensor::zeros([1, 1, 4, 5]), &m1).unwrap().len(), 1);
        assert!(MsmModel::zeros(small(0)).is_err());
        assert!(msm_forward(&Tensor::zeros([1, 1, 3, 8]), &m1).is_err());
    }

    #[test]
    fn sixteen_times_chain() {
        let m = MsmModel::zeros(ModelConfig { n: 4, features: 4, source_cell_size: 8.0, ..Default::default() }).unwrap();
        assert_eq!(m.manifest.stage_input_cell_sizes, vec![8.0, 4.0, 2.0, 1.0]);
        let outs = msm_forward(&Tensor::zeros([1, 1, 4, 4]), &m).unwrap();
        assert_eq!(outs[3].shape(), [1, 1, 64, 64]);
    }

    #[test]
    fn skip_identity_through_chain() {
        let mut rng = seeded_rng(2);
        let mut m = MsmModel::new(small(3), &mut rng).unwrap();
        m.set_normalization(Normalization { offset: 50.0, scale: 7.0 });
        for s in &mut m.subnets {
            s.zero_residual();
        }
        let x = random([1, 1, 5, 4], &mut rng, 100.0);
        for (i, out) in msm_forward(&x, &m).unwrap().iter().enumerate() {
            assert_eq!(out, &upsample_nearest(&x, 1 << (i + 1)));
        }
    }

    #[test]
    fn entry_stage_arithmetic() {
        let m = MsmModel::zeros(ModelConfig { n: 3, features: 4, source_cell_size: 4.0, ..Default::default() }).unwrap();
        assert_eq!(m.entry_stage(4.0).unwrap(), 0);
        assert_eq!(m.entry_stage(2.0).unwrap(), 1);
        assert_eq!(m.entry_stage(1.0).unwrap(), 2);
        assert!(matches!(m.entry_stage(0.5), Err(Error::Stage(_))));
        assert!(matches!(m.entry_stage(8.0), Err(Error::Stage(_))));
        assert!(matches!(m.entry_stage(3.0), Err(Error::Stage(_))));
    }

    #[test]
    fn loss_values() {
        let mut rng = seeded_rng(3);
        let a = random([2, 1, 4, 4], &mut rng, 1.0);
        let b = random([2, 1, 8, 8], &mut rng, 1.0);
        assert_eq!(multiscale_loss(&[a.clone(), b.clone()], &[a.clone(), b.clone()]).unwrap(), 0.0);
        let c = 0.375;
        let l = multiscale_loss(&[a.map(|v| v + c), b.map(|v| v - c)], &[a.clone(), b.clone()]).unwrap();
        assert!((l - 2.0 * c).abs() <= 1e-12);
        assert!(multiscale_loss(&[a.clone()], &[b.clone()]).is_err());
        assert!(multiscale_loss(&[a.clone()], &[a.clone(), b]).is_err());
    }

    #[test]
    fn loss_permutation_invariant() {
        let mut rng = seeded_rng(4);
        let r = random([1, 1, 6, 6], &mut rng, 1.0);
        let t = random([1, 1, 6, 6], &mut rng, 1.0);
        let l0 = multiscale_loss(&[r.clone()], &[t.clone()]).unwrap();
        let mut perm: Vec<usize> = (0..36).collect();
        perm.reverse();
        perm.swap(3, 17);
        let pr = Tensor::from_vec(r.shape(), perm.iter().map(|&i| r.data()[i]).collect()).unwrap();
        let pt = Tensor::from_vec(t.shape(), perm.iter().map(|&i| t.data()[i]).collect()).unwrap();
        let l1 = multiscale_loss(&[pr], &[pt]).unwrap();
        assert!((l0 - l1).abs() <= 1e-14);
    }

    #[test]
    fn end_to_end_gradient_check() {
        let mut rng = seeded_rng(5);
        let m = MsmModel::new(ModelConfig { n: 2, features: 4, s: 2, ..Default::default() }, &mut rng).unwrap();
        let x = random([1, 1, 4, 4], &mut rng, 1.0);
        let truths = vec![random([1, 1, 8, 8], &mut rng, 1.0), random([1, 1, 16, 16], &mut rng, 1.0)];
        let loss_of = |mm: &MsmModel, xx: &Tensor| multiscale_loss(&msm_forward(xx, mm).unwrap(), &truths).unwrap();

        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone(), true);
        let nodes: Vec<_> = m.parameters().iter().map(|p| tape.leaf(p.value.clone(), true)).collect();
        let outs = m.forward_graph(&mut tape, &xv, &nodes, 0, 2).unwrap();
        let loss = multiscale_loss_tape(&mut tape, &outs, &truths).unwrap();
        assert!((tape.get(loss).data()[0] - loss_of(&m, &x)).abs() <= 1e-12);
        let grads = tape.backward(loss).unwrap();

        let r = check_entries(&x, grads.get(xv).unwrap(), 0..x.len(), 1e-5, 1e-6, |xp| loss_of(&m, xp));
        assert!(r.max_rel_err <= 1e-4, "input: {r:?}");
        for (k, node) in nodes.iter().enumerate() {
            let val = m.parameters()[k].value.clone();
            let stride = (val.len() / 6).max(1);
            let r = check_entries(&val, grads.get(*node).unwrap(), (0..val.len()).step_by(stride), 1e-5, 1e-6, |wp| {
                let mut q = m.clone();
                q.parameters_mut()[k].value = wp.clone();
                loss_of(&q, &x)
            });
            assert!(r.max_rel_err <= 1e-4, "param {}: {r:?}", m.parameters()[k].name);
        }
    }
}
