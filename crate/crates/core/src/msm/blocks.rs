//! Information distillation blocks and the 2x reconstruction subnetwork.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{he_init, Eager, Graph, Parameter, SeededRng, Tensor};

/// A convolution's weight and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl ConvLayer {
    /// `[cout, cin, k, k]` convolution.
    fn conv(name: &str, cin: usize, cout: usize, k: usize, rng: Option<&mut SeededRng>) -> Result<Self> {
        let shape = [cout, cin, k, k];
        let weight = match rng {
            Some(rng) => Parameter::new(format!("{name}.weight"), he_init(shape, cin * k * k, rng)?),
            None => Parameter::zeros(format!("{name}.weight"), shape),
        };
        Ok(Self { weight, bias: Parameter::zeros(format!("{name}.bias"), [cout, 1, 1, 1]) })
    }

    /// `[cin, cout, 4, 4]` stride-2 transposed convolution. Each output cell
    /// receives `cin * 4` taps, which is used as the He fan-in.
    fn up(name: &str, cin: usize, cout: usize, rng: Option<&mut SeededRng>) -> Result<Self> {
        let shape = [cin, cout, 4, 4];
        let weight = match rng {
            Some(rng) => Parameter::new(format!("{name}.weight"), he_init(shape, cin * 4, rng)?),
            None => Parameter::zeros(format!("{name}.weight"), shape),
        };
        Ok(Self { weight, bias: Parameter::zeros(format!("{name}.bias"), [cout, 1, 1, 1]) })
    }

    fn params(&self) -> [&Parameter; 2] {
        [&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> [&mut Parameter; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

/// Six 3x3 convolutions with a channel split after the third, and a 1x1
/// bottleneck over `concat(keep, conv6)`.
///
/// With `features = F` and split divisor `s`: conv1-3 are `F -> F`; the first
/// `F/s` channels are kept aside; conv4 maps the remaining `F - F/s` channels
/// to `F`; conv5-6 are `F -> F`; the bottleneck maps `F/s + F` back to `F`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdbParams {
    pub convs: Vec<ConvLayer>,
    pub bottleneck: ConvLayer,
    pub split: usize,
}

/// Number of parameter tensors in one IDB.
pub const IDB_PARAMS: usize = 14;
/// Number of parameter tensors in one subnetwork.
pub const SUBNET_PARAMS: usize = 4 + 2 * IDB_PARAMS + 2;

fn check_split(features: usize, split: usize) -> Result<()> {
    if split == 0 || features % split != 0 || features / split == 0 {
        return Err(Error::Parameter(format!("split divisor {split} must divide feature width {features}")));
    }
    Ok(())
}

impl IdbParams {
    pub fn new(prefix: &str, features: usize, split: usize, mut rng: Option<&mut SeededRng>) -> Result<Self> {
        check_split(features, split)?;
        let keep = features / split;
        let pass = features - keep;
        let mut convs = Vec::with_capacity(6);
        for i in 0..6 {
            let cin = if i == 3 { pass } else { features };
            convs.push(ConvLayer::conv(&format!("{prefix}.conv{}", i + 1), cin, features, 3, rng.as_deref_mut())?);
        }
        let bottleneck = ConvLayer::conv(&format!("{prefix}.bottleneck"), keep + features, features, 1, rng)?;
        Ok(Self { convs, bottleneck, split })
    }

    pub fn features(&self) -> usize {
        self.convs[0].weight.shape()[0]
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        self.convs.iter().chain([&self.bottleneck]).flat_map(|c| c.params()).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.convs.iter_mut().chain([&mut self.bottleneck]).flat_map(|c| c.params_mut()).collect()
    }
}

/// Runs an IDB whose 14 parameter nodes are `p` (weight, bias pairs in
/// declaration order).
pub fn idb_graph<G: Graph>(g: &mut G, x: &G::Node, p: &[G::Node], split: usize) -> Result<G::Node> {
    let c = g.value(x).c();
    let expected = g.value(&p[0]).shape()[1];
    if c != expected {
        return Err(Error::Shape(format!("IDB expects {expected} channels, got {c}")));
    }
    let mut h = x.clone();
    for i in 0..3 {
        let y = g.conv2d(&h, &p[2 * i], &p[2 * i + 1])?;
        h = g.relu(&y);
    }
    let features = g.value(&h).c();
    let keep_c = features / split;
    let keep = g.narrow_channels(&h, 0, keep_c)?;
    let mut deep = g.narrow_channels(&h, keep_c, features - keep_c)?;
    for i in 3..6 {
        let y = g.conv2d(&deep, &p[2 * i], &p[2 * i + 1])?;
        deep = g.relu(&y);
    }
    let joined = g.concat_channels(&keep, &deep)?;
    g.conv2d(&joined, &p[12], &p[13])
}

pub fn idb_forward(x: &Tensor, p: &IdbParams) -> Result<Tensor> {
    let mut g = Eager;
    let nodes: Vec<_> = p.parameters().into_iter().map(|q| g.constant(q.value.clone())).collect();
    let xn = g.constant(x.clone());
    let out = idb_graph(&mut g, &xn, &nodes, p.split)?;
    Ok(std::rc::Rc::try_unwrap(out).unwrap_or_else(|rc| (*rc).clone()))
}

/// Affine map applied to elevations entering the residual branch:
/// the branch sees `(x - offset) / scale` and its output is multiplied by
/// `scale`. The skip path always carries raw elevations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub offset: f64,
    pub scale: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self { offset: 0.0, scale: 1.0 }
    }
}

/// One 2x stage: two head convolutions, two IDBs, and a transposed
/// convolution projecting `F` channels to a 1-channel residual at twice the
/// resolution, added to the NN-upsampled input.
#[derive(Debug, Clone, PartialEq)]
pub struct SubnetParams {
    pub head: Vec<ConvLayer>,
    pub idbs: Vec<IdbParams>,
    pub up: ConvLayer,
    pub norm: Normalization,
}

impl SubnetParams {
    pub fn new(
        prefix: &str,
        features: usize,
        split: usize,
        norm: Normalization,
        mut rng: Option<&mut SeededRng>,
    ) -> Result<Self> {
        let head = vec![
            ConvLayer::conv(&format!("{prefix}.head1"), 1, features, 3, rng.as_deref_mut())?,
            ConvLayer::conv(&format!("{prefix}.head2"), features, features, 3, rng.as_deref_mut())?,
        ];
        let idbs = vec![
            IdbParams::new(&format!("{prefix}.idb1"), features, split, rng.as_deref_mut())?,
            IdbParams::new(&format!("{prefix}.idb2"), features, split, rng.as_deref_mut())?,
        ];
        let up = ConvLayer::up(&format!("{prefix}.up"), features, 1, rng)?;
        Ok(Self { head, idbs, up, norm })
    }

    pub fn features(&self) -> usize {
        self.head[0].weight.shape()[0]
    }

    pub fn split(&self) -> usize {
        self.idbs[0].split
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        let mut v: Vec<&Parameter> = self.head.iter().flat_map(|c| c.params()).collect();
        for idb in &self.idbs {
            v.extend(idb.parameters());
        }
        v.extend(self.up.params());
        v
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v: Vec<&mut Parameter> = self.head.iter_mut().flat_map(|c| c.params_mut()).collect();
        for idb in &mut self.idbs {
            v.extend(idb.parameters_mut());
        }
        v.extend(self.up.params_mut());
        v
    }

    /// Zeroes the transposed-convolution weight and bias, which makes the
    /// residual exactly zero.
    pub fn zero_residual(&mut self) {
        self.up.weight.value.fill(0.0);
        self.up.bias.value.fill(0.0);
    }
}

/// Runs one subnetwork whose [`SUBNET_PARAMS`] parameter nodes are `p`.
pub fn subnet_graph<G: Graph>(
    g: &mut G,
    x: &G::Node,
    p: &[G::Node],
    split: usize,
    norm: Normalization,
) -> Result<G::Node> {
    let c = g.value(x).c();
    if c != 1 {
        return Err(Error::Shape(format!("subnetwork input must have 1 channel, got {c}")));
    }
    let xin = g.affine(x, 1.0 / norm.scale, -norm.offset / norm.scale);
    let y = g.conv2d(&xin, &p[0], &p[1])?;
    let y = g.relu(&y);
    let y = g.conv2d(&y, &p[2], &p[3])?;
    let mut h = g.relu(&y);
    for k in 0..2 {
        let base = 4 + k * IDB_PARAMS;
        h = idb_graph(g, &h, &p[base..base + IDB_PARAMS], split)?;
    }
    let r = g.transposed_conv2d(&h, &p[SUBNET_PARAMS - 2], &p[SUBNET_PARAMS - 1])?;
    let r = g.affine(&r, norm.scale, 0.0);
    let skip = g.upsample_nearest(x, 2);
    g.add(&skip, &r)
}

pub fn subnet_forward(x: &Tensor, p: &SubnetParams) -> Result<Tensor> {
    let mut g = Eager;
    let nodes: Vec<_> = p.parameters().into_iter().map(|q| g.constant(q.value.clone())).collect();
    let xn = g.constant(x.clone());
    let out = subnet_graph(&mut g, &xn, &nodes, p.split(), p.norm)?;
    Ok(std::rc::Rc::try_unwrap(out).unwrap_or_else(|rc| (*rc).clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_entries;
    use crate::nn::{seeded_rng, upsample_nearest, Tape};
    use rand::Rng;

    fn random(shape: [usize; 4], rng: &mut SeededRng, amp: f64) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-amp..amp)).collect()).unwrap()
    }

    #[test]
    fn idb_default_plumbing() {
        let p = IdbParams::new("idb", 64, 4, None).unwrap();
        let shapes: Vec<_> = p.parameters().iter().map(|q| q.shape()).collect();
        assert_eq!(shapes[0], [64, 64, 3, 3]);
        assert_eq!(shapes[6], [64, 48, 3, 3]);
        assert_eq!(shapes[10], [64, 64, 3, 3]);
        assert_eq!(shapes[12], [64, 80, 1, 1]);
        assert_eq!(shapes.len(), IDB_PARAMS);
        assert!(IdbParams::new("idb", 64, 3, None).is_err());
    }

    #[test]
    fn zero_idb_gives_zero() {
        let p = IdbParams::new("idb", 8, 4, None).unwrap();
        let x = random([2, 8, 5, 3], &mut seeded_rng(1), 1.0);
        let y = idb_forward(&x, &p).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn idb_preserves_shape() {
        let mut rng = seeded_rng(2);
        let p = IdbParams::new("idb", 8, 2, Some(&mut rng)).unwrap();
        for (h, w) in [(1, 1), (4, 7), (9, 2)] {
            let x = random([1, 8, h, w], &mut rng, 1.0);
            assert_eq!(idb_forward(&x, &p).unwrap().shape(), [1, 8, h, w]);
        }
        assert!(idb_forward(&Tensor::zeros([1, 4, 3, 3]), &p).is_err());
    }

    #[test]
    fn idb_gradients_match_finite_differences() {
        let mut rng = seeded_rng(3);
        let p = IdbParams::new("idb", 8, 4, Some(&mut rng)).unwrap();
        let x = random([1, 8, 5, 5], &mut rng, 1.0);
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone(), true);
        let nodes: Vec<_> = p.parameters().iter().map(|q| tape.leaf(q.value.clone(), true)).collect();
        let y = idb_graph(&mut tape, &xv, &nodes, 4).unwrap();
        let loss = tape.sum_all(y);
        let grads = tape.backward(loss).unwrap();
        let r = check_entries(&x, grads.get(xv).unwrap(), 0..x.len(), 1e-5, 1e-6, |xp| {
            idb_forward(xp, &p).unwrap().sum()
        });
        assert!(r.max_rel_err <= 1e-4, "{r:?}");
        for (k, node) in nodes.iter().enumerate() {
            let val = &p.parameters()[k].value;
            let r = check_entries(val, grads.get(*node).unwrap(), 0..val.len().min(40), 1e-5, 1e-6, |wp| {
                let mut q = p.clone();
                q.parameters_mut()[k].value = wp.clone();
                idb_forward(&x, &q).unwrap().sum()
            });
            assert!(r.max_rel_err <= 1e-4, "param {k}: {r:?}");
        }
    }

    #[test]
    fn zero_residual_subnet_is_nn_upsampling() {
        let mut rng = seeded_rng(4);
        let mut p = SubnetParams::new("s", 8, 4, Normalization { offset: 3.0, scale: 2.0 }, Some(&mut rng)).unwrap();
        p.zero_residual();
        let x = random([2, 1, 5, 6], &mut rng, 10.0);
        let y = subnet_forward(&x, &p).unwrap();
        assert_eq!(y.shape(), [2, 1, 10, 12]);
        assert_eq!(y, upsample_nearest(&x, 2));
    }

    #[test]
    fn subnet_output_doubles_dims() {
        let mut rng = seeded_rng(5);
        let p = SubnetParams::new("s", 8, 4, Normalization::default(), Some(&mut rng)).unwrap();
        let x = random([1, 1, 3, 7], &mut rng, 1.0);
        assert_eq!(subnet_forward(&x, &p).unwrap().shape(), [1, 1, 6, 14]);
        assert!(subnet_forward(&Tensor::zeros([1, 2, 3, 3]), &p).is_err());
        assert_eq!(p.parameters().len(), SUBNET_PARAMS);
    }

    #[test]
    fn subnet_gradients_match_finite_differences() {
        let mut rng = seeded_rng(6);
        let p = SubnetParams::new("s", 8, 4, Normalization { offset: 1.0, scale: 2.0 }, Some(&mut rng)).unwrap();
        for size in [6, 8] {
            let x = random([1, 1, size, size], &mut rng, 3.0);
            let weights = random([1, 1, 2 * size, 2 * size], &mut rng, 1.0);
            let f = |q: &SubnetParams, xx: &Tensor| subnet_forward(xx, q).unwrap().dot(&weights);
            let mut tape = Tape::new();
            let xv = tape.leaf(x.clone(), true);
            let nodes: Vec<_> = p.parameters().iter().map(|q| tape.leaf(q.value.clone(), true)).collect();
            let y = subnet_graph(&mut tape, &xv, &nodes, 4, p.norm).unwrap();
            let loss = tape.weighted_sum(y, &weights).unwrap();
            let grads = tape.backward(loss).unwrap();
            let r = check_entries(&x, grads.get(xv).unwrap(), 0..x.len(), 1e-5, 1e-6, |xp| f(&p, xp));
            assert!(r.max_rel_err <= 1e-4, "input: {r:?}");
            for (k, node) in nodes.iter().enumerate() {
                let val = &p.parameters()[k].value;
                let stride = (val.len() / 8).max(1);
                let r = check_entries(val, grads.get(*node).unwrap(), (0..val.len()).step_by(stride), 1e-5, 1e-6, |wp| {
                    let mut q = p.clone();
                    q.parameters_mut()[k].value = wp.clone();
                    f(&q, &x)
                });
                assert!(r.max_rel_err <= 1e-4, "param {k}: {r:?}");
            }
        }
    }
}
