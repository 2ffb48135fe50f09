//! Eager tensor operations. The recording versions live on [`super::Tape`].

use super::kernels::{self, ConvDims, UpDims};
use super::Tensor;
use crate::error::{Error, Result};

fn conv_dims(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<ConvDims> {
    let [n, cin, h, w] = input.shape();
    let [cout, wcin, kh, kw] = weight.shape();
    if wcin != cin {
        return Err(Error::Shape(format!("conv2d: input has {cin} channels, weight expects {wcin}")));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::Shape(format!("conv2d: kernel {kh}x{kw} must be odd")));
    }
    bias.check_shape([cout, 1, 1, 1], "conv2d bias")?;
    Ok(ConvDims { n, cin, cout, h, w, kh, kw })
}

fn up_dims(input: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<UpDims> {
    let [n, cin, h, w] = input.shape();
    let [wcin, cout, kh, kw] = weight.shape();
    if wcin != cin || kh != 4 || kw != 4 {
        return Err(Error::Shape(format!(
            "transposed conv: weight {:?} incompatible with {cin} input channels (need [{cin}, C, 4, 4])",
            weight.shape()
        )));
    }
    if let Some(b) = bias {
        b.check_shape([cout, 1, 1, 1], "transposed conv bias")?;
    }
    Ok(UpDims { n, small_c: cin, large_c: cout, h, w })
}

/// Stride-1 convolution with zero padding `(k-1)/2` (shape preserving).
/// `weight` is `[Cout, Cin, kh, kw]` with odd `kh`, `kw`; `bias` is `[Cout, 1, 1, 1]`.
pub fn conv2d(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let d = conv_dims(input, weight, bias)?;
    let out = kernels::conv_forward(d, input.data(), weight.data(), bias.data());
    Tensor::from_vec([d.n, d.cout, d.h, d.w], out)
}

pub(crate) fn conv2d_grads(
    input: &Tensor,
    weight: &Tensor,
    gout: &Tensor,
    need_gx: bool,
) -> Result<(Option<Tensor>, Tensor, Tensor)> {
    let bias = Tensor::zeros([weight.shape()[0], 1, 1, 1]);
    let d = conv_dims(input, weight, &bias)?;
    let g = kernels::conv_backward(d, input.data(), weight.data(), gout.data(), need_gx);
    Ok((
        g.gx.map(|v| Tensor::from_vec(input.shape(), v)).transpose()?,
        Tensor::from_vec(weight.shape(), g.gw)?,
        Tensor::from_vec(bias.shape(), g.gb)?,
    ))
}

/// Kernel-4, stride-2, padding-1 transposed convolution; output spatial
/// dimensions are exactly twice the input's. `weight` is `[Cin, Cout, 4, 4]`.
pub fn transposed_conv2d(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let d = up_dims(input, weight, Some(bias))?;
    let out = kernels::tconv_forward(d, input.data(), weight.data(), bias.data());
    Tensor::from_vec([d.n, d.large_c, 2 * d.h, 2 * d.w], out)
}

/// The stride-2 convolution whose adjoint is [`transposed_conv2d`]:
/// `[N, Cout, 2H, 2W] -> [N, Cin, H, W]` with the same `[Cin, Cout, 4, 4]` weight.
pub fn conv2d_stride2(input: &Tensor, weight: &Tensor) -> Result<Tensor> {
    let [n, c, hh, ww] = input.shape();
    let [small_c, large_c, kh, kw] = weight.shape();
    if c != large_c || kh != 4 || kw != 4 || hh % 2 != 0 || ww % 2 != 0 {
        return Err(Error::Shape(format!(
            "strided conv: input {:?} incompatible with weight {:?}",
            input.shape(),
            weight.shape()
        )));
    }
    let d = UpDims { n, small_c, large_c, h: hh / 2, w: ww / 2 };
    Tensor::from_vec([n, small_c, d.h, d.w], kernels::down2_forward(d, input.data(), weight.data()))
}

pub(crate) fn transposed_conv2d_grads(
    input: &Tensor,
    weight: &Tensor,
    gout: &Tensor,
    need_gx: bool,
) -> Result<(Option<Tensor>, Tensor, Tensor)> {
    let d = up_dims(input, weight, None)?;
    let g = kernels::tconv_backward(d, input.data(), weight.data(), gout.data(), need_gx);
    Ok((
        g.gx.map(|v| Tensor::from_vec(input.shape(), v)).transpose()?,
        Tensor::from_vec(weight.shape(), g.gw)?,
        Tensor::from_vec([d.large_c, 1, 1, 1], g.gb)?,
    ))
}

/// Elementwise `max(0, x)`.
pub fn relu(t: &Tensor) -> Tensor {
    t.map(|v| if v > 0.0 || v.is_nan() { v } else { 0.0 })
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("add: {:?} vs {:?}", a.shape(), b.shape())));
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Tensor::from_vec(a.shape(), data)
}

/// Channels of `a` followed by channels of `b`.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let [n, ca, h, w] = a.shape();
    let [nb, cb, hb, wb] = b.shape();
    if (n, h, w) != (nb, hb, wb) {
        return Err(Error::Shape(format!("concat: {:?} vs {:?}", a.shape(), b.shape())));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    for i in 0..n {
        data.extend_from_slice(a.sample(i));
        data.extend_from_slice(b.sample(i));
    }
    Tensor::from_vec([n, ca + cb, h, w], data)
}

/// Channels `[start, start + len)`.
pub fn narrow_channels(t: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let [n, c, h, w] = t.shape();
    if start + len > c {
        return Err(Error::Shape(format!("narrow: channels {start}..{} of {c}", start + len)));
    }
    let plane = h * w;
    let mut data = Vec::with_capacity(n * len * plane);
    for i in 0..n {
        let s = t.sample(i);
        data.extend_from_slice(&s[start * plane..(start + len) * plane]);
    }
    Tensor::from_vec([n, len, h, w], data)
}

/// Splits off the first `C/s` channels (`keep`) from the remaining ones (`pass`).
pub fn split_channels(t: &Tensor, s: usize) -> Result<(Tensor, Tensor)> {
    let c = t.c();
    if s == 0 || c % s != 0 {
        return Err(Error::Shape(format!("split: divisor {s} does not divide {c} channels")));
    }
    let keep = c / s;
    Ok((narrow_channels(t, 0, keep)?, narrow_channels(t, keep, c - keep)?))
}

/// Nearest-neighbour spatial replication by an integer factor.
pub fn upsample_nearest(t: &Tensor, factor: usize) -> Tensor {
    let [n, c, h, w] = t.shape();
    let (oh, ow) = (h * factor, w * factor);
    let mut data = Vec::with_capacity(n * c * oh * ow);
    for plane in t.data().chunks(h * w) {
        for y in 0..oh {
            let row = &plane[(y / factor) * w..(y / factor + 1) * w];
            for x in 0..ow {
                data.push(row[x / factor]);
            }
        }
    }
    Tensor::from_vec([n, c, oh, ow], data).expect("shape by construction")
}

/// Adjoint of [`upsample_nearest`]: sums each `factor x factor` block.
pub(crate) fn upsample_nearest_adjoint(g: &Tensor, factor: usize) -> Tensor {
    let [n, c, oh, ow] = g.shape();
    let (h, w) = (oh / factor, ow / factor);
    let mut out = Tensor::zeros([n, c, h, w]);
    for (dst, src) in out.data_mut().chunks_mut(h * w).zip(g.data().chunks(oh * ow)) {
        for y in 0..oh {
            for x in 0..ow {
                dst[(y / factor) * w + x / factor] += src[y * ow + x];
            }
        }
    }
    out
}
