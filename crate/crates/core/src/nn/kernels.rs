//! Convolution kernels: im2col/col2im lowering onto `matrixmultiply` GEMM.
//!
//! Every kernel works one sample at a time. Batches are spread over the rayon
//! pool per sample, and weight gradients are reduced in sample order, so the
//! result does not depend on the number of worker threads.

use rayon::prelude::*;

/// Upper bound on the im2col scratch buffer, in elements.
const COLS_BUDGET: usize = 1 << 22;

#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a> MatRef<'a> {
    pub(crate) fn new(data: &'a [f64], rows: usize, cols: usize, rs: usize, cs: usize) -> Self {
        assert!(fits(data.len(), rows, cols, rs, cs), "matrix view out of bounds");
        Self { data, rows, cols, rs, cs }
    }

    pub(crate) fn dense(data: &'a [f64], rows: usize, cols: usize) -> Self {
        Self::new(data, rows, cols, cols, 1)
    }

    pub(crate) fn t(self) -> Self {
        Self { data: self.data, rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs }
    }
}

pub(crate) struct MatMut<'a> {
    data: &'a mut [f64],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a> MatMut<'a> {
    pub(crate) fn new(data: &'a mut [f64], rows: usize, cols: usize, rs: usize, cs: usize) -> Self {
        assert!(fits(data.len(), rows, cols, rs, cs), "matrix view out of bounds");
        Self { data, rows, cols, rs, cs }
    }

    pub(crate) fn dense(data: &'a mut [f64], rows: usize, cols: usize) -> Self {
        Self::new(data, rows, cols, cols, 1)
    }
}

fn fits(len: usize, rows: usize, cols: usize, rs: usize, cs: usize) -> bool {
    rows == 0 || cols == 0 || (rows - 1) * rs + (cols - 1) * cs < len
}

/// `c = a * b + beta * c`.
pub(crate) fn gemm(a: MatRef, b: MatRef, beta: f64, c: MatMut) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension");
    assert_eq!((c.rows, c.cols), (a.rows, b.cols), "gemm output shape");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let v = &mut c.data[i * c.rs + j * c.cs];
                *v = if beta == 0.0 { 0.0 } else { *v * beta };
            }
        }
        return;
    }
    // SAFETY: all three views were bounds-checked on construction and `c`
    // is uniquely borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.data.as_mut_ptr(),
            c.rs as isize,
            c.cs as isize,
        );
    }
}

/// Geometry of a strided, zero-padded convolution from an `in_h x in_w`
/// plane to an `out_h x out_w` plane.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Geom {
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad_h: usize,
    pub pad_w: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Geom {
    /// Stride-1, shape-preserving convolution with an odd kernel.
    pub(crate) fn same(h: usize, w: usize, kh: usize, kw: usize) -> Self {
        Self { kh, kw, stride: 1, pad_h: (kh - 1) / 2, pad_w: (kw - 1) / 2, in_h: h, in_w: w, out_h: h, out_w: w }
    }

    /// Kernel 4, stride 2, padding 1: maps `2h x 2w` down to `h x w`. Its
    /// adjoint is the exact-2x transposed convolution.
    pub(crate) fn down2(h: usize, w: usize) -> Self {
        Self { kh: 4, kw: 4, stride: 2, pad_h: 1, pad_w: 1, in_h: 2 * h, in_w: 2 * w, out_h: h, out_w: w }
    }

    fn taps(&self) -> usize {
        self.kh * self.kw
    }

    /// Output columns whose input index `ox*stride + k - pad` lies in `[0, in_w)`.
    fn valid_cols(&self, kx: usize) -> (usize, usize) {
        let (s, p) = (self.stride, self.pad_w);
        let lo = if kx >= p { 0 } else { (p - kx).div_ceil(s) };
        let hi = if self.in_w + p <= kx { 0 } else { ((self.in_w - 1 + p - kx) / s + 1).min(self.out_w) };
        (lo.min(hi), hi)
    }

    fn src_row(&self, oy: usize, ky: usize) -> Option<usize> {
        let iy = (oy * self.stride + ky).checked_sub(self.pad_h)?;
        (iy < self.in_h).then_some(iy)
    }

    /// Output rows per im2col band for `channels` input channels.
    fn band_rows(&self, channels: usize) -> usize {
        (COLS_BUDGET / (channels * self.taps() * self.out_w).max(1)).clamp(1, self.out_h.max(1))
    }
}

/// Lowers output rows `[oy0, oy1)` into a `(ch*kh*kw) x ((oy1-oy0)*out_w)` matrix.
pub(crate) fn im2col(g: &Geom, src: &[f64], ch: usize, oy0: usize, oy1: usize, cols: &mut [f64]) {
    let bw = (oy1 - oy0) * g.out_w;
    for c in 0..ch {
        let plane = &src[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let base = ((c * g.kh + ky) * g.kw + kx) * bw;
                let (lo, hi) = g.valid_cols(kx);
                for (j, oy) in (oy0..oy1).enumerate() {
                    let dst = &mut cols[base + j * g.out_w..base + (j + 1) * g.out_w];
                    let Some(iy) = g.src_row(oy, ky) else {
                        dst.fill(0.0);
                        continue;
                    };
                    let srow = &plane[iy * g.in_w..(iy + 1) * g.in_w];
                    dst[..lo].fill(0.0);
                    dst[hi..].fill(0.0);
                    if g.stride == 1 {
                        let ix0 = lo + kx - g.pad_w;
                        dst[lo..hi].copy_from_slice(&srow[ix0..ix0 + (hi - lo)]);
                    } else {
                        for ox in lo..hi {
                            dst[ox] = srow[ox * g.stride + kx - g.pad_w];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates the column matrix back into `dst`.
pub(crate) fn col2im(g: &Geom, cols: &[f64], ch: usize, oy0: usize, oy1: usize, dst: &mut [f64]) {
    let bw = (oy1 - oy0) * g.out_w;
    for c in 0..ch {
        let plane = &mut dst[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let base = ((c * g.kh + ky) * g.kw + kx) * bw;
                let (lo, hi) = g.valid_cols(kx);
                for (j, oy) in (oy0..oy1).enumerate() {
                    let Some(iy) = g.src_row(oy, ky) else { continue };
                    let src = &cols[base + j * g.out_w..base + (j + 1) * g.out_w];
                    let drow = &mut plane[iy * g.in_w..(iy + 1) * g.in_w];
                    for ox in lo..hi {
                        drow[ox * g.stride + kx - g.pad_w] += src[ox];
                    }
                }
            }
        }
    }
}

fn bands(total: usize, band: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..total).step_by(band.max(1)).map(move |y0| (y0, (y0 + band).min(total)))
}

fn sum_in_order(parts: impl Iterator<Item = Vec<f64>>, len: usize) -> Vec<f64> {
    let mut acc = vec![0.0; len];
    for p in parts {
        for (a, b) in acc.iter_mut().zip(&p) {
            *a += b;
        }
    }
    acc
}

fn channel_sums(x: &[f64], ch: usize, plane: usize) -> Vec<f64> {
    (0..ch).map(|c| x[c * plane..(c + 1) * plane].iter().sum()).collect()
}

fn add_bias(out: &mut [f64], bias: &[f64], plane: usize) {
    for (c, &b) in bias.iter().enumerate() {
        if b != 0.0 {
            out[c * plane..(c + 1) * plane].iter_mut().for_each(|v| *v += b);
        }
    }
}

/// Dimensions of a stride-1 "same" convolution.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvDims {
    pub n: usize,
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
}

pub(crate) fn conv_forward(d: ConvDims, x: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let g = Geom::same(d.h, d.w, d.kh, d.kw);
    let (hw, k) = (d.h * d.w, d.cin * d.kh * d.kw);
    let wm = MatRef::dense(weight, d.cout, k);
    let mut out = vec![0.0; d.n * d.cout * hw];
    out.par_chunks_mut(d.cout * hw).zip(x.par_chunks(d.cin * hw)).for_each(|(o, xs)| {
        if d.kh == 1 && d.kw == 1 {
            gemm(wm, MatRef::dense(xs, d.cin, hw), 0.0, MatMut::dense(o, d.cout, hw));
        } else {
            let band = g.band_rows(d.cin);
            let mut cols = vec![0.0; k * band * d.w];
            for (y0, y1) in bands(d.h, band) {
                let bw = (y1 - y0) * d.w;
                im2col(&g, xs, d.cin, y0, y1, &mut cols);
                gemm(
                    wm,
                    MatRef::dense(&cols[..k * bw], k, bw),
                    0.0,
                    MatMut::new(&mut o[y0 * d.w..], d.cout, bw, hw, 1),
                );
            }
        }
        add_bias(o, bias, hw);
    });
    out
}

pub(crate) struct RawGrads {
    pub gx: Option<Vec<f64>>,
    pub gw: Vec<f64>,
    pub gb: Vec<f64>,
}

pub(crate) fn conv_backward(d: ConvDims, x: &[f64], weight: &[f64], gout: &[f64], need_gx: bool) -> RawGrads {
    let g = Geom::same(d.h, d.w, d.kh, d.kw);
    let (hw, k) = (d.h * d.w, d.cin * d.kh * d.kw);
    let wm = MatRef::dense(weight, d.cout, k);
    let per_sample: Vec<(Option<Vec<f64>>, Vec<f64>, Vec<f64>)> = x
        .par_chunks(d.cin * hw)
        .zip(gout.par_chunks(d.cout * hw))
        .map(|(xs, go)| {
            let mut gw = vec![0.0; d.cout * k];
            let gb = channel_sums(go, d.cout, hw);
            let mut gx = need_gx.then(|| vec![0.0; d.cin * hw]);
            if d.kh == 1 && d.kw == 1 {
                let gm = MatRef::dense(go, d.cout, hw);
                gemm(gm, MatRef::dense(xs, d.cin, hw).t(), 0.0, MatMut::dense(&mut gw, d.cout, k));
                if let Some(gx) = gx.as_mut() {
                    gemm(wm.t(), gm, 0.0, MatMut::dense(gx, d.cin, hw));
                }
            } else {
                let band = g.band_rows(d.cin);
                let mut cols = vec![0.0; k * band * d.w];
                for (y0, y1) in bands(d.h, band) {
                    let bw = (y1 - y0) * d.w;
                    let gband = MatRef::new(&go[y0 * d.w..], d.cout, bw, hw, 1);
                    im2col(&g, xs, d.cin, y0, y1, &mut cols);
                    gemm(gband, MatRef::dense(&cols[..k * bw], k, bw).t(), 1.0, MatMut::dense(&mut gw, d.cout, k));
                    if let Some(gx) = gx.as_mut() {
                        gemm(wm.t(), gband, 0.0, MatMut::dense(&mut cols[..k * bw], k, bw));
                        col2im(&g, &cols[..k * bw], d.cin, y0, y1, gx);
                    }
                }
            }
            (gx, gw, gb)
        })
        .collect();
    let gx = need_gx.then(|| per_sample.iter().flat_map(|p| p.0.as_ref().unwrap().iter().copied()).collect());
    let gw = sum_in_order(per_sample.iter().map(|p| p.1.clone()), d.cout * k);
    let gb = sum_in_order(per_sample.into_iter().map(|p| p.2), d.cout);
    RawGrads { gx, gw, gb }
}

/// Dimensions of the 4x4 / stride-2 / pad-1 pair. `h x w` is the small
/// plane, `2h x 2w` the large one. Weights are `[small_c, large_c, 4, 4]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct UpDims {
    pub n: usize,
    pub small_c: usize,
    pub large_c: usize,
    pub h: usize,
    pub w: usize,
}

/// Transposed convolution: small `[n, small_c, h, w]` to large `[n, large_c, 2h, 2w]`.
pub(crate) fn tconv_forward(d: UpDims, x: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let g = Geom::down2(d.h, d.w);
    let (hw, big) = (d.h * d.w, 4 * d.h * d.w);
    let k = d.large_c * 16;
    let wm = MatRef::dense(weight, d.small_c, k);
    let mut out = vec![0.0; d.n * d.large_c * big];
    out.par_chunks_mut(d.large_c * big).zip(x.par_chunks(d.small_c * hw)).for_each(|(o, xs)| {
        let band = g.band_rows(d.large_c);
        let mut cols = vec![0.0; k * band * d.w];
        for (y0, y1) in bands(d.h, band) {
            let bw = (y1 - y0) * d.w;
            gemm(
                wm.t(),
                MatRef::new(&xs[y0 * d.w..], d.small_c, bw, hw, 1),
                0.0,
                MatMut::dense(&mut cols[..k * bw], k, bw),
            );
            col2im(&g, &cols[..k * bw], d.large_c, y0, y1, o);
        }
        add_bias(o, bias, big);
    });
    out
}

/// Strided convolution: large `[n, large_c, 2h, 2w]` to small `[n, small_c, h, w]`.
/// This is the adjoint of [`tconv_forward`] (without bias).
pub(crate) fn down2_forward(d: UpDims, y: &[f64], weight: &[f64]) -> Vec<f64> {
    let g = Geom::down2(d.h, d.w);
    let (hw, big) = (d.h * d.w, 4 * d.h * d.w);
    let k = d.large_c * 16;
    let wm = MatRef::dense(weight, d.small_c, k);
    let mut out = vec![0.0; d.n * d.small_c * hw];
    out.par_chunks_mut(d.small_c * hw).zip(y.par_chunks(d.large_c * big)).for_each(|(o, ys)| {
        let band = g.band_rows(d.large_c);
        let mut cols = vec![0.0; k * band * d.w];
        for (y0, y1) in bands(d.h, band) {
            let bw = (y1 - y0) * d.w;
            im2col(&g, ys, d.large_c, y0, y1, &mut cols);
            gemm(wm, MatRef::dense(&cols[..k * bw], k, bw), 0.0, MatMut::new(&mut o[y0 * d.w..], d.small_c, bw, hw, 1));
        }
    });
    out
}

pub(crate) fn tconv_backward(d: UpDims, x: &[f64], weight: &[f64], gout: &[f64], need_gx: bool) -> RawGrads {
    let g = Geom::down2(d.h, d.w);
    let (hw, big) = (d.h * d.w, 4 * d.h * d.w);
    let k = d.large_c * 16;
    let wm = MatRef::dense(weight, d.small_c, k);
    let per_sample: Vec<(Option<Vec<f64>>, Vec<f64>, Vec<f64>)> = x
        .par_chunks(d.small_c * hw)
        .zip(gout.par_chunks(d.large_c * big))
        .map(|(xs, go)| {
            let mut gw = vec![0.0; d.small_c * k];
            let gb = channel_sums(go, d.large_c, big);
            let mut gx = need_gx.then(|| vec![0.0; d.small_c * hw]);
            let band = g.band_rows(d.large_c);
            let mut cols = vec![0.0; k * band * d.w];
            for (y0, y1) in bands(d.h, band) {
                let bw = (y1 - y0) * d.w;
                im2col(&g, go, d.large_c, y0, y1, &mut cols);
                let cm = MatRef::dense(&cols[..k * bw], k, bw);
                gemm(MatRef::new(&xs[y0 * d.w..], d.small_c, bw, hw, 1), cm.t(), 1.0, MatMut::dense(&mut gw, d.small_c, k));
                if let Some(gx) = gx.as_mut() {
                    gemm(wm, cm, 0.0, MatMut::new(&mut gx[y0 * d.w..], d.small_c, bw, hw, 1));
                }
            }
            (gx, gw, gb)
        })
        .collect();
    let gx = need_gx.then(|| per_sample.iter().flat_map(|p| p.0.as_ref().unwrap().iter().copied()).collect());
    let gw = sum_in_order(per_sample.iter().map(|p| p.1.clone()), d.small_c * k);
    let gb = sum_in_order(per_sample.into_iter().map(|p| p.2), d.large_c);
    RawGrads { gx, gw, gb }
}
