use rayon::prelude::*;

use super::{Shape, Tensor};
use crate::error::{Error, Result};

/// Kernel `(c_out, c_in, k, k)` plus one bias per output channel.
///
/// Depthwise layers store `c_in = 1` and are run with `groups = c_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvWeights {
    pub kernel: Tensor,
    pub bias: Vec<f32>,
}

impl ConvWeights {
    pub fn new(kernel: Tensor, bias: Vec<f32>) -> Result<Self> {
        let s = kernel.shape();
        if s.h != s.w || !(s.h == 1 || s.h == 3) {
            return Err(Error::shape(format!("conv kernel must be 1x1 or 3x3, got {s}")));
        }
        if bias.len() != s.n {
            return Err(Error::shape(format!("conv bias has {} entries for kernel {s}", bias.len())));
        }
        Ok(ConvWeights { kernel, bias })
    }

    pub fn zeros(c_out: usize, c_in: usize, k: usize) -> Self {
        ConvWeights { kernel: Tensor::zeros([c_out, c_in, k, k]), bias: vec![0.0; c_out] }
    }

    /// 1x1 kernel whose `(o, o)` taps are one.
    pub fn identity_1x1(c: usize) -> Self {
        let mut w = Self::zeros(c, c, 1);
        for o in 0..c {
            w.kernel.set(o, o, 0, 0, 1.0);
        }
        w
    }

    pub fn c_out(&self) -> usize {
        self.kernel.shape().n
    }

    pub fn c_in(&self) -> usize {
        self.kernel.shape().c
    }

    pub fn k(&self) -> usize {
        self.kernel.shape().h
    }

    pub fn param_count(&self) -> usize {
        self.kernel.len() + self.bias.len()
    }
}

/// Stride-1 cross-correlation with `padding` zero pixels on every side.
///
/// Each output element starts at its bias and accumulates input channels in
/// order, taps row-major within a channel.
#[allow(clippy::needless_range_loop)]
pub fn conv2d(input: &Tensor, w: &ConvWeights, padding: usize, groups: usize) -> Result<Tensor> {
    let s = input.shape();
    let ks = w.kernel.shape();
    let k = ks.h;
    if groups == 0 || s.c != groups * ks.c || !ks.n.is_multiple_of(groups) {
        return Err(Error::shape(format!("conv2d: input {s} incompatible with kernel {ks} (groups {groups})")));
    }
    if s.h + 2 * padding < k || s.w + 2 * padding < k {
        return Err(Error::shape(format!("conv2d: input {s} smaller than kernel {ks} with padding {padding}")));
    }
    let out_h = s.h + 2 * padding - k + 1;
    let out_w = s.w + 2 * padding - k + 1;
    let c_out = ks.n;
    let c_in = ks.c;
    let out_per_group = c_out / groups;

    // Zero-padded copies of the input planes. Rows are kept at the padded
    // width so a whole output plane is one strided sweep; two trailing zeros
    // cover the tap offsets read past the last row by the discarded columns.
    let pw = s.w + 2 * padding;
    let ph = s.h + 2 * padding;
    let padded_len = ph * pw + k;
    let padded: Vec<f32> = if padding == 0 && k == 1 {
        Vec::new()
    } else {
        let mut buf = vec![0.0f32; s.n * s.c * padded_len];
        for (pi, dst) in buf.chunks_mut(padded_len).enumerate() {
            let src = &input.data()[pi * s.plane()..(pi + 1) * s.plane()];
            for y in 0..s.h {
                let row = (y + padding) * pw + padding;
                dst[row..row + s.w].copy_from_slice(&src[y * s.w..(y + 1) * s.w]);
            }
        }
        buf
    };

    let out_shape = Shape::new(s.n, c_out, out_h, out_w);
    let mut out = vec![0.0f32; out_shape.numel()];
    let kernel = w.kernel.data();
    let taps = k * k;

    out.par_chunks_mut(out_h * out_w).enumerate().for_each(|(plane_idx, dst)| {
        let n = plane_idx / c_out;
        let o = plane_idx % c_out;
        let first_in = (o / out_per_group) * c_in;
        let wk = &kernel[o * c_in * taps..(o + 1) * c_in * taps];
        if padding == 0 && k == 1 {
            dst.fill(w.bias[o]);
            for ci in 0..c_in {
                let src = input.plane(n, first_in + ci);
                let kv = wk[ci];
                for (d, &x) in dst.iter_mut().zip(src) {
                    *d += kv * x;
                }
            }
            return;
        }
        // Accumulate at padded width, then compact the valid columns.
        let span = out_h * pw;
        let mut acc = vec![w.bias[o]; span];
        let plane_of = |ci: usize| {
            let pi = n * s.c + first_in + ci;
            &padded[pi * padded_len..(pi + 1) * padded_len]
        };
        if k == 3 {
            let mut ci = 0;
            while ci + 2 <= c_in {
                accumulate3x3_pair(&mut acc, plane_of(ci), plane_of(ci + 1), &wk[ci * 9..(ci + 2) * 9], pw);
                ci += 2;
            }
            if ci < c_in {
                accumulate3x3(&mut acc, plane_of(ci), &wk[ci * 9..(ci + 1) * 9], pw);
            }
        } else {
            for ci in 0..c_in {
                let kv = wk[ci];
                for (d, &x) in acc.iter_mut().zip(plane_of(ci)) {
                    *d += kv * x;
                }
            }
        }
        for y in 0..out_h {
            dst[y * out_w..(y + 1) * out_w].copy_from_slice(&acc[y * pw..y * pw + out_w]);
        }
    });
    Tensor::new(out_shape, out)
}

/// `acc[j] += Σ_t wt[t] * src[j + off_t]`, taps added one at a time in
/// row-major order.
#[inline]
fn accumulate3x3(acc: &mut [f32], src: &[f32], wt: &[f32], pw: usize) {
    let n = acc.len();
    let r0 = &src[..n + 2];
    let r1 = &src[pw..pw + n + 2];
    let r2 = &src[2 * pw..2 * pw + n + 2];
    let [w0, w1, w2, w3, w4, w5, w6, w7, w8] = [wt[0], wt[1], wt[2], wt[3], wt[4], wt[5], wt[6], wt[7], wt[8]];
    for j in 0..n {
        let mut a = acc[j];
        a += w0 * r0[j];
        a += w1 * r0[j + 1];
        a += w2 * r0[j + 2];
        a += w3 * r1[j];
        a += w4 * r1[j + 1];
        a += w5 * r1[j + 2];
        a += w6 * r2[j];
        a += w7 * r2[j + 1];
        a += w8 * r2[j + 2];
        acc[j] = a;
    }
}

/// Two consecutive input channels in one sweep; per element the additions
/// happen in exactly the order two `accumulate3x3` calls would make them.
#[inline]
fn accumulate3x3_pair(acc: &mut [f32], a: &[f32], b: &[f32], wt: &[f32], pw: usize) {
    let n = acc.len();
    let (a0, a1, a2) = (&a[..n + 2], &a[pw..pw + n + 2], &a[2 * pw..2 * pw + n + 2]);
    let (b0, b1, b2) = (&b[..n + 2], &b[pw..pw + n + 2], &b[2 * pw..2 * pw + n + 2]);
    let w: [f32; 18] = wt[..18].try_into().expect("two 3x3 kernels");
    for j in 0..n {
        let mut s = acc[j];
        s += w[0] * a0[j];
        s += w[1] * a0[j + 1];
        s += w[2] * a0[j + 2];
        s += w[3] * a1[j];
        s += w[4] * a1[j + 1];
        s += w[5] * a1[j + 2];
        s += w[6] * a2[j];
        s += w[7] * a2[j + 1];
        s += w[8] * a2[j + 2];
        s += w[9] * b0[j];
        s += w[10] * b0[j + 1];
        s += w[11] * b0[j + 2];
        s += w[12] * b1[j];
        s += w[13] * b1[j + 1];
        s += w[14] * b1[j + 2];
        s += w[15] * b2[j];
        s += w[16] * b2[j + 1];
        s += w[17] * b2[j + 2];
        acc[j] = s;
    }
}
