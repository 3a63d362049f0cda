//! Window self-attention and the non-volatile sparse masking attention block.
//!
//! The block splits channels in two. The first half attends over tokens
//! sampled sparsely from an expanded window (SLWA), the second half over the
//! dense local window (DLWA). Both paths see exactly `p²` tokens per window,
//! so the sparse path widens the receptive field at the cost of a plain
//! local window.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{conv2d, ConvWeights, Shape, Tensor};
use crate::window::{selection_indices, Mask, WindowGrid};

/// Q/K/V projections of one attention path. The output projection is the
/// shared 1x1 conv applied after both paths are concatenated.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowMsaWeights {
    pub q: ConvWeights,
    pub k: ConvWeights,
    pub v: ConvWeights,
    pub heads: usize,
}

impl WindowMsaWeights {
    pub fn new(q: ConvWeights, k: ConvWeights, v: ConvWeights, heads: usize) -> Result<Self> {
        let w = WindowMsaWeights { q, k, v, heads };
        w.validate()?;
        Ok(w)
    }

    pub fn zeros(c: usize, heads: usize) -> Self {
        let z = || ConvWeights::zeros(c, c, 1);
        WindowMsaWeights { q: z(), k: z(), v: z(), heads }
    }

    pub fn channels(&self) -> usize {
        self.q.c_out()
    }

    pub fn head_dim(&self) -> usize {
        self.channels() / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        for (name, w) in [("q", &self.q), ("k", &self.k), ("v", &self.v)] {
            if w.k() != 1 || w.c_in() != c || w.c_out() != c {
                return Err(Error::shape(format!("{name} projection {} must be {c}x{c}x1x1", w.kernel.shape())));
            }
        }
        if self.heads == 0 || !c.is_multiple_of(self.heads) {
            return Err(Error::shape(format!("{c} channels cannot be split into {} heads", self.heads)));
        }
        Ok(())
    }
}

/// Head count used when none is configured: two once a path is at least 32
/// channels wide.
pub fn default_heads(path_channels: usize) -> usize {
    if path_channels >= 32 && path_channels.is_multiple_of(2) {
        2
    } else {
        1
    }
}

/// Multi-head softmax attention inside each window.
///
/// `tokens` is `(windows, c, 1, t)`. Per head, `A = softmax(QᵀK / √d)` over
/// keys and the output is `V Aᵀ`, returned in the input layout.
pub fn window_self_attention(tokens: &Tensor, w: &WindowMsaWeights) -> Result<Tensor> {
    w.validate()?;
    let s = tokens.shape();
    if s.c != w.channels() || s.h != 1 {
        return Err(Error::shape(format!("attention: tokens {s} do not match {} channel projections", w.channels())));
    }
    let q = conv2d(tokens, &w.q, 0, 1)?;
    let k = conv2d(tokens, &w.k, 0, 1)?;
    let v = conv2d(tokens, &w.v, 0, 1)?;
    let (c, t) = (s.c, s.w);
    let per_window = c * t;
    let d = w.head_dim();
    let scale = (d as f32).powf(-0.5);
    let mut out = vec![0.0f32; s.numel()];
    out.par_chunks_mut(per_window).enumerate().for_each(|(wi, dst)| {
        let range = wi * per_window..(wi + 1) * per_window;
        attend_window(&q.data()[range.clone()], &k.data()[range.clone()], &v.data()[range], dst, t, w.heads, scale);
    });
    Tensor::new(s, out)
}

/// One window, channel-major `(c, t)` buffers.
fn attend_window(q: &[f32], k: &[f32], v: &[f32], out: &mut [f32], t: usize, heads: usize, scale: f32) {
    let c = q.len() / t;
    let d = c / heads;
    let mut qt = vec![0.0f32; t * d];
    let mut kt = vec![0.0f32; t * d];
    let mut probs = vec![0.0f32; t * t];
    for h in 0..heads {
        let base = h * d * t;
        // token-major copies so every score is a contiguous dot product
        for ch in 0..d {
            for i in 0..t {
                qt[i * d + ch] = q[base + ch * t + i];
                kt[i * d + ch] = k[base + ch * t + i];
            }
        }
        for i in 0..t {
            let qi = &qt[i * d..(i + 1) * d];
            let row = &mut probs[i * t..(i + 1) * t];
            for (j, r) in row.iter_mut().enumerate() {
                let kj = &kt[j * d..(j + 1) * d];
                let dot: f32 = qi.iter().zip(kj).map(|(a, b)| a * b).sum();
                *r = dot * scale;
            }
        }
        softmax_rows(&mut probs, t);
        for ch in 0..d {
            let vrow = &v[base + ch * t..base + (ch + 1) * t];
            let orow = &mut out[base + ch * t..base + (ch + 1) * t];
            for (i, o) in orow.iter_mut().enumerate() {
                let prow = &probs[i * t..(i + 1) * t];
                *o = prow.iter().zip(vrow).map(|(a, b)| a * b).sum();
            }
        }
    }
}

/// In-place row-wise softmax over rows of length `t`.
pub(crate) fn softmax_rows(scores: &mut [f32], t: usize) {
    for row in scores.chunks_mut(t) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f32;
        for r in row.iter_mut() {
            *r = (*r - max).exp();
            sum += *r;
        }
        let inv = 1.0 / sum;
        for r in row.iter_mut() {
            *r *= inv;
        }
    }
}

/// One attention path together with the mask that samples its tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedAttention {
    pub msa: WindowMsaWeights,
    pub mask: Mask,
}

/// Weights of the sparse masking attention block. Either path may be
/// disabled, in which case the other one carries all channels.
#[derive(Clone, Debug, PartialEq)]
pub struct NvsmWeights {
    pub slwa: Option<MaskedAttention>,
    pub dlwa: Option<MaskedAttention>,
    pub proj: ConvWeights,
}

impl NvsmWeights {
    pub fn channels(&self) -> usize {
        self.proj.c_out()
    }

    fn paths(&self) -> impl Iterator<Item = &MaskedAttention> {
        self.slwa.iter().chain(self.dlwa.iter())
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        if self.proj.k() != 1 || self.proj.c_in() != c {
            return Err(Error::shape(format!("output projection {} must be {c}x{c}x1x1", self.proj.kernel.shape())));
        }
        let widths: Vec<usize> = self.paths().map(|p| p.msa.channels()).collect();
        if widths.is_empty() {
            return Err(Error::config("attention block needs at least one of SLWA and DLWA"));
        }
        if widths.iter().sum::<usize>() != c || (widths.len() == 2 && widths[0] != widths[1]) {
            return Err(Error::shape(format!("attention path widths {widths:?} do not split {c} channels evenly")));
        }
        for path in self.paths() {
            path.msa.validate()?;
            if !path.mask.is_non_volatile() {
                return Err(Error::mask("mask violates non-volatility"));
            }
        }
        Ok(())
    }
}

/// `x + proj(merge(concat(SLWA(x₁), DLWA(x₂))))` for a feature map whose
/// sides are multiples of the window size.
pub fn nvsm_sa(x: &Tensor, w: &NvsmWeights, grid: &WindowGrid) -> Result<Tensor> {
    nvsm_sa_with(x, w, grid, window_self_attention)
}

/// [`nvsm_sa`] with the per-window attention body swapped out.
pub fn nvsm_sa_with<F>(x: &Tensor, w: &NvsmWeights, grid: &WindowGrid, attend: F) -> Result<Tensor>
where
    F: Fn(&Tensor, &WindowMsaWeights) -> Result<Tensor>,
{
    w.validate()?;
    let s = x.shape();
    if s.c != w.channels() {
        return Err(Error::shape(format!("attention block expects {} channels, got {s}", w.channels())));
    }
    if s.h != grid.height() || s.w != grid.width() {
        return Err(Error::shape(format!(
            "feature map {s} does not match {}x{} window grid",
            grid.height(),
            grid.width()
        )));
    }
    let mut halves = Vec::with_capacity(2);
    let mut start = 0;
    for path in w.paths() {
        let width = path.msa.channels();
        let part = x.narrow_channels(start, width)?;
        start += width;
        let plan = selection_indices(&path.mask, grid)?;
        let tokens = plan.gather(&part)?;
        let attended = attend(&tokens, &path.msa)?;
        halves.push(plan.scatter(&attended)?);
    }
    let refs: Vec<&Tensor> = halves.iter().collect();
    let merged = Tensor::concat_channels(&refs)?;
    let mut out = conv2d(&merged, &w.proj, 0, 1)?;
    out.add_assign(x)?;
    debug_assert_eq!(out.shape(), Shape::new(s.n, s.c, s.h, s.w));
    Ok(out)
}
