//! High-frequency reparameterization module.
//!
//! During training each `G_b` is a sum of five same-size branches (1x1,
//! 1x1→3x3, 1x1→isotropic Sobel, 1x1→3x3 mean, 3x3). All of them are linear
//! with the same 3x3 footprint, so at inference a `G_b` collapses into one
//! 3x3 conv. Branches that start with a 1x1 conv apply it to the
//! zero-padded input, so the padded border of the intermediate map carries
//! the 1x1 bias. This is what makes the collapse exact on border pixels too.

use crate::error::{Error, Result};
use crate::tensor::{avg_pool3x3, conv2d, relu, ConvWeights, Shape, Tensor};

const SQRT_2: f32 = std::f32::consts::SQRT_2;

/// Horizontal isotropic Sobel filter, row-major.
pub const SOBEL_DX: [f32; 9] = [1.0, 0.0, -1.0, SQRT_2, 0.0, -SQRT_2, 1.0, 0.0, -1.0];
/// Vertical isotropic Sobel filter, row-major.
pub const SOBEL_DY: [f32; 9] = [-1.0, -SQRT_2, -1.0, 0.0, 0.0, 0.0, 1.0, SQRT_2, 1.0];

/// Learnable part of the isotropic Sobel branch: a 1x1 conv per direction,
/// a per-channel scale on the fixed filter and a per-channel output bias.
#[derive(Clone, Debug, PartialEq)]
pub struct SobelBranch {
    pub kx: ConvWeights,
    pub ky: ConvWeights,
    pub sx: Vec<f32>,
    pub sy: Vec<f32>,
    pub bdx: Vec<f32>,
    pub bdy: Vec<f32>,
}

impl SobelBranch {
    pub fn zeros(c: usize) -> Self {
        SobelBranch {
            kx: ConvWeights::zeros(c, c, 1),
            ky: ConvWeights::zeros(c, c, 1),
            sx: vec![0.0; c],
            sy: vec![0.0; c],
            bdx: vec![0.0; c],
            bdy: vec![0.0; c],
        }
    }

    fn validate(&self, c: usize) -> Result<()> {
        check_square(&self.kx, c, 1, "sobel kx")?;
        check_square(&self.ky, c, 1, "sobel ky")?;
        for (name, v) in [("sx", &self.sx), ("sy", &self.sy), ("bdx", &self.bdx), ("bdy", &self.bdy)] {
            if v.len() != c {
                return Err(Error::shape(format!("sobel {name} has {} entries, expected {c}", v.len())));
            }
        }
        Ok(())
    }

    /// Depthwise kernel `s[o] * d` with bias `bd`.
    fn scaled_filter(scale: &[f32], filter: &[f32; 9], bias: &[f32]) -> ConvWeights {
        let c = scale.len();
        let kernel = Tensor::from_fn([c, 1, 3, 3], |o, _, u, v| scale[o] * filter[u * 3 + v]);
        ConvWeights { kernel, bias: bias.to_vec() }
    }
}

fn check_square(w: &ConvWeights, c: usize, k: usize, what: &str) -> Result<()> {
    if w.c_out() != c || w.c_in() != c || w.k() != k {
        return Err(Error::shape(format!("{what}: kernel {} must be {c}x{c}x{k}x{k}", w.kernel.shape())));
    }
    Ok(())
}

fn zero_pad1(x: &Tensor) -> Tensor {
    let s = x.shape();
    let mut out = Tensor::zeros([s.n, s.c, s.h + 2, s.w + 2]);
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            let dst = out.plane_mut(n, c);
            for y in 0..s.h {
                dst[(y + 1) * (s.w + 2) + 1..(y + 1) * (s.w + 2) + 1 + s.w]
                    .copy_from_slice(&src[y * s.w..(y + 1) * s.w]);
            }
        }
    }
    out
}

/// Isotropic Sobel response `F_x + F_y`, where
/// `F_x = (s_x · d_x) ⊗ (k_x * x + b_x) + b_dx` with `⊗` depthwise.
pub fn isotropic_sobel(x: &Tensor, w: &SobelBranch) -> Result<Tensor> {
    w.validate(x.shape().c)?;
    sobel_padded(&zero_pad1(x), w)
}

fn sobel_padded(padded: &Tensor, w: &SobelBranch) -> Result<Tensor> {
    let c = w.sx.len();
    let fx = conv2d(&conv2d(padded, &w.kx, 0, 1)?, &SobelBranch::scaled_filter(&w.sx, &SOBEL_DX, &w.bdx), 0, c)?;
    let fy = conv2d(&conv2d(padded, &w.ky, 0, 1)?, &SobelBranch::scaled_filter(&w.sy, &SOBEL_DY, &w.bdy), 0, c)?;
    fx.add(&fy)
}

/// Training-form `G_b`. Disabled branches are `None`; the plain 3x3 branch
/// is always present.
#[derive(Clone, Debug, PartialEq)]
pub struct GbWeights {
    pub conv1: Option<ConvWeights>,
    pub conv1_conv3: Option<(ConvWeights, ConvWeights)>,
    pub sobel: Option<SobelBranch>,
    pub avg_pre: Option<ConvWeights>,
    pub conv3: ConvWeights,
}

impl GbWeights {
    /// All five branches, zero-initialized.
    pub fn zeros(c: usize) -> Self {
        GbWeights {
            conv1: Some(ConvWeights::zeros(c, c, 1)),
            conv1_conv3: Some((ConvWeights::zeros(c, c, 1), ConvWeights::zeros(c, c, 3))),
            sobel: Some(SobelBranch::zeros(c)),
            avg_pre: Some(ConvWeights::zeros(c, c, 1)),
            conv3: ConvWeights::zeros(c, c, 3),
        }
    }

    pub fn channels(&self) -> usize {
        self.conv3.c_out()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        check_square(&self.conv3, c, 3, "conv3 branch")?;
        if let Some(w) = &self.conv1 {
            check_square(w, c, 1, "conv1 branch")?;
        }
        if let Some((a, b)) = &self.conv1_conv3 {
            check_square(a, c, 1, "conv1->conv3 branch")?;
            check_square(b, c, 3, "conv1->conv3 branch")?;
        }
        if let Some(s) = &self.sobel {
            s.validate(c)?;
        }
        if let Some(w) = &self.avg_pre {
            check_square(w, c, 1, "avg branch")?;
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let mut n = self.conv3.param_count();
        n += self.conv1.as_ref().map_or(0, ConvWeights::param_count);
        n += self.conv1_conv3.as_ref().map_or(0, |(a, b)| a.param_count() + b.param_count());
        n += self.sobel.as_ref().map_or(0, |s| s.kx.param_count() + s.ky.param_count() + 4 * s.sx.len());
        n += self.avg_pre.as_ref().map_or(0, ConvWeights::param_count);
        n
    }
}

/// Sum of the enabled branches of `G_b`; same spatial size as `x`.
pub fn gb_forward(x: &Tensor, w: &GbWeights) -> Result<Tensor> {
    w.validate()?;
    let c = w.channels();
    if x.shape().c != c {
        return Err(Error::shape(format!("G_b expects {c} channels, got {}", x.shape())));
    }
    let mut out = conv2d(x, &w.conv3, 1, 1)?;
    if let Some(k) = &w.conv1 {
        out.add_assign(&conv2d(x, k, 0, 1)?)?;
    }
    let needs_pad = w.conv1_conv3.is_some() || w.sobel.is_some() || w.avg_pre.is_some();
    if needs_pad {
        let padded = zero_pad1(x);
        if let Some((pre, k3)) = &w.conv1_conv3 {
            out.add_assign(&conv2d(&conv2d(&padded, pre, 0, 1)?, k3, 0, 1)?)?;
        }
        if let Some(sobel) = &w.sobel {
            out.add_assign(&sobel_padded(&padded, sobel)?)?;
        }
        if let Some(pre) = &w.avg_pre {
            out.add_assign(&avg_pool3x3(&conv2d(&padded, pre, 0, 1)?, 0)?)?;
        }
    }
    Ok(out)
}

/// A `G_b` collapsed into one 3x3 convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedConv3x3(pub ConvWeights);

impl FusedConv3x3 {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        conv2d(x, &self.0, 1, 1)
    }
}

/// Fused kernel `(c, c, 3, 3)` and bias of `w`, accumulated in `f64`.
pub fn fuse_gb_f64(w: &GbWeights) -> Result<(Vec<f64>, Vec<f64>)> {
    w.validate()?;
    let c = w.channels();
    let idx = |o: usize, i: usize, t: usize| (o * c + i) * 9 + t;
    let mut kernel = vec![0.0f64; c * c * 9];
    let mut bias = vec![0.0f64; c];
    let k1 = |cw: &ConvWeights, o: usize, i: usize| cw.kernel.at(o, i, 0, 0) as f64;

    if let Some(cw) = &w.conv1 {
        for o in 0..c {
            for i in 0..c {
                kernel[idx(o, i, 4)] += k1(cw, o, i);
            }
            bias[o] += cw.bias[o] as f64;
        }
    }
    if let Some((pre, k3)) = &w.conv1_conv3 {
        let k3d = k3.kernel.data();
        for o in 0..c {
            for i in 0..c {
                for t in 0..9 {
                    kernel[idx(o, i, t)] +=
                        (0..c).map(|m| k3d[(o * c + m) * 9 + t] as f64 * k1(pre, m, i)).sum::<f64>();
                }
            }
            let carried: f64 = (0..c)
                .map(|m| {
                    k3d[(o * c + m) * 9..(o * c + m + 1) * 9].iter().map(|&v| v as f64).sum::<f64>()
                        * pre.bias[m] as f64
                })
                .sum();
            bias[o] += carried + k3.bias[o] as f64;
        }
    }
    if let Some(sb) = &w.sobel {
        for (pre, scale, filter, post) in [(&sb.kx, &sb.sx, &SOBEL_DX, &sb.bdx), (&sb.ky, &sb.sy, &SOBEL_DY, &sb.bdy)] {
            let filter_sum: f64 = filter.iter().map(|&v| v as f64).sum();
            for o in 0..c {
                let s = scale[o] as f64;
                for i in 0..c {
                    for t in 0..9 {
                        kernel[idx(o, i, t)] += s * filter[t] as f64 * k1(pre, o, i);
                    }
                }
                bias[o] += s * filter_sum * pre.bias[o] as f64 + post[o] as f64;
            }
        }
    }
    if let Some(pre) = &w.avg_pre {
        for o in 0..c {
            for i in 0..c {
                for t in 0..9 {
                    kernel[idx(o, i, t)] += k1(pre, o, i) / 9.0;
                }
            }
            bias[o] += pre.bias[o] as f64;
        }
    }
    let k3d = w.conv3.kernel.data();
    for (dst, &v) in kernel.iter_mut().zip(k3d) {
        *dst += v as f64;
    }
    for (b, &v) in bias.iter_mut().zip(&w.conv3.bias) {
        *b += v as f64;
    }
    Ok((kernel, bias))
}

/// Exact collapse of all branches into a single 3x3 conv.
pub fn fuse_gb(w: &GbWeights) -> Result<FusedConv3x3> {
    let c = w.channels();
    let (kernel, bias) = fuse_gb_f64(w)?;
    let kernel = Tensor::new([c, c, 3, 3], kernel.into_iter().map(|v| v as f32).collect())?;
    Ok(FusedConv3x3(ConvWeights::new(kernel, bias.into_iter().map(|v| v as f32).collect())?))
}

/// `x + G_b2(ReLU(G_b1(x)))` in training form.
#[derive(Clone, Debug, PartialEq)]
pub struct HrmWeights {
    pub gb1: GbWeights,
    pub gb2: GbWeights,
}

/// Inference form of [`HrmWeights`].
#[derive(Clone, Debug, PartialEq)]
pub struct FusedHrm {
    pub first: FusedConv3x3,
    pub second: FusedConv3x3,
}

impl HrmWeights {
    pub fn fuse(&self) -> Result<FusedHrm> {
        Ok(FusedHrm { first: fuse_gb(&self.gb1)?, second: fuse_gb(&self.gb2)? })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut out = gb_forward(&relu(&gb_forward(x, &self.gb1)?), &self.gb2)?;
        out.add_assign(x)?;
        Ok(out)
    }
}

impl FusedHrm {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let c = self.first.0.c_out();
        if x.shape().c != c {
            return Err(Error::shape(format!("fused HRM expects {c} channels, got {}", x.shape())));
        }
        let mut out = self.second.forward(&relu(&self.first.forward(x)?))?;
        out.add_assign(x)?;
        Ok(out)
    }
}

/// HRM forward; with `fused` the branches are collapsed first.
pub fn hrm_forward(x: &Tensor, w: &HrmWeights, fused: bool) -> Result<Tensor> {
    if fused {
        w.fuse()?.forward(x)
    } else {
        w.forward(x)
    }
}

/// Multiply-accumulates of one training-form `G_b` at `h x w`. The 1x1
/// prefixes run on the zero-padded input, but their border is the bias
/// alone, so only interior pixels are counted.
pub fn gb_macs(w: &GbWeights, shape: Shape) -> u64 {
    let (c, px) = (w.channels() as u64, (shape.h * shape.w) as u64);
    let mut macs = 9 * c * c * px;
    if w.conv1.is_some() {
        macs += c * c * px;
    }
    if w.conv1_conv3.is_some() {
        macs += c * c * px + 9 * c * c * px;
    }
    if w.sobel.is_some() {
        macs += 2 * (c * c * px + 9 * c * px);
    }
    if w.avg_pre.is_some() {
        macs += c * c * px + 9 * c * px;
    }
    macs * shape.n as u64
}
