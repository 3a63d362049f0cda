use super::{ConvBlock, LiptWeights};
use crate::attention::nvsm_sa;
use crate::error::{Error, Result};
use crate::tensor::{conv2d, crop, pad_reflect, pixel_shuffle, Tensor};
use crate::window::WindowGrid;

/// Full network: shallow conv, the block stack, reconstruction and
/// upsampling. Inputs whose sides are not multiples of the window are
/// reflect-padded and the output is cropped back to `scale` times the input.
pub fn forward(x: &Tensor, w: &LiptWeights) -> Result<Tensor> {
    let cfg = &w.config;
    let s = x.shape();
    if s.c != cfg.in_channels {
        return Err(Error::shape(format!("input has {} channels, model expects {}", s.c, cfg.in_channels)));
    }
    let p = cfg.window;
    let (pad_h, pad_w) = ((p - s.h % p) % p, (p - s.w % p) % p);
    let padded = if pad_h + pad_w > 0 { pad_reflect(x, pad_w, pad_h)? } else { x.clone() };
    let ps = padded.shape();
    let grid = WindowGrid::new(ps.h, ps.w, p, cfg.expansion)?;

    let shallow = conv2d(&padded, &w.shallow, 1, 1)?;
    let mut deep = shallow.clone();
    for block in &w.blocks {
        let (last, head) = block.convs.split_last().expect("blocks hold at least one conv block");
        for cb in head {
            deep = cb.forward(&deep)?;
        }
        deep = nvsm_sa(&deep, &block.attn, &grid)?;
        deep = ConvBlock::forward(last, &deep)?;
    }
    deep.add_assign(&shallow)?;
    let mut out = conv2d(&deep, &w.recon, 1, 1)?;
    if cfg.scale > 1 {
        out = pixel_shuffle(&out, cfg.scale)?;
    }
    if pad_h + pad_w > 0 {
        out = crop(&out, s.h * cfg.scale, s.w * cfg.scale)?;
    }
    Ok(out)
}
