use rayon::prelude::*;

use super::{Shape, Tensor};
use crate::error::{Error, Result};

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

/// 3x3 box mean with zero padding of one pixel; output has the input's shape.
pub fn avg_pool3x3_same(input: &Tensor) -> Tensor {
    avg_pool3x3(input, 1).expect("padding 1 never shrinks below one pixel")
}

/// 3x3 box mean, stride 1, over `padding` zero pixels on each side. Padded
/// taps count toward the nine, matching a depthwise conv with 1/9 weights.
pub fn avg_pool3x3(input: &Tensor, padding: usize) -> Result<Tensor> {
    let s = input.shape();
    if s.h + 2 * padding < 3 || s.w + 2 * padding < 3 {
        return Err(Error::shape(format!("avg_pool3x3: input {s} too small for padding {padding}")));
    }
    let oh = s.h + 2 * padding - 2;
    let ow = s.w + 2 * padding - 2;
    let out_shape = Shape::new(s.n, s.c, oh, ow);
    let mut out = vec![0.0f32; out_shape.numel()];
    let ninth = 1.0f32 / 9.0;
    out.par_chunks_mut(oh * ow).enumerate().for_each(|(pi, dst)| {
        let src = &input.data()[pi * s.plane()..(pi + 1) * s.plane()];
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = 0.0f32;
                for u in 0..3 {
                    let iy = (y + u) as isize - padding as isize;
                    if iy < 0 || iy >= s.h as isize {
                        continue;
                    }
                    for v in 0..3 {
                        let ix = (x + v) as isize - padding as isize;
                        if ix < 0 || ix >= s.w as isize {
                            continue;
                        }
                        acc += ninth * src[iy as usize * s.w + ix as usize];
                    }
                }
                dst[y * ow + x] = acc;
            }
        }
    });
    Tensor::new(out_shape, out)
}

/// Moves channel `o*r² + a*r + b` to sub-pixel `(a, b)` of output channel `o`.
pub fn pixel_shuffle(input: &Tensor, r: usize) -> Result<Tensor> {
    let s = input.shape();
    if r == 0 || !s.c.is_multiple_of(r * r) {
        return Err(Error::shape(format!("pixel_shuffle: {} channels not divisible by {}", s.c, r * r)));
    }
    if r == 1 {
        return Ok(input.clone());
    }
    let oc = s.c / (r * r);
    Ok(Tensor::from_fn([s.n, oc, s.h * r, s.w * r], |n, o, y, x| {
        let (a, b) = (y % r, x % r);
        input.at(n, o * r * r + a * r + b, y / r, x / r)
    }))
}

/// Reflect-pads on the right and bottom edges; the edge pixel itself is not
/// repeated (`[1,2,3]` padded by 2 gives `[1,2,3,2,1]`).
pub fn pad_reflect(input: &Tensor, right: usize, bottom: usize) -> Result<Tensor> {
    let s = input.shape();
    if right >= s.w || bottom >= s.h {
        return Err(Error::shape(format!(
            "pad_reflect: padding ({right}, {bottom}) must be smaller than width/height of {s}"
        )));
    }
    if right == 0 && bottom == 0 {
        return Ok(input.clone());
    }
    let reflect = |i: usize, len: usize| if i < len { i } else { 2 * (len - 1) - i };
    Ok(Tensor::from_fn([s.n, s.c, s.h + bottom, s.w + right], |n, c, y, x| {
        input.at(n, c, reflect(y, s.h), reflect(x, s.w))
    }))
}

/// Keeps the top-left `h x w` region.
pub fn crop(input: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let s = input.shape();
    if h == 0 || w == 0 || h > s.h || w > s.w {
        return Err(Error::shape(format!("crop: {h}x{w} does not fit inside {s}")));
    }
    if (h, w) == (s.h, s.w) {
        return Ok(input.clone());
    }
    Ok(Tensor::from_fn([s.n, s.c, h, w], |n, c, y, x| input.at(n, c, y, x)))
}
