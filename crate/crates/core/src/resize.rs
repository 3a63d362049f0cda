//! Bicubic resampling with the Keys kernel.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Supported integer resize factors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResizeFactor {
    Up(usize),
    Down(usize),
}

impl ResizeFactor {
    /// The factor as a real number.
    pub fn value(self) -> f64 {
        match self {
            ResizeFactor::Up(r) => r as f64,
            ResizeFactor::Down(r) => 1.0 / r as f64,
        }
    }

    fn check(self) -> Result<()> {
        let r = match self {
            ResizeFactor::Up(r) | ResizeFactor::Down(r) => r,
        };
        if !(1..=4).contains(&r) {
            return Err(Error::config(format!("resize factor {self} not in 1/4, 1/3, 1/2, 1, 2, 3, 4")));
        }
        Ok(())
    }

    fn out_len(self, n: usize) -> Result<usize> {
        match self {
            ResizeFactor::Up(r) => Ok(n * r),
            ResizeFactor::Down(r) if n.is_multiple_of(r) => Ok(n / r),
            ResizeFactor::Down(r) => Err(Error::shape(format!("side {n} is not divisible by {r}"))),
        }
    }
}

impl fmt::Display for ResizeFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResizeFactor::Up(r) => write!(f, "{r}"),
            ResizeFactor::Down(r) => write!(f, "1/{r}"),
        }
    }
}

impl FromStr for ResizeFactor {
    type Err = Error;

    /// Accepts `2`, `1/2` or `0.5` style factors.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::parse(format!("invalid resize factor {s:?}"));
        let factor = if let Some(den) = s.strip_prefix("1/") {
            ResizeFactor::Down(den.parse().map_err(|_| bad())?)
        } else if let Ok(r) = s.parse::<usize>() {
            ResizeFactor::Up(r)
        } else {
            let v: f64 = s.parse().map_err(|_| bad())?;
            let den = (1.0 / v).round();
            if !(v > 0.0 && v < 1.0) || (den * v - 1.0).abs() > 1e-9 {
                return Err(bad());
            }
            ResizeFactor::Down(den as usize)
        };
        factor.check()?;
        Ok(factor)
    }
}

/// Keys cubic convolution kernel with `a = -0.5`.
pub fn keys_kernel(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

/// Source taps and weights for one output coordinate.
pub fn bicubic_taps(dst: usize, scale: f64, len: usize) -> [(usize, f64); 4] {
    let src = (dst as f64 + 0.5) / scale - 0.5;
    let base = src.floor() as i64 - 1;
    std::array::from_fn(|k| {
        let pos = base + k as i64;
        (pos.clamp(0, len as i64 - 1) as usize, keys_kernel(src - pos as f64))
    })
}

/// Separable bicubic resize of every plane; edges are clamped.
pub fn bicubic_resize(x: &Tensor, factor: ResizeFactor) -> Result<Tensor> {
    factor.check()?;
    if factor == ResizeFactor::Up(1) || factor == ResizeFactor::Down(1) {
        return Ok(x.clone());
    }
    let s = x.shape();
    let (oh, ow) = (factor.out_len(s.h)?, factor.out_len(s.w)?);
    let scale = factor.value();
    let row_taps: Vec<_> = (0..oh).map(|y| bicubic_taps(y, scale, s.h)).collect();
    let col_taps: Vec<_> = (0..ow).map(|x| bicubic_taps(x, scale, s.w)).collect();
    let mut out = Tensor::zeros([s.n, s.c, oh, ow]);
    let mut tmp = vec![0.0f64; s.h * ow];
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            for y in 0..s.h {
                for (xo, taps) in col_taps.iter().enumerate() {
                    tmp[y * ow + xo] = taps.iter().map(|&(i, w)| w * src[y * s.w + i] as f64).sum();
                }
            }
            let dst = out.plane_mut(n, c);
            for (yo, taps) in row_taps.iter().enumerate() {
                for xo in 0..ow {
                    dst[yo * ow + xo] = taps.iter().map(|&(i, w)| w * tmp[i * ow + xo]).sum::<f64>() as f32;
                }
            }
        }
    }
    Ok(out)
}
