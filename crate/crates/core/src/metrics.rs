//! Luma-channel image quality metrics.

use crate::error::{Error, Result};
use crate::io::ImageRgb8;
use crate::tensor::Tensor;

/// BT.601 luma in `[16, 235]` as a `(1, 1, h, w)` tensor on the 0..255 scale.
pub fn rgb_to_y(img: &ImageRgb8) -> Tensor {
    let (w, h) = (img.width(), img.height());
    Tensor::from_fn([1, 1, h, w], |_, _, y, x| {
        let [r, g, b] = img.rgb(x, y).map(|v| v as f64 / 255.0);
        (65.481 * r + 128.553 * g + 24.966 * b + 16.0) as f32
    })
}

/// Drops `border` pixels from every side.
pub fn crop_border(x: &Tensor, border: usize) -> Result<Tensor> {
    let s = x.shape();
    if 2 * border >= s.h || 2 * border >= s.w {
        return Err(Error::shape(format!("cannot crop {border} pixels from each side of {s}")));
    }
    let (h, w) = (s.h - 2 * border, s.w - 2 * border);
    Ok(Tensor::from_fn([s.n, s.c, h, w], |n, c, y, xx| x.at(n, c, y + border, xx + border)))
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!("metric inputs differ: {} vs {}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB; infinite when the inputs are equal.
pub fn psnr(a: &Tensor, b: &Tensor, peak: f64) -> Result<f64> {
    same_shape(a, b)?;
    let sse: f64 = a.data().iter().zip(b.data()).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum();
    let mse = sse / a.len() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * (peak * peak / mse).log10() })
}

/// Formats a dB value, printing `inf` for identical images.
pub fn format_db(db: f64) -> String {
    if db.is_infinite() {
        "inf".into()
    } else {
        format!("{db:.4}")
    }
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_L: f64 = 255.0;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Normalized 1-D Gaussian taps of the SSIM window.
pub fn ssim_gaussian() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut g = [0.0; SSIM_WINDOW];
    for (i, v) in g.iter_mut().enumerate() {
        *v = (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = g.iter().sum();
    g.map(|v| v / sum)
}

/// SSIM of one window from its weighted moments.
pub fn ssim_from_moments(mu_a: f64, mu_b: f64, var_a: f64, var_b: f64, cov: f64) -> f64 {
    let c1 = (SSIM_K1 * SSIM_L).powi(2);
    let c2 = (SSIM_K2 * SSIM_L).powi(2);
    ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}

/// Mean SSIM over all fully contained 11x11 Gaussian windows of
/// single-channel images on the 0..255 scale.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    same_shape(a, b)?;
    let s = a.shape();
    if s.c != 1 {
        return Err(Error::shape(format!("ssim expects one channel, got {s}")));
    }
    if s.h < SSIM_WINDOW || s.w < SSIM_WINDOW {
        return Err(Error::shape(format!("ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {s}")));
    }
    let g = ssim_gaussian();
    let (oh, ow) = (s.h - SSIM_WINDOW + 1, s.w - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for n in 0..s.n {
        let (pa, pb) = (a.plane(n, 0), b.plane(n, 0));
        // Five moment images, filtered along rows then columns.
        let sources: [Box<dyn Fn(usize) -> f64>; 5] = [
            Box::new(|i| pa[i] as f64),
            Box::new(|i| pb[i] as f64),
            Box::new(|i| (pa[i] as f64).powi(2)),
            Box::new(|i| (pb[i] as f64).powi(2)),
            Box::new(|i| pa[i] as f64 * pb[i] as f64),
        ];
        let moments: Vec<Vec<f64>> = sources
            .iter()
            .map(|src| {
                let mut rows = vec![0.0; s.h * ow];
                for y in 0..s.h {
                    for x in 0..ow {
                        rows[y * ow + x] = (0..SSIM_WINDOW).map(|k| g[k] * src(y * s.w + x + k)).sum();
                    }
                }
                let mut out = vec![0.0; oh * ow];
                for y in 0..oh {
                    for x in 0..ow {
                        out[y * ow + x] = (0..SSIM_WINDOW).map(|k| g[k] * rows[(y + k) * ow + x]).sum();
                    }
                }
                out
            })
            .collect();
        let [ma, mb, aa, bb, ab] = &moments[..] else { unreachable!() };
        for i in 0..oh * ow {
            total +=
                ssim_from_moments(ma[i], mb[i], aa[i] - ma[i] * ma[i], bb[i] - mb[i] * mb[i], ab[i] - ma[i] * mb[i]);
        }
    }
    Ok(total / (s.n * oh * ow) as f64)
}
