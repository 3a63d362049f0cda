use super::{beta, coverage_map, Mask, WindowGrid};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Pixel coordinates selected by a non-volatile mask in every expanded
/// window, and the inverse map back to `(window, token)`.
///
/// Over all windows the selection is a permutation of the `H x W` pixels,
/// so gathering tokens and scattering them back is lossless.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexPlan {
    grid: WindowGrid,
    tokens: usize,
    // pixel index (y * W + x) for window `wi`, token `t` at `wi * tokens + t`
    coords: Vec<u32>,
    inverse: Vec<u32>,
}

/// Builds the gather/scatter plan for `mask` on `grid`.
pub fn selection_indices(mask: &Mask, grid: &WindowGrid) -> Result<IndexPlan> {
    let (p, s) = (grid.p(), grid.s());
    if mask.p() != p || mask.s() != s {
        return Err(Error::mask(format!("mask for p={} s={} used on a grid with p={p} s={s}", mask.p(), mask.s())));
    }
    if beta(mask) > 0.0 {
        return Err(Error::mask("mask violates non-volatility"));
    }
    if coverage_map(mask).counts().iter().any(|&c| c > 1) {
        return Err(Error::mask("mask over-covers"));
    }
    let tokens = p * p;
    let width = grid.width();
    let pixels = grid.height() * width;
    let ones: Vec<(usize, usize)> = mask.ones().collect();
    let mut coords = Vec::with_capacity(grid.windows() * tokens);
    for i in 0..grid.n_h() {
        for j in 0..grid.n_w() {
            for &(r, c) in &ones {
                let y = ((i + r / p) % grid.n_h()) * p + r % p;
                let x = ((j + c / p) % grid.n_w()) * p + c % p;
                coords.push((y * width + x) as u32);
            }
        }
    }
    let mut inverse = vec![u32::MAX; pixels];
    for (slot, &px) in coords.iter().enumerate() {
        if inverse[px as usize] != u32::MAX {
            return Err(Error::mask("mask over-covers"));
        }
        inverse[px as usize] = slot as u32;
    }
    Ok(IndexPlan { grid: *grid, tokens, coords, inverse })
}

impl IndexPlan {
    pub fn grid(&self) -> &WindowGrid {
        &self.grid
    }

    pub fn tokens_per_window(&self) -> usize {
        self.tokens
    }

    /// Selected pixels of window `wi` as `(row, col)` pairs, in token order.
    pub fn window_coords(&self, wi: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.grid.width();
        self.coords[wi * self.tokens..(wi + 1) * self.tokens].iter().map(move |&px| (px as usize / w, px as usize % w))
    }

    /// `(window, token)` slot that pixel `(row, col)` is gathered into.
    pub fn slot_of(&self, row: usize, col: usize) -> (usize, usize) {
        let slot = self.inverse[row * self.grid.width() + col] as usize;
        (slot / self.tokens, slot % self.tokens)
    }

    /// `(n, c, H, W)` to tokens `(n * windows, c, 1, p²)`.
    pub fn gather(&self, x: &Tensor) -> Result<Tensor> {
        let s = x.shape();
        if s.h != self.grid.height() || s.w != self.grid.width() {
            return Err(Error::shape(format!(
                "gather: feature map {s} does not match {}x{} plan",
                self.grid.height(),
                self.grid.width()
            )));
        }
        let windows = self.grid.windows();
        let shape = Shape::new(s.n * windows, s.c, 1, self.tokens);
        let mut out = Vec::with_capacity(shape.numel());
        for n in 0..s.n {
            for wi in 0..windows {
                let idx = &self.coords[wi * self.tokens..(wi + 1) * self.tokens];
                for c in 0..s.c {
                    let plane = x.plane(n, c);
                    out.extend(idx.iter().map(|&px| plane[px as usize]));
                }
            }
        }
        Tensor::new(shape, out)
    }

    /// Inverse of [`IndexPlan::gather`].
    pub fn scatter(&self, tokens: &Tensor) -> Result<Tensor> {
        let s = tokens.shape();
        let windows = self.grid.windows();
        if s.h != 1 || s.w != self.tokens || !s.n.is_multiple_of(windows) {
            return Err(Error::shape(format!(
                "scatter: token tensor {s} does not fit {windows} windows of {} tokens",
                self.tokens
            )));
        }
        let n = s.n / windows;
        let (h, w) = (self.grid.height(), self.grid.width());
        let mut out = Tensor::zeros([n, s.c, h, w]);
        for b in 0..n {
            for c in 0..s.c {
                let plane = out.plane_mut(b, c);
                for (px, &slot) in plane.iter_mut().zip(&self.inverse) {
                    let (wi, t) = (slot as usize / self.tokens, slot as usize % self.tokens);
                    *px = tokens.at(b * windows + wi, c, 0, t);
                }
            }
        }
        Ok(out)
    }
}
