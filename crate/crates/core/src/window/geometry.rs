use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Window side `p`, expansion factor `s` and the resulting window counts for
/// an `h x w` feature map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowGrid {
    p: usize,
    s: usize,
    n_h: usize,
    n_w: usize,
}

impl WindowGrid {
    pub fn new(h: usize, w: usize, p: usize, s: usize) -> Result<Self> {
        if p == 0 || s == 0 {
            return Err(Error::shape(format!("window size {p} and expansion {s} must be positive")));
        }
        if !h.is_multiple_of(p) || !w.is_multiple_of(p) {
            return Err(Error::shape(format!("feature map {h}x{w} is not a multiple of window size {p}")));
        }
        if s * p > h.min(w) {
            return Err(Error::shape(format!("expanded window {}x{} exceeds feature map {h}x{w}", s * p, s * p)));
        }
        Ok(WindowGrid { p, s, n_h: h / p, n_w: w / p })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn n_h(&self) -> usize {
        self.n_h
    }

    pub fn n_w(&self) -> usize {
        self.n_w
    }

    pub fn height(&self) -> usize {
        self.n_h * self.p
    }

    pub fn width(&self) -> usize {
        self.n_w * self.p
    }

    pub fn windows(&self) -> usize {
        self.n_h * self.n_w
    }

    /// Side of an expanded window, `s * p`.
    pub fn expanded(&self) -> usize {
        self.s * self.p
    }

    fn check_map(&self, x: &Tensor) -> Result<()> {
        let sh = x.shape();
        if sh.h != self.height() || sh.w != self.width() {
            return Err(Error::shape(format!(
                "feature map {sh} does not match {}x{} window grid",
                self.height(),
                self.width()
            )));
        }
        Ok(())
    }

    fn batch_of(&self, windows: &Tensor, side: usize) -> Result<usize> {
        let sh = windows.shape();
        if sh.h != side || sh.w != side || !sh.n.is_multiple_of(self.windows()) {
            return Err(Error::shape(format!(
                "window tensor {sh} does not hold {side}x{side} windows for a {}x{} grid",
                self.n_h, self.n_w
            )));
        }
        Ok(sh.n / self.windows())
    }
}

/// `(n, c, H, W)` to `(n * nH * nW, c, p, p)`; window `(i, j)` of image `b`
/// lands at index `(b * nH + i) * nW + j`.
pub fn window_partition(x: &Tensor, grid: &WindowGrid) -> Result<Tensor> {
    grid.check_map(x)?;
    let s = x.shape();
    let p = grid.p;
    Ok(Tensor::from_fn([s.n * grid.windows(), s.c, p, p], |wi, c, y, xx| {
        let b = wi / grid.windows();
        let i = (wi / grid.n_w) % grid.n_h;
        let j = wi % grid.n_w;
        x.at(b, c, i * p + y, j * p + xx)
    }))
}

/// Inverse of [`window_partition`].
pub fn window_merge(windows: &Tensor, grid: &WindowGrid) -> Result<Tensor> {
    let n = grid.batch_of(windows, grid.p)?;
    let c = windows.shape().c;
    let p = grid.p;
    Ok(Tensor::from_fn(Shape::new(n, c, grid.height(), grid.width()), |b, ch, y, x| {
        let (i, j) = (y / p, x / p);
        windows.at((b * grid.n_h + i) * grid.n_w + j, ch, y % p, x % p)
    }))
}

/// `(N, c, p, p)` windows to `(N, c, sp, sp)` expanded windows. Expanded
/// window `(i, j)` holds original window `((i + a) mod nH, (j + b) mod nW)`
/// in local rows `[a p, (a+1) p)` and columns `[b p, (b+1) p)`.
pub fn window_expand(windows: &Tensor, grid: &WindowGrid) -> Result<Tensor> {
    let p = grid.p;
    grid.batch_of(windows, p)?;
    let sp = grid.expanded();
    let c = windows.shape().c;
    Ok(Tensor::from_fn([windows.shape().n, c, sp, sp], |wi, ch, y, x| {
        let b = wi / grid.windows();
        let i = (wi / grid.n_w) % grid.n_h;
        let j = wi % grid.n_w;
        let si = (i + y / p) % grid.n_h;
        let sj = (j + x / p) % grid.n_w;
        windows.at((b * grid.n_h + si) * grid.n_w + sj, ch, y % p, x % p)
    }))
}
