use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Binary `sp x sp` selection pattern with exactly `p²` ones.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Mask {
    p: usize,
    s: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(p: usize, s: usize, bits: Vec<bool>) -> Result<Self> {
        if p == 0 || s == 0 {
            return Err(Error::mask(format!("window size {p} and expansion {s} must be positive")));
        }
        let side = p * s;
        if bits.len() != side * side {
            return Err(Error::mask(format!(
                "expected {} cells for a {side}x{side} mask, got {}",
                side * side,
                bits.len()
            )));
        }
        let ones = bits.iter().filter(|&&b| b).count();
        if ones != p * p {
            return Err(Error::mask(format!("mask has {ones} ones, expected p² = {}", p * p)));
        }
        Ok(Mask { p, s, bits })
    }

    /// Dense `p x p` block in the top-left sub-block: plain local windows.
    pub fn dense(p: usize, s: usize) -> Self {
        Self::from_assignment(&AssignmentMap::constant(p, s, (0, 0)))
    }

    /// Local coordinate `(x, y)` is taken from sub-block `(x mod s, y mod s)`.
    /// Spreads the samples over the whole expanded window without dropping
    /// any pixel.
    pub fn sparse(p: usize, s: usize) -> Self {
        let phi = AssignmentMap::from_fn(p, s, |x, y| (x % s, y % s)).expect("mod s stays in range");
        Self::from_assignment(&phi)
    }

    /// Every `s`-th row and column of the expanded window. Only one parity
    /// class of local coordinates is ever reached, so `1 - 1/s²` of the
    /// pixels are dropped when `s` divides `p`.
    pub fn global_stride(p: usize, s: usize) -> Self {
        let side = p * s;
        let bits = (0..side * side).map(|i| (i / side).is_multiple_of(s) && (i % side).is_multiple_of(s)).collect();
        Mask::new(p, s, bits).expect("stride pattern has p² ones")
    }

    /// `bits[a p + x, b p + y] = 1` exactly when `phi(x, y) = (a, b)`.
    pub fn from_assignment(phi: &AssignmentMap) -> Self {
        let (p, s) = (phi.p, phi.s);
        let side = p * s;
        let mut bits = vec![false; side * side];
        for x in 0..p {
            for y in 0..p {
                let (a, b) = phi.get(x, y);
                bits[(a * p + x) * side + b * p + y] = true;
            }
        }
        Mask { p, s, bits }
    }

    /// The assignment this mask is induced by, if it is one.
    pub fn assignment(&self) -> Option<AssignmentMap> {
        let cov = coverage_map(self);
        if cov.counts.iter().any(|&c| c != 1) {
            return None;
        }
        let mut cells = vec![(0, 0); self.p * self.p];
        for (r, c) in self.ones() {
            cells[(r % self.p) * self.p + c % self.p] = (r / self.p, c / self.p);
        }
        Some(AssignmentMap { p: self.p, s: self.s, cells })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn side(&self) -> usize {
        self.p * self.s
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.side() + c]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Positions of the ones, row-major.
    pub fn ones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let side = self.side();
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(move |(i, _)| (i / side, i % side))
    }

    pub fn is_non_volatile(&self) -> bool {
        beta(self) == 0.0
    }
}

/// Text form: a `p s` header line followed by `sp` rows of `0`/`1`.
impl fmt::Display for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {}", self.p, self.s)?;
        let side = self.side();
        for row in self.bits.chunks(side) {
            let line: String = row.iter().map(|&b| if b { '1' } else { '0' }).collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

impl FromStr for Mask {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::parse("empty mask file"))?;
        let nums: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::parse(format!("bad mask header {header:?}"))))
            .collect::<Result<_>>()?;
        let [p, s] = nums[..] else {
            return Err(Error::parse(format!("mask header must be \"p s\", got {header:?}")));
        };
        let side = p * s;
        let mut bits = Vec::with_capacity(side * side);
        for r in 0..side {
            let line = lines.next().ok_or_else(|| Error::parse(format!("mask has {r} rows, expected {side}")))?;
            let line = line.trim_end_matches('\r');
            if line.len() != side {
                return Err(Error::parse(format!("mask row {r} has {} cells, expected {side}", line.len())));
            }
            for ch in line.chars() {
                bits.push(match ch {
                    '0' => false,
                    '1' => true,
                    _ => return Err(Error::parse(format!("mask row {r} contains {ch:?}"))),
                });
            }
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(Error::parse(format!("mask has more than {side} rows")));
        }
        Mask::new(p, s, bits)
    }
}

/// Maps each local window coordinate to the sub-block it is sampled from.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AssignmentMap {
    p: usize,
    s: usize,
    cells: Vec<(usize, usize)>,
}

impl AssignmentMap {
    pub fn from_fn(p: usize, s: usize, f: impl Fn(usize, usize) -> (usize, usize)) -> Result<Self> {
        let mut cells = Vec::with_capacity(p * p);
        for x in 0..p {
            for y in 0..p {
                let (a, b) = f(x, y);
                if a >= s || b >= s {
                    return Err(Error::mask(format!("assignment ({a}, {b}) at ({x}, {y}) outside 0..{s}")));
                }
                cells.push((a, b));
            }
        }
        Ok(AssignmentMap { p, s, cells })
    }

    pub fn constant(p: usize, s: usize, block: (usize, usize)) -> Self {
        Self::from_fn(p, s, |_, _| block).expect("constant assignment must lie inside the expansion")
    }

    pub fn get(&self, x: usize, y: usize) -> (usize, usize) {
        self.cells[x * self.p + y]
    }
}

/// For each local coordinate, the number of sub-blocks whose copy of that
/// coordinate the mask selects.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoverageGrid {
    p: usize,
    counts: Vec<u32>,
}

impl CoverageGrid {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.counts[x * self.p + y]
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn covered(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

impl fmt::Display for CoverageGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.counts.chunks(self.p) {
            let cells: Vec<String> = row.iter().map(u32::to_string).collect();
            writeln!(f, "{}", cells.join(" "))?;
        }
        Ok(())
    }
}

/// Stitching the masked samples of all `s²` expanded windows that contain a
/// window gives back the window's pixels with these multiplicities. Under
/// the circular expansion the result is the same for every window, so it
/// depends on the mask alone.
pub fn coverage_map(mask: &Mask) -> CoverageGrid {
    let p = mask.p;
    let mut counts = vec![0u32; p * p];
    for (r, c) in mask.ones() {
        counts[(r % p) * p + c % p] += 1;
    }
    CoverageGrid { p, counts }
}

/// Non-volatility drop rate: the fraction of a window's pixels that no
/// expanded window samples.
pub fn beta(mask: &Mask) -> f64 {
    let cov = coverage_map(mask);
    1.0 - cov.covered() as f64 / (mask.p * mask.p) as f64
}
