//! Forward-pass latency measurement.

use std::fmt;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::model::{count_params_and_macs, forward, LiptConfig, LiptWeights};
use crate::tensor::rng_uniform;

pub const DEFAULT_RUNS: usize = 5;

/// Timed forward passes plus the static op counts of the measured network.
#[derive(Clone, Debug)]
pub struct BenchReport {
    pub width: usize,
    pub height: usize,
    pub fused: bool,
    pub samples: Vec<Duration>,
    pub params: u64,
    pub macs: u64,
}

impl BenchReport {
    pub fn min(&self) -> Duration {
        self.samples.iter().copied().min().unwrap_or_default()
    }

    pub fn median(&self) -> Duration {
        let mut s = self.samples.clone();
        s.sort();
        match s.len() {
            0 => Duration::ZERO,
            n if n % 2 == 1 => s[n / 2],
            n => (s[n / 2 - 1] + s[n / 2]) / 2,
        }
    }

    pub fn mean(&self) -> Duration {
        if self.samples.is_empty() {
            return Duration::ZERO;
        }
        self.samples.iter().sum::<Duration>() / self.samples.len() as u32
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        writeln!(f, "input={}x{} fused={} runs={}", self.width, self.height, self.fused, self.samples.len())?;
        writeln!(f, "params={} macs={}", self.params, self.macs)?;
        let all: Vec<String> = self.samples.iter().map(|&d| format!("{:.2}", ms(d))).collect();
        writeln!(f, "samples_ms=[{}]", all.join(", "))?;
        write!(f, "min_ms={:.2} median_ms={:.2} mean_ms={:.2}", ms(self.min()), ms(self.median()), ms(self.mean()))
    }
}

/// Times `runs` forward passes on a random `width x height` input after one
/// untimed warmup.
pub fn bench(config: &LiptConfig, width: usize, height: usize, fused: bool, runs: usize) -> Result<BenchReport> {
    if runs == 0 {
        return Err(Error::config("runs must be at least 1"));
    }
    let mut weights = LiptWeights::build(config, 0)?;
    if fused {
        weights = weights.fuse()?;
    }
    let counts = count_params_and_macs(config, height, width, fused)?;
    let x = rng_uniform(1, [1, config.in_channels, height, width], 0.0, 1.0);
    forward(&x, &weights)?;
    let mut samples = Vec::with_capacity(runs);
    for _ in 0..runs {
        let t = Instant::now();
        let y = forward(&x, &weights)?;
        samples.push(t.elapsed());
        std::hint::black_box(y);
    }
    Ok(BenchReport { width, height, fused, samples, params: counts.params, macs: counts.macs })
}
