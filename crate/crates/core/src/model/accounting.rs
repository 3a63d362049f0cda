use super::LiptConfig;
use crate::error::Result;

/// Parameter and multiply-accumulate totals for one forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OpCounts {
    pub params: u64,
    pub macs: u64,
}

fn conv(c_out: u64, c_in: u64, k: u64, px: u64) -> OpCounts {
    OpCounts { params: c_out * c_in * k * k + c_out, macs: c_out * c_in * k * k * px }
}

impl std::ops::Add for OpCounts {
    type Output = OpCounts;
    fn add(self, o: OpCounts) -> OpCounts {
        OpCounts { params: self.params + o.params, macs: self.macs + o.macs }
    }
}

impl std::iter::Sum for OpCounts {
    fn sum<I: Iterator<Item = OpCounts>>(it: I) -> OpCounts {
        it.fold(OpCounts { params: 0, macs: 0 }, |a, b| a + b)
    }
}

/// Exact counts for an `h x w` input (padded up to the window size, as the
/// forward pass does). With `fused` every HRM is counted as two 3x3 convs.
/// Softmax, ReLU and additions are not multiply-accumulates and are skipped.
pub fn count_params_and_macs(config: &LiptConfig, h: usize, w: usize, fused: bool) -> Result<OpCounts> {
    config.validate()?;
    let p = config.window;
    let px = (h.div_ceil(p) * p * w.div_ceil(p) * p) as u64;
    let c = config.channels as u64;
    let tokens = (p * p) as u64;

    let gb = || -> OpCounts {
        if config.hrm_off {
            return conv(c, c, 3, px);
        }
        let depthwise = OpCounts { params: 2 * c, macs: 9 * c * px };
        let mut total = conv(c, c, 1, px) + conv(c, c, 1, px) + conv(c, c, 3, px);
        if config.enable_sobel {
            total = total + conv(c, c, 1, px) + conv(c, c, 1, px) + depthwise + depthwise;
        }
        total + conv(c, c, 1, px) + OpCounts { params: 0, macs: 9 * c * px } + conv(c, c, 3, px)
    };
    let hrm = if fused { conv(c, c, 3, px) + conv(c, c, 3, px) } else { gb() + gb() };

    let width = config.path_channels() as u64;
    let paths = config.enable_slwa as u64 + config.enable_dlwa as u64;
    let path = {
        let qkv = conv(width, width, 1, px);
        let scores = OpCounts { params: 0, macs: 2 * px * tokens * width };
        qkv + qkv + qkv + scores
    };
    let attn = (0..paths).map(|_| path).sum::<OpCounts>() + conv(c, c, 1, px);
    let block = (0..config.cb_per_msa).map(|_| hrm).sum::<OpCounts>() + attn;

    let in_c = config.in_channels as u64;
    Ok(conv(c, in_c, 3, px)
        + (0..config.blocks).map(|_| block).sum::<OpCounts>()
        + conv(config.recon_channels() as u64, c, 3, px))
}
