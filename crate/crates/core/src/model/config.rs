use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attention::default_heads;
use crate::error::{Error, Result};

/// Architecture hyperparameters and ablation switches.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiptConfig {
    /// Number of LIPT blocks.
    pub blocks: usize,
    /// Embedding width; split in halves between the two attention paths.
    pub channels: usize,
    /// Window side `p`.
    pub window: usize,
    /// Window expansion factor `s`.
    pub expansion: usize,
    /// Upscale factor; 1 for restoration without resizing.
    pub scale: usize,
    /// 3 for RGB, 1 for grayscale.
    pub in_channels: usize,
    /// Conv blocks per attention block (three in the standard block).
    pub cb_per_msa: usize,
    /// Heads per attention path; derived from the path width when unset.
    pub heads: Option<usize>,
    pub enable_slwa: bool,
    pub enable_dlwa: bool,
    pub enable_sobel: bool,
    /// Replace every HRM's multi-branch `G_b` with a lone 3x3 conv.
    pub hrm_off: bool,
}

impl Default for LiptConfig {
    fn default() -> Self {
        Preset::Tiny.config(4)
    }
}

/// Published model sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Tiny,
    Small,
    Base,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Tiny, Preset::Small, Preset::Base];

    pub fn config(self, scale: usize) -> LiptConfig {
        let (blocks, channels, window) = match self {
            Preset::Tiny => (8, 24, 8),
            Preset::Small => (10, 64, 8),
            Preset::Base => (22, 144, 16),
        };
        LiptConfig {
            blocks,
            channels,
            window,
            expansion: 2,
            scale,
            in_channels: 3,
            cb_per_msa: 3,
            heads: None,
            enable_slwa: true,
            enable_dlwa: true,
            enable_sobel: true,
            hrm_off: false,
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tiny" => Ok(Preset::Tiny),
            "small" => Ok(Preset::Small),
            "base" => Ok(Preset::Base),
            _ => Err(Error::config(format!("unknown preset {s:?} (expected tiny, small or base)"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Tiny => "tiny",
            Preset::Small => "small",
            Preset::Base => "base",
        })
    }
}

// Layout version of the packed form below.
const PACKED_VERSION: f32 = 1.0;

impl LiptConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::config(msg));
        if self.blocks == 0 || self.cb_per_msa == 0 {
            return bad("blocks and cb_per_msa must be at least 1".into());
        }
        if self.channels < 2 || !self.channels.is_multiple_of(2) {
            return bad(format!("channels must be even and positive, got {}", self.channels));
        }
        if self.window < 2 || !self.window.is_multiple_of(2) {
            return bad(format!("window size must be even and positive, got {}", self.window));
        }
        if self.expansion == 0 {
            return bad("expansion must be at least 1".into());
        }
        if !(1..=4).contains(&self.scale) {
            return bad(format!("scale must be 1, 2, 3 or 4, got {}", self.scale));
        }
        if self.in_channels != 1 && self.in_channels != 3 {
            return bad(format!("in_channels must be 1 or 3, got {}", self.in_channels));
        }
        if !self.enable_slwa && !self.enable_dlwa {
            return bad("at least one of enable_slwa and enable_dlwa must be set".into());
        }
        let width = self.path_channels();
        let heads = self.path_heads();
        if heads == 0 || !width.is_multiple_of(heads) {
            return bad(format!("{width}-channel attention path cannot be split into {heads} heads"));
        }
        Ok(())
    }

    /// Width of each enabled attention path.
    pub fn path_channels(&self) -> usize {
        if self.enable_slwa && self.enable_dlwa {
            self.channels / 2
        } else {
            self.channels
        }
    }

    pub fn path_heads(&self) -> usize {
        self.heads.unwrap_or_else(|| default_heads(self.path_channels()))
    }

    /// Output channels of the reconstruction conv before the pixel shuffle.
    pub fn recon_channels(&self) -> usize {
        self.in_channels * self.scale * self.scale
    }

    /// `--config` argument: a preset name or a path to a JSON file. A
    /// preset takes `scale`; a file carries its own.
    pub fn resolve(arg: &str, scale: Option<usize>) -> Result<Self> {
        let cfg = match arg.parse::<Preset>() {
            Ok(p) => p.config(scale.unwrap_or(4)),
            Err(_) if arg.ends_with(".json") || std::path::Path::new(arg).exists() => {
                let text = std::fs::read_to_string(arg)?;
                let cfg: LiptConfig =
                    serde_json::from_str(&text).map_err(|e| Error::parse(format!("config {arg}: {e}")))?;
                if let Some(r) = scale {
                    if r != cfg.scale {
                        return Err(Error::config(format!("--scale {r} disagrees with scale {} in {arg}", cfg.scale)));
                    }
                }
                cfg
            }
            Err(e) => return Err(e),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Small integers packed as `f32` so the config can travel inside a
    /// weight file.
    pub fn pack(&self) -> Vec<f32> {
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        vec![
            PACKED_VERSION,
            self.blocks as f32,
            self.channels as f32,
            self.window as f32,
            self.expansion as f32,
            self.scale as f32,
            self.in_channels as f32,
            self.cb_per_msa as f32,
            self.heads.unwrap_or(0) as f32,
            flag(self.enable_slwa),
            flag(self.enable_dlwa),
            flag(self.enable_sobel),
            flag(self.hrm_off),
        ]
    }

    pub fn unpack(v: &[f32]) -> Result<Self> {
        if v.len() != 13 || v[0] != PACKED_VERSION {
            return Err(Error::parse(format!("unsupported packed config ({} values)", v.len())));
        }
        let int = |x: f32| -> Result<usize> {
            if x >= 0.0 && x.fract() == 0.0 && x < 1e7 {
                Ok(x as usize)
            } else {
                Err(Error::parse(format!("packed config value {x} is not a count")))
            }
        };
        let flag = |x: f32| -> Result<bool> {
            match x {
                0.0 => Ok(false),
                1.0 => Ok(true),
                _ => Err(Error::parse(format!("packed config flag {x} is not 0 or 1"))),
            }
        };
        let heads = int(v[8])?;
        let cfg = LiptConfig {
            blocks: int(v[1])?,
            channels: int(v[2])?,
            window: int(v[3])?,
            expansion: int(v[4])?,
            scale: int(v[5])?,
            in_channels: int(v[6])?,
            cb_per_msa: int(v[7])?,
            heads: (heads > 0).then_some(heads),
            enable_slwa: flag(v[9])?,
            enable_dlwa: flag(v[10])?,
            enable_sobel: flag(v[11])?,
            hrm_off: flag(v[12])?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
