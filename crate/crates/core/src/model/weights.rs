use std::collections::HashMap;

use super::LiptConfig;
use crate::attention::{MaskedAttention, NvsmWeights, WindowMsaWeights};
use crate::error::{Error, Result};
use crate::hrm::{FusedConv3x3, FusedHrm, GbWeights, HrmWeights, SobelBranch};
use crate::io::{NamedTensor, WeightFile};
use crate::tensor::{ConvWeights, Rng64, Tensor};
use crate::window::Mask;

/// Name of the packed-config entry stored alongside the parameters.
pub const CONFIG_ENTRY: &str = "meta.config";

/// An HRM in either training or fused form.
#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug, PartialEq)]
pub enum ConvBlock {
    Train(HrmWeights),
    Fused(FusedHrm),
}

impl ConvBlock {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            ConvBlock::Train(w) => w.forward(x),
            ConvBlock::Fused(w) => w.forward(x),
        }
    }

    pub fn is_fused(&self) -> bool {
        matches!(self, ConvBlock::Fused(_))
    }
}

/// One LIPT block: `cb_per_msa - 1` conv blocks, the attention block, then
/// one more conv block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockWeights {
    pub convs: Vec<ConvBlock>,
    pub attn: NvsmWeights,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LiptWeights {
    pub config: LiptConfig,
    pub shallow: ConvWeights,
    pub blocks: Vec<BlockWeights>,
    pub recon: ConvWeights,
}

/// Damping applied to the last stage of each HRM's residual branch at init.
pub const RESIDUAL_GAIN: f32 = 0.1;

/// Source of initial parameter values, consumed in construction order.
enum Init {
    Zero,
    Random(Rng64),
}

impl Init {
    /// Kaiming-uniform over the fan-in (bound `1/√fan_in`), zero bias.
    fn conv(&mut self, c_out: usize, c_in: usize, k: usize) -> ConvWeights {
        let mut w = ConvWeights::zeros(c_out, c_in, k);
        if let Init::Random(rng) = self {
            let bound = 1.0 / ((c_in * k * k) as f64).sqrt();
            for v in w.kernel.data_mut() {
                *v = rng.uniform(-bound, bound) as f32;
            }
        }
        w
    }

    /// Sobel filter scales start near zero, so the fixed filters enter
    /// training gently.
    fn sobel_scale(&mut self, c: usize) -> Vec<f32> {
        match self {
            Init::Zero => vec![0.0; c],
            Init::Random(rng) => (0..c).map(|_| (rng.normal() * 1e-3) as f32).collect(),
        }
    }

    fn gb(&mut self, cfg: &LiptConfig) -> GbWeights {
        let c = cfg.channels;
        if cfg.hrm_off {
            return GbWeights { conv1: None, conv1_conv3: None, sobel: None, avg_pre: None, conv3: self.conv(c, c, 3) };
        }
        let conv1 = Some(self.conv(c, c, 1));
        let conv1_conv3 = Some((self.conv(c, c, 1), self.conv(c, c, 3)));
        let sobel = cfg.enable_sobel.then(|| SobelBranch {
            kx: self.conv(c, c, 1),
            ky: self.conv(c, c, 1),
            sx: self.sobel_scale(c),
            sy: self.sobel_scale(c),
            bdx: vec![0.0; c],
            bdy: vec![0.0; c],
        });
        let avg_pre = Some(self.conv(c, c, 1));
        let conv3 = self.conv(c, c, 3);
        GbWeights { conv1, conv1_conv3, sobel, avg_pre, conv3 }
    }

    /// Second `G_b` of an HRM: every branch output scaled by
    /// [`RESIDUAL_GAIN`] so deep stacks keep unit-scale activations.
    fn gb_residual(&mut self, cfg: &LiptConfig) -> GbWeights {
        let mut gb = self.gb(cfg);
        let scale = |w: &mut ConvWeights| {
            for v in w.kernel.data_mut() {
                *v *= RESIDUAL_GAIN;
            }
        };
        let GbWeights { conv1, conv1_conv3, avg_pre, conv3, .. } = &mut gb;
        conv1.iter_mut().chain(conv1_conv3.iter_mut().map(|(_, k3)| k3)).chain(avg_pre.iter_mut()).for_each(scale);
        scale(conv3);
        if let Some(sb) = gb.sobel.as_mut() {
            sb.sx.iter_mut().chain(sb.sy.iter_mut()).for_each(|v| *v *= RESIDUAL_GAIN);
        }
        gb
    }

    fn msa(&mut self, cfg: &LiptConfig) -> WindowMsaWeights {
        let w = cfg.path_channels();
        WindowMsaWeights {
            q: self.conv(w, w, 1),
            k: self.conv(w, w, 1),
            v: self.conv(w, w, 1),
            heads: cfg.path_heads(),
        }
    }
}

/// Canonical masks: sparse for the large-window path, dense for the local one.
fn path_masks(cfg: &LiptConfig) -> (Mask, Mask) {
    (Mask::sparse(cfg.window, cfg.expansion), Mask::dense(cfg.window, cfg.expansion))
}

impl LiptWeights {
    /// Deterministic random initialization.
    pub fn build(config: &LiptConfig, seed: u64) -> Result<Self> {
        Self::construct(config, Init::Random(Rng64::new(seed)))
    }

    /// Every parameter zero.
    pub fn zeros(config: &LiptConfig) -> Result<Self> {
        Self::construct(config, Init::Zero)
    }

    fn construct(config: &LiptConfig, mut init: Init) -> Result<Self> {
        config.validate()?;
        let cfg = config;
        let c = cfg.channels;
        let shallow = init.conv(c, cfg.in_channels, 3);
        let (sparse, dense) = path_masks(cfg);
        let mut blocks = Vec::with_capacity(cfg.blocks);
        for _ in 0..cfg.blocks {
            let convs = (0..cfg.cb_per_msa)
                .map(|_| ConvBlock::Train(HrmWeights { gb1: init.gb(cfg), gb2: init.gb_residual(cfg) }))
                .collect();
            let slwa = cfg.enable_slwa.then(|| MaskedAttention { msa: init.msa(cfg), mask: sparse.clone() });
            let dlwa = cfg.enable_dlwa.then(|| MaskedAttention { msa: init.msa(cfg), mask: dense.clone() });
            let proj = init.conv(c, c, 1);
            blocks.push(BlockWeights { convs, attn: NvsmWeights { slwa, dlwa, proj } });
        }
        let recon = init.conv(cfg.recon_channels(), c, 3);
        Ok(LiptWeights { config: cfg.clone(), shallow, blocks, recon })
    }

    pub fn is_fused(&self) -> bool {
        self.blocks.iter().flat_map(|b| &b.convs).any(ConvBlock::is_fused)
    }

    /// Collapses every HRM into its two 3x3 convs.
    pub fn fuse(&self) -> Result<Self> {
        if self.is_fused() {
            return Err(Error::config("weights are already fused"));
        }
        let mut out = self.clone();
        for block in &mut out.blocks {
            for cb in &mut block.convs {
                if let ConvBlock::Train(w) = cb {
                    *cb = ConvBlock::Fused(w.fuse()?);
                }
            }
        }
        Ok(out)
    }

    pub fn param_count(&self) -> usize {
        self.named_tensors().iter().map(|t| t.data.len()).sum()
    }

    /// Every parameter with its unique dotted name, in a fixed order.
    pub fn named_tensors(&self) -> Vec<NamedTensor> {
        let mut out = Vec::new();
        let mut push_vec =
            |name: String, v: &[f32]| out.push(NamedTensor { name, dims: vec![v.len()], data: v.to_vec() });
        let mut convs: Vec<(String, &ConvWeights)> = vec![("shallow".into(), &self.shallow)];
        let mut vectors: Vec<(String, &[f32])> = Vec::new();
        for (l, block) in self.blocks.iter().enumerate() {
            for (k, cb) in block.convs.iter().enumerate() {
                let base = format!("blocks.{l}.cb.{k}");
                match cb {
                    ConvBlock::Train(w) => {
                        for (g, gb) in [(1, &w.gb1), (2, &w.gb2)] {
                            let p = format!("{base}.gb{g}");
                            if let Some(cw) = &gb.conv1 {
                                convs.push((format!("{p}.conv1"), cw));
                            }
                            if let Some((pre, k3)) = &gb.conv1_conv3 {
                                convs.push((format!("{p}.seq.pre"), pre));
                                convs.push((format!("{p}.seq.conv3"), k3));
                            }
                            if let Some(sb) = &gb.sobel {
                                convs.push((format!("{p}.sobel.kx"), &sb.kx));
                                convs.push((format!("{p}.sobel.ky"), &sb.ky));
                                vectors.push((format!("{p}.sobel.sx"), &sb.sx));
                                vectors.push((format!("{p}.sobel.sy"), &sb.sy));
                                vectors.push((format!("{p}.sobel.bdx"), &sb.bdx));
                                vectors.push((format!("{p}.sobel.bdy"), &sb.bdy));
                            }
                            if let Some(cw) = &gb.avg_pre {
                                convs.push((format!("{p}.avg.pre"), cw));
                            }
                            convs.push((format!("{p}.conv3"), &gb.conv3));
                        }
                    }
                    ConvBlock::Fused(w) => {
                        convs.push((format!("{base}.rep1"), &w.first.0));
                        convs.push((format!("{base}.rep2"), &w.second.0));
                    }
                }
            }
            let a = &block.attn;
            for (tag, path) in [("slwa", &a.slwa), ("dlwa", &a.dlwa)] {
                if let Some(path) = path {
                    convs.push((format!("blocks.{l}.attn.{tag}.q"), &path.msa.q));
                    convs.push((format!("blocks.{l}.attn.{tag}.k"), &path.msa.k));
                    convs.push((format!("blocks.{l}.attn.{tag}.v"), &path.msa.v));
                }
            }
            convs.push((format!("blocks.{l}.attn.proj"), &a.proj));
        }
        convs.push(("recon".into(), &self.recon));
        let mut named = Vec::with_capacity(2 * convs.len() + vectors.len());
        for (name, cw) in convs {
            named.push(NamedTensor {
                name: format!("{name}.weight"),
                dims: cw.kernel.shape().dims().to_vec(),
                data: cw.kernel.data().to_vec(),
            });
            named.push(NamedTensor { name: format!("{name}.bias"), dims: vec![cw.bias.len()], data: cw.bias.clone() });
        }
        for (name, v) in vectors {
            push_vec(name, v);
        }
        named.append(&mut out);
        named
    }

    /// Parameters plus the packed config, ready to be written.
    pub fn to_weight_file(&self) -> Result<WeightFile> {
        let mut entries = self.named_tensors();
        let packed = self.config.pack();
        entries.push(NamedTensor { name: CONFIG_ENTRY.into(), dims: vec![packed.len()], data: packed });
        WeightFile::new(entries)
    }

    /// Rebuilds the network from a weight file. Each HRM is read in
    /// whichever form (training or fused) the file holds it.
    pub fn from_weight_file(file: &WeightFile) -> Result<Self> {
        let mut loader = Loader::new(file)?;
        let meta = loader.take_vec(CONFIG_ENTRY, None)?;
        let cfg = LiptConfig::unpack(&meta)?;
        let c = cfg.channels;
        let shallow = loader.conv("shallow", c, cfg.in_channels, 3)?;
        let (sparse, dense) = path_masks(&cfg);
        let w = cfg.path_channels();
        let mut blocks = Vec::with_capacity(cfg.blocks);
        for l in 0..cfg.blocks {
            let mut convs = Vec::with_capacity(cfg.cb_per_msa);
            for k in 0..cfg.cb_per_msa {
                let base = format!("blocks.{l}.cb.{k}");
                if loader.has(&format!("{base}.rep1.weight")) {
                    convs.push(ConvBlock::Fused(FusedHrm {
                        first: FusedConv3x3(loader.conv(&format!("{base}.rep1"), c, c, 3)?),
                        second: FusedConv3x3(loader.conv(&format!("{base}.rep2"), c, c, 3)?),
                    }));
                } else {
                    let gb1 = loader.gb(&format!("{base}.gb1"), &cfg)?;
                    let gb2 = loader.gb(&format!("{base}.gb2"), &cfg)?;
                    convs.push(ConvBlock::Train(HrmWeights { gb1, gb2 }));
                }
            }
            let mut path = |tag: &str, mask: &Mask| -> Result<MaskedAttention> {
                let p = format!("blocks.{l}.attn.{tag}");
                let msa = WindowMsaWeights::new(
                    loader.conv(&format!("{p}.q"), w, w, 1)?,
                    loader.conv(&format!("{p}.k"), w, w, 1)?,
                    loader.conv(&format!("{p}.v"), w, w, 1)?,
                    cfg.path_heads(),
                )?;
                Ok(MaskedAttention { msa, mask: mask.clone() })
            };
            let slwa = if cfg.enable_slwa { Some(path("slwa", &sparse)?) } else { None };
            let dlwa = if cfg.enable_dlwa { Some(path("dlwa", &dense)?) } else { None };
            let proj = loader.conv(&format!("blocks.{l}.attn.proj"), c, c, 1)?;
            blocks.push(BlockWeights { convs, attn: NvsmWeights { slwa, dlwa, proj } });
        }
        let recon = loader.conv("recon", cfg.recon_channels(), c, 3)?;
        loader.finish()?;
        Ok(LiptWeights { config: cfg, shallow, blocks, recon })
    }
}

struct Loader<'a> {
    map: HashMap<&'a str, &'a NamedTensor>,
}

impl<'a> Loader<'a> {
    fn new(file: &'a WeightFile) -> Result<Self> {
        Ok(Loader { map: file.entries.iter().map(|e| (e.name.as_str(), e)).collect() })
    }

    fn has(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    fn take_vec(&mut self, name: &str, len: Option<usize>) -> Result<Vec<f32>> {
        let t = self.map.remove(name).ok_or_else(|| Error::parse(format!("missing tensor {name:?}")))?;
        if t.dims.len() != 1 || len.is_some_and(|l| t.dims[0] != l) {
            return Err(Error::shape(format!(
                "tensor {name:?} has dims {:?}, expected [{}]",
                t.dims,
                len.unwrap_or(0)
            )));
        }
        Ok(t.data.clone())
    }

    fn conv(&mut self, prefix: &str, c_out: usize, c_in: usize, k: usize) -> Result<ConvWeights> {
        let name = format!("{prefix}.weight");
        let t = self.map.remove(name.as_str()).ok_or_else(|| Error::parse(format!("missing tensor {name:?}")))?;
        if t.dims != [c_out, c_in, k, k] {
            return Err(Error::shape(format!(
                "tensor {name:?} has dims {:?}, expected {:?}",
                t.dims,
                [c_out, c_in, k, k]
            )));
        }
        let kernel = Tensor::new([c_out, c_in, k, k], t.data.clone())?;
        let bias = self.take_vec(&format!("{prefix}.bias"), Some(c_out))?;
        ConvWeights::new(kernel, bias)
    }

    fn gb(&mut self, p: &str, cfg: &LiptConfig) -> Result<GbWeights> {
        let c = cfg.channels;
        let opt = |this: &Self, name: &str| this.has(&format!("{p}.{name}.weight"));
        let conv1 = if opt(self, "conv1") { Some(self.conv(&format!("{p}.conv1"), c, c, 1)?) } else { None };
        let conv1_conv3 = if opt(self, "seq.pre") {
            Some((self.conv(&format!("{p}.seq.pre"), c, c, 1)?, self.conv(&format!("{p}.seq.conv3"), c, c, 3)?))
        } else {
            None
        };
        let sobel = if opt(self, "sobel.kx") {
            Some(SobelBranch {
                kx: self.conv(&format!("{p}.sobel.kx"), c, c, 1)?,
                ky: self.conv(&format!("{p}.sobel.ky"), c, c, 1)?,
                sx: self.take_vec(&format!("{p}.sobel.sx"), Some(c))?,
                sy: self.take_vec(&format!("{p}.sobel.sy"), Some(c))?,
                bdx: self.take_vec(&format!("{p}.sobel.bdx"), Some(c))?,
                bdy: self.take_vec(&format!("{p}.sobel.bdy"), Some(c))?,
            })
        } else {
            None
        };
        let avg_pre = if opt(self, "avg.pre") { Some(self.conv(&format!("{p}.avg.pre"), c, c, 1)?) } else { None };
        let conv3 = self.conv(&format!("{p}.conv3"), c, c, 3)?;
        Ok(GbWeights { conv1, conv1_conv3, sobel, avg_pre, conv3 })
    }

    fn finish(self) -> Result<()> {
        if let Some(name) = self.map.keys().min() {
            return Err(Error::parse(format!("unexpected tensor {name:?} in weight file")));
        }
        Ok(())
    }
}
