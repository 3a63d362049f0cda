use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lipt_core::bench::{bench, DEFAULT_RUNS};
use lipt_core::io::{load_ppm, save_ppm, ImageRgb8, WeightFile};
use lipt_core::metrics::{crop_border, format_db, psnr, rgb_to_y, ssim};
use lipt_core::model::{forward, LiptConfig, LiptWeights};
use lipt_core::window::{beta, coverage_map, Mask};
use lipt_core::{Error, Result, Tensor};

#[derive(Parser)]
#[command(name = "lipt", version, about = "LIPT super-resolution inference engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Upscale a PPM image.
    Infer {
        /// Preset (tiny, small, base) or JSON config file.
        #[arg(long)]
        config: String,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        scale: usize,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Run with single-conv HRMs, fusing on the fly if needed.
        #[arg(long)]
        fused: bool,
    },
    /// Collapse every HRM of a weight file into plain 3x3 convs.
    Fuse {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sampling-mask tools.
    Mask {
        #[command(subcommand)]
        command: MaskCommand,
    },
    /// Time forward passes on a random input.
    Bench {
        #[arg(long)]
        config: String,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        #[arg(long, default_value_t = DEFAULT_RUNS)]
        runs: usize,
        #[arg(long)]
        fused: bool,
        /// Upscale factor for preset configs.
        #[arg(long)]
        scale: Option<usize>,
    },
    /// Luma PSNR and SSIM between two PPM images.
    Metrics {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Pixels dropped from every side before measuring.
        #[arg(long, default_value_t = 0)]
        crop_border: usize,
    },
    /// Write randomly initialized weights.
    Init {
        #[arg(long)]
        config: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Upscale factor for preset configs.
        #[arg(long)]
        scale: Option<usize>,
    },
}

#[derive(Subcommand)]
enum MaskCommand {
    /// Print the drop rate, verdict and coverage grid of a mask file.
    Verify {
        #[arg(long)]
        mask: PathBuf,
    },
    /// Write one of the built-in masks.
    Gen {
        #[arg(long)]
        kind: MaskKind,
        #[arg(long)]
        p: usize,
        #[arg(long)]
        s: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MaskKind {
    Sparse,
    Dense,
    Stride,
}

/// Prefixes I/O failures with the file involved.
fn at<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })
}

fn load_weights(path: &Path) -> Result<LiptWeights> {
    LiptWeights::from_weight_file(&at(path, WeightFile::load(path))?)
}

/// RGB image as the model's input tensor; grayscale models see the channel mean.
fn image_input(img: &ImageRgb8, in_channels: usize) -> Result<Tensor> {
    let rgb = img.to_tensor();
    if in_channels == 3 {
        return Ok(rgb);
    }
    let s = rgb.shape();
    Ok(Tensor::from_fn([1, 1, s.h, s.w], |_, _, y, x| (0..3).map(|c| rgb.at(0, c, y, x)).sum::<f32>() / 3.0))
}

fn infer(config: &str, weights: &Path, scale: usize, input: &Path, output: &Path, fused: bool) -> Result<()> {
    let mut w = load_weights(weights)?;
    let cfg = LiptConfig::resolve(config, Some(scale))?;
    if cfg != w.config {
        return Err(Error::Config(format!(
            "--config {config} --scale {scale} does not match the architecture stored in {}",
            weights.display()
        )));
    }
    if fused && !w.is_fused() {
        w = w.fuse()?;
    }
    let img = at(input, load_ppm(input))?;
    let y = forward(&image_input(&img, cfg.in_channels)?, &w)?;
    at(output, save_ppm(output, &ImageRgb8::from_tensor(&y)?))
}

fn fuse(weights: &Path, out: &Path) -> Result<()> {
    at(out, load_weights(weights)?.fuse()?.to_weight_file()?.save(out))
}

fn mask_verify(path: &Path) -> Result<()> {
    let mask: Mask = at(path, std::fs::read_to_string(path).map_err(Error::from))?.parse()?;
    let b = beta(&mask);
    let verdict = if b == 0.0 { "non-volatile" } else { "volatile" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "beta={b:.4} {verdict}")?;
    writeln!(out, "coverage (p={}, s={}):", mask.p(), mask.s())?;
    write!(out, "{}", coverage_map(&mask))?;
    Ok(())
}

fn mask_gen(kind: MaskKind, p: usize, s: usize, out: &Path) -> Result<()> {
    if p == 0 || s == 0 {
        return Err(Error::Mask(format!("p and s must be positive, got p={p} s={s}")));
    }
    let mask = match kind {
        MaskKind::Sparse => Mask::sparse(p, s),
        MaskKind::Dense => Mask::dense(p, s),
        MaskKind::Stride => Mask::global_stride(p, s),
    };
    at(out, std::fs::write(out, mask.to_string()).map_err(Error::from))
}

fn metrics(reference: &Path, test: &Path, border: usize) -> Result<()> {
    let a = at(reference, load_ppm(reference))?;
    let b = at(test, load_ppm(test))?;
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::Shape(format!(
            "images differ in size: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let ya = crop_border(&rgb_to_y(&a), border)?;
    let yb = crop_border(&rgb_to_y(&b), border)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "psnr_y={} dB", format_db(psnr(&ya, &yb, 255.0)?))?;
    writeln!(out, "ssim_y={:.6}", ssim(&ya, &yb)?)?;
    Ok(())
}

fn init(config: &str, seed: u64, out: &Path, scale: Option<usize>) -> Result<()> {
    let cfg = LiptConfig::resolve(config, scale)?;
    at(out, LiptWeights::build(&cfg, seed)?.to_weight_file()?.save(out))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Infer { config, weights, scale, input, output, fused } => {
            infer(&config, &weights, scale, &input, &output, fused)
        }
        Command::Fuse { weights, out } => fuse(&weights, &out),
        Command::Mask { command: MaskCommand::Verify { mask } } => mask_verify(&mask),
        Command::Mask { command: MaskCommand::Gen { kind, p, s, out } } => mask_gen(kind, p, s, &out),
        Command::Bench { config, width, height, runs, fused, scale } => {
            let cfg = LiptConfig::resolve(&config, scale)?;
            let report = bench(&cfg, width, height, fused, runs)?;
            writeln!(std::io::stdout().lock(), "{report}")?;
            Ok(())
        }
        Command::Metrics { reference, test, crop_border } => metrics(&reference, &test, crop_border),
        Command::Init { config, seed, out, scale } => init(&config, seed, &out, scale),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: usage: {first}");
            return ExitCode::FAILURE;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
