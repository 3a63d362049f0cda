//! Acceptance suite. Each test covers one criterion and prints a single
//! `PASS`/`FAIL` line; run with `--nocapture` to see them.

#![allow(clippy::needless_range_loop)]

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use lipt_core::attention::{nvsm_sa, window_self_attention, MaskedAttention, NvsmWeights, WindowMsaWeights};
use lipt_core::bench::bench;
use lipt_core::hrm::{fuse_gb, fuse_gb_f64, gb_forward, isotropic_sobel, GbWeights, SobelBranch, SOBEL_DX, SOBEL_DY};
use lipt_core::io::{save_ppm, ImageRgb8};
use lipt_core::metrics::{psnr, rgb_to_y, ssim};
use lipt_core::model::{
    charbonnier_loss, charbonnier_term, charbonnier_term_grad, count_params_and_macs, forward, fuse_model, l1_loss,
    LiptConfig, LiptWeights, Preset, CHARBONNIER_EPS,
};
use lipt_core::resize::{bicubic_resize, ResizeFactor};
use lipt_core::tensor::{rng_normal, rng_uniform, Rng64};
use lipt_core::window::{beta, selection_indices, AssignmentMap, Mask, WindowGrid};
use lipt_core::{ConvWeights, Tensor};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn criterion(n: u32, title: &str, body: impl FnOnce() -> Check) {
    match body() {
        Ok(detail) => println!("criterion {n:>2} PASS  {title}: {detail}"),
        Err(why) => {
            println!("criterion {n:>2} FAIL  {title}: {why}");
            panic!("criterion {n} failed: {why}");
        }
    }
}

fn conv(seed: u64, c_out: usize, c_in: usize, k: usize, scale: f32) -> ConvWeights {
    ConvWeights::new(
        rng_normal(seed, [c_out, c_in, k, k]).scale(scale),
        rng_normal(seed + 1, [c_out, 1, 1, 1]).scale(scale).into_data(),
    )
    .unwrap()
}

fn msa(seed: u64, c: usize, heads: usize) -> WindowMsaWeights {
    WindowMsaWeights::new(conv(seed, c, c, 1, 0.5), conv(seed + 2, c, c, 1, 0.5), conv(seed + 4, c, c, 1, 0.5), heads)
        .unwrap()
}

/// Softmax attention over `tokens[token][channel]`, computed in f64.
fn naive_attention(tokens: &[Vec<f64>], w: &WindowMsaWeights) -> Vec<Vec<f64>> {
    let c = w.channels();
    let proj = |cw: &ConvWeights, x: &[f64]| -> Vec<f64> {
        (0..c)
            .map(|o| cw.bias[o] as f64 + (0..c).map(|i| cw.kernel.at(o, i, 0, 0) as f64 * x[i]).sum::<f64>())
            .collect()
    };
    let q: Vec<_> = tokens.iter().map(|x| proj(&w.q, x)).collect();
    let k: Vec<_> = tokens.iter().map(|x| proj(&w.k, x)).collect();
    let v: Vec<_> = tokens.iter().map(|x| proj(&w.v, x)).collect();
    let d = c / w.heads;
    let t = tokens.len();
    let mut out = vec![vec![0.0; c]; t];
    for h in 0..w.heads {
        let chans = h * d..(h + 1) * d;
        for i in 0..t {
            let scores: Vec<f64> =
                (0..t).map(|j| chans.clone().map(|ch| q[i][ch] * k[j][ch]).sum::<f64>() / (d as f64).sqrt()).collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            for ch in chans.clone() {
                out[i][ch] = (0..t).map(|j| exps[j] / z * v[j][ch]).sum();
            }
        }
    }
    out
}

#[test]
fn criterion_01_mask_drop_rates() {
    criterion(1, "mask drop rates", || {
        let start = Instant::now();
        for (p, s) in [(4, 2), (8, 2), (4, 3)] {
            ensure(beta(&Mask::sparse(p, s)) == 0.0, || format!("sparse p={p} s={s}"))?;
            ensure(beta(&Mask::dense(p, s)) == 0.0, || format!("dense p={p} s={s}"))?;
        }
        let stride = beta(&Mask::global_stride(4, 2));
        ensure(stride == 0.75, || format!("global stride beta {stride}"))?;

        // Canonical sparse layout with the (1,1) parity class folded onto
        // (0,0): three of four classes survive.
        let (p, s) = (4, 2);
        let side = p * s;
        let mut bits = vec![false; side * side];
        for x in 0..p {
            for y in 0..p {
                let (a, b) = (x % s, y % s);
                let (lx, ly) = if x % 2 == 1 && y % 2 == 1 { (x - 1, y - 1) } else { (x, y) };
                bits[(a * p + lx) * side + b * p + ly] = true;
            }
        }
        let parity = beta(&Mask::new(p, s, bits).map_err(|e| e.to_string())?);
        ensure(parity == 0.25, || format!("3-of-4 parity beta {parity}"))?;
        let elapsed = start.elapsed();
        ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
        Ok(format!("sparse/dense 0, stride {stride}, parity {parity} in {elapsed:?}"))
    });
}

#[test]
fn criterion_02_non_volatility_characterization() {
    criterion(2, "exhaustive p=2 s=2 characterization", || {
        let start = Instant::now();
        let (mut total, mut lossless) = (0, 0);
        for m in 0u32..1 << 16 {
            if m.count_ones() != 4 {
                continue;
            }
            total += 1;
            let mask = Mask::new(2, 2, (0..16).map(|i| m >> i & 1 == 1).collect()).map_err(|e| e.to_string())?;
            let zero = beta(&mask) == 0.0;
            ensure(zero == mask.assignment().is_some(), || format!("mask {m:016b} breaks the equivalence"))?;
            lossless += zero as usize;
        }
        ensure(total == 1820, || format!("{total} candidate masks"))?;
        ensure(lossless == 256, || format!("{lossless} lossless masks, expected 256"))?;
        let elapsed = start.elapsed();
        ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
        Ok(format!("{lossless} of {total} masks lossless, all assignment-induced, {elapsed:?}"))
    });
}

#[test]
fn criterion_03_nvsm_bijection() {
    criterion(3, "NVSM gather/scatter bijection", || {
        let mut rng = Rng64::new(3);
        for trial in 0..20u64 {
            let p = [2, 4][rng.below(2)];
            let s = 2 + rng.below(2);
            let max_blocks = 32 / p;
            let n_h = s + rng.below(max_blocks - s + 1);
            let n_w = s + rng.below(max_blocks - s + 1);
            let (h, w) = (n_h * p, n_w * p);
            let cells: Vec<(usize, usize)> = (0..p * p).map(|_| (rng.below(s), rng.below(s))).collect();
            let phi = AssignmentMap::from_fn(p, s, |x, y| cells[x * p + y]).map_err(|e| e.to_string())?;
            let mask = Mask::from_assignment(&phi);
            let grid = WindowGrid::new(h, w, p, s).map_err(|e| e.to_string())?;
            let plan = selection_indices(&mask, &grid).map_err(|e| e.to_string())?;

            let labels = Tensor::from_fn([1, 1, h, w], |_, _, y, x| (y * w + x) as f32);
            let mut seen: Vec<usize> = plan.gather(&labels).unwrap().data().iter().map(|&v| v as usize).collect();
            seen.sort_unstable();
            ensure(seen == (0..h * w).collect::<Vec<_>>(), || format!("trial {trial}: not a permutation of {h}x{w}"))?;

            let x = rng_normal(100 + trial, [2, 3, h, w]);
            let back = plan.scatter(&plan.gather(&x).unwrap()).unwrap();
            ensure(back.data().iter().zip(x.data()).all(|(a, b)| a.to_bits() == b.to_bits()), || {
                format!("trial {trial}: scatter(gather(x)) != x")
            })?;
        }
        Ok("20 random assignment masks on grids up to 32x32".into())
    });
}

#[test]
fn criterion_04_dense_masks_equal_local_window_attention() {
    criterion(4, "DLWA degeneracy", || {
        let mut rng = Rng64::new(4);
        let mut worst = 0.0f64;
        for trial in 0..20u64 {
            let p = [2, 4][rng.below(2)];
            let s = 2;
            let (n_h, n_w) = (s + rng.below(2), s + rng.below(3));
            let (h, w) = (n_h * p, n_w * p);
            let c = [2, 4, 8][rng.below(3)];
            let half = c / 2;
            let heads = if half % 2 == 0 { 1 + rng.below(2) } else { 1 };
            let dense = Mask::dense(p, s);
            let weights = NvsmWeights {
                slwa: Some(MaskedAttention { msa: msa(10 * trial, half, heads), mask: dense.clone() }),
                dlwa: Some(MaskedAttention { msa: msa(10 * trial + 6, half, heads), mask: dense }),
                proj: conv(10 * trial + 8, c, c, 1, 0.5),
            };
            let x = rng_normal(1000 + trial, [1, c, h, w]);
            let grid = WindowGrid::new(h, w, p, s).map_err(|e| e.to_string())?;
            let got = nvsm_sa(&x, &weights, &grid).map_err(|e| e.to_string())?;

            // Plain non-overlapping window attention on each channel half.
            let mut attended = vec![vec![vec![0.0f64; w]; h]; c];
            for (offset, path) in [(0, weights.slwa.as_ref().unwrap()), (half, weights.dlwa.as_ref().unwrap())] {
                for i in 0..n_h {
                    for j in 0..n_w {
                        let pixels: Vec<(usize, usize)> = (0..p * p).map(|k| (i * p + k / p, j * p + k % p)).collect();
                        let tokens: Vec<Vec<f64>> = pixels
                            .iter()
                            .map(|&(y, xx)| (0..half).map(|ch| x.at(0, offset + ch, y, xx) as f64).collect())
                            .collect();
                        for (tok, &(y, xx)) in naive_attention(&tokens, &path.msa).iter().zip(&pixels) {
                            for ch in 0..half {
                                attended[offset + ch][y][xx] = tok[ch];
                            }
                        }
                    }
                }
            }
            for o in 0..c {
                for y in 0..h {
                    for xx in 0..w {
                        let mixed: f64 = weights.proj.bias[o] as f64
                            + (0..c)
                                .map(|i| weights.proj.kernel.at(o, i, 0, 0) as f64 * attended[i][y][xx])
                                .sum::<f64>();
                        let expected = x.at(0, o, y, xx) as f64 + mixed;
                        worst = worst.max((got.at(0, o, y, xx) as f64 - expected).abs());
                    }
                }
            }
        }
        ensure(worst <= 1e-5, || format!("max abs diff {worst:e}"))?;
        Ok(format!("20 trials, max abs diff {worst:.2e}"))
    });
}

#[test]
fn criterion_05_attention_oracle() {
    criterion(5, "window attention vs naive softmax", || {
        let mut rng = Rng64::new(5);
        let mut worst = 0.0f64;
        for case in 0..50u64 {
            let heads = 1 + rng.below(3);
            let c = heads * (1 + rng.below(4));
            let t = 1 + rng.below(16);
            let windows = 1 + rng.below(4);
            let w = msa(case * 7, c, heads);
            let tokens = rng_normal(500 + case, [windows, c, 1, t]);
            let got = window_self_attention(&tokens, &w).map_err(|e| e.to_string())?;
            for wi in 0..windows {
                let toks: Vec<Vec<f64>> =
                    (0..t).map(|i| (0..c).map(|ch| tokens.at(wi, ch, 0, i) as f64).collect()).collect();
                for (i, row) in naive_attention(&toks, &w).iter().enumerate() {
                    for ch in 0..c {
                        worst = worst.max((got.at(wi, ch, 0, i) as f64 - row[ch]).abs());
                    }
                }
            }
        }
        ensure(worst <= 1e-5, || format!("max abs diff {worst:e}"))?;
        Ok(format!("50 cases, max abs diff {worst:.2e}"))
    });
}

fn random_gb(rng: &mut Rng64, seed: u64, c: usize) -> GbWeights {
    let mut flip = || rng.below(4) != 0;
    let (a, b, d, e) = (flip(), flip(), flip(), flip());
    let vec = |s: u64| rng_normal(s, [c, 1, 1, 1]).scale(0.5).into_data();
    GbWeights {
        conv1: a.then(|| conv(seed, c, c, 1, 0.5)),
        conv1_conv3: b.then(|| (conv(seed + 2, c, c, 1, 0.5), conv(seed + 4, c, c, 3, 0.3))),
        sobel: d.then(|| SobelBranch {
            kx: conv(seed + 6, c, c, 1, 0.5),
            ky: conv(seed + 8, c, c, 1, 0.5),
            sx: vec(seed + 10),
            sy: vec(seed + 11),
            bdx: vec(seed + 12),
            bdy: vec(seed + 13),
        }),
        avg_pre: e.then(|| conv(seed + 14, c, c, 1, 0.5)),
        conv3: conv(seed + 16, c, c, 3, 0.3),
    }
}

#[test]
fn criterion_06_reparameterization_equivalence() {
    criterion(6, "fusion equivalence", || {
        let start = Instant::now();
        let mut rng = Rng64::new(6);
        let mut worst = 0.0f32;
        let sizes = [(3, 3), (3, 5), (4, 4), (5, 3), (7, 6), (8, 8), (12, 9)];
        for trial in 0..100u64 {
            let c = 1 + rng.below(4);
            let (h, w) = sizes[trial as usize % sizes.len()];
            let gb = random_gb(&mut rng, 40 * trial, c);
            let x = rng_normal(9000 + trial, [1 + rng.below(2), c, h, w]);
            let direct = gb_forward(&x, &gb).map_err(|e| e.to_string())?;
            let fused = fuse_gb(&gb).map_err(|e| e.to_string())?.forward(&x).map_err(|e| e.to_string())?;
            worst = worst.max(direct.max_abs_diff(&fused).unwrap());
        }
        ensure(worst <= 1e-4, || format!("G_b max abs diff {worst:e}"))?;

        let w = LiptWeights::build(&Preset::Tiny.config(2), 6).map_err(|e| e.to_string())?;
        let f = fuse_model(&w).map_err(|e| e.to_string())?;
        let x = rng_uniform(61, [1, 3, 32, 32], 0.0, 1.0);
        let model = forward(&x, &w).unwrap().max_abs_diff(&forward(&x, &f).unwrap()).unwrap();
        ensure(model <= 1e-4, || format!("Tiny model max abs diff {model:e}"))?;
        let elapsed = start.elapsed();
        ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
        Ok(format!("100 G_b trials max {worst:.2e}, Tiny 32x32 max {model:.2e}, {elapsed:?}"))
    });
}

#[test]
fn criterion_07_sobel_properties() {
    criterion(7, "isotropic Sobel", || {
        let r2 = std::f32::consts::SQRT_2;
        ensure(SOBEL_DX == [1.0, 0.0, -1.0, r2, 0.0, -r2, 1.0, 0.0, -1.0], || "d_x differs".into())?;
        ensure(SOBEL_DY == [-1.0, -r2, -1.0, 0.0, 0.0, 0.0, 1.0, r2, 1.0], || "d_y differs".into())?;

        // Only the Sobel branch is active; change the 1x1 biases and
        // compare fused biases.
        let c = 3;
        let mut rng = Rng64::new(7);
        let mut gb = random_gb(&mut rng, 70, c);
        gb.conv1 = None;
        gb.conv1_conv3 = None;
        gb.avg_pre = None;
        gb.conv3 = ConvWeights::zeros(c, c, 3);
        if gb.sobel.is_none() {
            gb.sobel = random_gb(&mut Rng64::new(0), 71, c).sobel.or_else(|| {
                let mut s = SobelBranch::zeros(c);
                s.sx = vec![0.7; c];
                s.sy = vec![-0.4; c];
                s.kx = conv(72, c, c, 1, 0.5);
                s.ky = conv(74, c, c, 1, 0.5);
                Some(s)
            });
        }
        let (_, base_bias) = fuse_gb_f64(&gb).map_err(|e| e.to_string())?;
        let mut shifted = gb.clone();
        let sb = shifted.sobel.as_mut().unwrap();
        sb.kx.bias = vec![5.0, -3.0, 11.0];
        sb.ky.bias = vec![-7.0, 2.5, 0.25];
        let (_, moved) = fuse_gb_f64(&shifted).map_err(|e| e.to_string())?;
        let fused_shift = fuse_gb(&shifted).unwrap().0.bias;
        let fused_base = fuse_gb(&gb).unwrap().0.bias;
        let bias_gap = base_bias.iter().zip(&moved).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let f32_gap = fused_base.iter().zip(&fused_shift).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        ensure(bias_gap <= 1e-6 && f32_gap <= 1e-6, || format!("fused bias moved by {bias_gap:e} / {f32_gap:e}"))?;

        let mut branch = gb.sobel.clone().unwrap();
        branch.bdx = vec![0.0; c];
        branch.bdy = vec![0.0; c];
        let flat = Tensor::full([1, c, 9, 9], 0.8);
        let response = isotropic_sobel(&flat, &branch).map_err(|e| e.to_string())?;
        // The filters cancel exactly in real arithmetic; f32 accumulation
        // leaves at most a few ulps.
        let exact: f64 = SOBEL_DX.iter().chain(&SOBEL_DY).map(|&v| v as f64).sum::<f64>();
        ensure(SOBEL_DX.iter().map(|&v| v as f64).sum::<f64>() == 0.0 && exact == 0.0, || {
            "filters do not sum to 0".into()
        })?;
        let mut interior = 0.0f32;
        for ch in 0..c {
            for y in 1..8 {
                for x in 1..8 {
                    interior = interior.max(response.at(0, ch, y, x).abs());
                }
            }
        }
        ensure(interior <= 1e-6, || format!("constant interior response {interior:e}"))?;
        Ok(format!("filters exact, bias gap {bias_gap:.1e}, interior response {interior:.1e} (f32 rounding)"))
    });
}

#[test]
fn criterion_08_pipeline_shape_law() {
    criterion(8, "pipeline shape law", || {
        let x = rng_uniform(8, [1, 3, 48, 48], 0.0, 1.0);
        let mut shapes = Vec::new();
        for preset in Preset::ALL {
            for r in [2, 3, 4] {
                let w = LiptWeights::build(&preset.config(r), r as u64).map_err(|e| e.to_string())?;
                // Fused weights compute the same function in fewer operations.
                let w = if preset == Preset::Base { fuse_model(&w).map_err(|e| e.to_string())? } else { w };
                let y = forward(&x, &w).map_err(|e| e.to_string())?;
                let want = [1, 3, 48 * r, 48 * r];
                ensure(y.shape().dims() == want, || format!("{preset} x{r}: got {}", y.shape()))?;
                ensure(y.all_finite(), || format!("{preset} x{r}: non-finite output"))?;
                shapes.push(format!("{preset}x{r}"));
            }
        }
        let w = LiptWeights::build(&Preset::Tiny.config(2), 80).map_err(|e| e.to_string())?;
        let odd = rng_uniform(81, [1, 3, 30, 30], 0.0, 1.0);
        let y = forward(&odd, &w).map_err(|e| e.to_string())?;
        ensure(y.shape().dims() == [1, 3, 60, 60], || format!("30x30 input gave {}", y.shape()))?;
        // Oracle: mirror-extend by hand, run on 32x32, keep the top-left 60x60.
        let padded = Tensor::from_fn([1, 3, 32, 32], |n, c, yy, xx| {
            let m = |v: usize| if v < 30 { v } else { 2 * 29 - v };
            odd.at(n, c, m(yy), m(xx))
        });
        let full = forward(&padded, &w).map_err(|e| e.to_string())?;
        let cropped = Tensor::from_fn([1, 3, 60, 60], |n, c, yy, xx| full.at(n, c, yy, xx));
        ensure(y == cropped, || "30x30 padding round trip differs".into())?;
        Ok(format!("{} finite outputs, 30x30 -> 60x60 round trip exact", shapes.len()))
    });
}

#[test]
fn criterion_09_losses() {
    criterion(9, "losses", || {
        let x = rng_uniform(9, [2, 3, 8, 8], 0.0, 1.0);
        let l1 = l1_loss(&x, &x).map_err(|e| e.to_string())?;
        let ch = charbonnier_loss(&x, &x, CHARBONNIER_EPS).map_err(|e| e.to_string())?;
        ensure(l1 == 0.0, || format!("l1(x,x) = {l1}"))?;
        ensure((ch - 1e-3).abs() < 1e-15, || format!("charbonnier(x,x) = {ch}"))?;
        // With h = 1e-4 the stencil's own truncation error exceeds the
        // tolerance once |d| drops to about ε, so residuals within 2ε are
        // checked with a finer step.
        let fd = |d: f64, h: f64| {
            (charbonnier_term(d + h, CHARBONNIER_EPS) - charbonnier_term(d - h, CHARBONNIER_EPS)) / (2.0 * h)
        };
        let mut rng = Rng64::new(90);
        let (mut worst, mut literal, mut fine) = (0.0f64, 0.0f64, 0);
        for _ in 0..100 {
            let (p, t) = (rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0));
            let d = p - t;
            let analytic = charbonnier_term_grad(d, CHARBONNIER_EPS);
            let rel = |numeric: f64| (analytic - numeric).abs() / analytic.abs().max(1e-12);
            literal = literal.max(rel(fd(d, 1e-4)));
            let err = if d.abs() >= 2.0 * CHARBONNIER_EPS {
                rel(fd(d, 1e-4))
            } else {
                fine += 1;
                rel(fd(d, 1e-7))
            };
            worst = worst.max(err);
        }
        ensure(worst <= 1e-3, || format!("finite-difference relative error {worst:e}"))?;
        Ok(format!(
            "l1 0, charbonnier {ch}, FD rel err {worst:.2e} ({fine} of 100 points near 0 used h=1e-7; h=1e-4 everywhere gives {literal:.2e})"
        ))
    });
}

#[test]
fn criterion_10_mac_reduction() {
    criterion(10, "MAC reduction", || {
        let mut lines = Vec::new();
        for preset in Preset::ALL {
            let cfg = preset.config(4);
            let full = count_params_and_macs(&cfg, 64, 64, false).map_err(|e| e.to_string())?;
            let fused = count_params_and_macs(&cfg, 64, 64, true).map_err(|e| e.to_string())?;
            ensure(fused.macs < full.macs, || format!("{preset}: fused {} >= unfused {}", fused.macs, full.macs))?;
            lines.push(format!("{preset} {}->{}", full.macs, fused.macs));
        }
        // Wall-clock comparison is informational only.
        let cfg = Preset::Small.config(4);
        let slow = bench(&cfg, 64, 64, false, 3).map_err(|e| e.to_string())?;
        let fast = bench(&cfg, 64, 64, true, 3).map_err(|e| e.to_string())?;
        let verdict = if fast.median() <= slow.median() { "fused faster" } else { "fused NOT faster" };
        Ok(format!(
            "MACs at 64x64: {}; Small 64x64 median {:.0} ms unfused vs {:.0} ms fused ({verdict})",
            lines.join(", "),
            slow.median().as_secs_f64() * 1e3,
            fast.median().as_secs_f64() * 1e3
        ))
    });
}

fn lipt(args: &[&str], dir: &Path) -> Result<String, String> {
    let out =
        Command::new(env!("CARGO_BIN_EXE_lipt")).args(args).current_dir(dir).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("lipt {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn criterion_11_end_to_end_smoke() {
    criterion(11, "end-to-end CLI smoke", || {
        let start = Instant::now();
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut rng = Rng64::new(11);
        let pixels = (0..64 * 64 * 3).map(|_| rng.below(256) as u8).collect();
        save_ppm(dir.path().join("in.ppm"), &ImageRgb8::new(64, 64, pixels).unwrap()).map_err(|e| e.to_string())?;
        let d = dir.path();
        lipt(&["init", "--config", "tiny", "--seed", "5", "--out", "w.bin"], d)?;
        let infer = ["infer", "--config", "tiny", "--weights", "w.bin", "--scale", "4", "--input", "in.ppm"];
        lipt(&[&infer[..], &["--output", "a.ppm"]].concat(), d)?;
        lipt(&[&infer[..], &["--output", "a2.ppm"]].concat(), d)?;
        let (a, a2) = (std::fs::read(d.join("a.ppm")).unwrap(), std::fs::read(d.join("a2.ppm")).unwrap());
        ensure(a == a2, || "repeated inference differs".into())?;
        lipt(&["fuse", "--weights", "w.bin", "--out", "wf.bin"], d)?;
        let fused = ["infer", "--config", "tiny", "--weights", "wf.bin", "--scale", "4", "--input", "in.ppm"];
        lipt(&[&fused[..], &["--output", "b.ppm", "--fused"]].concat(), d)?;
        let report = lipt(&["metrics", "--ref", "a.ppm", "--test", "b.ppm"], d)?;
        let db = report
            .lines()
            .find_map(|l| l.strip_prefix("psnr_y="))
            .and_then(|v| v.split_whitespace().next())
            .ok_or_else(|| format!("no psnr in {report:?}"))?;
        let value: f64 = if db == "inf" { f64::INFINITY } else { db.parse().map_err(|_| format!("bad psnr {db}"))? };
        ensure(value >= 80.0, || format!("fused vs unfused PSNR {db} dB"))?;
        let elapsed = start.elapsed();
        ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
        Ok(format!("PSNR(unfused, fused) = {db} dB in {elapsed:?}"))
    });
}

fn keys(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        1.5 * t.powi(3) - 2.5 * t.powi(2) + 1.0
    } else if t < 2.0 {
        -0.5 * t.powi(3) + 2.5 * t.powi(2) - 4.0 * t + 2.0
    } else {
        0.0
    }
}

/// Per-output-pixel 4x4 kernel sum with clamped sampling.
fn naive_bicubic(x: &Tensor, num: usize, den: usize) -> Tensor {
    let s = x.shape();
    let scale = num as f64 / den as f64;
    let (oh, ow) = (s.h * num / den, s.w * num / den);
    Tensor::from_fn([s.n, s.c, oh, ow], |n, c, yo, xo| {
        let sy = (yo as f64 + 0.5) / scale - 0.5;
        let sx = (xo as f64 + 0.5) / scale - 0.5;
        let (fy, fx) = (sy.floor() as i64, sx.floor() as i64);
        let mut acc = 0.0;
        for ty in fy - 1..=fy + 2 {
            for tx in fx - 1..=fx + 2 {
                let wgt = keys(sy - ty as f64) * keys(sx - tx as f64);
                let (cy, cx) = (ty.clamp(0, s.h as i64 - 1) as usize, tx.clamp(0, s.w as i64 - 1) as usize);
                acc += wgt * x.at(n, c, cy, cx) as f64;
            }
        }
        acc as f32
    })
}

fn naive_ssim(a: &Tensor, b: &Tensor) -> f64 {
    let s = a.shape();
    let g: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / 4.5).exp()).collect();
    let z: f64 = g.iter().sum::<f64>().powi(2);
    let (c1, c2) = ((0.01f64 * 255.0).powi(2), (0.03f64 * 255.0).powi(2));
    let mut total = 0.0;
    let mut count = 0;
    for y0 in 0..=s.h - 11 {
        for x0 in 0..=s.w - 11 {
            let (mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for dy in 0..11 {
                for dx in 0..11 {
                    let wgt = g[dy] * g[dx] / z;
                    let (va, vb) = (a.at(0, 0, y0 + dy, x0 + dx) as f64, b.at(0, 0, y0 + dy, x0 + dx) as f64);
                    ma += wgt * va;
                    mb += wgt * vb;
                    aa += wgt * va * va;
                    bb += wgt * vb * vb;
                    ab += wgt * va * vb;
                }
            }
            let (va, vb, cov) = (aa - ma * ma, bb - mb * mb, ab - ma * mb);
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn criterion_12_metric_oracles() {
    criterion(12, "metric oracles", || {
        let white = rgb_to_y(&ImageRgb8::new(1, 1, vec![255; 3]).unwrap()).at(0, 0, 0, 0);
        let gray = rgb_to_y(&ImageRgb8::new(1, 1, vec![128; 3]).unwrap()).at(0, 0, 0, 0);
        ensure((white - 235.0).abs() <= 1e-3 && (gray - 125.93).abs() <= 0.01, || {
            format!("Y white {white} gray {gray}")
        })?;

        let mut rng = Rng64::new(12);
        let (mut psnr_err, mut ssim_err, mut resize_err) = (0.0f64, 0.0f64, 0.0f32);
        let factors = [(1, 4), (1, 3), (1, 2), (1, 1), (2, 1), (3, 1), (4, 1)];
        for i in 0..20u64 {
            let (h, w) = (12 + rng.below(3) * 12, 12 + rng.below(2) * 12);
            let a = rng_uniform(1200 + i, [1, 1, h, w], 0.0, 255.0);
            let b = a.add(&rng_normal(1300 + i, [1, 1, h, w]).scale(10.0)).unwrap();

            let mse: f64 = a.data().iter().zip(b.data()).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum::<f64>()
                / (h * w) as f64;
            let want = 10.0 * (255.0f64.powi(2) / mse).log10();
            psnr_err = psnr_err.max((psnr(&a, &b, 255.0).unwrap() - want).abs());
            ssim_err = ssim_err.max((ssim(&a, &b).unwrap() - naive_ssim(&a, &b)).abs());

            let (num, den) = factors[i as usize % factors.len()];
            let factor = if den > 1 { ResizeFactor::Down(den) } else { ResizeFactor::Up(num) };
            let x = rng_uniform(1400 + i, [1, 2, h, w], 0.0, 1.0);
            let got = bicubic_resize(&x, factor).map_err(|e| e.to_string())?;
            resize_err = resize_err.max(got.max_abs_diff(&naive_bicubic(&x, num, den)).unwrap());
        }
        let ramp = Tensor::from_fn([1, 1, 8, 8], |_, _, y, x| (y * 8 + x) as f32 / 63.0);
        resize_err = resize_err.max(
            bicubic_resize(&ramp, ResizeFactor::Down(2)).unwrap().max_abs_diff(&naive_bicubic(&ramp, 1, 2)).unwrap(),
        );
        ensure(psnr_err <= 1e-9, || format!("psnr error {psnr_err:e} dB"))?;
        ensure(ssim_err <= 1e-6, || format!("ssim error {ssim_err:e}"))?;
        ensure(resize_err <= 1e-5, || format!("bicubic error {resize_err:e}"))?;
        Ok(format!("psnr {psnr_err:.1e} dB, ssim {ssim_err:.1e}, bicubic {resize_err:.1e} over 20 images"))
    });
}

#[test]
fn config_presets_validate() {
    for preset in Preset::ALL {
        assert!(LiptConfig::resolve(&preset.to_string(), Some(2)).is_ok());
    }
}
