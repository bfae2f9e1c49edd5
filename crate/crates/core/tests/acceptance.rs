//! End-to-end acceptance checks. Each criterion prints one `PASS` or `FAIL`
//! line; the test fails if any criterion does.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use hintcolor::autograd::{Graph, Var};
use hintcolor::dataset::{
    build_samples, make_hint_map, samples_from_frames, synthetic_scene, write_samples, CannyParams, DatasetManifest,
    FrameEntry, HintParams, SequenceSample,
};
use hintcolor::image::{save_png, ImageTensor, InputMode};
use hintcolor::inference::{colorize_independent, colorize_sequence, FrameInput, FrameModel};
use hintcolor::losses::{
    adversarial_loss_d_graph, adversarial_loss_g_graph, content_loss_graph, joint_generator_loss, l1_loss_graph,
    style_loss_graph, LossWeights, SimpleExtractor,
};
use hintcolor::metrics::{evaluate_sequence, fid, psnr, ssim, FidFeatures};
use hintcolor::model::{receptive_field, Discriminator, DiscriminatorConfig, Generator, GeneratorConfig, StageCounts};
use hintcolor::tensor::Tensor;
use hintcolor::training::{
    load_generator, load_train_state, save_checkpoint, toy_overfit_config, train_loop, ExtractorConfig, LoopOutput,
    TrainConfig, TrainState,
};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn rand_t(shape: [usize; 4], lo: f64, hi: f64, seed: u64) -> Tensor<f64> {
    Tensor::uniform(shape, lo, hi, &mut ChaCha8Rng::seed_from_u64(seed))
}

// ---------------------------------------------------------------------------
// 1. Architecture fidelity

fn architecture() -> Outcome {
    let rf = receptive_field(&DiscriminatorConfig::default());
    check(rf == 70, format!("receptive field {rf}, expected 70"))?;
    let counts = Generator::<f32>::new(GeneratorConfig::default(), 0).map_err(|e| e.to_string())?.stage_counts();
    let expected = StageCounts { downsampling: 2, residual: 8, upsampling: 2 };
    check(counts == expected, format!("generator stages {counts:?}"))?;
    Ok(format!("receptive field {rf}; generator {}/{}/{} down/residual/up", 2, 8, 2))
}

// ---------------------------------------------------------------------------
// 2. Loss stack

/// Worst relative error between tape gradients and central differences of
/// `f` with respect to every coordinate of `input`.
fn fd_error(input: &Tensor<f64>, f: &dyn Fn(&mut Graph<f64>, Var) -> Var) -> f64 {
    let mut g = Graph::new();
    let x = g.param(Arc::new(input.clone()));
    let loss = f(&mut g, x);
    let grads = g.backward(loss);
    let analytic = grads.get(x).cloned().unwrap_or_else(|| Tensor::zeros(input.shape()));
    let eval = |t: Tensor<f64>| {
        let mut g = Graph::no_grad();
        let x = g.constant(t);
        let l = f(&mut g, x);
        g.value(l).to_scalar()
    };
    let h = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..input.len() {
        let mut plus = input.clone();
        plus.data_mut()[i] += h;
        let mut minus = input.clone();
        minus.data_mut()[i] -= h;
        let numeric = (eval(plus) - eval(minus)) / (2.0 * h);
        let a = analytic.data()[i];
        worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
    }
    worst
}

fn loss_stack() -> Outcome {
    let w = LossWeights::default();
    let defaults = (w.lambda_adv, w.lambda_cont, w.lambda_style, w.lambda_l1);
    check(defaults == (1.0, 1.0, 1000.0, 10.0), format!("lambda defaults {defaults:?}"))?;

    let fx = SimpleExtractor::<f64>::seeded_toy(3);
    let pred = rand_t([1, 3, 8, 8], -0.9, 0.9, 1);
    let gt = rand_t([1, 3, 8, 8], -0.9, 0.9, 2);
    let logits = rand_t([1, 1, 4, 4], -2.0, 2.0, 3);
    let other = rand_t([1, 1, 4, 4], -2.0, 2.0, 4);

    let gt_c = gt.clone();
    let l1 = fd_error(&pred, &|g, x| {
        let t = g.constant(gt_c.clone());
        l1_loss_graph(g, x, t).unwrap()
    });
    let gt_c = gt.clone();
    let cont = fd_error(&pred, &|g, x| {
        let t = g.constant(gt_c.clone());
        content_loss_graph(g, x, t, &fx).unwrap()
    });
    let gt_c = gt.clone();
    let style = fd_error(&pred, &|g, x| {
        let t = g.constant(gt_c.clone());
        style_loss_graph(g, x, t, &fx).unwrap()
    });
    let adv_g = fd_error(&logits, &|g, x| adversarial_loss_g_graph(g, x));
    let other_c = other.clone();
    let adv_d_real = fd_error(&logits, &|g, x| {
        let f = g.constant(other_c.clone());
        adversarial_loss_d_graph(g, x, f).unwrap()
    });
    let adv_d_fake = fd_error(&logits, &|g, x| {
        let r = g.constant(other.clone());
        adversarial_loss_d_graph(g, r, x).unwrap()
    });
    let worst = [l1, cont, style, adv_g, adv_d_real, adv_d_fake].into_iter().fold(0.0, f64::max);
    check(
        worst < 1e-3,
        format!("FD rel. errors l1 {l1:.2e} cont {cont:.2e} style {style:.2e} adv {adv_g:.2e}/{adv_d_real:.2e}/{adv_d_fake:.2e}"),
    )?;

    let b = joint_generator_loss(&pred, &gt, &logits, &w, &fx, InputMode::LineArt).map_err(|e| e.to_string())?;
    let recomposed = w.lambda_adv * b.adv
        + w.lambda_cont * b.cont.unwrap_or(f64::NAN)
        + w.lambda_style * b.style
        + w.lambda_l1 * b.l1;
    let gap = (recomposed - b.total).abs();
    check(gap <= 1e-5, format!("recomposition gap {gap:e}"))?;
    Ok(format!("worst FD rel. error {worst:.1e}; recomposition gap {gap:.1e}; lambdas (1, 1, 1000, 10)"))
}

// ---------------------------------------------------------------------------
// 3. Discriminator wiring

fn discriminator_wiring() -> Outcome {
    let cfg = DiscriminatorConfig::default();
    check(cfg.in_channels() == 8, format!("discriminator takes {} channels", cfg.in_channels()))?;
    let d = Discriminator::<f64>::new(DiscriminatorConfig { base_channels: 8, ..cfg }, 5).map_err(|e| e.to_string())?;
    let first = d.layer_specs()[0].in_channels;
    check(first == 8, format!("first layer takes {first} channels"))?;
    let inputs = [
        rand_t([1, 1, 32, 32], -1.0, 1.0, 1),
        rand_t([1, 3, 32, 32], -1.0, 1.0, 2),
        rand_t([1, 1, 32, 32], -1.0, 1.0, 3),
        rand_t([1, 3, 32, 32], -1.0, 1.0, 4),
    ];
    let base = d.forward_batch(&inputs[0], &inputs[1], &inputs[2], &inputs[3]).map_err(|e| e.to_string())?;
    let mut line_prev = inputs[0].clone();
    line_prev.set(0, 0, 16, 16, -line_prev.get(0, 0, 16, 16) + 0.5);
    let moved = d.forward_batch(&line_prev, &inputs[1], &inputs[2], &inputs[3]).map_err(|e| e.to_string())?;
    let diff = base.max_abs_diff(&moved);
    check(diff > 0.0, "perturbing line_prev left the logits unchanged")?;
    let wrong = d.forward_batch(&inputs[1], &inputs[1], &inputs[2], &inputs[3]);
    check(wrong.is_err(), "a 3-channel line_prev was accepted")?;
    Ok(format!("8 input channels (1+3+1+3); line_prev perturbation moves logits by {diff:.2e}"))
}

// ---------------------------------------------------------------------------
// 4. Hint protocol

fn hint_protocol() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let data: Vec<f64> = (0..256 * 256 * 3).map(|_| rng.gen_range(-0.9..0.9)).collect();
    let gt = ImageTensor::new(256, 256, 3, data).map_err(|e| e.to_string())?;
    let params = HintParams { patch_size: 4, reveal_fraction: 0.01, rng_seed: 7 };
    let hint = make_hint_map(&gt, &params).map_err(|e| e.to_string())?;
    let mut revealed = 0;
    let mut worst = 0.0f64;
    for cy in 0..64 {
        for cx in 0..64 {
            let background = (0..16).all(|k| hint.pixel(cy * 4 + k / 4, cx * 4 + k % 4) == [-1.0; 3]);
            if background {
                continue;
            }
            revealed += 1;
            for c in 0..3 {
                let mean = (0..16).map(|k| gt.get(cy * 4 + k / 4, cx * 4 + k % 4, c)).sum::<f64>() / 16.0;
                for k in 0..16 {
                    worst = worst.max((hint.get(cy * 4 + k / 4, cx * 4 + k % 4, c) - mean).abs());
                }
            }
        }
    }
    check(revealed == 40, format!("{revealed} cells revealed, expected 40"))?;
    check(worst < 1e-6, format!("revealed cell deviates from its mean by {worst:e}"))?;
    Ok(format!("40 of 4096 cells revealed; max deviation from cell mean {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// Shared toy experiment

const TOY_FRAMES: usize = 10;
const TOY_SIDE: usize = 32;

fn toy_samples() -> Vec<SequenceSample<f32>> {
    let frames: Vec<_> = synthetic_scene::<f32>(TOY_FRAMES, TOY_SIDE, TOY_SIDE, 7)
        .unwrap()
        .into_iter()
        .map(|f| (f, 0))
        .collect();
    let hints = HintParams { patch_size: 4, reveal_fraction: 0.1, rng_seed: 1 };
    samples_from_frames(&frames, InputMode::LineArt, &CannyParams::default(), &hints).unwrap()
}

struct Toy {
    samples: Vec<SequenceSample<f32>>,
    final_l1: f64,
    elapsed: Duration,
    checkpoint: tempfile::TempDir,
}

fn toy() -> &'static Result<Toy, String> {
    static TOY: OnceLock<Result<Toy, String>> = OnceLock::new();
    TOY.get_or_init(|| {
        let samples = toy_samples();
        let cfg = toy_overfit_config();
        let fx = cfg.load_extractor::<f32>().map_err(|e| e.to_string())?;
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let start = Instant::now();
        let state = TrainState::new(&cfg).map_err(|e| e.to_string())?;
        let out = LoopOutput { checkpoint_dir: Some(dir.path()), log: None };
        let (_, records) = train_loop(state, &samples, &cfg, fx.as_ref(), out).map_err(|e| e.to_string())?;
        let final_l1 = records.last().ok_or("no steps were logged")?.g_l1;
        Ok(Toy { samples, final_l1, elapsed: start.elapsed(), checkpoint: dir })
    })
}

// ---------------------------------------------------------------------------
// 5. Temporal conditioning

fn temporal_conditioning() -> Outcome {
    let g = Generator::<f64>::new(GeneratorConfig { base_channels: 8, n_residual_blocks: 2 }, 3).map_err(|e| e.to_string())?;
    let line = rand_t([1, 1, 32, 32], -1.0, 1.0, 1);
    let hint = rand_t([1, 3, 32, 32], -1.0, 1.0, 2);
    let a = g.forward_batch(&line, &hint, &rand_t([1, 3, 32, 32], -1.0, 1.0, 3)).map_err(|e| e.to_string())?;
    let b = g.forward_batch(&line, &hint, &rand_t([1, 3, 32, 32], -1.0, 1.0, 4)).map_err(|e| e.to_string())?;
    let prev_diff = a.mean_abs_diff(&b);
    check(prev_diff > 1e-6, format!("two prev frames differ in output by only {prev_diff:e}"))?;

    let toy = toy().as_ref().map_err(Clone::clone)?;
    let (gen, _) = load_generator::<f32>(toy.checkpoint.path()).map_err(|e| e.to_string())?;
    let frames: Vec<FrameInput<f32>> = toy
        .samples
        .iter()
        .map(|s| FrameInput { line: s.line_curr.clone(), hint: s.hint_curr.clone(), new_scene: false })
        .collect();
    let seq = colorize_sequence(&gen, &frames).map_err(|e| e.to_string())?;
    let ind = colorize_independent(&gen, &frames).map_err(|e| e.to_string())?;
    let first = seq[0].mean_abs_diff(&ind[0]);
    check(first == 0.0, "first frames differ although both start blank")?;
    let later = seq[1..].iter().zip(&ind[1..]).map(|(s, i)| s.mean_abs_diff(i) as f64).sum::<f64>() / (seq.len() - 1) as f64;
    check(later > 1e-4, format!("sequential and independent inference agree (mean abs diff {later:e})"))?;
    Ok(format!("prev swap changes output by {prev_diff:.3}; carried vs independent differ by {later:.4} on the toy checkpoint"))
}

// ---------------------------------------------------------------------------
// 6. Overfit smoke test

fn overfit_smoke() -> Outcome {
    let toy = toy().as_ref().map_err(Clone::clone)?;
    let (gen, _) = load_generator::<f32>(toy.checkpoint.path()).map_err(|e| e.to_string())?;
    let fx = SimpleExtractor::<f32>::seeded_toy(0);
    let report = evaluate_sequence(&gen as &dyn FrameModel<f32>, &toy.samples, &FidFeatures { extractor: &fx, layer: "relu3_1" })
        .map_err(|e| e.to_string())?;
    let ssim_mean = report.aggregate.ssim_mean;
    let summary = format!(
        "final L1 {:.4} (< 0.15), SSIM {ssim_mean:.3} (> 0.8), {:.0} s for 200 steps",
        toy.final_l1,
        toy.elapsed.as_secs_f64()
    );
    check(toy.final_l1 < 0.15, format!("L1 did not fall below 0.15: {summary}"))?;
    check(ssim_mean > 0.8, format!("SSIM too low: {summary}"))?;
    check(toy.elapsed < Duration::from_secs(600), format!("too slow: {summary}"))?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// 7. Metric oracles

fn gauss_window() -> Vec<f64> {
    let k: Vec<f64> = (-5i32..=5).map(|d| (-(d * d) as f64 / 4.5).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Direct 2-D windowed SSIM on the 8-bit scale, valid windows only.
fn reference_ssim(a: &ImageTensor<f64>, b: &ImageTensor<f64>) -> f64 {
    let k = gauss_window();
    let (h, w, ch) = (a.height(), a.width(), a.channels());
    let to8 = |v: f64| (v + 1.0) * 127.5;
    let (c1, c2) = ((0.01f64 * 255.0).powi(2), (0.03f64 * 255.0).powi(2));
    let mut total = 0.0;
    let mut n = 0;
    for c in 0..ch {
        for y in 0..=h - 11 {
            for x in 0..=w - 11 {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let wt = k[i] * k[j];
                        let (p, q) = (to8(a.get(y + i, x + j, c)), to8(b.get(y + i, x + j, c)));
                        ma += wt * p;
                        mb += wt * q;
                        saa += wt * p * p;
                        sbb += wt * q * q;
                        sab += wt * p * q;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                n += 1;
            }
        }
    }
    total / n as f64
}

fn reference_psnr(a: &ImageTensor<f64>, b: &ImageTensor<f64>) -> f64 {
    let mse = a.data().iter().zip(b.data()).map(|(p, q)| ((p - q) * 127.5).powi(2)).sum::<f64>() / a.data().len() as f64;
    (10.0 * (255.0f64.powi(2) / mse).log10()).min(100.0)
}

fn gaussian_rows(n: usize, mean: &[f64], std: &[f64], seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    DMatrix::from_fn(n, mean.len(), |_, j| mean[j] + std[j] * unit.sample(&mut rng))
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let mut worst_ssim = 0.0f64;
    let mut worst_psnr = 0.0f64;
    for _ in 0..3 {
        let a_data: Vec<f64> = (0..64 * 64 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b_data: Vec<f64> = a_data.iter().map(|v| (v + rng.gen_range(-0.3..0.3)).clamp(-1.0, 1.0)).collect();
        let a = ImageTensor::new(64, 64, 3, a_data).map_err(|e| e.to_string())?;
        let b = ImageTensor::new(64, 64, 3, b_data).map_err(|e| e.to_string())?;
        worst_ssim = worst_ssim.max((ssim(&a, &b).map_err(|e| e.to_string())? - reference_ssim(&a, &b)).abs());
        worst_psnr = worst_psnr.max((psnr(&a, &b).map_err(|e| e.to_string())? - reference_psnr(&a, &b)).abs());
    }
    check(worst_ssim < 1e-6 && worst_psnr < 1e-6, format!("SSIM gap {worst_ssim:e}, PSNR gap {worst_psnr:e}"))?;

    let feats = gaussian_rows(500, &[0.0; 8], &[1.0; 8], 1);
    let self_fid = fid(&feats, &feats).map_err(|e| e.to_string())?;
    check(self_fid < 1e-4, format!("FID(A, A) = {self_fid:e}"))?;

    // N(0, diag(1, 4)) vs N((3, -1), diag(4, 1)):
    // |mu|^2 + sum(s_a + s_b - 2 sqrt(s_a s_b)) = 10 + (1 + 4 - 4) + (4 + 1 - 4) = 12.
    let a = gaussian_rows(100_000, &[0.0, 0.0], &[1.0, 2.0], 2);
    let b = gaussian_rows(100_000, &[3.0, -1.0], &[2.0, 1.0], 3);
    let shifted = fid(&a, &b).map_err(|e| e.to_string())?;
    check((shifted - 12.0).abs() < 0.1, format!("shifted-Gaussian FID {shifted:.4}, closed form 12"))?;
    Ok(format!(
        "SSIM gap {worst_ssim:.1e}, PSNR gap {worst_psnr:.1e}; FID(A,A) {self_fid:.1e}; shifted Gaussians {shifted:.3} vs 12"
    ))
}

// ---------------------------------------------------------------------------
// 8. Greyscale mode

fn tiny_cfg(mode: InputMode) -> TrainConfig {
    TrainConfig {
        batch_size: 2,
        seed: 4,
        mode,
        checkpoint_every: 0,
        generator: GeneratorConfig { base_channels: 4, n_residual_blocks: 1 },
        discriminator: DiscriminatorConfig { n_layers: 3, base_channels: 4, use_spectral_norm: true },
        extractor: Some(ExtractorConfig::Toy { seed: 2 }),
        ..TrainConfig::default()
    }
}

fn tiny_samples(mode: InputMode) -> Vec<SequenceSample<f32>> {
    let frames: Vec<_> = synthetic_scene::<f32>(5, 32, 32, 3).unwrap().into_iter().map(|f| (f, 0)).collect();
    let hints = HintParams { patch_size: 4, reveal_fraction: 0.1, rng_seed: 9 };
    samples_from_frames(&frames, mode, &CannyParams::default(), &hints).unwrap()
}

fn greyscale_log() -> Outcome {
    let cfg = TrainConfig { max_steps: 3, ..tiny_cfg(InputMode::Greyscale) };
    let fx = cfg.load_extractor::<f32>().map_err(|e| e.to_string())?;
    let mut log = Vec::new();
    let out = LoopOutput { checkpoint_dir: None, log: Some(&mut log) };
    train_loop(TrainState::new(&cfg).unwrap(), &tiny_samples(InputMode::Greyscale), &cfg, fx.as_ref(), out)
        .map_err(|e| e.to_string())?;
    let text = String::from_utf8(log).map_err(|e| e.to_string())?;
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    check(lines.len() == 3, format!("{} log lines, expected 3", lines.len()))?;
    check(!text.contains("g_cont"), "greyscale log mentions g_cont")?;
    check(lines.iter().all(|l| l.get("g_style").is_some() && l.get("g_l1").is_some()), "log lines lack other terms")?;
    Ok("3 greyscale log lines, none with a content term".into())
}

// ---------------------------------------------------------------------------
// 9. Determinism and resumability

fn tree_bytes(dir: &std::path::Path) -> Vec<(std::path::PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let frames = synthetic_scene::<f32>(6, 32, 32, 11).map_err(|e| e.to_string())?;
    let mut entries = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        let path = tmp.path().join(format!("f{i}.png"));
        save_png(f, &path).map_err(|e| e.to_string())?;
        entries.push(FrameEntry { path, scene: (i / 3) as u64 });
    }
    let manifest = DatasetManifest {
        frames: entries,
        mode: InputMode::LineArt,
        canny: CannyParams::default(),
        hints: HintParams { patch_size: 4, reveal_fraction: 0.1, rng_seed: 5 },
    };
    let mut trees = Vec::new();
    for run in ["a", "b"] {
        let samples = build_samples::<f32>(&manifest).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
        let out = tmp.path().join(run);
        write_samples(&out, &samples).map_err(|e| e.to_string())?;
        trees.push(tree_bytes(&out));
    }
    check(!trees[0].is_empty() && trees[0] == trees[1], "dataset builds differ")?;

    let s = tiny_samples(InputMode::LineArt);
    let full_cfg = TrainConfig { max_steps: 8, ..tiny_cfg(InputMode::LineArt) };
    let fx = full_cfg.load_extractor::<f32>().map_err(|e| e.to_string())?;
    let (_, full) =
        train_loop(TrainState::new(&full_cfg).unwrap(), &s, &full_cfg, fx.as_ref(), LoopOutput::default()).map_err(|e| e.to_string())?;
    let first_cfg = TrainConfig { max_steps: 3, ..full_cfg.clone() };
    let ck = tmp.path().join("ck");
    let (state, _) = train_loop(
        TrainState::new(&first_cfg).unwrap(),
        &s,
        &first_cfg,
        fx.as_ref(),
        LoopOutput { checkpoint_dir: Some(&ck), log: None },
    )
    .map_err(|e| e.to_string())?;
    save_checkpoint(&ck, &state, &first_cfg, (32, 32)).map_err(|e| e.to_string())?;
    let (resumed, _) = load_train_state::<f32>(&ck, &full_cfg).map_err(|e| e.to_string())?;
    let (_, rest) = train_loop(resumed, &s, &full_cfg, fx.as_ref(), LoopOutput::default()).map_err(|e| e.to_string())?;
    check(rest.len() == 5, format!("{} resumed steps, expected 5", rest.len()))?;
    check(rest == full[3..], "resumed losses differ from the uninterrupted run")?;
    Ok(format!("{} dataset files byte-identical; 5 resumed step records bit-identical", trees[0].len()))
}

// ---------------------------------------------------------------------------

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("architecture fidelity", architecture),
        ("loss-stack correctness", loss_stack),
        ("discriminator sequence wiring", discriminator_wiring),
        ("hint protocol", hint_protocol),
        ("temporal conditioning", temporal_conditioning),
        ("overfit smoke test", overfit_smoke),
        ("metric oracles", metric_oracles),
        ("greyscale mode", greyscale_log),
        ("determinism and resumability", determinism),
    ];
    let mut failed = Vec::new();
    let mut out = std::io::stdout().lock();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        let line = match &outcome {
            Ok(detail) => format!("PASS [{}] {name}: {detail} ({secs:.1} s)", i + 1),
            Err(why) => {
                failed.push(*name);
                format!("FAIL [{}] {name}: {why} ({secs:.1} s)", i + 1)
            }
        };
        writeln!(out, "{line}").unwrap();
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
