//! Two-layer bias-free residual denoiser with hand-written gradients.
//!
//! `f(y) = y - conv2(relu(conv1(y)))`, both convolutions 3×3 with one pixel of
//! mirror padding and no bias, so `f` is positively homogeneous: `f(c·y) =
//! c·f(y)` for `c > 0`. Training feeds samples scaled by `1/255`, which by
//! homogeneity leaves the learned weights valid at the original scale.
//! Arithmetic is `f64` throughout; images convert at the boundary.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{mirror_index, psnr, Image, Tensor};
use crate::rng::{derive_seed, Rng};
use crate::stats::mean;

/// Weights of the denoiser, each layer `[out][in][3][3]` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MiniDenoiser {
    pub channels: usize,
    pub filters: usize,
    pub layer1: Vec<f64>,
    pub layer2: Vec<f64>,
}

impl MiniDenoiser {
    pub fn zeros(channels: usize, filters: usize) -> Self {
        MiniDenoiser {
            channels,
            filters,
            layer1: vec![0.0; 9 * channels * filters],
            layer2: vec![0.0; 9 * channels * filters],
        }
    }

    /// Gaussian weights with standard deviation `std`.
    pub fn random(channels: usize, filters: usize, std: f64, rng: &mut Rng) -> Self {
        let mut m = Self::zeros(channels, filters);
        for v in m.layer1.iter_mut().chain(m.layer2.iter_mut()) {
            *v = std * rng.gaussian();
        }
        m
    }

    pub fn param_count(&self) -> usize {
        self.layer1.len() + self.layer2.len()
    }

    /// Both layers concatenated, layer 1 first.
    pub fn params(&self) -> Vec<f64> {
        self.layer1.iter().chain(&self.layer2).copied().collect()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let k = self.layer1.len();
        self.layer1.copy_from_slice(&p[..k]);
        self.layer2.copy_from_slice(&p[k..]);
    }

    /// Layers as `[F, C, 3, 3]` and `[C, F, 3, 3]` tensors.
    pub fn to_tensors(&self) -> Result<(Tensor, Tensor)> {
        let (c, f) = (self.channels, self.filters);
        let cast = |v: &[f64]| v.iter().map(|&x| x as f32).collect();
        Ok((
            Tensor::new(vec![f, c, 3, 3], cast(&self.layer1))?,
            Tensor::new(vec![c, f, 3, 3], cast(&self.layer2))?,
        ))
    }

    pub fn from_tensors(layer1: &Tensor, layer2: &Tensor) -> Result<Self> {
        let (f, c) = match layer1.shape() {
            [f, c, 3, 3] => (*f, *c),
            s => return Err(Error::shape(format!("layer 1 shape {s:?}"))),
        };
        if layer2.shape() != [c, f, 3, 3] {
            return Err(Error::shape(format!(
                "layer 2 shape {:?}, expected [{c}, {f}, 3, 3]",
                layer2.shape()
            )));
        }
        let widen = |t: &Tensor| t.data().iter().map(|&x| f64::from(x)).collect();
        Ok(MiniDenoiser {
            channels: c,
            filters: f,
            layer1: widen(layer1),
            layer2: widen(layer2),
        })
    }

    fn check_input(&self, y: &Image) -> Result<()> {
        if y.channels() != self.channels {
            return Err(Error::shape(format!(
                "model expects {} channels, image has {}",
                self.channels,
                y.channels()
            )));
        }
        if y.height() < 2 || y.width() < 2 {
            return Err(Error::shape("images must be at least 2x2"));
        }
        Ok(())
    }
}

/// Flat gradient, same layout as [`MiniDenoiser::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub layer1: Vec<f64>,
    pub layer2: Vec<f64>,
}

impl Gradient {
    pub fn flatten(&self) -> Vec<f64> {
        self.layer1.iter().chain(&self.layer2).copied().collect()
    }
}

/// One-pixel mirror padding of `planes` stacked `h × w` planes.
fn pad1(src: &[f64], planes: usize, h: usize, w: usize) -> Vec<f64> {
    let (ph, pw) = (h + 2, w + 2);
    let mut out = vec![0.0; planes * ph * pw];
    for p in 0..planes {
        for i in 0..ph {
            let si = mirror_index(i as isize - 1, h);
            let row = &src[(p * h + si) * w..][..w];
            let dst = &mut out[(p * ph + i) * pw..][..pw];
            dst[1..=w].copy_from_slice(row);
            dst[0] = row[1];
            dst[w + 1] = row[w - 2];
        }
    }
    out
}

/// Adjoint of [`pad1`]: folds padded-plane gradients back onto the interior.
fn unpad1(gpad: &[f64], planes: usize, h: usize, w: usize) -> Vec<f64> {
    let (ph, pw) = (h + 2, w + 2);
    let mut out = vec![0.0; planes * h * w];
    for p in 0..planes {
        for i in 0..ph {
            let si = mirror_index(i as isize - 1, h);
            let src = &gpad[(p * ph + i) * pw..][..pw];
            let dst = &mut out[(p * h + si) * w..][..w];
            for (d, s) in dst.iter_mut().zip(&src[1..=w]) {
                *d += s;
            }
            dst[1] += src[0];
            dst[w - 2] += src[w + 1];
        }
    }
    out
}

/// `out[o][i][j] = Σ_{c,u,v} k[o][c][u][v] · pad[c][i+u][j+v]`.
fn conv3(pad: &[f64], in_ch: usize, out_ch: usize, h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let pw = w + 2;
    let plane_pad = (h + 2) * pw;
    let mut out = vec![0.0; out_ch * h * w];
    for o in 0..out_ch {
        let dst_plane = &mut out[o * h * w..][..h * w];
        for c in 0..in_ch {
            let src = &pad[c * plane_pad..][..plane_pad];
            for u in 0..3 {
                for v in 0..3 {
                    let wt = k[((o * in_ch + c) * 3 + u) * 3 + v];
                    for i in 0..h {
                        let s = &src[(i + u) * pw + v..][..w];
                        for (d, x) in dst_plane[i * w..][..w].iter_mut().zip(s) {
                            *d += wt * x;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Kernel gradient and padded-input gradient of [`conv3`] for output gradient `g`.
#[allow(clippy::too_many_arguments)]
fn conv3_backward(
    pad: &[f64],
    in_ch: usize,
    out_ch: usize,
    h: usize,
    w: usize,
    k: &[f64],
    g: &[f64],
    want_input: bool,
) -> (Vec<f64>, Vec<f64>) {
    let pw = w + 2;
    let plane_pad = (h + 2) * pw;
    let mut gk = vec![0.0; k.len()];
    let mut gpad = if want_input {
        vec![0.0; in_ch * plane_pad]
    } else {
        Vec::new()
    };
    for o in 0..out_ch {
        let go = &g[o * h * w..][..h * w];
        for c in 0..in_ch {
            for u in 0..3 {
                for v in 0..3 {
                    let idx = ((o * in_ch + c) * 3 + u) * 3 + v;
                    let mut acc = 0.0;
                    for i in 0..h {
                        let s = &pad[c * plane_pad + (i + u) * pw + v..][..w];
                        for (a, b) in go[i * w..][..w].iter().zip(s) {
                            acc += a * b;
                        }
                    }
                    gk[idx] = acc;
                    if want_input {
                        let wt = k[idx];
                        for i in 0..h {
                            let d = &mut gpad[c * plane_pad + (i + u) * pw + v..][..w];
                            for (x, a) in d.iter_mut().zip(&go[i * w..][..w]) {
                                *x += wt * a;
                            }
                        }
                    }
                }
            }
        }
    }
    (gk, gpad)
}

/// Intermediate values kept for the backward pass.
struct Trace {
    h: usize,
    w: usize,
    ypad: Vec<f64>,
    pre: Vec<f64>,
    apad: Vec<f64>,
    out: Vec<f64>,
}

fn run_forward(model: &MiniDenoiser, y: &[f64], h: usize, w: usize) -> Trace {
    let (c, f) = (model.channels, model.filters);
    let ypad = pad1(y, c, h, w);
    let pre = conv3(&ypad, c, f, h, w, &model.layer1);
    let act: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
    let apad = pad1(&act, f, h, w);
    let res = conv3(&apad, f, c, h, w, &model.layer2);
    let out = y.iter().zip(&res).map(|(a, b)| a - b).collect();
    Trace {
        h,
        w,
        ypad,
        pre,
        apad,
        out,
    }
}

/// Parameter gradient of `⟨f(y), g_out⟩`.
fn vector_jacobian(model: &MiniDenoiser, t: &Trace, g_out: &[f64]) -> Gradient {
    let (c, f, h, w) = (model.channels, model.filters, t.h, t.w);
    // out = y - res
    let g_res: Vec<f64> = g_out.iter().map(|v| -v).collect();
    let (g2, g_apad) = conv3_backward(&t.apad, f, c, h, w, &model.layer2, &g_res, true);
    let mut g_act = unpad1(&g_apad, f, h, w);
    for (g, &p) in g_act.iter_mut().zip(&t.pre) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
    let (g1, _) = conv3_backward(&t.ypad, c, f, h, w, &model.layer1, &g_act, false);
    Gradient {
        layer1: g1,
        layer2: g2,
    }
}

fn widen(img: &Image, scale: f64) -> Vec<f64> {
    img.data().iter().map(|&v| f64::from(v) * scale).collect()
}

/// `f(y)` at the image's own scale.
pub fn forward(model: &MiniDenoiser, y: &Image) -> Result<Image> {
    model.check_input(y)?;
    let t = run_forward(model, &widen(y, 1.0), y.height(), y.width());
    Image::new(
        y.channels(),
        y.height(),
        y.width(),
        t.out.iter().map(|&v| v as f32).collect(),
    )
}

/// Preactivations of the first layer, `[F, H, W]`.
pub fn preactivations(model: &MiniDenoiser, y: &Image) -> Result<Vec<f64>> {
    model.check_input(y)?;
    let ypad = pad1(&widen(y, 1.0), y.channels(), y.height(), y.width());
    Ok(conv3(
        &ypad,
        model.channels,
        model.filters,
        y.height(),
        y.width(),
        &model.layer1,
    ))
}

/// `½‖f(y) - target‖²` and its parameter gradient.
pub fn loss_and_grad(model: &MiniDenoiser, y: &Image, target: &Image) -> Result<(f64, Gradient)> {
    model.check_input(y)?;
    if !y.same_shape(target) {
        return Err(Error::shape(format!(
            "input {:?} vs target {:?}",
            y.shape(),
            target.shape()
        )));
    }
    let t = run_forward(model, &widen(y, 1.0), y.height(), y.width());
    let diff: Vec<f64> = t
        .out
        .iter()
        .zip(target.data())
        .map(|(o, &x)| o - f64::from(x))
        .collect();
    let loss = 0.5 * diff.iter().map(|d| d * d).sum::<f64>();
    Ok((loss, vector_jacobian(model, &t, &diff)))
}

/// `∇_θ ⟨f(y), v⟩`, i.e. the transposed Jacobian applied to `v`.
pub fn jacobian_transpose(model: &MiniDenoiser, y: &Image, v: &Tensor) -> Result<Gradient> {
    model.check_input(y)?;
    if v.len() != y.len() {
        return Err(Error::shape(format!(
            "vector of {} for image of {}",
            v.len(),
            y.len()
        )));
    }
    let t = run_forward(model, &widen(y, 1.0), y.height(), y.width());
    let g: Vec<f64> = v.data().iter().map(|&x| f64::from(x)).collect();
    Ok(vector_jacobian(model, &t, &g))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub step: f64,
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, 1e-3)`.
    pub max_rel_error: f64,
    pub worst_param: usize,
    /// Smallest `|preactivation|`; a step that moves one across zero makes
    /// the central difference straddle the rectifier kink.
    pub kink_margin: f64,
}

/// Compares the coded gradient of `½‖f(y) - target‖²` with central differences.
pub fn gradient_check(
    model: &MiniDenoiser,
    y: &Image,
    target: &Image,
    step: f64,
) -> Result<GradientCheck> {
    if step.is_nan() || step <= 0.0 {
        return Err(Error::arg("finite-difference step must be positive"));
    }
    let (_, g) = loss_and_grad(model, y, target)?;
    let g = g.flatten();
    let base = model.params();
    let mut probe = model.clone();
    let mut loss_at = |k: usize, delta: f64| -> Result<f64> {
        let mut p = base.clone();
        p[k] += delta;
        probe.set_params(&p);
        Ok(loss_and_grad(&probe, y, target)?.0)
    };
    let mut worst = (0.0f64, 0usize);
    for (k, &analytic) in g.iter().enumerate() {
        let numeric = (loss_at(k, step)? - loss_at(k, -step)?) / (2.0 * step);
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3);
        if err > worst.0 {
            worst = (err, k);
        }
    }
    let kink_margin = preactivations(model, y)?
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(v.abs()));
    Ok(GradientCheck {
        step,
        max_rel_error: worst.0,
        worst_param: worst.1,
        kink_margin,
    })
}

/// Distribution of the target noise added to the clean image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetNoise {
    Zero,
    /// i.i.d. `N(mean, sigma²)` per sample.
    Gaussian {
        mean: f64,
        sigma: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub draws: usize,
    pub params: usize,
    /// Largest `|mean(∇l̃) - ∇l| / SE` over parameters.
    pub max_standardized_deviation: f64,
    pub worst_param: usize,
    /// Whether the averaged gradient equals the supervised one bit for bit.
    pub exact_match: bool,
}

/// Averages the gradient against `x + w` over independent `w` draws and
/// compares it with the gradient against `x`, for a fixed noisy input `y`.
pub fn lemma1_check(
    model: &MiniDenoiser,
    x: &Image,
    y: &Image,
    noise: TargetNoise,
    draws: usize,
    seed: u64,
) -> Result<Lemma1Report> {
    if draws < 2 {
        return Err(Error::arg("need at least two draws"));
    }
    model.check_input(y)?;
    if !x.same_shape(y) {
        return Err(Error::shape("clean and noisy images differ in shape"));
    }
    let t = run_forward(model, &widen(y, 1.0), y.height(), y.width());
    let xs = widen(x, 1.0);
    let base: Vec<f64> = t.out.iter().zip(&xs).map(|(o, x)| o - x).collect();
    let supervised = vector_jacobian(model, &t, &base).flatten();

    let grads: Vec<Vec<f64>> = (0..draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = Rng::new(derive_seed(seed, "lemma1", d as u64));
            let diff: Vec<f64> = match noise {
                TargetNoise::Zero => base.clone(),
                TargetNoise::Gaussian { mean, sigma } => base
                    .iter()
                    .map(|b| b - (mean + sigma * rng.gaussian()))
                    .collect(),
            };
            vector_jacobian(model, &t, &diff).flatten()
        })
        .collect();

    let p = supervised.len();
    let nf = draws as f64;
    let mut worst = (0.0f64, 0usize);
    let mut exact = true;
    for k in 0..p {
        let col: Vec<f64> = grads.iter().map(|g| g[k]).collect();
        // centred on the first draw so identical draws average exactly
        let m = col[0] + col.iter().map(|v| v - col[0]).sum::<f64>() / nf;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (nf - 1.0);
        let se = (var / nf).sqrt();
        let gap = (m - supervised[k]).abs();
        exact &= m == supervised[k];
        let z = if gap == 0.0 {
            0.0
        } else if se == 0.0 {
            f64::INFINITY
        } else {
            gap / se
        };
        if z > worst.0 {
            worst = (z, k);
        }
    }
    Ok(Lemma1Report {
        draws,
        params: p,
        max_standardized_deviation: worst.0,
        worst_param: worst.1,
        exact_match: exact,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// The learning rate halves every this many epochs.
    pub halve_every: usize,
    pub batch_size: usize,
    pub crop_size: usize,
    /// Random crops drawn from each pair per epoch.
    pub crops_per_pair: usize,
    pub filters: usize,
    /// Initial weight standard deviation; zero gives a stationary model.
    pub init_std: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            // the per-pixel mean gradient on unit-scaled data is small
            learning_rate: 8.0,
            halve_every: 5,
            batch_size: 32,
            crop_size: 50,
            crops_per_pair: 4,
            filters: 8,
            init_std: 0.05,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.epochs,
            self.halve_every,
            self.batch_size,
            self.crop_size,
            self.crops_per_pair,
            self.filters,
        ];
        if counts.contains(&0) {
            return Err(Error::arg("training counts must be positive"));
        }
        if self.learning_rate.is_nan()
            || self.learning_rate <= 0.0
            || self.init_std.is_nan()
            || self.init_std < 0.0
        {
            return Err(Error::arg(
                "learning rate must be positive, init std non-negative",
            ));
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * 0.5f64.powi((epoch / self.halve_every) as i32)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub model: MiniDenoiser,
    /// Mean `½(f(y) - target)²` per sample in each epoch, at 8-bit scale.
    pub epoch_loss: Vec<f64>,
}

const DATA_SCALE: f64 = 1.0 / 255.0;

/// Minibatch SGD on random crops of `(input, target)` pairs.
///
/// Crop positions and batch order come from the seed before any parallel
/// work, and per-crop gradients are summed in batch order, so the result does
/// not depend on the number of workers.
pub fn sgd_train(pairs: &[(Image, Image)], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let first = pairs
        .first()
        .ok_or_else(|| Error::arg("no training pairs"))?;
    let channels = first.0.channels();
    for (y, t) in pairs {
        if !y.same_shape(t) || y.channels() != channels {
            return Err(Error::shape(
                "training pairs differ in shape or channel count",
            ));
        }
        if y.height() < config.crop_size || y.width() < config.crop_size {
            return Err(Error::arg(format!(
                "crop {} larger than image {}x{}",
                config.crop_size,
                y.height(),
                y.width()
            )));
        }
    }
    let mut rng = Rng::new(derive_seed(config.seed, "train", 0));
    let mut model = MiniDenoiser::random(channels, config.filters, config.init_std, &mut rng);
    let scaled: Vec<(Vec<f64>, Vec<f64>)> = pairs
        .iter()
        .map(|(y, t)| (widen(y, DATA_SCALE), widen(t, DATA_SCALE)))
        .collect();
    let cs = config.crop_size;
    let samples_per_crop = (channels * cs * cs) as f64;
    let mut epoch_loss = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = config.learning_rate_at(epoch);
        let mut crops: Vec<(usize, usize, usize)> = Vec::new();
        for (p, (y, _)) in pairs.iter().enumerate() {
            for _ in 0..config.crops_per_pair {
                let top = rng.below((y.height() - cs + 1) as u64) as usize;
                let left = rng.below((y.width() - cs + 1) as u64) as usize;
                crops.push((p, top, left));
            }
        }
        rng.shuffle(&mut crops);

        let mut loss_sum = 0.0;
        for batch in crops.chunks(config.batch_size) {
            let results: Vec<(f64, Vec<f64>)> = batch
                .par_iter()
                .map(|&(p, top, left)| {
                    let (y, t) = &scaled[p];
                    let img_w = pairs[p].0.width();
                    let img_h = pairs[p].0.height();
                    let yc = crop_planes(y, channels, img_h, img_w, top, left, cs);
                    let tc = crop_planes(t, channels, img_h, img_w, top, left, cs);
                    let tr = run_forward(&model, &yc, cs, cs);
                    let diff: Vec<f64> = tr.out.iter().zip(&tc).map(|(o, x)| o - x).collect();
                    let loss = 0.5 * diff.iter().map(|d| d * d).sum::<f64>();
                    (loss, vector_jacobian(&model, &tr, &diff).flatten())
                })
                .collect();
            let mut grad = vec![0.0; model.param_count()];
            for (loss, g) in &results {
                loss_sum += loss;
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            let norm = lr / (batch.len() as f64 * samples_per_crop);
            let mut params = model.params();
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= norm * g;
            }
            model.set_params(&params);
        }
        epoch_loss
            .push(loss_sum / (crops.len() as f64 * samples_per_crop) / (DATA_SCALE * DATA_SCALE));
    }
    Ok(TrainOutcome { model, epoch_loss })
}

fn crop_planes(
    src: &[f64],
    channels: usize,
    h: usize,
    w: usize,
    top: usize,
    left: usize,
    size: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(channels * size * size);
    for c in 0..channels {
        for r in top..top + size {
            out.extend_from_slice(&src[(c * h + r) * w + left..][..size]);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub count: usize,
    pub psnr_before: f64,
    pub psnr_after: f64,
    pub gain: f64,
    /// `(before, after)` per pair.
    pub per_pair: Vec<(f64, f64)>,
}

/// Mean PSNR of the noisy inputs and of the model outputs against clean images.
pub fn evaluate(model: &MiniDenoiser, pairs: &[(Image, Image)]) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::arg("no evaluation pairs"));
    }
    let per_pair: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|(noisy, clean)| -> Result<(f64, f64)> {
            let before = psnr(noisy, clean, 255.0)?;
            let after = psnr(&forward(model, noisy)?, clean, 255.0)?;
            Ok((before, after))
        })
        .collect::<Result<_>>()?;
    let before = mean(&per_pair.iter().map(|p| p.0).collect::<Vec<_>>());
    let after = mean(&per_pair.iter().map(|p| p.1).collect::<Vec<_>>());
    Ok(EvalReport {
        count: pairs.len(),
        psnr_before: before,
        psnr_after: after,
        gain: after - before,
        per_pair,
    })
}
