//! White and spatially correlated Gaussian noise.
//!
//! Correlated noise is white noise filtered by a flat `k × k` kernel whose
//! entries are `1/k`, so the squared coefficients sum to one and the marginal
//! variance stays `σ²`. Filtering wraps around the field edges, which keeps
//! the field stationary up to the borders. The flat kernel's autocorrelation
//! is the separable triangle, so a size-`k` flat kernel realizes the bilinear
//! decay autocovariance with `θ = k` exactly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Burst, Image, Tensor};
use crate::rng::{derive_seed, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    Iid,
    FlatKernel { k: usize },
    BilinearDecay { theta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma: f64,
    #[serde(flatten)]
    pub kind: NoiseKind,
}

impl NoiseModel {
    pub fn new(sigma: f64, kind: NoiseKind) -> Result<Self> {
        let m = NoiseModel { sigma, kind };
        m.validate()?;
        Ok(m)
    }

    pub fn iid(sigma: f64) -> Result<Self> {
        Self::new(sigma, NoiseKind::Iid)
    }

    pub fn flat(sigma: f64, k: usize) -> Result<Self> {
        Self::new(sigma, NoiseKind::FlatKernel { k })
    }

    pub fn bilinear(sigma: f64, theta: f64) -> Result<Self> {
        Self::new(sigma, NoiseKind::BilinearDecay { theta })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::arg(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        match self.kind {
            NoiseKind::Iid => Ok(()),
            NoiseKind::FlatKernel { k } if k >= 1 => Ok(()),
            NoiseKind::FlatKernel { k } => Err(Error::arg(format!("kernel size {k} < 1"))),
            NoiseKind::BilinearDecay { theta } if theta >= 1.0 && theta.is_finite() => Ok(()),
            NoiseKind::BilinearDecay { theta } => {
                Err(Error::arg(format!("theta must be >= 1, got {theta}")))
            }
        }
    }

    /// Autocovariance `R(τ1, τ2)` of the model.
    pub fn autocov(&self, tau1: i64, tau2: i64) -> f64 {
        let s2 = self.sigma * self.sigma;
        match self.kind {
            NoiseKind::Iid => {
                if tau1 == 0 && tau2 == 0 {
                    s2
                } else {
                    0.0
                }
            }
            NoiseKind::FlatKernel { k } => {
                bilinear_autocov(tau1 as f64, tau2 as f64, k as f64, self.sigma)
            }
            NoiseKind::BilinearDecay { theta } => {
                bilinear_autocov(tau1 as f64, tau2 as f64, theta, self.sigma)
            }
        }
    }
}

/// Small dense 2-D filter.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Kernel {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// i.i.d. `N(0, σ²)` samples.
pub fn sample_iid(shape: &[usize], sigma: f64, rng: &mut Rng) -> Result<Tensor> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::arg(format!("sigma must be positive, got {sigma}")));
    }
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| (sigma * rng.gaussian()) as f32).collect();
    Tensor::new(shape.to_vec(), data)
}

/// `k × k` kernel with every entry `1/k`.
pub fn flat_kernel(k: usize) -> Result<Kernel> {
    if k < 1 {
        return Err(Error::arg("kernel size must be at least 1"));
    }
    Ok(Kernel {
        height: k,
        width: k,
        data: vec![1.0 / k as f64; k * k],
    })
}

fn plane_dims(t: &Tensor) -> Result<(usize, usize, usize)> {
    match t.shape() {
        [h, w] => Ok((1, *h, *w)),
        [c, h, w] => Ok((*c, *h, *w)),
        s => Err(Error::shape(format!(
            "expected [H,W] or [C,H,W], got {s:?}"
        ))),
    }
}

/// Circular 2-D convolution applied to each channel plane independently.
///
/// `out[i][j] = Σ_ab K[a][b] · in[(i - a) mod H][(j - b) mod W]`.
pub fn correlate(noise: &Tensor, kernel: &Kernel) -> Result<Tensor> {
    let (c, h, w) = plane_dims(noise)?;
    if kernel.height > h || kernel.width > w {
        return Err(Error::arg(format!(
            "kernel {}x{} larger than field {h}x{w}",
            kernel.height, kernel.width
        )));
    }
    let mut out = vec![0f32; noise.len()];
    let mut acc = vec![0f64; w];
    for ch in 0..c {
        let src = &noise.data()[ch * h * w..(ch + 1) * h * w];
        for i in 0..h {
            acc.iter_mut().for_each(|v| *v = 0.0);
            for a in 0..kernel.height {
                let row = &src[((i + h - a) % h) * w..][..w];
                for b in 0..kernel.width {
                    let kv = kernel.get(a, b);
                    // out[j] += kv * row[(j - b) mod w]
                    for j in 0..b {
                        acc[j] += kv * f64::from(row[j + w - b]);
                    }
                    for j in b..w {
                        acc[j] += kv * f64::from(row[j - b]);
                    }
                }
            }
            let dst = &mut out[ch * h * w + i * w..][..w];
            for (d, v) in dst.iter_mut().zip(&acc) {
                *d = *v as f32;
            }
        }
    }
    Tensor::new(noise.shape().to_vec(), out)
}

/// `σ² · max(1 - |τ1|/θ, 0) · max(1 - |τ2|/θ, 0)`.
pub fn bilinear_autocov(tau1: f64, tau2: f64, theta: f64, sigma: f64) -> f64 {
    let g = |t: f64| (1.0 - t.abs() / theta).max(0.0);
    sigma * sigma * g(tau1) * g(tau2)
}

/// Gaussian field with autocovariance exactly `σ²(1 - |τ1|/θ)(1 - |τ2|/θ)` for
/// `|τ| < θ`, zero beyond.
///
/// White noise is filtered along rows, then along columns, by a circular
/// length-`θ` box with taps `1/√θ`. The field must be at least `θ` on each axis;
/// wrapped lags alias once the field is smaller than `n + θ - 1` for a window
/// of interest of side `n`.
pub fn sample_bilinear(shape: &[usize], theta: f64, sigma: f64, rng: &mut Rng) -> Result<Tensor> {
    if theta < 1.0 || theta.fract() != 0.0 {
        return Err(Error::arg(format!(
            "theta must be an integer >= 1, got {theta}"
        )));
    }
    let white = sample_iid(shape, sigma, rng)?;
    let taps = theta as usize;
    let (c, h, w) = plane_dims(&white)?;
    if taps > h || taps > w {
        return Err(Error::arg(format!(
            "theta {taps} larger than field {h}x{w}"
        )));
    }
    let tap = 1.0 / (taps as f64).sqrt();
    let src = white.data();
    let plane = h * w;
    let mut out = vec![0f32; src.len()];
    let mut rows = vec![0f64; plane];
    let mut acc = vec![0f64; w];
    for ch in 0..c {
        let s = &src[ch * plane..][..plane];
        // along rows: out[j] = Σ_t in[(j - t) mod w]
        for (dst, row) in rows.chunks_exact_mut(w).zip(s.chunks_exact(w)) {
            for (j, d) in dst.iter_mut().enumerate() {
                let mut a = 0.0;
                for t in 0..taps {
                    let k = if j >= t { j - t } else { j + w - t };
                    a += f64::from(row[k]);
                }
                *d = a * tap;
            }
        }
        // along columns, whole rows at a time
        let o = &mut out[ch * plane..][..plane];
        for i in 0..h {
            acc.iter_mut().for_each(|v| *v = 0.0);
            for t in 0..taps {
                let k = (i + h - t) % h;
                for (a, &v) in acc.iter_mut().zip(&rows[k * w..][..w]) {
                    *a += v;
                }
            }
            for (d, &a) in o[i * w..][..w].iter_mut().zip(&acc) {
                *d = (a * tap) as f32;
            }
        }
    }
    Tensor::new(shape.to_vec(), out)
}

/// One noise field of shape `[C, H, W]` drawn from `model`.
pub fn sample_noise(
    shape: (usize, usize, usize),
    model: &NoiseModel,
    rng: &mut Rng,
) -> Result<Tensor> {
    model.validate()?;
    let dims = [shape.0, shape.1, shape.2];
    match model.kind {
        NoiseKind::Iid => sample_iid(&dims, model.sigma, rng),
        NoiseKind::FlatKernel { k } => {
            let white = sample_iid(&dims, model.sigma, rng)?;
            correlate(&white, &flat_kernel(k)?)
        }
        NoiseKind::BilinearDecay { theta } => sample_bilinear(&dims, theta, model.sigma, rng),
    }
}

/// Adds an independent noise realization to every frame.
///
/// Frame `f` draws from `derive_seed(seed, "frame", f)`, so frames can be
/// generated in parallel and in any order.
pub fn synth_burst(clean: &Burst, model: &NoiseModel, seed: u64) -> Result<Burst> {
    let frames = synth_frames(clean.frames(), model, seed)?;
    Burst::new(frames, clean.input_index())
}

pub fn synth_frames(clean: &[Image], model: &NoiseModel, seed: u64) -> Result<Vec<Image>> {
    model.validate()?;
    clean
        .par_iter()
        .enumerate()
        .map(|(f, x)| {
            let mut rng = Rng::new(derive_seed(seed, "frame", f as u64));
            let z = sample_noise(x.shape(), model, &mut rng)?;
            x.add_tensor(&z)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::psnr;
    use crate::stats::{circular_autocov, Moments};

    fn moments(t: &Tensor) -> Moments {
        let xs: Vec<f64> = t.data().iter().map(|&v| f64::from(v)).collect();
        Moments::of(&xs)
    }

    #[test]
    fn iid_moments_at_one_million() {
        let t = sample_iid(&[1_000_000], 10.0, &mut Rng::new(5)).unwrap();
        let m = moments(&t);
        assert!(m.mean.abs() < 0.05, "mean {}", m.mean);
        assert!(
            (m.variance.sqrt() - 10.0).abs() < 0.05,
            "std {}",
            m.variance.sqrt()
        );
    }

    #[test]
    fn sigma_must_be_positive() {
        assert!(sample_iid(&[4], 0.0, &mut Rng::new(0)).is_err());
        assert!(NoiseModel::flat(0.0, 3).is_err());
        assert!(NoiseModel::flat(1.0, 0).is_err());
        assert!(NoiseModel::bilinear(1.0, 0.5).is_err());
    }

    #[test]
    fn iid_is_deterministic() {
        let a = sample_iid(&[3, 8, 8], 2.0, &mut Rng::new(9)).unwrap();
        let b = sample_iid(&[3, 8, 8], 2.0, &mut Rng::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn flat_kernel_values() {
        assert_eq!(flat_kernel(1).unwrap().data, vec![1.0]);
        let k2 = flat_kernel(2).unwrap();
        assert_eq!(k2.data, vec![0.5; 4]);
        assert_eq!(k2.sum_of_squares(), 1.0);
        for k in 1..8 {
            assert!((flat_kernel(k).unwrap().sum_of_squares() - 1.0).abs() < 1e-12);
        }
        assert!(flat_kernel(0).is_err());
    }

    #[test]
    fn correlate_k1_is_identity() {
        let t = sample_iid(&[2, 5, 7], 1.0, &mut Rng::new(1)).unwrap();
        assert_eq!(correlate(&t, &flat_kernel(1).unwrap()).unwrap(), t);
    }

    #[test]
    fn correlate_delta_wraps() {
        let (h, w) = (4, 5);
        let mut d = Tensor::zeros(vec![h, w]);
        d.data_mut()[(h - 1) * w + (w - 1)] = 1.0;
        let out = correlate(&d, &flat_kernel(2).unwrap()).unwrap();
        let mut expected = vec![0f32; h * w];
        for (i, j) in [(h - 1, w - 1), (h - 1, 0), (0, w - 1), (0, 0)] {
            expected[i * w + j] = 0.5;
        }
        assert_eq!(out.data(), expected.as_slice());
    }

    #[test]
    fn correlate_rejects_large_kernel() {
        let t = Tensor::zeros(vec![3, 3]);
        assert!(correlate(&t, &flat_kernel(4).unwrap()).is_err());
    }

    #[test]
    fn flat_kernel_noise_variance_and_lag() {
        let sigma = 10.0;
        let (h, w) = (1000, 1000);
        let white = sample_iid(&[h, w], sigma, &mut Rng::new(77)).unwrap();
        let z = correlate(&white, &flat_kernel(3).unwrap()).unwrap();
        let std = moments(&z).variance.sqrt();
        assert!((std - sigma).abs() < 0.01 * sigma, "std {std}");
        // separable triangle: R(1,0) = σ²·(1 - 1/3)
        let r10 = circular_autocov(z.data(), h, w, 1, 0);
        let expected = bilinear_autocov(1.0, 0.0, 3.0, sigma);
        assert!((expected - 100.0 * 2.0 / 3.0).abs() < 1e-12);
        // SE of a lag product mean over 10⁶ correlated terms is below 0.5 here
        assert!((r10 - expected).abs() < 1.5, "R(1,0) = {r10}");
    }

    #[test]
    fn bilinear_autocov_closed_form() {
        assert_eq!(bilinear_autocov(0.0, 0.0, 3.0, 2.0), 4.0);
        assert_eq!(bilinear_autocov(3.0, 0.5, 3.0, 2.0), 0.0);
        assert_eq!(bilinear_autocov(1.0, 0.0, 2.0, 2.0), 2.0);
        assert_eq!(bilinear_autocov(1.0, 1.0, 2.0, 2.0), 1.0);
    }

    #[test]
    fn sample_bilinear_theta_one_is_white() {
        let mut a = Rng::new(4);
        let mut b = Rng::new(4);
        let x = sample_bilinear(&[6, 6], 1.0, 3.0, &mut a).unwrap();
        let y = sample_iid(&[6, 6], 3.0, &mut b).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn sample_bilinear_rejects_fractional_theta() {
        assert!(sample_bilinear(&[8, 8], 2.5, 1.0, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn sample_bilinear_theta_two_lag_one() {
        let (h, w) = (1000, 1000);
        let z = sample_bilinear(&[h, w], 2.0, 1.0, &mut Rng::new(8)).unwrap();
        let r = circular_autocov(z.data(), h, w, 0, 1);
        // lag product z_p z_{p+1} has variance ~ σ⁴(1 + ρ²) and neighbouring
        // products are correlated; 3 SE with a factor-3 inflation is < 0.01
        assert!((r - 0.5).abs() < 0.01, "lag-1 autocov {r}");
    }

    #[test]
    fn burst_noise_is_independent_across_frames() {
        let x = Image::from_fn(1, 200, 200, |_, r, c| ((r + c) % 50) as f32);
        let clean = Burst::new(vec![x.clone(), x.clone()], 0).unwrap();
        let model = NoiseModel::flat(10.0, 3).unwrap();
        let noisy = synth_burst(&clean, &model, 3).unwrap();
        let z0: Vec<f64> = noisy.frames()[0]
            .data()
            .iter()
            .zip(x.data())
            .map(|(a, b)| f64::from(a - b))
            .collect();
        let z1: Vec<f64> = noisy.frames()[1]
            .data()
            .iter()
            .zip(x.data())
            .map(|(a, b)| f64::from(a - b))
            .collect();
        let n = z0.len() as f64;
        let corr = z0.iter().zip(&z1).map(|(a, b)| a * b).sum::<f64>() / n / 100.0;
        // SE of the correlation of two independent k=3 fields: sqrt(ρ/n) with ρ = (19/9)² ≈ 4.46
        let se = (4.46 / n).sqrt();
        assert!(corr.abs() < 3.0 * se, "corr {corr}, se {se}");
    }

    #[test]
    fn tiny_sigma_gives_high_psnr() {
        let x = Image::from_fn(3, 32, 32, |c, r, col| (c * 40 + r + col) as f32);
        let clean = Burst::new(vec![x.clone(), x.clone()], 0).unwrap();
        let noisy = synth_burst(&clean, &NoiseModel::flat(0.001, 2).unwrap(), 0).unwrap();
        assert!(psnr(&noisy.frames()[0], &x, 255.0).unwrap() > 100.0);
    }
}
