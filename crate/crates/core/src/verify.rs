//! Numerical checks of the patch-distance and covariance-statistic results.
//!
//! Exact quantities (`ρ`, its lower bound, the Toeplitz double-sum identity)
//! are computed two ways. Distributional claims are checked by Monte Carlo
//! with tolerances in standard errors, so trial counts can change without
//! touching the assertions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::covariance;
use crate::image::Tensor;
use crate::noise::{bilinear_autocov, sample_bilinear};
use crate::rng::{derive_seed, Rng};
use crate::stats::Moments;

/// `(1/n²) Σ (R(i1-j1, i2-j2)/σ²)²` over `i1, j1, i2, j2 ∈ 0..n`, by direct summation.
pub fn rho_exact(n: usize, autocov: impl Fn(i64, i64) -> f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let n_i = n as i64;
    let mut acc = 0.0;
    for i1 in 0..n_i {
        for j1 in 0..n_i {
            for i2 in 0..n_i {
                for j2 in 0..n_i {
                    let v = autocov(i1 - j1, i2 - j2) / s2;
                    acc += v * v;
                }
            }
        }
    }
    acc / (n * n) as f64
}

/// `ρ` for a separable autocovariance `g(τ1)g(τ2)`, through the one-dimensional
/// reduction `Σ_{i,j} f(i-j) = n Σ_τ (1 - |τ|/n) f(τ)`.
pub fn rho_separable(n: usize, g: impl Fn(i64) -> f64, sigma: f64) -> f64 {
    let n_i = n as i64;
    let nf = n as f64;
    let s: f64 = (-(n_i - 1)..n_i)
        .map(|t| {
            let v = g(t);
            (1.0 - t.abs() as f64 / nf) * v * v
        })
        .sum::<f64>()
        * nf;
    s * s / (nf * nf * sigma.powi(4))
}

/// `¼(r + 1/r)²` with `r = min(n, ⌊θ⌋)`.
pub fn rho_bound(n: usize, theta: f64) -> f64 {
    let r = (n as f64).min(theta.floor());
    0.25 * (r + 1.0 / r).powi(2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoReport {
    pub n: usize,
    pub theta: f64,
    pub rho_exact: f64,
    pub rho_separable: f64,
    pub rho_bound: f64,
    pub bound_satisfied: bool,
    /// `rho_exact - rho_bound`.
    pub equality_gap: f64,
}

pub fn rho_report(n: usize, theta: f64) -> RhoReport {
    let sigma = 1.0;
    let exact = rho_exact(
        n,
        |a, b| bilinear_autocov(a as f64, b as f64, theta, sigma),
        sigma,
    );
    let separable = rho_separable(
        n,
        |t| sigma * (1.0 - t.abs() as f64 / theta).max(0.0),
        sigma,
    );
    let bound = rho_bound(n, theta);
    RhoReport {
        n,
        theta,
        rho_exact: exact,
        rho_separable: separable,
        rho_bound: bound,
        bound_satisfied: exact >= bound - 1e-9,
        equality_gap: exact - bound,
    }
}

/// `|Σ_{i,j} f(i-j) - n Σ_τ (1 - |τ|/n) f(τ)|` for `i, j ∈ 0..n`.
pub fn toeplitz_identity_check(n: usize, f: impl Fn(i64) -> f64) -> f64 {
    let n_i = n as i64;
    let mut lhs = 0.0;
    for i in 0..n_i {
        for j in 0..n_i {
            lhs += f(i - j);
        }
    }
    let nf = n as f64;
    let rhs = nf
        * (-(n_i - 1)..n_i)
            .map(|t| (1.0 - t.abs() as f64 / nf) * f(t))
            .sum::<f64>();
    (lhs - rhs).abs()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaMcReport {
    pub n: usize,
    pub theta: f64,
    pub sigma_z: f64,
    pub trials: usize,
    /// Normalized squared norm of the clean difference.
    pub delta_x: f64,
    pub rho: f64,
    pub bias_est: f64,
    pub bias_expected: f64,
    pub bias_se: f64,
    pub var_est: f64,
    /// `(8/n²) σ⁴ ρ`.
    pub var_bound: f64,
    pub var_se: f64,
}

impl DeltaMcReport {
    pub fn bias_z(&self) -> f64 {
        (self.bias_est - self.bias_expected) / self.bias_se
    }

    pub fn var_rel_error(&self) -> f64 {
        (self.var_est - self.var_bound) / self.var_bound
    }
}

/// Distance between two noisy `n × n` patches whose clean parts differ by
/// `clean_diff`, repeated over independent noise pairs.
///
/// Noise is drawn on a field of side `n + θ` and cropped, so every lag inside
/// the patch sees the unwrapped autocovariance.
pub fn mc_delta(
    n: usize,
    theta: f64,
    sigma_z: f64,
    clean_diff: &Tensor,
    trials: usize,
    seed: u64,
) -> Result<DeltaMcReport> {
    if clean_diff.shape() != [n, n] {
        return Err(Error::shape(format!(
            "clean difference {:?}, expected [{n}, {n}]",
            clean_diff.shape()
        )));
    }
    if trials < 2 {
        return Err(Error::arg("need at least two trials"));
    }
    let side = n + theta.ceil() as usize;
    let dx: Vec<f64> = clean_diff.data().iter().map(|&v| f64::from(v)).collect();
    let nn = (n * n) as f64;
    let delta_x = dx.iter().map(|v| v * v).sum::<f64>() / nn;

    let deltas: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<f64> {
            let mut rng = Rng::new(derive_seed(seed, "delta", t as u64));
            let z1 = sample_bilinear(&[side, side], theta, sigma_z, &mut rng)?;
            let z2 = sample_bilinear(&[side, side], theta, sigma_z, &mut rng)?;
            let (a, b) = (z1.data(), z2.data());
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let p = i * side + j;
                    let d = dx[i * n + j] + f64::from(b[p]) - f64::from(a[p]);
                    acc += d * d;
                }
            }
            Ok(acc / nn)
        })
        .collect::<Result<_>>()?;

    let m = Moments::of(&deltas);
    let rho = rho_separable(
        n,
        |t| sigma_z * (1.0 - t.abs() as f64 / theta).max(0.0),
        sigma_z,
    );
    Ok(DeltaMcReport {
        n,
        theta,
        sigma_z,
        trials,
        delta_x,
        rho,
        bias_est: m.mean - delta_x,
        bias_expected: 2.0 * sigma_z * sigma_z,
        bias_se: m.se_mean,
        var_est: m.variance,
        var_bound: 8.0 / nn * sigma_z.powi(4) * rho,
        var_se: m.se_variance,
    })
}

/// How the target noise relates to the input noise and the clean content.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "snake_case")]
pub enum SyrScenario {
    Independent,
    /// Target noise correlated with input noise: `w = a·z + e`.
    TypeI {
        sigma_zw: f64,
    },
    /// Target noise correlated with clean content: `w = b·x̄ + e`.
    TypeII {
        sigma_xw: f64,
    },
}

/// Synthetic field parameters; every random field is white noise smoothed by
/// a `smoothing × smoothing` flat kernel, hence stationary and m-dependent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyrConfig {
    pub side: usize,
    pub sigma_z: f64,
    pub sigma_x: f64,
    pub sigma_w: f64,
    pub mu_x: f64,
    pub mu_w: f64,
    pub smoothing: usize,
    pub pairs: usize,
}

impl SyrConfig {
    pub fn new(side: usize, sigma_z: f64, pairs: usize) -> Self {
        SyrConfig {
            side,
            sigma_z,
            sigma_x: 20.0,
            sigma_w: 10.0,
            mu_x: 100.0,
            mu_w: 3.0,
            smoothing: 3,
            pairs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyrReport {
    pub scenario: SyrScenario,
    pub side: usize,
    pub pairs: usize,
    pub mean: f64,
    pub se_mean: f64,
    /// `σ_xw + σ_zw - σ_z²`.
    pub expected: f64,
    /// `expected · (1 - s²/N)`: the same with the empirical-mean bias for an
    /// `s × s` smoothing kernel over `N` samples.
    pub expected_finite: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

impl SyrReport {
    pub fn z_score(&self) -> f64 {
        (self.mean - self.expected) / self.se_mean
    }
}

/// Sample of `s_{y,r}` over synthetic pairs `y = x + z`, `r = w - z`.
pub fn mc_syr_scenarios(scenario: SyrScenario, cfg: &SyrConfig, seed: u64) -> Result<SyrReport> {
    if cfg.pairs < 2 {
        return Err(Error::arg("need at least two pairs"));
    }
    let (sz2, sx2, sw2) = (
        cfg.sigma_z.powi(2),
        cfg.sigma_x.powi(2),
        cfg.sigma_w.powi(2),
    );
    // w = coeff·(z or x̄) + e, with Var(e) = σ_w² - coeff²·Var(source)
    let (cov_zw, cov_xw, coeff, source_var) = match scenario {
        SyrScenario::Independent => (0.0, 0.0, 0.0, 0.0),
        SyrScenario::TypeI { sigma_zw } => (sigma_zw, 0.0, sigma_zw / sz2, sz2),
        SyrScenario::TypeII { sigma_xw } => (0.0, sigma_xw, sigma_xw / sx2, sx2),
    };
    let resid_var = sw2 - coeff * coeff * source_var;
    if resid_var <= 0.0 {
        return Err(Error::arg(format!(
            "requested covariance needs Var(w) > {sw2}; residual variance would be {resid_var}"
        )));
    }
    let sigma_e = resid_var.sqrt();
    let theta = cfg.smoothing as f64;
    let shape = [cfg.side, cfg.side];

    let samples: Vec<f64> = (0..cfg.pairs)
        .into_par_iter()
        .map(|p| -> Result<f64> {
            let mut rng = Rng::new(derive_seed(seed, "syr", p as u64));
            let xbar = sample_bilinear(&shape, theta, cfg.sigma_x, &mut rng)?;
            let z = sample_bilinear(&shape, theta, cfg.sigma_z, &mut rng)?;
            let e = sample_bilinear(&shape, theta, sigma_e, &mut rng)?;
            let src = match scenario {
                SyrScenario::TypeII { .. } => xbar.data(),
                _ => z.data(),
            };
            let (mu_x, mu_w) = (cfg.mu_x as f32, cfg.mu_w as f32);
            let c = coeff as f32;
            let y: Vec<f32> = xbar
                .data()
                .iter()
                .zip(z.data())
                .map(|(x, z)| mu_x + x + z)
                .collect();
            let r: Vec<f32> = e
                .data()
                .iter()
                .zip(src)
                .zip(z.data())
                .map(|((e, s), z)| mu_w + c * s + e - z)
                .collect();
            covariance(&y, &r)
        })
        .collect::<Result<_>>()?;

    let m = Moments::of(&samples);
    let expected = cov_xw + cov_zw - sz2;
    let n = (cfg.side * cfg.side) as f64;
    Ok(SyrReport {
        scenario,
        side: cfg.side,
        pairs: cfg.pairs,
        mean: m.mean,
        se_mean: m.se_mean,
        expected,
        expected_finite: expected * (1.0 - theta * theta / n),
        skewness: m.skewness,
        excess_kurtosis: m.excess_kurtosis,
    })
}
