//! Sample moments shared by the verification code and tests.

use serde::{Deserialize, Serialize};

/// Central sample moments of a one-dimensional sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    /// Unbiased (n - 1) variance.
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Standard error of the mean.
    pub se_mean: f64,
    /// Large-sample standard error of `variance`, `sqrt((m4 - m2²) / n)`.
    pub se_variance: f64,
}

impl Moments {
    /// Two-pass computation in input order, so results do not depend on how
    /// the sample was produced.
    pub fn of(xs: &[f64]) -> Moments {
        let n = xs.len();
        assert!(n >= 2, "moments need at least two samples");
        let nf = n as f64;
        let mean = xs.iter().sum::<f64>() / nf;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &x in xs {
            let d = x - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        m2 /= nf;
        m3 /= nf;
        m4 /= nf;
        let variance = m2 * nf / (nf - 1.0);
        let (skewness, excess_kurtosis) = if m2 > 0.0 {
            (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
        } else {
            (0.0, 0.0)
        };
        Moments {
            count: n,
            mean,
            variance,
            skewness,
            excess_kurtosis,
            se_mean: (variance / nf).sqrt(),
            se_variance: ((m4 - m2 * m2).max(0.0) / nf).sqrt(),
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Circular lag-`(dy, dx)` autocovariance of a zero-mean `h × w` field,
/// averaged over every position.
pub fn circular_autocov(field: &[f32], h: usize, w: usize, dy: usize, dx: usize) -> f64 {
    assert_eq!(field.len(), h * w);
    let mut acc = 0.0;
    for i in 0..h {
        let i2 = (i + dy) % h;
        for j in 0..w {
            let j2 = (j + dx) % w;
            acc += f64::from(field[i * w + j]) * f64::from(field[i2 * w + j2]);
        }
    }
    acc / (h * w) as f64
}
