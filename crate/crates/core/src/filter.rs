//! Dependency filtering by the input/residual covariance.
//!
//! For an input `y` and crafted target `x̃`, the residual `r = x̃ - y` equals
//! `w - z`. When target noise is independent of input noise and content, the
//! empirical covariance of `y` and `r` concentrates at `-σ_z²`. Pairs whose
//! target noise leaks content or input noise fall in a left tail, which is
//! cut at the smallest `s_min` that lifts the retained mean to the histogram
//! peak.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, Tensor};
use crate::manifest::PairRecord;

/// `x̃ - y` as a tensor of the input's shape.
pub fn residual(target: &Image, input: &Image) -> Result<Tensor> {
    if !target.same_shape(input) {
        return Err(Error::shape(format!(
            "target {:?} vs input {:?}",
            target.shape(),
            input.shape()
        )));
    }
    let data = target
        .data()
        .iter()
        .zip(input.data())
        .map(|(a, b)| a - b)
        .collect();
    Tensor::new(vec![input.channels(), input.height(), input.width()], data)
}

/// Population covariance with empirical means, all samples pooled.
pub fn covariance(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("{} vs {} samples", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::arg("covariance of zero samples"));
    }
    let n = a.len() as f64;
    let ma = a.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let mb = b.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(&u, &v)| (f64::from(u) - ma) * (f64::from(v) - mb))
        .sum();
    Ok(s / n)
}

/// The pair statistic `s_{y,r}`.
pub fn cov_syr(y: &Image, r: &Tensor) -> Result<f64> {
    covariance(y.data(), r.data())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binning {
    /// `2·IQR·N^(-1/3)`, falling back to Scott when the IQR vanishes.
    FreedmanDiaconis,
    /// `3.49·sd·N^(-1/3)`.
    Scott,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub peak_bin: usize,
    pub mean: f64,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        self.bin_edges[1] - self.bin_edges[0]
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        0.5 * (self.bin_edges[i] + self.bin_edges[i + 1])
    }

    pub fn peak_location(&self) -> f64 {
        self.bin_center(self.peak_bin)
    }

    /// `bin_center,count` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_center,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{}\n", self.bin_center(i), c));
        }
        out
    }
}

/// Linear-interpolation quantile of sorted data (R type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_finite(samples: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::arg(format!("non-finite sample {bad}")));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    if s.len() < 2 || s[0] == s[s.len() - 1] {
        return Err(Error::arg("histogram needs at least two distinct samples"));
    }
    Ok(s)
}

fn histogram_of_sorted(sorted: &[f64], samples: &[f64], binning: Binning) -> Histogram {
    let n = sorted.len() as f64;
    let scott = || {
        let m = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
        3.49 * var.sqrt() * n.powf(-1.0 / 3.0)
    };
    let width = match binning {
        Binning::FreedmanDiaconis => {
            let iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
            if iqr > 0.0 {
                2.0 * iqr * n.powf(-1.0 / 3.0)
            } else {
                scott()
            }
        }
        Binning::Scott => scott(),
    };
    let lo = sorted[0];
    let span = sorted[sorted.len() - 1] - lo;
    let bins = ((span / width).ceil() as usize).max(1);
    let bin_edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0usize; bins];
    for &v in sorted {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    let mut peak_bin = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[peak_bin] {
            peak_bin = i;
        }
    }
    Histogram {
        bin_edges,
        counts,
        peak_bin,
        mean: samples.iter().sum::<f64>() / n,
    }
}

pub fn build_histogram(samples: &[f64], binning: Binning) -> Result<Histogram> {
    let sorted = sorted_finite(samples)?;
    Ok(histogram_of_sorted(&sorted, samples, binning))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    /// `None` when no cut is needed (every pair kept).
    pub s_min: Option<f64>,
    pub retained_fraction: f64,
    pub retained_count: usize,
    pub peak_location: f64,
    pub retained_mean: f64,
    pub bin_width: f64,
    pub full_mean: f64,
}

/// Smallest left cut whose retained mean reaches the full-histogram peak.
pub fn find_smin(samples: &[f64]) -> Result<ThresholdResult> {
    let sorted = sorted_finite(samples)?;
    let hist = histogram_of_sorted(&sorted, samples, Binning::FreedmanDiaconis);
    let peak = hist.peak_location();
    let n = sorted.len();
    if hist.mean >= peak {
        return Ok(ThresholdResult {
            s_min: None,
            retained_fraction: 1.0,
            retained_count: n,
            peak_location: peak,
            retained_mean: hist.mean,
            bin_width: hist.bin_width(),
            full_mean: hist.mean,
        });
    }

    // suffix sums from the right so each candidate mean is one division
    let mut suffix = vec![0.0f64; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] + sorted[i];
    }
    let mut cut = None;
    for i in 0..n {
        if i > 0 && sorted[i] == sorted[i - 1] {
            continue;
        }
        if suffix[i] / (n - i) as f64 >= peak {
            cut = Some(i);
            break;
        }
    }
    let i = cut.ok_or_else(|| Error::arg("no cut reaches the histogram peak"))?;
    let retained_mean = suffix[i] / (n - i) as f64;
    let half_bin = 0.5 * hist.bin_width();
    if (retained_mean - peak).abs() > half_bin {
        return Err(Error::arg(format!(
            "retained mean {retained_mean} misses peak {peak} by more than half a bin ({half_bin})"
        )));
    }
    Ok(ThresholdResult {
        s_min: Some(sorted[i]),
        retained_fraction: (n - i) as f64 / n as f64,
        retained_count: n - i,
        peak_location: peak,
        retained_mean,
        bin_width: hist.bin_width(),
        full_mean: hist.mean,
    })
}

/// Sets `retained = s_yr >= s_min` on every record; `None` keeps all.
pub fn filter_pairs(records: &mut [PairRecord], s_min: Option<f64>) -> Result<()> {
    for (i, r) in records.iter().enumerate() {
        if r.s_yr.is_none() {
            return Err(Error::Manifest(format!(
                "record {i} ({}) has no s_yr",
                r.input
            )));
        }
    }
    for r in records.iter_mut() {
        let s = r.s_yr.expect("checked above");
        r.retained = Some(s_min.is_none_or(|t| s >= t));
    }
    Ok(())
}
