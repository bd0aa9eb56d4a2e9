//! Relative error, SSIM, and batch summaries.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::vector;

/// `‖x − gt‖₂ / ‖gt‖₂`.
pub fn relative_error(x: &Image, gt: &Image) -> Result<f64> {
    gt.ensure_same_shape(x)?;
    let denom = vector::norm2(gt.as_slice());
    if denom == 0.0 {
        return Err(Error::DegenerateData("relative error against an all-zero ground truth".into()));
    }
    Ok(vector::distance(x.as_slice(), gt.as_slice()) / denom)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub data_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            data_range: 1.0,
        }
    }
}

pub fn ssim(x: &Image, gt: &Image) -> Result<f64> {
    ssim_with(x, gt, &SsimParams::default())
}

/// Mean of the local SSIM map over every window position that fits inside
/// the image (no padding). Local statistics use a normalized Gaussian window.
pub fn ssim_with(x: &Image, gt: &Image, params: &SsimParams) -> Result<f64> {
    gt.ensure_same_shape(x)?;
    let win = params.window;
    if win == 0 || win % 2 == 0 {
        return Err(Error::param("window", format!("must be odd and >= 1, got {win}")));
    }
    if x.width() < win || x.height() < win {
        return Err(Error::shape(
            format!("image sides >= {win}"),
            format!("{}x{}", x.width(), x.height()),
        ));
    }
    let half = (win / 2) as f64;
    let mut g: Vec<f64> = (0..win)
        .map(|i| {
            let t = i as f64 - half;
            (-0.5 * t * t / (params.sigma * params.sigma)).exp()
        })
        .collect();
    let total: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= total);

    let c1 = (params.k1 * params.data_range).powi(2);
    let c2 = (params.k2 * params.data_range).powi(2);
    let (w, h) = (x.width(), x.height());
    let (a, b) = (x.as_slice(), gt.as_slice());

    // Separable filtering of the five moment images, valid region only.
    let filter = |img: &dyn Fn(usize) -> f64| -> Vec<f64> {
        let ow = w - win + 1;
        let oh = h - win + 1;
        let mut rows = vec![0.0; h * ow];
        for r in 0..h {
            for c in 0..ow {
                let mut acc = 0.0;
                for (k, gk) in g.iter().enumerate() {
                    acc += gk * img(r * w + c + k);
                }
                rows[r * ow + c] = acc;
            }
        }
        let mut out = vec![0.0; oh * ow];
        for r in 0..oh {
            for (k, gk) in g.iter().enumerate() {
                let src = &rows[(r + k) * ow..(r + k + 1) * ow];
                for (o, s) in out[r * ow..(r + 1) * ow].iter_mut().zip(src) {
                    *o += gk * s;
                }
            }
        }
        out
    };
    let mu_a = filter(&|i| a[i]);
    let mu_b = filter(&|i| b[i]);
    let aa = filter(&|i| a[i] * a[i]);
    let bb = filter(&|i| b[i] * b[i]);
    let ab = filter(&|i| a[i] * b[i]);

    let mut sum = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
        sum += num / den;
    }
    Ok(sum / mu_a.len() as f64)
}

/// Mean, population standard deviation, and five-number summary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile by linear interpolation between order statistics at position
/// `q (n − 1)`; `sorted` must be ascending and nonempty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn batch_stats(values: &[f64]) -> Result<BatchStats> {
    if values.is_empty() {
        return Err(Error::param("values", "batch statistics of an empty list"));
    }
    if let Some(index) = vector::first_non_finite(values) {
        return Err(Error::NonFinite { index });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(BatchStats {
        count: values.len(),
        mean,
        std: var.sqrt(),
        min: sorted[0],
        q1: quantile(&sorted, 0.25),
        median: quantile(&sorted, 0.5),
        q3: quantile(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub index: usize,
    pub re: f64,
    pub ssim: f64,
}

/// Per-image metrics and their batch summaries.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub images: Vec<ImageMetrics>,
    pub re: BatchStats,
    pub ssim: BatchStats,
}

impl MetricReport {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (usize, &'a Image, &'a Image)>) -> Result<Self> {
        let images = pairs
            .into_iter()
            .map(|(index, x, gt)| {
                Ok(ImageMetrics {
                    index,
                    re: relative_error(x, gt)?,
                    ssim: ssim(x, gt)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_metrics(images)
    }

    pub fn from_metrics(images: Vec<ImageMetrics>) -> Result<Self> {
        let re: Vec<f64> = images.iter().map(|m| m.re).collect();
        let ss: Vec<f64> = images.iter().map(|m| m.ssim).collect();
        Ok(Self {
            re: batch_stats(&re)?,
            ssim: batch_stats(&ss)?,
            images,
        })
    }

    /// Header `index,re,ssim`, one row per image.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "index,re,ssim")?;
        for m in &self.images {
            writeln!(out, "{},{:e},{:e}", m.index, m.re, m.ssim)?;
        }
        Ok(())
    }
}

pub const BATCH_STATS_HEADER: &str = "count,mean,std,min,q1,median,q3,max";

impl BatchStats {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.count, self.mean, self.std, self.min, self.q1, self.median, self.q3, self.max
        )
    }
}
