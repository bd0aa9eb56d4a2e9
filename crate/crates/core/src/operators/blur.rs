//! 11×11 Gaussian blur with a symmetric (half-sample) reflective boundary.
//!
//! The normalized 2-D kernel factors as `g[i]·g[j]`, so the operator runs as a
//! row pass followed by a column pass. Index tables for the reflected taps are
//! built once per image size; the adjoint scatters through the same tables,
//! which makes it the exact transpose of the forward map.

use crate::error::{Error, Result};
use crate::image::ObservationShape;
use crate::operators::LinearOperator;

pub const KERNEL_RADIUS: usize = 5;
pub const KERNEL_SIZE: usize = 2 * KERNEL_RADIUS + 1;

pub const DEFAULT_SIGMA: f64 = 1.3;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianKernel {
    sigma: f64,
    /// Normalized 1-D factor, indexed by offset `+ KERNEL_RADIUS`.
    factor: [f64; KERNEL_SIZE],
}

/// `exp(−½ (i² + j²) / σ²)` on `{−5..5}²`, normalized to unit sum.
pub fn make_gaussian_kernel(sigma: f64) -> Result<GaussianKernel> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::param("sigma_g", format!("must be > 0, got {sigma}")));
    }
    let mut factor = [0.0; KERNEL_SIZE];
    for (slot, offset) in factor.iter_mut().zip(-(KERNEL_RADIUS as i64)..) {
        let t = offset as f64;
        *slot = (-0.5 * t * t / (sigma * sigma)).exp();
    }
    let total: f64 = factor.iter().sum();
    factor.iter_mut().for_each(|f| *f /= total);
    Ok(GaussianKernel { sigma, factor })
}

impl GaussianKernel {
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Entry of the raw kernel before normalization.
    pub fn unnormalized(&self, di: i64, dj: i64) -> f64 {
        let s2 = self.sigma * self.sigma;
        (-0.5 * ((di * di + dj * dj) as f64) / s2).exp()
    }

    /// Normalized entry at offset `(di, dj)`, both in `−5..=5`.
    pub fn entry(&self, di: i64, dj: i64) -> f64 {
        let r = KERNEL_RADIUS as i64;
        assert!(di.abs() <= r && dj.abs() <= r);
        self.factor[(di + r) as usize] * self.factor[(dj + r) as usize]
    }

    pub fn to_array(&self) -> [[f64; KERNEL_SIZE]; KERNEL_SIZE] {
        let r = KERNEL_RADIUS as i64;
        let mut out = [[0.0; KERNEL_SIZE]; KERNEL_SIZE];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.entry(i as i64 - r, j as i64 - r);
            }
        }
        out
    }

    pub fn factor(&self) -> &[f64; KERNEL_SIZE] {
        &self.factor
    }
}

/// Symmetric reflection `… b a | a b c … | c b …`; one fold suffices for
/// `len > KERNEL_RADIUS`.
fn reflect(t: i64, len: i64) -> usize {
    let r = if t < 0 {
        -t - 1
    } else if t >= len {
        2 * len - t - 1
    } else {
        t
    };
    r as usize
}

fn tap_table(len: usize) -> Vec<[usize; KERNEL_SIZE]> {
    let n = len as i64;
    (0..n)
        .map(|i| {
            let mut taps = [0usize; KERNEL_SIZE];
            for (k, tap) in taps.iter_mut().enumerate() {
                *tap = reflect(i + k as i64 - KERNEL_RADIUS as i64, n);
            }
            taps
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct GaussianBlur {
    width: usize,
    height: usize,
    kernel: GaussianKernel,
    col_taps: Vec<[usize; KERNEL_SIZE]>,
    row_taps: Vec<[usize; KERNEL_SIZE]>,
}

impl GaussianBlur {
    pub fn new(width: usize, height: usize, sigma: f64) -> Result<Self> {
        if width < KERNEL_SIZE || height < KERNEL_SIZE {
            return Err(Error::shape(
                format!("image sides >= {KERNEL_SIZE}"),
                format!("{width}x{height}"),
            ));
        }
        Ok(Self {
            width,
            height,
            kernel: make_gaussian_kernel(sigma)?,
            col_taps: tap_table(width),
            row_taps: tap_table(height),
        })
    }

    pub fn with_default_sigma(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, DEFAULT_SIGMA)
    }

    pub fn kernel(&self) -> &GaussianKernel {
        &self.kernel
    }
}

impl LinearOperator for GaussianBlur {
    fn input_shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn output_shape(&self) -> ObservationShape {
        ObservationShape::Image {
            width: self.width,
            height: self.height,
        }
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.width * self.height);
        assert_eq!(out.len(), x.len());
        let g = &self.kernel.factor;
        let w = self.width;
        let mut tmp = vec![0.0; x.len()];
        for row in 0..self.height {
            let src = &x[row * w..(row + 1) * w];
            let dst = &mut tmp[row * w..(row + 1) * w];
            for (d, taps) in dst.iter_mut().zip(&self.col_taps) {
                let mut acc = 0.0;
                for (gk, &t) in g.iter().zip(taps) {
                    acc += gk * src[t];
                }
                *d = acc;
            }
        }
        for (row, taps) in self.row_taps.iter().enumerate() {
            let dst = &mut out[row * w..(row + 1) * w];
            dst.fill(0.0);
            for (gk, &t) in g.iter().zip(taps) {
                let src = &tmp[t * w..(t + 1) * w];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += gk * s;
                }
            }
        }
    }

    fn adjoint_into(&self, r: &[f64], out: &mut [f64]) {
        assert_eq!(r.len(), self.width * self.height);
        assert_eq!(out.len(), r.len());
        let g = &self.kernel.factor;
        let w = self.width;
        let mut tmp = vec![0.0; r.len()];
        for (row, taps) in self.row_taps.iter().enumerate() {
            let src = &r[row * w..(row + 1) * w];
            for (gk, &t) in g.iter().zip(taps) {
                let dst = &mut tmp[t * w..(t + 1) * w];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += gk * s;
                }
            }
        }
        out.fill(0.0);
        for row in 0..self.height {
            let src = &tmp[row * w..(row + 1) * w];
            let dst = &mut out[row * w..(row + 1) * w];
            for (s, taps) in src.iter().zip(&self.col_taps) {
                for (gk, &t) in g.iter().zip(taps) {
                    dst[t] += gk * s;
                }
            }
        }
    }
}
