//! Images, gradient fields, and the discrete derivative operator `D`.
//!
//! Images are stored row-major: pixel `(row, col)` lives at `row * width + col`.
//! Every operator in the crate uses this vectorization, so `K` and `D` agree
//! on indexing.
//!
//! `D` uses forward differences with a replicate (Neumann) boundary: the
//! difference across the last column (horizontal) or last row (vertical) is
//! zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::LinearOperator;
use crate::vector;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Image {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::shape("nonzero width and height", format!("{width}x{height}")));
        }
        if values.len() != width * height {
            return Err(Error::shape(
                format!("{} values for {width}x{height}", width * height),
                values.len(),
            ));
        }
        if let Some(index) = vector::first_non_finite(&values) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0 && value.is_finite());
        Self {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    /// Builds an image from a closure over `(row, col)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                values.push(f(row, col));
            }
        }
        Self::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    /// Projection onto the feasible set Ω = {x ≥ 0}.
    pub fn clamped_nonneg(mut self) -> Self {
        vector::clamp_nonneg(&mut self.values);
        self
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.width, self.height, self.values.iter().map(|&v| f(v)).collect())
    }

    pub(crate) fn ensure_same_shape(&self, other: &Image) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(
                format!("{}x{}", self.width, self.height),
                format!("{}x{}", other.width, other.height),
            ))
        }
    }

    /// Wraps solver-produced values, checking only length and finiteness.
    pub(crate) fn from_raw(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(width, height, values)
    }
}

/// Stacked horizontal (`h`) and vertical (`v`) forward differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    width: usize,
    height: usize,
    pub h: Vec<f64>,
    pub v: Vec<f64>,
}

impl GradientField {
    pub fn new(width: usize, height: usize, h: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let n = width * height;
        if h.len() != n || v.len() != n {
            return Err(Error::shape(
                format!("two arrays of {n}"),
                format!("{} and {}", h.len(), v.len()),
            ));
        }
        Ok(Self { width, height, h, v })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            h: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Row-wise concatenation `[h; v]`, the layout used by [`GradientOperator`].
    pub fn to_stacked(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.h.len());
        out.extend_from_slice(&self.h);
        out.extend_from_slice(&self.v);
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservationShape {
    Image { width: usize, height: usize },
    Sinogram { views: usize, detectors: usize },
    Vector { len: usize },
}

impl ObservationShape {
    pub fn len(&self) -> usize {
        match *self {
            ObservationShape::Image { width, height } => width * height,
            ObservationShape::Sinogram { views, detectors } => views * detectors,
            ObservationShape::Vector { len } => len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(rows, cols)` when laid out as a 2-D array.
    pub fn rows_cols(&self) -> (usize, usize) {
        match *self {
            ObservationShape::Image { width, height } => (height, width),
            ObservationShape::Sinogram { views, detectors } => (views, detectors),
            ObservationShape::Vector { len } => (1, len),
        }
    }
}

/// Measured data `y`, either image-shaped (deblurring) or a sinogram (CT).
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    shape: ObservationShape,
    values: Vec<f64>,
}

impl Observation {
    pub fn new(shape: ObservationShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::shape(format!("{shape:?}"), values.len()));
        }
        if let Some(index) = vector::first_non_finite(&values) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { shape, values })
    }

    pub fn shape(&self) -> ObservationShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Reinterprets image-shaped data as an [`Image`] (the deblurring
    /// starting guess is the corrupted image itself).
    pub fn to_image(&self) -> Result<Image> {
        match self.shape {
            ObservationShape::Image { width, height } => Image::new(width, height, self.values.clone()),
            other => Err(Error::shape("image-shaped observation", format!("{other:?}"))),
        }
    }
}

/// Forward differences `D x` into `h`/`v` (each of length `width * height`).
pub(crate) fn gradient_into(x: &[f64], width: usize, height: usize, h: &mut [f64], v: &mut [f64]) {
    for row in 0..height {
        let base = row * width;
        for col in 0..width - 1 {
            h[base + col] = x[base + col + 1] - x[base + col];
        }
        h[base + width - 1] = 0.0;
    }
    for row in 0..height - 1 {
        let base = row * width;
        for col in 0..width {
            v[base + col] = x[base + width + col] - x[base + col];
        }
    }
    let last = (height - 1) * width;
    v[last..last + width].fill(0.0);
}

/// `Dᵀ [h; v]` (negative divergence) into `out`.
pub(crate) fn gradient_adjoint_into(h: &[f64], v: &[f64], width: usize, height: usize, out: &mut [f64]) {
    for row in 0..height {
        let base = row * width;
        for col in 0..width {
            let mut acc = 0.0;
            if col + 1 < width {
                acc -= h[base + col];
            }
            if col >= 1 {
                acc += h[base + col - 1];
            }
            if row + 1 < height {
                acc -= v[base + col];
            }
            if row >= 1 {
                acc += v[base - width + col];
            }
            out[base + col] = acc;
        }
    }
}

/// Pointwise `sqrt(h² + v²)`.
pub(crate) fn magnitude_into(h: &[f64], v: &[f64], out: &mut [f64]) {
    for ((o, a), b) in out.iter_mut().zip(h).zip(v) {
        *o = a.hypot(*b);
    }
}

pub fn gradient(x: &Image) -> GradientField {
    let (w, ht) = (x.width, x.height);
    let mut field = GradientField::zeros(w, ht);
    gradient_into(&x.values, w, ht, &mut field.h, &mut field.v);
    field
}

pub fn gradient_magnitude(g: &GradientField) -> Vec<f64> {
    let mut out = vec![0.0; g.h.len()];
    magnitude_into(&g.h, &g.v, &mut out);
    out
}

pub fn gradient_adjoint(g: &GradientField) -> Image {
    let mut out = vec![0.0; g.h.len()];
    gradient_adjoint_into(&g.h, &g.v, g.width, g.height, &mut out);
    Image {
        width: g.width,
        height: g.height,
        values: out,
    }
}

/// `|t|^p` with the convention `0^p = 0`.
#[inline]
pub fn pow_abs(t: f64, p: f64) -> f64 {
    let t = t.abs();
    if t == 0.0 {
        0.0
    } else {
        t.powf(p)
    }
}

/// The TpV prior `‖ |Dx| ‖_p^p`.
pub fn tpv_prior(x: &Image, p: f64) -> f64 {
    let g = gradient(x);
    g.h.iter().zip(&g.v).map(|(a, b)| pow_abs(a.hypot(*b), p)).sum()
}

pub(crate) fn check_lambda_p(lambda: f64, p: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::param("lambda", format!("must be > 0, got {lambda}")));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::param("p", format!("must lie in (0, 1], got {p}")));
    }
    Ok(())
}

/// `½‖Kx − y‖² + λ ‖ |Dx| ‖_p^p`, the unconstrained TpV objective.
pub fn tpv_objective(x: &Image, y: &Observation, k: &dyn LinearOperator, lambda: f64, p: f64) -> Result<f64> {
    check_lambda_p(lambda, p)?;
    let residual = crate::operators::residual_norm(k, x, y)?;
    Ok(0.5 * residual * residual + lambda * tpv_prior(x, p))
}
