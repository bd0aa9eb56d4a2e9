//! The linear operator contract and the concrete forward models.

mod blur;
mod fanbeam;

pub use blur::{make_gaussian_kernel, GaussianBlur, GaussianKernel, DEFAULT_SIGMA, KERNEL_RADIUS, KERNEL_SIZE};
pub use fanbeam::{fbp_reconstruct, FanBeamGeometry, FanBeamProjector};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{gradient_adjoint_into, gradient_into, Image, Observation, ObservationShape};
use crate::vector;

/// A matrix-free linear map `K: ℝⁿ → ℝᵐ` from images to observations.
///
/// `apply_into` and `adjoint_into` expect buffers of exactly
/// [`input_dim`](Self::input_dim) / [`output_dim`](Self::output_dim) and
/// panic otherwise; the checked wrappers return [`Error::ShapeMismatch`].
pub trait LinearOperator: Send + Sync {
    /// `(width, height)` of the input image.
    fn input_shape(&self) -> (usize, usize);

    fn output_shape(&self) -> ObservationShape;

    fn apply_into(&self, x: &[f64], out: &mut [f64]);

    fn adjoint_into(&self, r: &[f64], out: &mut [f64]);

    fn input_dim(&self) -> usize {
        let (w, h) = self.input_shape();
        w * h
    }

    fn output_dim(&self) -> usize {
        self.output_shape().len()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(self.input_dim(), x.len()));
        }
        let mut out = vec![0.0; self.output_dim()];
        self.apply_into(x, &mut out);
        Ok(out)
    }

    fn adjoint(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.output_dim() {
            return Err(Error::shape(self.output_dim(), r.len()));
        }
        let mut out = vec![0.0; self.input_dim()];
        self.adjoint_into(r, &mut out);
        Ok(out)
    }

    /// `K x` wrapped as an [`Observation`].
    fn observe(&self, x: &Image) -> Result<Observation> {
        let (w, h) = self.input_shape();
        if x.width() != w || x.height() != h {
            return Err(Error::shape(
                format!("{w}x{h} image"),
                format!("{}x{}", x.width(), x.height()),
            ));
        }
        Observation::new(self.output_shape(), self.apply(x.as_slice())?)
    }

    /// `Kᵀ r` wrapped as an [`Image`].
    fn adjoint_image(&self, r: &[f64]) -> Result<Image> {
        let (w, h) = self.input_shape();
        Image::new(w, h, self.adjoint(r)?)
    }
}

/// `‖Kx − y‖₂`.
pub fn residual_norm(k: &dyn LinearOperator, x: &Image, y: &Observation) -> Result<f64> {
    if y.len() != k.output_dim() {
        return Err(Error::shape(k.output_dim(), y.len()));
    }
    let kx = k.observe(x)?;
    Ok(vector::distance(kx.as_slice(), y.as_slice()))
}

#[derive(Clone, Copy, Debug)]
pub struct Identity {
    width: usize,
    height: usize,
}

impl Identity {
    pub fn for_image(width: usize, height: usize) -> Self {
        Self { width, height }
    }
}

impl LinearOperator for Identity {
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
        out.copy_from_slice(x);
    }

    fn adjoint_into(&self, r: &[f64], out: &mut [f64]) {
        out.copy_from_slice(r);
    }
}

/// `diag(d)` acting on a flat vector (treated as a `len × 1` image).
#[derive(Clone, Debug)]
pub struct Diagonal {
    diag: Vec<f64>,
}

impl Diagonal {
    pub fn new(diag: Vec<f64>) -> Self {
        assert!(!diag.is_empty());
        Self { diag }
    }
}

impl LinearOperator for Diagonal {
    fn input_shape(&self) -> (usize, usize) {
        (self.diag.len(), 1)
    }

    fn output_shape(&self) -> ObservationShape {
        ObservationShape::Vector { len: self.diag.len() }
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for ((o, d), v) in out.iter_mut().zip(&self.diag).zip(x) {
            *o = d * v;
        }
    }

    fn adjoint_into(&self, r: &[f64], out: &mut [f64]) {
        self.apply_into(r, out);
    }
}

/// The discrete gradient `D: ℝⁿ → ℝ²ⁿ`, output laid out as `[D_h x; D_v x]`.
#[derive(Clone, Copy, Debug)]
pub struct GradientOperator {
    width: usize,
    height: usize,
}

impl GradientOperator {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }
}

impl LinearOperator for GradientOperator {
    fn input_shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn output_shape(&self) -> ObservationShape {
        ObservationShape::Vector {
            len: 2 * self.width * self.height,
        }
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        let (h, v) = out.split_at_mut(n);
        gradient_into(x, self.width, self.height, h, v);
    }

    fn adjoint_into(&self, r: &[f64], out: &mut [f64]) {
        let n = out.len();
        gradient_adjoint_into(&r[..n], &r[n..], self.width, self.height, out);
    }
}

/// `M = [K; D]`, output dimension `m + 2n`.
pub struct StackedOperator<'a> {
    k: &'a dyn LinearOperator,
    d: GradientOperator,
}

impl<'a> StackedOperator<'a> {
    pub fn new(k: &'a dyn LinearOperator) -> Self {
        let (w, h) = k.input_shape();
        Self {
            k,
            d: GradientOperator::new(w, h),
        }
    }
}

impl LinearOperator for StackedOperator<'_> {
    fn input_shape(&self) -> (usize, usize) {
        self.k.input_shape()
    }

    fn output_shape(&self) -> ObservationShape {
        ObservationShape::Vector {
            len: self.k.output_dim() + self.d.output_dim(),
        }
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let (top, bottom) = out.split_at_mut(self.k.output_dim());
        self.k.apply_into(x, top);
        self.d.apply_into(x, bottom);
    }

    fn adjoint_into(&self, r: &[f64], out: &mut [f64]) {
        let (top, bottom) = r.split_at(self.k.output_dim());
        let mut tmp = vec![0.0; out.len()];
        self.k.adjoint_into(top, out);
        self.d.adjoint_into(bottom, &mut tmp);
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o += t;
        }
    }
}

pub const DEFAULT_NORM_ITERATIONS: usize = 50;
pub const DEFAULT_NORM_SEED: u64 = 0x5eed;

/// Power-method estimate of the largest singular value of `op`, started from a
/// seeded uniform random vector. Returns 0 for the zero operator.
pub fn estimate_operator_norm(op: &dyn LinearOperator, iters: usize, seed: u64) -> Result<f64> {
    if iters == 0 {
        return Err(Error::param("iters", "must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..op.input_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let nv = vector::norm2(&v);
    v.iter_mut().for_each(|e| *e /= nv);

    let mut mv = vec![0.0; op.output_dim()];
    let mut u = vec![0.0; op.input_dim()];
    let mut estimate = 0.0;
    for _ in 0..iters {
        op.apply_into(&v, &mut mv);
        op.adjoint_into(&mv, &mut u);
        let nu = vector::norm2(&u);
        if nu == 0.0 {
            return Ok(0.0);
        }
        // ‖MᵀM v‖ with ‖v‖ = 1 approaches σ_max².
        estimate = nu.sqrt();
        for (a, b) in v.iter_mut().zip(&u) {
            *a = b / nu;
        }
    }
    Ok(estimate)
}

/// Largest relative gap `|⟨Ax, r⟩ − ⟨x, Aᵀr⟩| / max(|⟨Ax, r⟩|, |⟨x, Aᵀr⟩|)` over
/// `trials` seeded random pairs with entries uniform in `[-1, 1)`.
pub fn dot_product_test(op: &dyn LinearOperator, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let x: Vec<f64> = (0..op.input_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r: Vec<f64> = (0..op.output_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ax = op.apply(&x).expect("dims");
        let atr = op.adjoint(&r).expect("dims");
        let lhs = vector::dot(&ax, &r);
        let rhs = vector::dot(&x, &atr);
        let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    worst
}
