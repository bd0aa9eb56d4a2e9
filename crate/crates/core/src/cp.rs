//! Chambolle–Pock primal–dual iterations for the weighted, nonnegativity
//! constrained subproblem
//!
//! ```text
//! min_{x ≥ 0}  (μ/2)‖Kx − y‖² + λ Σᵢ wᵢ |Dx|ᵢ
//! ```
//!
//! split as `F₁(Mx) + F₂(x)` with `M = [K; D]`, `F₂ = ι_Ω`. The dual update
//! for the data block is the prox of `F₁*` restricted to that block; the TV
//! block is a pointwise projection onto discs of radius `λ wᵢ`.
//!
//! `μ` is set by [`DataScale`]: the reweighted subproblems use the unhalved
//! `‖Kx − y‖²`, while reported objectives of the incremental schemes use the
//! halved form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{gradient_adjoint_into, gradient_into, magnitude_into, Image, Observation};
use crate::operators::{
    estimate_operator_norm, LinearOperator, StackedOperator, DEFAULT_NORM_ITERATIONS, DEFAULT_NORM_SEED,
};
use crate::vector;

/// Weighting of the data-fidelity term inside the subproblem.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataScale {
    /// `½‖Kx − y‖²`
    Half,
    /// `‖Kx − y‖²`
    #[default]
    Full,
}

impl DataScale {
    fn mu(self) -> f64 {
        match self {
            DataScale::Half => 1.0,
            DataScale::Full => 2.0,
        }
    }
}

/// Strictly positive per-pixel weights `w` of the subproblem.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if let Some(i) = w.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::param("w", format!("entry {i} is {} (weights must be > 0)", w[i])));
        }
        Ok(Self(w))
    }

    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `wᵀ|Dx|`
fn weighted_tv(x: &Image, w: &WeightVector) -> f64 {
    let n = x.len();
    let (mut h, mut v, mut mag) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    gradient_into(x.as_slice(), x.width(), x.height(), &mut h, &mut v);
    magnitude_into(&h, &v, &mut mag);
    vector::dot(&mag, w.as_slice())
}

/// `‖Kx − y‖² + λ Σᵢ wᵢ |Dx|ᵢ`
pub fn subproblem_objective(
    x: &Image,
    k: &dyn LinearOperator,
    y: &Observation,
    w: &WeightVector,
    lambda: f64,
) -> Result<f64> {
    subproblem_objective_scaled(x, k, y, w, lambda, DataScale::Full)
}

pub fn subproblem_objective_scaled(
    x: &Image,
    k: &dyn LinearOperator,
    y: &Observation,
    w: &WeightVector,
    lambda: f64,
    scale: DataScale,
) -> Result<f64> {
    if w.len() != x.len() {
        return Err(Error::shape(x.len(), w.len()));
    }
    let r = crate::operators::residual_norm(k, x, y)?;
    Ok(0.5 * scale.mu() * r * r + lambda * weighted_tv(x, w))
}

/// Operator context for repeated solves with the same `K`: holds `‖M‖` and the
/// step sizes `σ = τ`.
pub struct CpSolver<'a> {
    k: &'a dyn LinearOperator,
    norm: f64,
    sigma: f64,
    tau: f64,
    scale: DataScale,
}

/// Margin keeping `στ‖M‖² < 1` when the power method slightly underestimates.
const STEP_SAFETY: f64 = 0.99;

impl<'a> CpSolver<'a> {
    /// Estimates `‖[K; D]‖` with the power method.
    pub fn new(k: &'a dyn LinearOperator) -> Result<Self> {
        let norm = estimate_operator_norm(&StackedOperator::new(k), DEFAULT_NORM_ITERATIONS, DEFAULT_NORM_SEED)?;
        Self::with_norm(k, norm)
    }

    pub fn with_norm(k: &'a dyn LinearOperator, norm: f64) -> Result<Self> {
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::param("norm", format!("operator norm must be > 0, got {norm}")));
        }
        let step = STEP_SAFETY / norm;
        Ok(Self {
            k,
            norm,
            sigma: step,
            tau: step,
            scale: DataScale::Full,
        })
    }

    pub fn with_scale(mut self, scale: DataScale) -> Self {
        self.scale = scale;
        self
    }

    pub fn operator(&self) -> &'a dyn LinearOperator {
        self.k
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn scale(&self) -> DataScale {
        self.scale
    }

    /// A fresh iteration state: primal at `max(x0, 0)`, duals at zero.
    pub fn start<'s>(
        &'s self,
        y: &'s Observation,
        w: &WeightVector,
        lambda: f64,
        x0: &Image,
    ) -> Result<CpState<'s>> {
        let (width, height) = self.k.input_shape();
        if x0.width() != width || x0.height() != height {
            return Err(Error::shape(format!("{width}x{height}"), format!("{}x{}", x0.width(), x0.height())));
        }
        if y.len() != self.k.output_dim() {
            return Err(Error::shape(self.k.output_dim(), y.len()));
        }
        if w.len() != x0.len() {
            return Err(Error::shape(x0.len(), w.len()));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::param("lambda", format!("must be > 0, got {lambda}")));
        }
        let n = x0.len();
        let m = y.len();
        let mut x = x0.as_slice().to_vec();
        vector::clamp_nonneg(&mut x);
        Ok(CpState {
            solver: self,
            y,
            radius: w.as_slice().iter().map(|wi| lambda * wi).collect(),
            width,
            height,
            x_bar: x.clone(),
            x_prev: x.clone(),
            x,
            q: vec![0.0; m],
            z_h: vec![0.0; n],
            z_v: vec![0.0; n],
            kx: vec![0.0; m],
            g_h: vec![0.0; n],
            g_v: vec![0.0; n],
            kt_q: vec![0.0; n],
            dt_z: vec![0.0; n],
            iteration: 0,
        })
    }

    /// Runs exactly `iters` iterations from `x0` and returns the primal iterate.
    pub fn solve(&self, y: &Observation, w: &WeightVector, lambda: f64, x0: &Image, iters: usize) -> Result<Image> {
        if iters == 0 {
            return Err(Error::param("iters", "must be >= 1"));
        }
        let mut state = self.start(y, w, lambda, x0)?;
        for _ in 0..iters {
            state.step()?;
        }
        state.into_image()
    }
}

/// One-shot solve: estimates `‖M‖` then runs [`CpSolver::solve`] with the
/// unhalved data term.
pub fn cp_solve(
    k: &dyn LinearOperator,
    y: &Observation,
    w: &WeightVector,
    lambda: f64,
    x0: &Image,
    iters: usize,
) -> Result<Image> {
    CpSolver::new(k)?.solve(y, w, lambda, x0, iters)
}

/// Iteration state (`x`, `x̄`, duals `q` and `z`, and scratch buffers).
pub struct CpState<'s> {
    solver: &'s CpSolver<'s>,
    y: &'s Observation,
    radius: Vec<f64>,
    width: usize,
    height: usize,
    x: Vec<f64>,
    x_prev: Vec<f64>,
    x_bar: Vec<f64>,
    q: Vec<f64>,
    z_h: Vec<f64>,
    z_v: Vec<f64>,
    kx: Vec<f64>,
    g_h: Vec<f64>,
    g_v: Vec<f64>,
    kt_q: Vec<f64>,
    dt_z: Vec<f64>,
    iteration: usize,
}

impl CpState<'_> {
    pub fn step(&mut self) -> Result<()> {
        let s = self.solver;
        let (sigma, tau) = (s.sigma, s.tau);

        // Data block: q ← (q + σ(K x̄ − y)) / (1 + σ/μ)
        s.k.apply_into(&self.x_bar, &mut self.kx);
        let shrink = 1.0 / (1.0 + sigma / s.scale.mu());
        for ((q, kx), y) in self.q.iter_mut().zip(&self.kx).zip(self.y.as_slice()) {
            *q = (*q + sigma * (kx - y)) * shrink;
        }

        // TV block: z ← proj_{|·| ≤ λw}(z + σ D x̄)
        gradient_into(&self.x_bar, self.width, self.height, &mut self.g_h, &mut self.g_v);
        for i in 0..self.z_h.len() {
            let zh = self.z_h[i] + sigma * self.g_h[i];
            let zv = self.z_v[i] + sigma * self.g_v[i];
            let mag = zh.hypot(zv);
            let r = self.radius[i];
            if mag > r {
                let f = r / mag;
                self.z_h[i] = zh * f;
                self.z_v[i] = zv * f;
            } else {
                self.z_h[i] = zh;
                self.z_v[i] = zv;
            }
        }

        // Primal: x ← Π_Ω(x − τ(Kᵀq + Dᵀz)), then x̄ = 2x − x_prev (θ = 1).
        s.k.adjoint_into(&self.q, &mut self.kt_q);
        gradient_adjoint_into(&self.z_h, &self.z_v, self.width, self.height, &mut self.dt_z);
        std::mem::swap(&mut self.x, &mut self.x_prev);
        for i in 0..self.x.len() {
            let v = self.x_prev[i] - tau * (self.kt_q[i] + self.dt_z[i]);
            let v = if v < 0.0 { 0.0 } else { v };
            self.x[i] = v;
            self.x_bar[i] = 2.0 * v - self.x_prev[i];
        }
        self.iteration += 1;

        if let Some(i) = vector::first_non_finite(&self.x).or_else(|| vector::first_non_finite(&self.q)) {
            return Err(Error::Diverged {
                iteration: self.iteration,
                detail: format!(
                    "non-finite iterate at index {i} (σ = {sigma:.3e}, τ = {tau:.3e}, ‖M‖ = {:.3e})",
                    s.norm
                ),
            });
        }
        Ok(())
    }

    /// Swaps in new weights and `λ` while keeping the primal and dual
    /// iterates; `z` is projected onto the new discs so it stays feasible.
    pub fn reweight(&mut self, w: &WeightVector, lambda: f64) -> Result<()> {
        if w.len() != self.x.len() {
            return Err(Error::shape(self.x.len(), w.len()));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::param("lambda", format!("must be > 0, got {lambda}")));
        }
        for (i, wi) in w.as_slice().iter().enumerate() {
            let r = lambda * wi;
            self.radius[i] = r;
            let mag = self.z_h[i].hypot(self.z_v[i]);
            if mag > r {
                let f = r / mag;
                self.z_h[i] *= f;
                self.z_v[i] *= f;
            }
        }
        Ok(())
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn primal(&self) -> &[f64] {
        &self.x
    }

    pub fn data_dual(&self) -> &[f64] {
        &self.q
    }

    /// Largest `|zᵢ| − λwᵢ` (≤ 0 when the dual is feasible, up to round-off).
    pub fn disc_violation(&self) -> f64 {
        self.z_h
            .iter()
            .zip(&self.z_v)
            .zip(&self.radius)
            .map(|((h, v), r)| h.hypot(*v) - r)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// The relative form of [`disc_violation`](Self::disc_violation).
    pub fn disc_violation_relative(&self) -> f64 {
        self.z_h
            .iter()
            .zip(&self.z_v)
            .zip(&self.radius)
            .map(|((h, v), r)| (h.hypot(*v) - r) / r)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn image(&self) -> Result<Image> {
        Image::from_raw(self.width, self.height, self.x.clone())
    }

    pub fn into_image(self) -> Result<Image> {
        Image::from_raw(self.width, self.height, self.x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ObservationShape;
    use crate::operators::Identity;

    fn two_by_two() -> Image {
        Image::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn objective_flat_exact_fit_is_zero() {
        let x = Image::filled(5, 5, 0.3);
        let k = Identity::for_image(5, 5);
        let y = k.observe(&x).unwrap();
        let w = WeightVector::uniform(25, 1.0).unwrap();
        assert_eq!(subproblem_objective(&x, &k, &y, &w, 0.7).unwrap(), 0.0);
    }

    #[test]
    fn objective_two_by_two() {
        let x = two_by_two();
        let k = Identity::for_image(2, 2);
        let y = k.observe(&x).unwrap();
        let w = WeightVector::uniform(4, 1.0).unwrap();
        assert_eq!(subproblem_objective(&x, &k, &y, &w, 1.0).unwrap(), 2.0);
    }

    #[test]
    fn objective_linear_in_lambda() {
        let x = Image::from_fn(6, 6, |r, c| ((r * c) % 4) as f64 * 0.25).unwrap();
        let k = Identity::for_image(6, 6);
        let y = Observation::new(ObservationShape::Image { width: 6, height: 6 }, vec![0.1; 36]).unwrap();
        let w = WeightVector::new((0..36).map(|i| 0.5 + (i % 3) as f64).collect()).unwrap();
        let data = subproblem_objective(&x, &k, &y, &w, 1e-300).unwrap();
        let a = subproblem_objective(&x, &k, &y, &w, 0.4).unwrap() - data;
        let b = subproblem_objective(&x, &k, &y, &w, 0.8).unwrap() - data;
        assert!((b - 2.0 * a).abs() <= 1e-12 * b.abs());
    }

    #[test]
    fn weights_must_be_positive() {
        assert!(WeightVector::new(vec![1.0, 0.0]).is_err());
        assert!(WeightVector::new(vec![1.0, f64::INFINITY]).is_err());
    }

    fn signed_observation(side: usize) -> Observation {
        let values = (0..side * side).map(|i| ((i * 37 % 19) as f64 - 9.0) / 9.0).collect();
        Observation::new(ObservationShape::Image { width: side, height: side }, values).unwrap()
    }

    #[test]
    fn vanishing_lambda_projects_data_onto_orthant() {
        let side = 8;
        let k = Identity::for_image(side, side);
        let y = signed_observation(side);
        let w = WeightVector::uniform(side * side, 1.0).unwrap();
        let solver = CpSolver::new(&k).unwrap();
        let x = solver.solve(&y, &w, 1e-12, &Image::zeros(side, side), 500).unwrap();
        let target: Vec<f64> = y.as_slice().iter().map(|v| v.max(0.0)).collect();
        let re = vector::distance(x.as_slice(), &target) / vector::norm2(&target);
        assert!(re < 1e-4, "RE {re}");
    }

    #[test]
    fn reweighting_keeps_duals_feasible() {
        let side = 8;
        let k = Identity::for_image(side, side);
        let y = signed_observation(side);
        let solver = CpSolver::new(&k).unwrap();
        let wide = WeightVector::uniform(side * side, 1.0).unwrap();
        let mut state = solver.start(&y, &wide, 0.5, &Image::zeros(side, side)).unwrap();
        for _ in 0..20 {
            state.step().unwrap();
        }
        let narrow = WeightVector::uniform(side * side, 0.01).unwrap();
        state.reweight(&narrow, 0.5).unwrap();
        assert!(state.disc_violation() <= 1e-15);
        state.step().unwrap();
        assert!(state.disc_violation() <= 1e-15);
        assert!(state.reweight(&WeightVector::uniform(3, 1.0).unwrap(), 0.5).is_err());
        assert!(state.reweight(&narrow, 0.0).is_err());
    }

    #[test]
    fn optimal_start_is_a_fixed_point() {
        let side = 8;
        let k = Identity::for_image(side, side);
        let y = signed_observation(side);
        let w = WeightVector::uniform(side * side, 1.0).unwrap();
        let x0 = Image::new(side, side, y.as_slice().iter().map(|v| v.max(0.0)).collect()).unwrap();
        let solver = CpSolver::new(&k).unwrap();
        let mut state = solver.start(&y, &w, 1e-12, &x0).unwrap();
        for _ in 0..200 {
            state.step().unwrap();
            let dev = vector::distance(state.primal(), x0.as_slice());
            assert!(dev < 1e-8, "iteration {}: {dev}", state.iteration());
        }
    }

    #[test]
    fn output_nonnegative_and_deterministic() {
        let side = 12;
        let k = Identity::for_image(side, side);
        let y = signed_observation(side);
        let w = WeightVector::uniform(side * side, 1.0).unwrap();
        let solver = CpSolver::new(&k).unwrap();
        let a = solver.solve(&y, &w, 0.2, &Image::zeros(side, side), 50).unwrap();
        let b = solver.solve(&y, &w, 0.2, &Image::zeros(side, side), 50).unwrap();
        assert!(a.is_nonnegative());
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let k = Identity::for_image(4, 4);
        let y = signed_observation(4);
        let w = WeightVector::uniform(16, 1.0).unwrap();
        let solver = CpSolver::new(&k).unwrap();
        assert!(solver.solve(&y, &w, 0.1, &Image::zeros(4, 4), 0).is_err());
        assert!(solver.solve(&y, &w, 0.0, &Image::zeros(4, 4), 5).is_err());
        assert!(solver.solve(&y, &w, 0.1, &Image::zeros(5, 4), 5).is_err());
        assert!(CpSolver::with_norm(&k, 0.0).is_err());
    }

    #[test]
    fn step_violation_is_reported_as_divergence() {
        let side = 6;
        let k = Identity::for_image(side, side);
        let y = signed_observation(side);
        let w = WeightVector::uniform(side * side, 1.0).unwrap();
        // A norm far below the true ‖M‖ makes the steps violate στ‖M‖² ≤ 1.
        let solver = CpSolver::with_norm(&k, 1e-3).unwrap();
        let err = solver.solve(&y, &w, 0.1, &Image::zeros(side, side), 100_000).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
    }
}
