//! Iterative reweighting for the TpV-regularized model: each round recomputes
//! weights `wᵢ = p / (|Dx|ᵢ^{1−p} + ξ)` from the current iterate and runs a
//! short block of Chambolle–Pock iterations on the weighted ℓ1 subproblem.

use serde::{Deserialize, Serialize};

use crate::cp::{CpSolver, DataScale, WeightVector};
use crate::error::{Error, Result};
use crate::image::{gradient, gradient_magnitude, Image, Observation};
use crate::operators::LinearOperator;
use crate::vector;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrConfig {
    pub p: f64,
    pub lambda: f64,
    #[serde(default = "defaults::xi")]
    pub xi: f64,
    #[serde(default = "defaults::k_cp")]
    pub k_cp: usize,
    /// Budget of CP iterations (not reweighting rounds).
    pub k_ir: usize,
    #[serde(default = "defaults::tau")]
    pub tau_x: f64,
    #[serde(default = "defaults::tau")]
    pub tau_f: f64,
    /// Carry the CP dual variables from one reweighting round to the next
    /// instead of restarting them at zero (the default).
    #[serde(default = "defaults::warm_dual")]
    pub warm_dual: bool,
}

pub(crate) mod defaults {
    pub fn xi() -> f64 {
        2e-3
    }
    pub fn k_cp() -> usize {
        5
    }
    pub fn tau() -> f64 {
        1e-7
    }
    pub fn warm_dual() -> bool {
        false
    }
}

impl IrConfig {
    pub fn new(p: f64, lambda: f64, k_ir: usize) -> Self {
        Self {
            p,
            lambda,
            xi: defaults::xi(),
            k_cp: defaults::k_cp(),
            k_ir,
            tau_x: defaults::tau(),
            tau_f: defaults::tau(),
            warm_dual: defaults::warm_dual(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        crate::image::check_lambda_p(self.lambda, self.p)?;
        if !(self.xi > 0.0) {
            return Err(Error::param("xi", format!("must be > 0, got {}", self.xi)));
        }
        if self.k_cp == 0 {
            return Err(Error::param("k_cp", "must be >= 1"));
        }
        if !(self.tau_x > 0.0) || !(self.tau_f > 0.0) {
            return Err(Error::param("tau_x/tau_f", "tolerances must be > 0"));
        }
        Ok(())
    }
}

/// `wᵢ = p / (|Dx|ᵢ^{1−p} + ξ)`. Uses `0⁰ = 1`, so `p = 1` gives the uniform
/// weights `1/(1 + ξ)`.
pub fn compute_weights(x: &Image, p: f64, xi: f64) -> Result<WeightVector> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::param("p", format!("must lie in (0, 1], got {p}")));
    }
    if !(xi > 0.0) {
        return Err(Error::param("xi", format!("must be > 0, got {xi}")));
    }
    let mag = gradient_magnitude(&gradient(x));
    let exponent = 1.0 - p;
    WeightVector::new(mag.into_iter().map(|t| p / (t.powf(exponent) + xi)).collect())
}

/// `‖Kx − y‖₂ / (√m ‖y‖_∞)`; fails with [`Error::DegenerateData`] when `y = 0`.
pub fn scaled_residual(k: &dyn LinearOperator, x: &Image, y: &Observation) -> Result<f64> {
    let sup = vector::norm_inf(y.as_slice());
    if sup == 0.0 {
        return Err(Error::DegenerateData("‖y‖_∞ = 0, scaled residual undefined".into()));
    }
    let r = crate::operators::residual_norm(k, x, y)?;
    Ok(r / ((y.len() as f64).sqrt() * sup))
}

#[derive(Clone, Debug)]
pub struct IrOutcome {
    pub image: Image,
    /// Total CP iterations consumed.
    pub cp_iterations: usize,
    pub rounds: usize,
    /// True when the two-part tolerance test fired before the budget ran out.
    pub converged: bool,
}

/// Runs reweighting rounds until both tolerances are met or `k_ir` CP
/// iterations have been spent. The starting guess is projected onto Ω first.
pub fn ir_solve_with(solver: &CpSolver, y: &Observation, x_tilde: &Image, cfg: &IrConfig) -> Result<IrOutcome> {
    cfg.validate()?;
    let k = solver.operator();
    let mut x = x_tilde.clone().clamped_nonneg();
    let mut count = 0;
    let mut rounds = 0;
    let mut converged = false;
    let mut state: Option<crate::cp::CpState> = None;
    while count < cfg.k_ir {
        let w = compute_weights(&x, cfg.p, cfg.xi)?;
        let next = if cfg.warm_dual {
            let st = match state.as_mut() {
                Some(st) => {
                    st.reweight(&w, cfg.lambda)?;
                    st
                }
                None => state.insert(solver.start(y, &w, cfg.lambda, &x)?),
            };
            for _ in 0..cfg.k_cp {
                st.step()?;
            }
            st.image()?
        } else {
            solver.solve(y, &w, cfg.lambda, &x, cfg.k_cp)?
        };
        count += cfg.k_cp;
        rounds += 1;

        let change = vector::distance(next.as_slice(), x.as_slice()) / (vector::norm2(x.as_slice()) + 1e-6);
        x = next;
        if change < cfg.tau_x {
            let residual = match scaled_residual(k, &x, y) {
                Ok(r) => r,
                // All-zero data: fall back to the absolute residual.
                Err(Error::DegenerateData(_)) => {
                    crate::operators::residual_norm(k, &x, y)? / (y.len() as f64).sqrt()
                }
                Err(e) => return Err(e),
            };
            if residual < cfg.tau_f {
                converged = true;
                break;
            }
        }
    }
    Ok(IrOutcome {
        image: x,
        cp_iterations: count,
        rounds,
        converged,
    })
}

/// [`ir_solve_with`] using a freshly built solver (power-method norm, unhalved
/// data term). Returns the final iterate and the CP iterations consumed.
pub fn ir_solve(k: &dyn LinearOperator, y: &Observation, x_tilde: &Image, cfg: &IrConfig) -> Result<(Image, usize)> {
    let solver = CpSolver::new(k)?.with_scale(DataScale::Full);
    let out = ir_solve_with(&solver, y, x_tilde, cfg)?;
    Ok((out.image, out.cp_iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ObservationShape;
    use crate::operators::Identity;

    #[test]
    fn weights_flat_region() {
        let x = Image::filled(4, 4, 0.5);
        let w = compute_weights(&x, 1.0, 0.002).unwrap();
        for &v in w.as_slice() {
            assert!((v - 1.0 / 1.002).abs() < 1e-15);
        }
        let w = compute_weights(&x, 0.5, 0.002).unwrap();
        for &v in w.as_slice() {
            assert!((v - 250.0).abs() < 1e-9);
        }
    }

    #[test]
    fn weights_at_unit_gradient() {
        // Horizontal ramp with unit steps: |Dx| = 1 away from the last column.
        let x = Image::from_fn(5, 1, |_, c| c as f64).unwrap();
        for p in [0.125, 0.5, 0.9] {
            let w = compute_weights(&x, p, 0.002).unwrap();
            for &v in &w.as_slice()[..4] {
                assert!((v - p / 1.002).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn weights_reject_bad_parameters() {
        let x = Image::zeros(3, 3);
        assert!(compute_weights(&x, 0.0, 0.002).is_err());
        assert!(compute_weights(&x, 1.2, 0.002).is_err());
        assert!(compute_weights(&x, 0.5, 0.0).is_err());
    }

    #[test]
    fn one_round_when_budget_equals_block() {
        let side = 8;
        let k = Identity::for_image(side, side);
        let gt = Image::from_fn(side, side, |r, c| if r < 4 && c < 5 { 0.8 } else { 0.2 }).unwrap();
        let y = k.observe(&gt).unwrap();
        let solver = CpSolver::new(&k).unwrap();
        let out = ir_solve_with(&solver, &y, &Image::zeros(side, side), &IrConfig::new(0.5, 0.1, 5)).unwrap();
        assert_eq!((out.rounds, out.cp_iterations), (1, 5));
    }

    #[test]
    fn warm_duals_change_nothing_within_one_round() {
        let side = 8;
        let k = Identity::for_image(side, side);
        let gt = Image::from_fn(side, side, |r, c| if r < 4 && c < 5 { 0.8 } else { 0.2 }).unwrap();
        let y = k.observe(&gt).unwrap();
        let solver = CpSolver::new(&k).unwrap();
        let cold = IrConfig::new(0.5, 0.1, 5);
        let warm = IrConfig { warm_dual: true, ..cold.clone() };
        let x0 = Image::filled(side, side, 0.4);
        let a = ir_solve_with(&solver, &y, &x0, &cold).unwrap();
        let b = ir_solve_with(&solver, &y, &x0, &warm).unwrap();
        assert_eq!(a.image, b.image);

        // Later rounds differ, and both stay feasible.
        let cold = IrConfig { k_ir: 40, ..cold };
        let warm = IrConfig { k_ir: 40, ..warm };
        let a = ir_solve_with(&solver, &y, &x0, &cold).unwrap();
        let b = ir_solve_with(&solver, &y, &x0, &warm).unwrap();
        assert_ne!(a.image, b.image);
        assert!(b.image.is_nonnegative());
    }

    #[test]
    fn converged_start_returns_after_first_check() {
        let side = 8;
        let k = Identity::for_image(side, side);
        let gt = Image::filled(side, side, 0.6);
        let y = k.observe(&gt).unwrap();
        let solver = CpSolver::new(&k).unwrap();
        let out = ir_solve_with(&solver, &y, &gt, &IrConfig::new(0.5, 0.1, 500)).unwrap();
        assert!(out.converged);
        assert_eq!(out.cp_iterations, 5);
        assert_eq!(out.image, gt);
    }

    #[test]
    fn zero_data_uses_absolute_residual() {
        let side = 6;
        let k = Identity::for_image(side, side);
        let y = Observation::new(ObservationShape::Image { width: side, height: side }, vec![0.0; 36]).unwrap();
        let zero = Image::zeros(side, side);
        assert!(matches!(scaled_residual(&k, &zero, &y), Err(Error::DegenerateData(_))));
        let solver = CpSolver::new(&k).unwrap();
        let out = ir_solve_with(&solver, &y, &zero, &IrConfig::new(1.0, 0.1, 50)).unwrap();
        assert!(out.converged);
    }

    #[test]
    fn budget_never_overshoots_by_a_full_block() {
        let side = 8;
        let k = Identity::for_image(side, side);
        let gt = Image::from_fn(side, side, |r, c| ((r + 2 * c) % 3) as f64 * 0.3).unwrap();
        let y = k.observe(&gt).unwrap();
        let solver = CpSolver::new(&k).unwrap();
        for k_ir in [1, 4, 5, 6, 13, 20] {
            let mut cfg = IrConfig::new(0.5, 0.05, k_ir);
            cfg.k_cp = 5;
            let out = ir_solve_with(&solver, &y, &Image::zeros(side, side), &cfg).unwrap();
            assert!(out.cp_iterations >= k_ir && out.cp_iterations <= k_ir + cfg.k_cp - 1);
        }
    }
}
