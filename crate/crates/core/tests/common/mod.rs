#![allow(dead_code)]

use inctpv::cp::WeightVector;
use inctpv::image::{gradient, gradient_magnitude};
use inctpv::operators::{GradientOperator, LinearOperator};
use inctpv::{Image, Observation};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense matrix of a linear operator, one column per unit vector.
pub fn dense(op: &dyn LinearOperator) -> DMatrix<f64> {
    let (n, m) = (op.input_dim(), op.output_dim());
    let mut a = DMatrix::zeros(m, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; m];
    for j in 0..n {
        e[j] = 1.0;
        op.apply_into(&e, &mut col);
        for i in 0..m {
            a[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    a
}

/// `‖Kx − y‖² + λ Σ wᵢ |Dx|ᵢ`, evaluated independently of the library's
/// objective helpers.
pub fn weighted_objective(k: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>, w: &[f64], lambda: f64, side: usize) -> f64 {
    let r = k * x - y;
    let img = Image::new(side, side, x.as_slice().to_vec()).unwrap();
    let mag = gradient_magnitude(&gradient(&img));
    r.norm_squared() + lambda * mag.iter().zip(w).map(|(m, wi)| m * wi).sum::<f64>()
}

pub struct OracleSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub primal_residual: f64,
}

/// ADMM with exact linear solves for
/// `min_{x ≥ 0} ‖Kx − y‖² + λ Σ wᵢ |Dx|ᵢ`
/// using the splittings `z = Dx`, `u = x`. The reported iterate is the
/// feasible copy `u`.
pub fn admm_oracle(k: &dyn LinearOperator, y: &Observation, w: &WeightVector, lambda: f64, iters: usize) -> OracleSolution {
    let (side, _) = k.input_shape();
    let n = k.input_dim();
    let km = dense(k);
    let dm = dense(&GradientOperator::new(side, side));
    let yv = DVector::from_column_slice(y.as_slice());
    let rho = 1.0;
    let system = 2.0 * km.transpose() * &km + rho * dm.transpose() * &dm + rho * DMatrix::identity(n, n);
    let chol = system.cholesky().expect("system is positive definite");
    let kty = 2.0 * km.transpose() * &yv;

    let mut z = DVector::zeros(2 * n);
    let mut a = DVector::zeros(2 * n);
    let mut u = DVector::zeros(n);
    let mut b = DVector::zeros(n);
    let mut residual = f64::INFINITY;
    for _ in 0..iters {
        let rhs = &kty + rho * dm.transpose() * (&z - &a) + rho * (&u - &b);
        let x = chol.solve(&rhs);
        let dx = &dm * &x;
        let v = &dx + &a;
        for i in 0..n {
            let (h, vv) = (v[i], v[n + i]);
            let mag = h.hypot(vv);
            let t = lambda * w.as_slice()[i] / rho;
            let s = if mag > t { 1.0 - t / mag } else { 0.0 };
            z[i] = s * h;
            z[n + i] = s * vv;
        }
        u = (&x + &b).map(|e| e.max(0.0));
        a += &dx - &z;
        b += &x - &u;
        residual = (&dx - &z).norm() + (&x - &u).norm();
    }
    let objective = weighted_objective(&km, &u, &yv, w.as_slice(), lambda, side);
    OracleSolution {
        x: u.as_slice().to_vec(),
        objective,
        primal_residual: residual,
    }
}

pub fn random_weights(n: usize, rng: &mut ChaCha8Rng) -> WeightVector {
    WeightVector::new((0..n).map(|_| rng.gen_range(0.5..2.0)).collect()).unwrap()
}

pub fn random_image(side: usize, rng: &mut ChaCha8Rng) -> Image {
    Image::from_fn(side, side, |_, _| rng.gen_range(0.0..1.0)).unwrap()
}

/// A few random rectangles on a flat background.
pub fn blocky_image(side: usize, rng: &mut ChaCha8Rng) -> Image {
    let mut v = vec![0.2; side * side];
    for _ in 0..4 {
        let (r0, c0) = (rng.gen_range(0..side - 3), rng.gen_range(0..side - 3));
        let (h, w) = (rng.gen_range(2..side / 2), rng.gen_range(2..side / 2));
        let val = rng.gen_range(-0.15..0.5);
        for r in r0..(r0 + h).min(side) {
            for c in c0..(c0 + w).min(side) {
                v[r * side + c] += val;
            }
        }
    }
    Image::new(side, side, v.into_iter().map(|e: f64| e.clamp(0.0, 1.0)).collect()).unwrap()
}
