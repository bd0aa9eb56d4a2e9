//! Flat-detector fan-beam projector (Joseph-style ray-driven interpolation)
//! and a filtered back projection initializer.
//!
//! Coordinates are in pixel units with the origin at the image center:
//! pixel `(row, col)` sits at `x = col − (N−1)/2`, `y = (N−1)/2 − row`.
//! For view angle `β` the source sits at `R_s (cos β, sin β)` and the detector
//! line passes through `−R_d (cos β, sin β)` along `(−sin β, cos β)`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, Observation, ObservationShape};
use crate::operators::LinearOperator;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FanBeamGeometry {
    pub num_views: usize,
    /// Views are spread uniformly over `[0, angular_range)` degrees.
    pub angular_range: f64,
    pub detector_count: usize,
    pub detector_spacing: f64,
    pub source_to_origin: f64,
    pub origin_to_detector: f64,
    pub image_side: usize,
}

impl FanBeamGeometry {
    /// 60 views over `[0°, 180°)`, 500 detector cells, 256×256 image.
    pub fn standard() -> Self {
        Self::new(256, 60, 500)
    }

    /// Source and detector each at `2 · side` from the origin; the detector
    /// spacing is chosen so the fan exactly covers the image diagonal.
    pub fn new(image_side: usize, num_views: usize, detector_count: usize) -> Self {
        let source_to_origin = 2.0 * image_side as f64;
        let origin_to_detector = 2.0 * image_side as f64;
        let detector_spacing =
            covering_spacing(image_side, detector_count, source_to_origin, origin_to_detector);
        Self {
            num_views,
            angular_range: 180.0,
            detector_count,
            detector_spacing,
            source_to_origin,
            origin_to_detector,
            image_side,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_views == 0 {
            return Err(Error::Geometry("num_views must be >= 1".into()));
        }
        if self.detector_count == 0 {
            return Err(Error::Geometry("detector_count must be >= 1".into()));
        }
        if self.image_side == 0 {
            return Err(Error::Geometry("image_side must be >= 1".into()));
        }
        let half_diag = self.image_side as f64 / std::f64::consts::SQRT_2;
        if !(self.source_to_origin > half_diag) {
            return Err(Error::Geometry(format!(
                "source_to_origin {} must exceed image_side/sqrt(2) = {half_diag:.3}",
                self.source_to_origin
            )));
        }
        if !(self.origin_to_detector >= 0.0) || !(self.detector_spacing > 0.0) {
            return Err(Error::Geometry(
                "origin_to_detector must be >= 0 and detector_spacing > 0".into(),
            ));
        }
        if !(self.angular_range > 0.0 && self.angular_range <= 360.0) {
            return Err(Error::Geometry("angular_range must lie in (0, 360]".into()));
        }
        Ok(())
    }

    pub fn view_angle(&self, view: usize) -> f64 {
        self.angular_range.to_radians() * view as f64 / self.num_views as f64
    }

    /// Detector coordinate of cell `k` along the detector line.
    pub fn detector_offset(&self, k: usize) -> f64 {
        (k as f64 - 0.5 * (self.detector_count as f64 - 1.0)) * self.detector_spacing
    }

    pub fn observation_shape(&self) -> ObservationShape {
        ObservationShape::Sinogram {
            views: self.num_views,
            detectors: self.detector_count,
        }
    }
}

/// Spacing for which the outermost cells see the rays tangent to the circle
/// circumscribing the image.
fn covering_spacing(side: usize, detectors: usize, rs: f64, rd: f64) -> f64 {
    let r = side as f64 / std::f64::consts::SQRT_2;
    let half_width = r * (rs + rd) / (rs * rs - r * r).sqrt();
    2.0 * half_width / detectors.max(1) as f64
}

#[derive(Clone, Copy, Debug)]
struct Ray {
    sx: f64,
    sy: f64,
    dx: f64,
    dy: f64,
}

#[derive(Clone, Debug)]
pub struct FanBeamProjector {
    geometry: FanBeamGeometry,
    rays: Vec<Ray>,
}

impl FanBeamProjector {
    pub fn new(geometry: FanBeamGeometry) -> Result<Self> {
        geometry.validate()?;
        let rs = geometry.source_to_origin;
        let rd = geometry.origin_to_detector;
        let mut rays = Vec::with_capacity(geometry.num_views * geometry.detector_count);
        for view in 0..geometry.num_views {
            let (sin, cos) = geometry.view_angle(view).sin_cos();
            let (sx, sy) = (rs * cos, rs * sin);
            for k in 0..geometry.detector_count {
                let u = geometry.detector_offset(k);
                let px = -rd * cos - u * sin;
                let py = -rd * sin + u * cos;
                rays.push(Ray {
                    sx,
                    sy,
                    dx: px - sx,
                    dy: py - sy,
                });
            }
        }
        Ok(Self { geometry, rays })
    }

    pub fn geometry(&self) -> &FanBeamGeometry {
        &self.geometry
    }

    /// Visits every `(pixel index, weight)` pair of one ray. Weights are the
    /// linear-interpolation coefficients times the path length per step.
    #[inline]
    fn trace<F: FnMut(usize, f64)>(&self, ray: &Ray, mut visit: F) {
        let n = self.geometry.image_side;
        let ni = n as i64;
        let c0 = 0.5 * (n as f64 - 1.0);
        if ray.dx.abs() >= ray.dy.abs() {
            let slope = ray.dy / ray.dx;
            let step = (1.0 + slope * slope).sqrt();
            for col in 0..n {
                let x = col as f64 - c0;
                let y = ray.sy + (x - ray.sx) * slope;
                let rowf = c0 - y;
                let r0 = rowf.floor();
                let frac = rowf - r0;
                let r0 = r0 as i64;
                if r0 >= 0 && r0 < ni {
                    visit(r0 as usize * n + col, (1.0 - frac) * step);
                }
                if r0 + 1 >= 0 && r0 + 1 < ni {
                    visit((r0 + 1) as usize * n + col, frac * step);
                }
            }
        } else {
            let slope = ray.dx / ray.dy;
            let step = (1.0 + slope * slope).sqrt();
            for row in 0..n {
                let y = c0 - row as f64;
                let x = ray.sx + (y - ray.sy) * slope;
                let colf = x + c0;
                let k0 = colf.floor();
                let frac = colf - k0;
                let k0 = k0 as i64;
                if k0 >= 0 && k0 < ni {
                    visit(row * n + k0 as usize, (1.0 - frac) * step);
                }
                if k0 + 1 >= 0 && k0 + 1 < ni {
                    visit(row * n + (k0 + 1) as usize, frac * step);
                }
            }
        }
    }

    /// Adjoint restricted to one view: scatters `row` (one detector profile)
    /// back into `out`, accumulating.
    fn backproject_view(&self, view: usize, row: &[f64], out: &mut [f64]) {
        let nd = self.geometry.detector_count;
        let rays = &self.rays[view * nd..(view + 1) * nd];
        for (ray, &r) in rays.iter().zip(row) {
            if r == 0.0 {
                continue;
            }
            self.trace(ray, |idx, w| out[idx] += w * r);
        }
    }
}

impl LinearOperator for FanBeamProjector {
    fn input_shape(&self) -> (usize, usize) {
        (self.geometry.image_side, self.geometry.image_side)
    }

    fn output_shape(&self) -> ObservationShape {
        self.geometry.observation_shape()
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.input_dim());
        assert_eq!(out.len(), self.rays.len());
        for (o, ray) in out.iter_mut().zip(&self.rays) {
            let mut acc = 0.0;
            self.trace(ray, |idx, w| acc += w * x[idx]);
            *o = acc;
        }
    }

    fn adjoint_into(&self, r: &[f64], out: &mut [f64]) {
        assert_eq!(r.len(), self.rays.len());
        assert_eq!(out.len(), self.input_dim());
        out.fill(0.0);
        let nd = self.geometry.detector_count;
        for view in 0..self.geometry.num_views {
            self.backproject_view(view, &r[view * nd..(view + 1) * nd], out);
        }
    }
}

/// Band-limited ramp (Ram-Lak) frequency response for `padded` samples of
/// spacing `tau`, computed as the DFT of the discrete spatial kernel.
fn ramp_response(padded: usize, tau: f64) -> Vec<Complex<f64>> {
    let mut h = vec![Complex::new(0.0, 0.0); padded];
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    h[0] = Complex::new(1.0 / (4.0 * tau * tau), 0.0);
    for n in 1..padded / 2 + 1 {
        if n % 2 == 1 {
            let v = -1.0 / (pi2 * (n * n) as f64 * tau * tau);
            h[n] = Complex::new(v, 0.0);
            h[padded - n] = Complex::new(v, 0.0);
        }
    }
    FftPlanner::new().plan_fft_forward(padded).process(&mut h);
    for v in &mut h {
        *v = Complex::new(v.re, 0.0);
    }
    h
}

/// Fan-beam FBP: cosine pre-weighting, Ram-Lak filtering along each detector
/// row, then distance-weighted backprojection through the projector's
/// per-view adjoint. The result is clamped to ≥ 0.
pub fn fbp_reconstruct(y: &Observation, projector: &FanBeamProjector) -> Result<Image> {
    let geo = projector.geometry();
    if y.shape() != geo.observation_shape() {
        return Err(Error::shape(format!("{:?}", geo.observation_shape()), format!("{:?}", y.shape())));
    }
    let nd = geo.detector_count;
    let side = geo.image_side;
    let rs = geo.source_to_origin;
    let magnification = (rs + geo.origin_to_detector) / rs;
    let tau = geo.detector_spacing / magnification;
    let padded = (2 * nd).next_power_of_two();
    let response = ramp_response(padded, tau);
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(padded);
    let inverse = planner.plan_fft_inverse(padded);

    let virtual_offsets: Vec<f64> = (0..nd).map(|k| geo.detector_offset(k) / magnification).collect();
    let c0 = 0.5 * (side as f64 - 1.0);
    let dbeta = std::f64::consts::PI / geo.num_views as f64;
    let mut recon = vec![0.0; side * side];
    let mut buf = vec![Complex::new(0.0, 0.0); padded];
    let mut filtered = vec![0.0; nd];
    let ones = vec![1.0; nd];
    let mut bp = vec![0.0; side * side];
    let mut coverage = vec![0.0; side * side];

    for view in 0..geo.num_views {
        let row = &y.as_slice()[view * nd..(view + 1) * nd];
        buf.fill(Complex::new(0.0, 0.0));
        for (b, (&r, &s)) in buf.iter_mut().zip(row.iter().zip(&virtual_offsets)) {
            *b = Complex::new(r * rs / (rs * rs + s * s).sqrt(), 0.0);
        }
        forward.process(&mut buf);
        for (b, h) in buf.iter_mut().zip(&response) {
            *b *= h;
        }
        inverse.process(&mut buf);
        for (f, b) in filtered.iter_mut().zip(&buf) {
            *f = tau * b.re / padded as f64;
        }

        // Normalizing by the back-projected ones turns the ray-driven adjoint
        // into an interpolation of the filtered row at each pixel.
        bp.fill(0.0);
        coverage.fill(0.0);
        projector.backproject_view(view, &filtered, &mut bp);
        projector.backproject_view(view, &ones, &mut coverage);

        let (sin, cos) = geo.view_angle(view).sin_cos();
        for r in 0..side {
            let py = c0 - r as f64;
            for c in 0..side {
                let idx = r * side + c;
                if coverage[idx] <= 0.0 {
                    continue;
                }
                let px = c as f64 - c0;
                let u = (rs - (px * cos + py * sin)) / rs;
                recon[idx] += dbeta * bp[idx] / coverage[idx] / (u * u);
            }
        }
    }
    Image::new(side, side, recon).map(Image::clamped_nonneg)
}
