//! Piecewise-constant ellipse phantoms in the spirit of COULE: a dark
//! background, a large container ellipse, overlapping inner ellipses with
//! additive intensities, and a few thin low-contrast line segments.
//!
//! All statistics below are surrogate defaults; the original dataset's
//! generator is not public.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EllipsePhantomSpec {
    pub side: usize,
    /// Intensity outside every ellipse.
    pub background: f64,
    /// Inclusive range for the number of ellipses, container included. Zero
    /// ellipses give a uniform background image.
    pub ellipse_count: (usize, usize),
    /// Container intensity range (absolute, over the background).
    pub container_intensity: (f64, f64),
    /// Container semi-axes as fractions of the half side.
    pub container_axes: (f64, f64),
    /// Inner ellipse semi-axes as fractions of the half side.
    pub inner_axes: (f64, f64),
    /// Additive inner intensities are drawn uniformly from `[-max, max]`.
    pub max_inner_intensity: f64,
    /// Inclusive range for the number of line segments inside the container.
    pub line_count: (usize, usize),
    /// Line contrast magnitude range; the sign is random.
    pub line_contrast: (f64, f64),
    pub line_width: f64,
    pub seed: u64,
}

impl Default for EllipsePhantomSpec {
    fn default() -> Self {
        Self {
            side: 256,
            background: 0.0,
            ellipse_count: (6, 12),
            container_intensity: (0.2, 0.4),
            container_axes: (0.75, 0.95),
            inner_axes: (0.06, 0.35),
            max_inner_intensity: 0.4,
            line_count: (0, 3),
            line_contrast: (0.03, 0.1),
            line_width: 1.0,
            seed: 0,
        }
    }
}

impl EllipsePhantomSpec {
    pub fn with_side_and_seed(side: usize, seed: u64) -> Self {
        Self {
            side,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let range = |name: &'static str, (lo, hi): (f64, f64)| {
            if lo.is_finite() && hi.is_finite() && lo <= hi {
                Ok(())
            } else {
                Err(Error::param(name, format!("invalid range ({lo}, {hi})")))
            }
        };
        if self.side == 0 {
            return Err(Error::param("side", "must be >= 1"));
        }
        if self.ellipse_count.0 > self.ellipse_count.1 || self.line_count.0 > self.line_count.1 {
            return Err(Error::param("ellipse_count/line_count", "min exceeds max"));
        }
        range("container_intensity", self.container_intensity)?;
        range("container_axes", self.container_axes)?;
        range("inner_axes", self.inner_axes)?;
        range("line_contrast", self.line_contrast)?;
        if !(self.container_axes.0 > 0.0 && self.inner_axes.0 > 0.0) {
            return Err(Error::param("axes", "semi-axes must be > 0"));
        }
        if !(self.max_inner_intensity >= 0.0 && self.line_width > 0.0 && self.background.is_finite()) {
            return Err(Error::param("intensity/line_width", "out of range"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
    value: f64,
}

impl Ellipse {
    fn contains(&self, u: f64, v: f64) -> bool {
        let (du, dv) = (u - self.cx, v - self.cy);
        let s = (du * self.cos + dv * self.sin) / self.a;
        let t = (-du * self.sin + dv * self.cos) / self.b;
        s * s + t * t <= 1.0
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Rasterizes a phantom in `[0, 1]`. Pixel `(r, c)` is sampled at its center
/// in normalized coordinates `u, v ∈ (−1, 1)`.
pub fn generate_phantom(spec: &EllipsePhantomSpec) -> Result<Image> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.side;
    let count = rng.gen_range(spec.ellipse_count.0..=spec.ellipse_count.1);
    let mut values = vec![spec.background; n * n];
    if count == 0 {
        return Image::new(n, n, values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect());
    }

    let angle = |rng: &mut ChaCha8Rng| rng.gen_range(0.0..std::f64::consts::PI);
    let theta = rng.gen_range(-0.3..0.3);
    let container = Ellipse {
        cx: rng.gen_range(-0.03..0.03),
        cy: rng.gen_range(-0.03..0.03),
        a: uniform(&mut rng, spec.container_axes),
        b: uniform(&mut rng, spec.container_axes),
        cos: f64::cos(theta),
        sin: f64::sin(theta),
        value: uniform(&mut rng, spec.container_intensity),
    };
    let mut ellipses = vec![container];
    for _ in 1..count {
        // Centers are drawn inside the container, at most 70% of the way out.
        let rho = 0.7 * rng.gen::<f64>().sqrt();
        let phi = rng.gen_range(0.0..std::f64::consts::TAU);
        let (pu, pv) = (rho * container.a * phi.cos(), rho * container.b * phi.sin());
        let theta = angle(&mut rng);
        ellipses.push(Ellipse {
            cx: container.cx + pu * container.cos - pv * container.sin,
            cy: container.cy + pu * container.sin + pv * container.cos,
            a: uniform(&mut rng, spec.inner_axes),
            b: uniform(&mut rng, spec.inner_axes),
            cos: theta.cos(),
            sin: theta.sin(),
            value: rng.gen_range(-spec.max_inner_intensity..=spec.max_inner_intensity),
        });
    }

    let lines: Vec<(f64, f64, f64, f64, f64)> = (0..rng.gen_range(spec.line_count.0..=spec.line_count.1))
        .map(|_| {
            let (u0, v0) = (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
            let len = rng.gen_range(0.15..0.5);
            let dir = angle(&mut rng);
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let contrast = sign * uniform(&mut rng, spec.line_contrast);
            (u0, v0, u0 + len * dir.cos(), v0 + len * dir.sin(), contrast)
        })
        .collect();
    let half_width = spec.line_width / n as f64;

    let to_norm = |i: usize| 2.0 * (i as f64 + 0.5) / n as f64 - 1.0;
    for r in 0..n {
        // Row 0 is the top of the image.
        let v = -to_norm(r);
        for c in 0..n {
            let u = to_norm(c);
            let mut value = spec.background;
            if !ellipses[0].contains(u, v) {
                values[r * n + c] = value.clamp(0.0, 1.0);
                continue;
            }
            for e in &ellipses {
                if e.contains(u, v) {
                    value += e.value;
                }
            }
            for &(u0, v0, u1, v1, contrast) in &lines {
                if segment_distance(u, v, u0, v0, u1, v1) <= half_width {
                    value += contrast;
                }
            }
            values[r * n + c] = value.clamp(0.0, 1.0);
        }
    }
    Image::new(n, n, values)
}

fn segment_distance(u: f64, v: f64, u0: f64, v0: f64, u1: f64, v1: f64) -> f64 {
    let (du, dv) = (u1 - u0, v1 - v0);
    let len2 = du * du + dv * dv;
    let t = (((u - u0) * du + (v - v0) * dv) / len2).clamp(0.0, 1.0);
    (u - u0 - t * du).hypot(v - v0 - t * dv)
}

/// Phantoms for seeds `base_seed + i`, `i < count`.
pub fn generate_batch(template: &EllipsePhantomSpec, base_seed: u64, count: usize) -> Result<Vec<Image>> {
    (0..count)
        .map(|i| {
            generate_phantom(&EllipsePhantomSpec {
                seed: base_seed + i as u64,
                ..template.clone()
            })
        })
        .collect()
}

/// Intensities covering at least `min_pixels` pixels each.
pub fn plateau_count(img: &Image, min_pixels: usize) -> usize {
    let mut counts = std::collections::HashMap::new();
    for &v in img.as_slice() {
        *counts.entry(v.to_bits()).or_insert(0usize) += 1;
    }
    counts.values().filter(|&&c| c >= min_pixels).count()
}
