//! Guess operators `Ψ^(h)`: image-to-image maps applied to the current
//! incremental iterate to produce the next solver's starting point.

mod onnx;

pub use onnx::{
    load_guess_run, load_model_guess, model_file_name, write_conv_model, write_identity_model, ModelGuess, ONNX_OPSET,
};

use crate::error::{Error, Result};
use crate::image::Image;

/// An image-to-image map. Implementors supply [`propose`](Self::propose);
/// callers use [`apply`](Self::apply), which enforces the output contract
/// (same shape, finite, clamped to `≥ 0`).
pub trait GuessOperator: Send + Sync {
    /// Provenance string, e.g. `identity`, `oracle-blend(0.5)`, `model(path, h=2)`.
    fn descriptor(&self) -> String;

    fn propose(&self, x: &Image) -> Result<Image>;

    fn apply(&self, x: &Image) -> Result<Image> {
        // `Image` values are finite by construction, so only shape and range
        // need enforcing here.
        let out = self.propose(x)?;
        x.ensure_same_shape(&out)?;
        Ok(out.clamped_nonneg())
    }
}

impl<G: GuessOperator + ?Sized> GuessOperator for Box<G> {
    fn descriptor(&self) -> String {
        (**self).descriptor()
    }

    fn propose(&self, x: &Image) -> Result<Image> {
        (**self).propose(x)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityGuess;

pub fn identity_guess() -> IdentityGuess {
    IdentityGuess
}

impl GuessOperator for IdentityGuess {
    fn descriptor(&self) -> String {
        "identity".into()
    }

    fn propose(&self, x: &Image) -> Result<Image> {
        Ok(x.clone())
    }
}

/// `(1 − β) x + β · target`, a stand-in for a well-trained network.
#[derive(Clone, Debug)]
pub struct OracleBlendGuess {
    target: Image,
    beta: f64,
}

pub fn oracle_blend_guess(target: Image, beta: f64) -> Result<OracleBlendGuess> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::param("beta", format!("must lie in [0, 1], got {beta}")));
    }
    Ok(OracleBlendGuess { target, beta })
}

impl OracleBlendGuess {
    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl GuessOperator for OracleBlendGuess {
    fn descriptor(&self) -> String {
        format!("oracle-blend({})", self.beta)
    }

    fn propose(&self, x: &Image) -> Result<Image> {
        x.ensure_same_shape(&self.target)?;
        let b = self.beta;
        let values = x
            .as_slice()
            .iter()
            .zip(self.target.as_slice())
            .map(|(xi, ti)| (1.0 - b) * xi + b * ti)
            .collect();
        Image::new(x.width(), x.height(), values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::relative_error;

    fn ramp(side: usize, scale: f64) -> Image {
        Image::from_fn(side, side, |r, c| scale * ((r * side + c) % 7) as f64 / 7.0).unwrap()
    }

    #[test]
    fn identity_is_bitwise() {
        let x = ramp(9, 0.9);
        let id = identity_guess();
        assert_eq!(id.apply(&x).unwrap(), x);
        assert_eq!(id.apply(&id.apply(&x).unwrap()).unwrap(), x);
        assert_eq!(id.descriptor(), "identity");
    }

    #[test]
    fn identity_clamps_negative_input() {
        let x = Image::new(2, 1, vec![-0.5, 0.25]).unwrap();
        assert_eq!(identity_guess().apply(&x).unwrap().as_slice(), &[0.0, 0.25]);
    }

    #[test]
    fn blend_endpoints_and_contraction() {
        let target = ramp(10, 1.0);
        let x = Image::from_fn(10, 10, |r, c| ((r + c) % 3) as f64 * 0.4).unwrap();
        let g0 = oracle_blend_guess(target.clone(), 0.0).unwrap();
        assert_eq!(g0.apply(&x).unwrap(), x);
        let g1 = oracle_blend_guess(target.clone(), 1.0).unwrap();
        assert_eq!(g1.apply(&x).unwrap(), target);
        let half = oracle_blend_guess(target.clone(), 0.5).unwrap();
        let before = relative_error(&x, &target).unwrap();
        let after = relative_error(&half.apply(&x).unwrap(), &target).unwrap();
        assert!(after <= 0.5 * before + 1e-12);
    }

    #[test]
    fn blend_rejects_bad_inputs() {
        let target = ramp(6, 1.0);
        assert!(oracle_blend_guess(target.clone(), 1.5).is_err());
        let g = oracle_blend_guess(target, 0.5).unwrap();
        assert!(matches!(g.apply(&Image::zeros(5, 6)), Err(Error::ShapeMismatch { .. })));
    }

    struct Shrinking;

    impl GuessOperator for Shrinking {
        fn descriptor(&self) -> String {
            "shrinking".into()
        }

        fn propose(&self, _x: &Image) -> Result<Image> {
            Ok(Image::zeros(2, 2))
        }
    }

    #[test]
    fn shape_changing_output_is_rejected() {
        let x = Image::filled(4, 4, 0.5);
        assert!(matches!(Shrinking.apply(&x), Err(Error::ShapeMismatch { .. })));
    }
}
