//! Shared fixtures for the benchmarks.

use inctpv::data::{corrupt, generate_phantom, EllipsePhantomSpec, NoiseModel};
use inctpv::operators::LinearOperator;
use inctpv::{Image, Observation};

pub fn phantom(side: usize) -> Image {
    generate_phantom(&EllipsePhantomSpec::with_side_and_seed(side, 7)).expect("phantom")
}

pub fn observe(x: &Image, k: &dyn LinearOperator, nu: f64) -> Observation {
    corrupt(x, k, &NoiseModel::new(nu, 7).expect("noise")).expect("observation")
}
