//! Non-convex Total-p-Variation reconstruction for imaging inverse problems.
//!
//! The stack, bottom to top:
//!
//! * [`operators`]: forward models `K` (Gaussian blur, fan-beam CT) and the
//!   gradient `D`, behind the [`LinearOperator`] trait;
//! * [`cp`]: Chambolle–Pock for the weighted, nonnegative TV subproblem;
//! * [`ir`]: iterative reweighting for a fixed `p` and `λ`;
//! * [`incremental`]: the `p`/`λ` continuation, with optional guess operators
//!   ([`guess`]) injected before each step;
//! * [`data`] and [`metrics`]: phantoms, noise, file formats, RE and SSIM.

pub mod cp;
pub mod data;
mod error;
pub mod guess;
pub mod image;
pub mod incremental;
pub mod ir;
pub mod metrics;
pub mod operators;
pub mod vector;

pub use cp::{cp_solve, CpSolver, DataScale, WeightVector};
pub use error::{Error, Result};
pub use guess::{GuessOperator, IdentityGuess, ModelGuess, OracleBlendGuess};
pub use image::{tpv_objective, tpv_prior, GradientField, Image, Observation, ObservationShape};
pub use incremental::{inc_dg, inc_tpv, IncrementalConfig, IncrementalOutcome, IncrementalTrace, StepRecord};
pub use ir::{ir_solve, IrConfig};
pub use metrics::{relative_error, ssim, BatchStats, MetricReport};
pub use operators::{FanBeamGeometry, FanBeamProjector, GaussianBlur, LinearOperator};

/// Library version, recorded in run directories.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
