//! Numerical laboratory for the pre-log of noncoherent MIMO block-fading
//! channels with generic (per-channel-use) correlation.
//!
//! The crate simulates the channel `y_r = sqrt(rho/T) sum_t s_{r,t} Z_{r,t} x_t + w_r`
//! and checks, at desk scale, the ingredients behind its high-SNR
//! degrees of freedom:
//!
//! - [`prelog`]: closed-form pre-log formulas and the equation-counting predictor.
//! - [`model`]: channel model, correlation sets, fading/input/noise draws.
//! - [`jacobian`]: Jacobian of the pilot-parametrized map and genericity sweeps.
//! - [`recovery`]: multistart Newton recovery of `(s, x_D)` from a noiseless output.
//! - [`entropy`]: kNN differential entropy, the finite-to-one entropy bound,
//!   conditional-entropy and mutual-information slopes.
//! - [`simobound`]: the SIMO decomposition used for the pre-log upper bound.
//! - [`cli`]: reproducible experiment runner.

pub mod cli;
pub mod entropy;
pub mod error;
pub mod jacobian;
pub mod linalg;
pub mod model;
pub mod prelog;
pub mod recovery;
pub mod rng;
pub mod simobound;

pub use error::{Error, Result};
pub use model::{CorrelationKind, CorrelationSet, Dims, FadingDraw, InputBlock, PilotPattern};

pub use num_complex::Complex64;
