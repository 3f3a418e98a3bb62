//! Differential-entropy machinery.
//!
//! All entropies are in nats. Complex vectors are flattened to real vectors
//! of twice the dimension before any nearest-neighbor computation.

mod bounds;
mod knn;
mod lemma;
mod mi;

pub use bounds::{
    cond_entropy_bound_mc, determinant_identity_gap, hygx_slope, jensen_check, log_det_term,
    log_det_term_full, mean_log_det, CondEntropyBound, HygxSlope, JensenCheck,
};
pub use knn::{flatten_complex, knn_entropy, EntropyEstimate, Samples, DEFAULT_K};
pub use lemma::{lemma1_check, Lemma1Map, Lemma1Report};
pub use mi::{least_squares_slope, mi_slope, MiRow, MiSlopeReport};

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `log(pi e)`: entropy of a scalar CN(0, 1).
pub fn gaussian_entropy_per_complex_dim() -> f64 {
    (std::f64::consts::PI * std::f64::consts::E).ln()
}
