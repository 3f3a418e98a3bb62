//! Gaussian conditional entropy `h(y | x)` and its high-SNR slope.
//!
//! Given `x`, `y` is CN(0, (rho/T) B B^H + I_RN), so
//! `h(y | x) = RN log(pi e) + E_x[log det((rho/T) B B^H + I_RN)]`. The
//! determinant is evaluated through the `TR x TR` matrix
//! `(rho/T) B^H B + I_TR`, which has the same determinant.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::gaussian_entropy_per_complex_dim;
use crate::error::{Error, Result};
use crate::linalg::{log_det_hpd, CMatrix};
use crate::model::{CorrelationSet, InputBlock, MixMatrix, PilotPattern};
use crate::rng::stream;

/// `log det((rho/T) B^H B + I_TR)`.
pub fn log_det_term(b: &CMatrix, rho: f64, t: usize) -> f64 {
    let scale = Complex64::new(rho / t as f64, 0.0);
    let gram = b.adjoint() * b * scale + CMatrix::identity(b.ncols(), b.ncols());
    log_det_hpd(&gram).expect("Gram matrix plus identity is positive definite")
}

/// `log det((rho/T) B B^H + I_RN)`, the large form.
pub fn log_det_term_full(b: &CMatrix, rho: f64, t: usize) -> f64 {
    let scale = Complex64::new(rho / t as f64, 0.0);
    let cov = b * b.adjoint() * scale + CMatrix::identity(b.nrows(), b.nrows());
    log_det_hpd(&cov).expect("covariance is positive definite")
}

/// Relative difference between the two determinant forms.
pub fn determinant_identity_gap(b: &CMatrix, rho: f64, t: usize) -> f64 {
    let small = log_det_term(b, rho, t);
    let full = log_det_term_full(b, rho, t);
    (small - full).abs() / small.abs().max(full.abs()).max(f64::MIN_POSITIVE)
}

/// Mean and standard error of `log det((rho/T) B^H B + I)` over the given inputs.
pub fn mean_log_det(z: &CorrelationSet, rho: f64, inputs: &[InputBlock]) -> Result<(f64, f64)> {
    if inputs.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let t = z.dims().t;
    let terms = inputs
        .par_iter()
        .map(|x| Ok(log_det_term(MixMatrix::build(z, x)?.matrix(), rho, t)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_and_se(&terms))
}

pub(crate) fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Gaussian inputs `x ~ CN(0, I_TN)`, input `i` drawn from stream `(seed, i)`.
pub(crate) fn gaussian_inputs(z: &CorrelationSet, trials: u64, seed: u64) -> Result<Vec<InputBlock>> {
    let dims = z.dims();
    let empty = PilotPattern::empty();
    (0..trials)
        .into_par_iter()
        .map(|i| InputBlock::gaussian(dims, &empty, &mut stream(seed, i)))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CondEntropyBound {
    pub rho: f64,
    pub trials: u64,
    /// `E_x[log det((rho/T) B^H B + I_TR)]`, nats.
    pub e_logdet: f64,
    pub e_logdet_std_error: f64,
    /// `RN log(pi e) + e_logdet`.
    pub h_y_given_x_upper: f64,
}

pub fn cond_entropy_bound_mc(z: &CorrelationSet, rho: f64, trials: u64, seed: u64) -> Result<CondEntropyBound> {
    if !(rho > 1.0 && rho.is_finite()) {
        return Err(Error::Domain(format!("conditional-entropy bound needs rho > 1, got {rho}")));
    }
    let inputs = gaussian_inputs(z, trials, seed)?;
    let (e_logdet, se) = mean_log_det(z, rho, &inputs)?;
    Ok(CondEntropyBound {
        rho,
        trials,
        e_logdet,
        e_logdet_std_error: se,
        h_y_given_x_upper: z.dims().rn() as f64 * gaussian_entropy_per_complex_dim() + e_logdet,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HygxSlope {
    pub low: CondEntropyBound,
    pub high: CondEntropyBound,
    /// `(e_logdet(high) - e_logdet(low)) / log(rho_high / rho_low)`, nats per e-fold.
    pub slope: f64,
}

/// Slope of `E[log det]` between two SNRs, using the same input draws at both.
pub fn hygx_slope(z: &CorrelationSet, rho_low: f64, rho_high: f64, trials: u64, seed: u64) -> Result<HygxSlope> {
    if rho_high <= rho_low {
        return Err(Error::Config("rho_high must exceed rho_low".into()));
    }
    let low = cond_entropy_bound_mc(z, rho_low, trials, seed)?;
    let high = cond_entropy_bound_mc(z, rho_high, trials, seed)?;
    let slope = (high.e_logdet - low.e_logdet) / (rho_high / rho_low).ln();
    Ok(HygxSlope { low, high, slope })
}

#[derive(Debug, Clone, Serialize)]
pub struct JensenCheck {
    pub mean_log_det: f64,
    pub log_mean_det: f64,
}

impl JensenCheck {
    pub fn holds(&self) -> bool {
        self.mean_log_det <= self.log_mean_det
    }
}

/// `E[log det(.)]` against `log E[det(.)]` over the same draws.
pub fn jensen_check(z: &CorrelationSet, rho: f64, trials: u64, seed: u64) -> Result<JensenCheck> {
    let t = z.dims().t;
    let logs = gaussian_inputs(z, trials, seed)?
        .iter()
        .map(|x| Ok(log_det_term(MixMatrix::build(z, x)?.matrix(), rho, t)))
        .collect::<Result<Vec<f64>>>()?;
    let n = logs.len() as f64;
    let mean_log_det = logs.iter().sum::<f64>() / n;
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_mean_det = max + (logs.iter().map(|l| (l - max).exp()).sum::<f64>() / n).ln();
    Ok(JensenCheck {
        mean_log_det,
        log_mean_det,
    })
}
