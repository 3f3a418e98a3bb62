//! Mutual-information slope `I(x; y)` versus `log rho` with Gaussian inputs.
//!
//! `h(y)` is estimated by kNN from channel samples and `h(y | x)` is the
//! exact Gaussian conditional entropy averaged over the same inputs. The
//! same fading, input and noise draws are reused at every SNR, so the
//! per-point estimator bias largely cancels in the slope.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::bounds::{gaussian_inputs, mean_log_det};
use super::gaussian_entropy_per_complex_dim;
use super::knn::{knn_entropy, Samples};
use crate::error::{Error, Result};
use crate::model::{self, CorrelationSet, FadingDraw, InputBlock};
use crate::rng::{complex_normal, derive_seed, stream};

#[derive(Debug, Clone, Serialize)]
pub struct MiRow {
    pub rho: f64,
    pub h_y_est: f64,
    pub h_y_given_x: f64,
    pub mi: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MiSlopeReport {
    pub samples: usize,
    pub k: usize,
    /// Least-squares slope of `mi` against `log rho`, divided by `N`.
    pub prelog_estimate: f64,
    pub per_rho: Vec<MiRow>,
}

impl MiSlopeReport {
    pub const CSV_HEADER: &'static str = "rho,h_y_est,h_y_given_x,mi,stderr";

    pub fn csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for row in &self.per_rho {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.rho, row.h_y_est, row.h_y_given_x, row.mi, row.stderr
            ));
        }
        out
    }

    /// `mi` never decreases along the SNR grid.
    pub fn is_monotone(&self) -> bool {
        self.per_rho.windows(2).all(|w| w[1].mi >= w[0].mi)
    }
}

pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

pub fn mi_slope(z: &CorrelationSet, rho_grid: &[f64], samples: usize, k: usize, seed: u64) -> Result<MiSlopeReport> {
    if rho_grid.len() < 3 {
        return Err(Error::Config("rho grid needs at least three points".into()));
    }
    if rho_grid.iter().any(|&r| !(r > 1.0 && r.is_finite())) {
        return Err(Error::Domain("every rho on the grid must exceed 1".into()));
    }
    if rho_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("rho grid must be strictly increasing".into()));
    }
    if samples < k + 1 {
        return Err(Error::InsufficientSamples { needed: k + 1, got: samples });
    }
    let d = z.dims();
    let inputs = gaussian_inputs(z, samples as u64, derive_seed(seed, 1))?;
    let aux_seed = derive_seed(seed, 2);
    // (ybar, w) per sample, shared across the grid
    let draws: Vec<(Vec<Complex64>, Vec<Complex64>)> = inputs
        .par_iter()
        .enumerate()
        .map(|(i, x): (usize, &InputBlock)| {
            let mut rng = stream(aux_seed, i as u64);
            let s = FadingDraw::draw(d, &mut rng);
            let ybar = model::noiseless(z, x, &s)?;
            let w = (0..d.rn()).map(|_| complex_normal(&mut rng)).collect();
            Ok((ybar.iter().copied().collect(), w))
        })
        .collect::<Result<_>>()?;

    let mut per_rho = Vec::with_capacity(rho_grid.len());
    for &rho in rho_grid {
        let gain = (rho / d.t as f64).sqrt();
        let mut flat = Vec::with_capacity(samples * 2 * d.rn());
        for (ybar, w) in &draws {
            for (yb, wi) in ybar.iter().zip(w) {
                let y = yb * gain + wi;
                flat.push(y.re);
                flat.push(y.im);
            }
        }
        let h_y = knn_entropy(&Samples::new(2 * d.rn(), flat)?, k)?;
        let (e_logdet, logdet_se) = mean_log_det(z, rho, &inputs)?;
        let h_y_given_x = d.rn() as f64 * gaussian_entropy_per_complex_dim() + e_logdet;
        per_rho.push(MiRow {
            rho,
            h_y_est: h_y.value,
            h_y_given_x,
            mi: h_y.value - h_y_given_x,
            stderr: h_y.std_error.hypot(logdet_se),
        });
    }
    let log_rho: Vec<f64> = per_rho.iter().map(|r| r.rho.ln()).collect();
    let mi: Vec<f64> = per_rho.iter().map(|r| r.mi).collect();
    Ok(MiSlopeReport {
        samples,
        k,
        prelog_estimate: least_squares_slope(&log_rho, &mi) / d.n as f64,
        per_rho,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dims;

    #[test]
    fn slope_of_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        assert!((least_squares_slope(&xs, &ys) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn grid_validation() {
        let z = CorrelationSet::constant(Dims::new(1, 1, 2).unwrap()).unwrap();
        assert!(mi_slope(&z, &[10.0, 100.0], 100, 4, 0).is_err());
        assert!(mi_slope(&z, &[10.0, 5.0, 100.0], 100, 4, 0).is_err());
        assert!(mi_slope(&z, &[0.5, 5.0, 100.0], 100, 4, 0).is_err());
        assert!(matches!(
            mi_slope(&z, &[10.0, 50.0, 100.0], 3, 4, 0),
            Err(Error::InsufficientSamples { .. })
        ));
    }
}
