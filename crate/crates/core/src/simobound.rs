//! SIMO decomposition behind the `T (1 - 1/N)` pre-log upper bound.
//!
//! Each MIMO output coordinate is rewritten as a combination of `T`
//! constant-fading SIMO channels run at SNR `K rho`,
//!
//! ```text
//! [y~_{r,t}]_n = sqrt(K rho) s_{r,t} [x_t]_n + [w~_{r,t}]_n
//! [y'_r]_n     = (K T)^{-1/2} sum_t [z_{r,t}]_n [y~_{r,t}]_n + [w'_r]_n
//! ```
//!
//! with `w'` topping the noise variance back up to one. `y'` then has the
//! same law as the original output `y`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_rational::Rational64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector};
use crate::model::{self, CorrelationSet, Dims, FadingDraw, InputBlock, PilotPattern};
use crate::prelog::{self, FadingModel};
use crate::rng::{complex_normal, derive_seed, stream};

/// Relative margin above the strict threshold for `K`.
pub const K_MARGIN: f64 = 1e-3;

/// `(1 + K_MARGIN) * max(1, max_{r,n} sum_t |[z_{r,t}]_n|^2)`.
pub fn k_constant(z: &CorrelationSet) -> f64 {
    (1.0 + K_MARGIN) * max_row_power(z).max(1.0)
}

fn max_row_power(z: &CorrelationSet) -> f64 {
    let d = z.dims();
    (0..d.r)
        .flat_map(|r| (0..d.n).map(move |n| (r, n)))
        .map(|(r, n)| row_power(z, r, n))
        .fold(0.0, f64::max)
}

fn row_power(z: &CorrelationSet, r: usize, n: usize) -> f64 {
    (0..z.dims().t).map(|t| z.entry(r, t, n).norm_sqr()).sum()
}

/// Variances `1 - sum_t |[z_{r,t}]_n|^2 / (K T)` of the top-up noise, as an `R x N` array.
pub fn w_prime_variances(z: &CorrelationSet, k: f64) -> DMatrix<f64> {
    let d = z.dims();
    DMatrix::from_fn(d.r, d.n, |r, n| 1.0 - row_power(z, r, n) / (k * d.t as f64))
}

/// Analytic variance of the composite noise in the reconstruction, per `(r, n)`.
pub fn composite_noise_variances(z: &CorrelationSet, k: f64) -> DMatrix<f64> {
    let d = z.dims();
    let wp = w_prime_variances(z, k);
    DMatrix::from_fn(d.r, d.n, |r, n| row_power(z, r, n) / (k * d.t as f64) + wp[(r, n)])
}

#[derive(Debug, Clone)]
pub struct SimoDecomposition {
    pub k: f64,
    /// One `R x N` output matrix per transmit antenna.
    pub simo_outputs: Vec<CMatrix>,
    pub w_prime_variances: DMatrix<f64>,
    /// Reconstructed MIMO output, stacked like `y`.
    pub y_prime: CVector,
}

/// Noise realizations for one SIMO draw: `w~` per `(t, r, n)` and standardized `w'` per `(r, n)`.
#[derive(Debug, Clone)]
pub struct SimoNoise {
    /// Indexed `[t][r * N + n]`.
    pub w_tilde: Vec<Vec<Complex64>>,
    /// Unit-variance draws, scaled by the `w'` standard deviations; indexed `r * N + n`.
    pub w_prime_unit: Vec<Complex64>,
}

impl SimoNoise {
    pub fn draw<G: Rng + ?Sized>(dims: Dims, rng: &mut G) -> Self {
        SimoNoise {
            w_tilde: (0..dims.t)
                .map(|_| (0..dims.rn()).map(|_| complex_normal(rng)).collect())
                .collect(),
            w_prime_unit: (0..dims.rn()).map(|_| complex_normal(rng)).collect(),
        }
    }

    pub fn zeros(dims: Dims) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        SimoNoise {
            w_tilde: vec![vec![zero; dims.rn()]; dims.t],
            w_prime_unit: vec![zero; dims.rn()],
        }
    }
}

pub fn simo_simulate<G: Rng + ?Sized>(
    z: &CorrelationSet,
    x: &InputBlock,
    s: &FadingDraw,
    rho: f64,
    rng: &mut G,
) -> Result<SimoDecomposition> {
    let noise = SimoNoise::draw(z.dims(), rng);
    simo_simulate_with_noise(z, x, s, rho, &noise)
}

pub fn simo_simulate_with_noise(
    z: &CorrelationSet,
    x: &InputBlock,
    s: &FadingDraw,
    rho: f64,
    noise: &SimoNoise,
) -> Result<SimoDecomposition> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Domain(format!("SNR must be positive and finite, got {rho}")));
    }
    let d = z.dims();
    if x.dims_tn() != (d.t, d.n) || s.matrix().shape() != (d.r, d.t) {
        return Err(Error::Shape("input or fading shape does not match correlation set".into()));
    }
    let k = k_constant(z);
    let gain = (k * rho).sqrt();
    let simo_outputs: Vec<CMatrix> = (0..d.t)
        .map(|t| {
            CMatrix::from_fn(d.r, d.n, |r, n| {
                s.get(r, t) * x.get(t, n) * gain + noise.w_tilde[t][r * d.n + n]
            })
        })
        .collect();
    let wp = w_prime_variances(z, k);
    let combine = 1.0 / (k * d.t as f64).sqrt();
    let y_prime = CVector::from_fn(d.rn(), |i, _| {
        let (r, n) = (i / d.n, i % d.n);
        let mixed: Complex64 = (0..d.t)
            .map(|t| z.entry(r, t, n) * simo_outputs[t][(r, n)])
            .sum();
        mixed * combine + noise.w_prime_unit[i] * wp[(r, n)].sqrt()
    });
    Ok(SimoDecomposition {
        k,
        simo_outputs,
        w_prime_variances: wp,
        y_prime,
    })
}

/// `T (N - 1) / N`, valid for every `(T, R, N)` and every correlation set.
pub fn upper_bound(dims: Dims) -> Rational64 {
    Rational64::new((dims.t * (dims.n - 1)) as i64, dims.n as i64)
}

#[derive(Debug, Clone, Serialize)]
pub struct UpperBoundReport {
    pub dims: Dims,
    pub chi_upper: f64,
    pub chi_upper_exact: String,
}

/// Upper bound together with the check that it dominates every prediction
/// the `prelog` module makes for the same dimensions.
pub fn upper_bound_report(dims: Dims) -> Result<UpperBoundReport> {
    dims.validate()?;
    let upper = upper_bound(dims);
    let mut predictions = vec![
        prelog::chi_const(dims),
        prelog::counting_prediction(dims, FadingModel::Generic).predicted_prelog,
        prelog::counting_prediction(dims, FadingModel::Constant).predicted_prelog,
    ];
    predictions.extend(prelog::chi_gen(dims.t, dims.n).ok());
    if let Some(p) = predictions.iter().find(|&&p| p > upper) {
        return Err(Error::Assertion(format!(
            "prediction {p} exceeds the upper bound {upper} at {dims}"
        )));
    }
    Ok(UpperBoundReport {
        dims,
        chi_upper: prelog::to_f64(upper),
        chi_upper_exact: upper.to_string(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SimoCheckReport {
    pub dims: Dims,
    pub rho: f64,
    pub draws: u64,
    pub k: f64,
    /// `max_{r,n} |composite variance - 1|` from the closed form.
    pub max_variance_error_analytic: f64,
    /// Same quantity estimated from `draws` noise draws with `x`, `s` fixed.
    pub max_variance_error_empirical: f64,
    /// `||C_simo - C_direct||_F / ||C_direct||_F` between the two output covariances.
    pub covariance_frobenius_gap: f64,
}

/// Sample covariance `E[v v^H]` of zero-mean vectors.
pub fn second_moment(samples: &[CVector]) -> CMatrix {
    let dim = samples.first().map_or(0, |v| v.len());
    let sum = samples
        .par_chunks(4096)
        .map(|chunk| {
            let mut acc = CMatrix::zeros(dim, dim);
            for v in chunk {
                acc.ger_adjoint_hermitian(v);
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(CMatrix::zeros(dim, dim), |a, b| a + b);
    sum / Complex64::new(samples.len() as f64, 0.0)
}

trait OuterAccumulate {
    fn ger_adjoint_hermitian(&mut self, v: &CVector);
}

impl OuterAccumulate for CMatrix {
    fn ger_adjoint_hermitian(&mut self, v: &CVector) {
        let n = v.len();
        for j in 0..n {
            let cj = v[j].conj();
            for i in 0..n {
                self[(i, j)] += v[i] * cj;
            }
        }
    }
}

/// Runs the reconstruction checks at one SNR.
pub fn simo_check(z: &CorrelationSet, rho: f64, draws: u64, seed: u64) -> Result<SimoCheckReport> {
    if draws < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: draws as usize });
    }
    let d = z.dims();
    let k = k_constant(z);
    let analytic = composite_noise_variances(z, k)
        .iter()
        .map(|v| (v - 1.0).abs())
        .fold(0.0, f64::max);

    // composite noise with x and s held fixed
    let mut fixed_rng = stream(derive_seed(seed, 1), 0);
    let x = InputBlock::gaussian(d, &PilotPattern::empty(), &mut fixed_rng)?;
    let s = FadingDraw::draw(d, &mut fixed_rng);
    let ybar = model::noiseless(z, &x, &s)?;
    let gain = (rho / d.t as f64).sqrt();
    let noise_seed = derive_seed(seed, 2);
    let sums = (0..draws)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let dec = simo_simulate(z, &x, &s, rho, &mut stream(noise_seed, i))?;
            Ok((0..d.rn()).map(|j| (dec.y_prime[j] - ybar[j] * gain).norm_sqr()).collect())
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(vec![0.0; d.rn()], |mut a, b| {
            a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            a
        });
    let empirical = sums
        .iter()
        .map(|v| (v / draws as f64 - 1.0).abs())
        .fold(0.0, f64::max);

    let gap = covariance_gap(z, rho, draws, derive_seed(seed, 3))?;
    Ok(SimoCheckReport {
        dims: d,
        rho,
        draws,
        k,
        max_variance_error_analytic: analytic,
        max_variance_error_empirical: empirical,
        covariance_frobenius_gap: gap,
    })
}

/// Relative Frobenius gap between the covariances of `y` (direct channel)
/// and `y'` (SIMO reconstruction), from independent Gaussian-input draws.
pub fn covariance_gap(z: &CorrelationSet, rho: f64, draws: u64, seed: u64) -> Result<f64> {
    let d = z.dims();
    let direct_seed = derive_seed(seed, 10);
    let simo_seed = derive_seed(seed, 11);
    let direct: Vec<CVector> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(direct_seed, i);
            let x = InputBlock::gaussian(d, &PilotPattern::empty(), &mut rng)?;
            let s = FadingDraw::draw(d, &mut rng);
            Ok(model::simulate(z, &x, &s, rho, &mut rng)?.y)
        })
        .collect::<Result<_>>()?;
    let simo: Vec<CVector> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(simo_seed, i);
            let x = InputBlock::gaussian(d, &PilotPattern::empty(), &mut rng)?;
            let s = FadingDraw::draw(d, &mut rng);
            Ok(simo_simulate(z, &x, &s, rho, &mut rng)?.y_prime)
        })
        .collect::<Result<_>>()?;
    let c_direct = second_moment(&direct);
    let c_simo = second_moment(&simo);
    Ok((&c_simo - &c_direct).norm() / c_direct.norm())
}
