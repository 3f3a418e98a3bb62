//! Closed-form pre-log expressions and the equation-counting predictor.
//!
//! Everything here is exact rational arithmetic.

use num_rational::Rational64;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::Dims;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FadingModel {
    Constant,
    Generic,
}

impl std::str::FromStr for FadingModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(FadingModel::Constant),
            "generic" | "generic-random" => Ok(FadingModel::Generic),
            other => Err(Error::Config(format!("unknown fading model {other:?}"))),
        }
    }
}

fn ratio(num: usize, den: usize) -> Rational64 {
    Rational64::new(num as i64, den as i64)
}

/// Constant block fading: `M (1 - M/N)` with `M = min(T, R, floor(N/2))`.
pub fn chi_const(dims: Dims) -> Rational64 {
    let m = dims.t.min(dims.r).min(dims.n / 2);
    ratio(m * (dims.n - m), dims.n)
}

/// Generic block fading: `T (1 - 1/N)`, defined for `T < N`.
pub fn chi_gen(t: usize, n: usize) -> Result<Rational64> {
    if t == 0 || t >= n {
        return Err(Error::Domain(format!(
            "generic pre-log needs 0 < T < N (got T={t}, N={n})"
        )));
    }
    Ok(ratio(t * (n - 1), n))
}

/// `T < N` and `R >= T (N - 1) / (N - T)`.
pub fn admissible(dims: Dims) -> bool {
    let Dims { t, r, n } = dims;
    // cross-multiplied to stay in integers: R (N - T) >= T (N - 1)
    t < n && r * (n - t) >= t * (n - 1)
}

/// Pilots needed in the generic model so that the `RN` equations are at
/// least as many as the `TR + TN - pilots` unknowns; never fewer than one
/// per transmit antenna.
pub fn pilot_count(dims: Dims) -> usize {
    let Dims { t, r, n } = dims;
    let deficit = (t * n + t * r).saturating_sub(r * n);
    deficit.max(t).min(t * n)
}

/// Constant-model bookkeeping uses only `min(T, R)` receive antennas: the
/// remaining outputs lie in the span of the first `T`.
pub fn constant_effective_receivers(dims: Dims) -> usize {
    dims.t.min(dims.r)
}

pub fn constant_pilot_count(dims: Dims) -> usize {
    let reff = constant_effective_receivers(dims);
    let Dims { t, n, .. } = dims;
    (t * n + t * reff).saturating_sub(reff * n).max(t).min(t * n)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counting {
    pub model: FadingModel,
    pub equations: usize,
    /// Fading coefficients plus all input entries, before pilots are fixed.
    pub unknowns: usize,
    pub pilots: usize,
    /// Input entries left to solve for: `TN - pilots`.
    pub recovered: usize,
    #[serde(serialize_with = "ser_ratio")]
    pub predicted_prelog: Rational64,
    /// Set when the prediction is an extrapolation with no proof behind it.
    pub heuristic_flag: bool,
}

impl Counting {
    /// Unknowns remaining once the pilots are fixed.
    pub fn free_unknowns(&self) -> usize {
        self.unknowns - self.pilots
    }
}

/// Equation-counting prediction of the pre-log.
///
/// Generic model: `min(T(N-1), R(N-T)) / N`, flagged heuristic unless
/// [`admissible`]. For `T >= N` the count is evaluated with `N - 1` active
/// transmit antennas. Constant model: the prediction is [`chi_const`].
pub fn counting_prediction(dims: Dims, model: FadingModel) -> Counting {
    let Dims { t, r, n } = dims;
    match model {
        FadingModel::Generic => {
            let active = t.min(n - 1);
            let predicted = ratio((active * (n - 1)).min(r * (n - active)), n);
            let pilots = pilot_count(dims);
            Counting {
                model,
                equations: r * n,
                unknowns: t * r + t * n,
                pilots,
                recovered: t * n - pilots,
                predicted_prelog: predicted,
                heuristic_flag: !admissible(dims),
            }
        }
        FadingModel::Constant => {
            let reff = constant_effective_receivers(dims);
            let pilots = constant_pilot_count(dims);
            Counting {
                model,
                equations: reff * n,
                unknowns: t * reff + t * n,
                pilots,
                recovered: t * n - pilots,
                predicted_prelog: chi_const(dims),
                heuristic_flag: false,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrelogReport {
    pub dims: Dims,
    #[serde(serialize_with = "ser_ratio")]
    pub chi_const: Rational64,
    #[serde(serialize_with = "ser_opt_ratio")]
    pub chi_gen: Option<Rational64>,
    #[serde(serialize_with = "ser_ratio")]
    pub chi_upper: Rational64,
    pub admissible: bool,
    pub counting: Counting,
    pub counting_constant: Counting,
}

pub fn report(dims: Dims) -> PrelogReport {
    PrelogReport {
        dims,
        chi_const: chi_const(dims),
        chi_gen: chi_gen(dims.t, dims.n).ok(),
        chi_upper: crate::simobound::upper_bound(dims),
        admissible: admissible(dims),
        counting: counting_prediction(dims, FadingModel::Generic),
        counting_constant: counting_prediction(dims, FadingModel::Constant),
    }
}

impl PrelogReport {
    pub const CSV_HEADER: &'static str = "T,R,N,chi_const,chi_gen,chi_upper,admissible,equations,unknowns,pilots,recovered,predicted_prelog,heuristic_flag";

    pub fn csv_row(&self) -> String {
        let c = &self.counting;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.dims.t,
            self.dims.r,
            self.dims.n,
            self.chi_const,
            self.chi_gen.map(|v| v.to_string()).unwrap_or_default(),
            self.chi_upper,
            self.admissible,
            c.equations,
            c.unknowns,
            c.pilots,
            c.recovered,
            c.predicted_prelog,
            c.heuristic_flag
        )
    }
}

pub fn to_f64(q: Rational64) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

/// Rationals are written as `{"value": 1.5, "exact": "3/2"}`.
#[derive(Serialize)]
struct RatioRepr {
    value: f64,
    exact: String,
}

fn ser_ratio<S: Serializer>(q: &Rational64, s: S) -> std::result::Result<S::Ok, S::Error> {
    RatioRepr {
        value: to_f64(*q),
        exact: q.to_string(),
    }
    .serialize(s)
}

fn ser_opt_ratio<S: Serializer>(
    q: &Option<Rational64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    match q {
        Some(q) => ser_ratio(q, s),
        None => s.serialize_none(),
    }
}
