//! Numerical check of the entropy bound for finite-to-one maps,
//!
//! ```text
//! h(v) >= h(u) + E[log |det J(u)|^2] - H(k),    v = f(u),
//! ```
//!
//! where `k` labels the branch of `f` that `u` falls in. For scalar
//! `u ~ CN(0, 1)` and simple polynomial maps the right-hand side is known in
//! closed form (or up to a Monte-Carlo average) and `h(v)` is estimated with
//! the kNN estimator.

use num_complex::Complex64;
use serde::Serialize;

use super::knn::{flatten_complex, knn_entropy, EntropyEstimate};
use super::{gaussian_entropy_per_complex_dim, EULER_GAMMA};
use crate::error::{Error, Result};
use crate::rng::{complex_normal, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Lemma1Map {
    Identity,
    /// `v = u^2`
    Square,
    /// `v = u^3`
    Cube,
    /// `v = (u - 0.5)^2 + 0.3 u`
    ShiftedSquare,
}

impl std::str::FromStr for Lemma1Map {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Lemma1Map::Identity),
            "square" => Ok(Lemma1Map::Square),
            "cube" => Ok(Lemma1Map::Cube),
            "shifted_square" | "shifted-square" => Ok(Lemma1Map::ShiftedSquare),
            other => Err(Error::Config(format!("unknown map {other:?}"))),
        }
    }
}

impl Lemma1Map {
    pub const ALL: [Lemma1Map; 4] = [
        Lemma1Map::Identity,
        Lemma1Map::Square,
        Lemma1Map::Cube,
        Lemma1Map::ShiftedSquare,
    ];

    pub fn apply(self, u: Complex64) -> Complex64 {
        match self {
            Lemma1Map::Identity => u,
            Lemma1Map::Square => u * u,
            Lemma1Map::Cube => u * u * u,
            Lemma1Map::ShiftedSquare => (u - 0.5) * (u - 0.5) + u * 0.3,
        }
    }

    /// Complex derivative; `|f'(u)|^2` is the real Jacobian determinant.
    pub fn derivative(self, u: Complex64) -> Complex64 {
        match self {
            Lemma1Map::Identity => Complex64::new(1.0, 0.0),
            Lemma1Map::Square => u * 2.0,
            Lemma1Map::Cube => u * u * 3.0,
            Lemma1Map::ShiftedSquare => u * 2.0 - 0.7,
        }
    }

    /// Maximum number of preimages of a generic point.
    pub fn branch_count(self) -> usize {
        match self {
            Lemma1Map::Identity => 1,
            Lemma1Map::Square | Lemma1Map::ShiftedSquare => 2,
            Lemma1Map::Cube => 3,
        }
    }

    /// `E[log |f'(u)|^2]` for `u ~ CN(0, 1)`, using `E[log |u|^2] = -gamma`.
    pub fn analytic_logdet(self) -> Option<f64> {
        match self {
            Lemma1Map::Identity => Some(0.0),
            Lemma1Map::Square => Some(4f64.ln() - EULER_GAMMA),
            Lemma1Map::Cube => Some(9f64.ln() - 2.0 * EULER_GAMMA),
            Lemma1Map::ShiftedSquare => None,
        }
    }

    /// Closed-form `h(f(u))` where the bound is tight.
    pub fn analytic_output_entropy(self) -> Option<f64> {
        let pi = std::f64::consts::PI;
        match self {
            Lemma1Map::Identity => Some(gaussian_entropy_per_complex_dim()),
            // density e^{-|v|} / (2 pi |v|)
            Lemma1Map::Square => Some(1.0 + (2.0 * pi).ln() - EULER_GAMMA),
            Lemma1Map::Cube => Some((3.0 * pi * std::f64::consts::E).ln() - 2.0 * EULER_GAMMA),
            Lemma1Map::ShiftedSquare => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma1Report {
    pub map: Lemma1Map,
    /// kNN estimate of `h(v)`.
    pub lhs: EntropyEstimate,
    pub rhs_entropy_u: f64,
    pub rhs_logdet_term: f64,
    /// Zero when the log-det term is analytic.
    pub rhs_logdet_std_error: f64,
    /// `H(k) = log m` for the map's branch count `m`.
    pub rhs_branch_entropy: f64,
    pub slack: f64,
    pub slack_std_error: f64,
}

impl Lemma1Report {
    pub fn rhs(&self) -> f64 {
        self.rhs_entropy_u + self.rhs_logdet_term - self.rhs_branch_entropy
    }
}

pub fn lemma1_check(map: Lemma1Map, samples: usize, k: usize, seed: u64) -> Result<Lemma1Report> {
    let mut rng = stream(seed, 0);
    let u: Vec<Complex64> = (0..samples).map(|_| complex_normal(&mut rng)).collect();
    let v: Vec<[Complex64; 1]> = u.iter().map(|&ui| [map.apply(ui)]).collect();
    let lhs = knn_entropy(&flatten_complex(v.iter().map(|c| c.as_slice()), 1)?, k)?;

    let (logdet, logdet_se) = match map.analytic_logdet() {
        Some(v) => (v, 0.0),
        None => {
            let terms: Vec<f64> = u.iter().map(|&ui| map.derivative(ui).norm_sqr().ln()).collect();
            let n = terms.len() as f64;
            let mean = terms.iter().sum::<f64>() / n;
            let var = terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (mean, (var / n).sqrt())
        }
    };
    let h_u = gaussian_entropy_per_complex_dim();
    let branch = (map.branch_count() as f64).ln();
    let slack = lhs.value - (h_u + logdet - branch);
    Ok(Lemma1Report {
        map,
        lhs,
        rhs_entropy_u: h_u,
        rhs_logdet_term: logdet,
        rhs_logdet_std_error: logdet_se,
        rhs_branch_entropy: branch,
        slack,
        slack_std_error: lhs.std_error.hypot(logdet_se),
    })
}
