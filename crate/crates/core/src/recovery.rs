//! Numerical inversion of the pilot-parametrized map `(s, x_D) -> ybar`.
//!
//! Each output coordinate is a degree-2 polynomial in the unknowns, so a
//! square system of `RN` equations has at most `2^(RN)` isolated roots. A
//! multistart damped Newton search finds a subset of them; the count it
//! reports is a lower estimate and only the upper cap is enforced.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::jacobian::jacobian_matrix;
use crate::linalg::{self, real_embedding, realify, CMatrix, CVector};
use crate::model::{self, CorrelationSet, Dims, FadingDraw, InputBlock, PilotPattern};
use crate::rng::{complex_normal, stream};

/// Roots closer than this in max-norm are the same root.
pub const DEDUP_TOL: f64 = 1e-6;

/// Iterates with `sigma_min / sigma_max` below this abort the solve.
pub const SINGULAR_RATIO: f64 = 1e-12;

/// The map `phi_{x_P}` for a fixed correlation set and pilot pattern.
///
/// Unknowns are laid out as `u = (s, x_D)` with `s` in stacked order and
/// `x_D` in [`PilotPattern::data_positions`] order.
#[derive(Debug, Clone)]
pub struct PilotSystem {
    z: CorrelationSet,
    pattern: PilotPattern,
}

impl PilotSystem {
    pub fn new(z: CorrelationSet, pattern: PilotPattern) -> Result<Self> {
        pattern.check_dims(z.dims())?;
        Ok(PilotSystem { z, pattern })
    }

    pub fn dims(&self) -> Dims {
        self.z.dims()
    }

    pub fn correlation(&self) -> &CorrelationSet {
        &self.z
    }

    pub fn pattern(&self) -> &PilotPattern {
        &self.pattern
    }

    pub fn unknowns(&self) -> usize {
        let d = self.dims();
        d.tr() + d.tn() - self.pattern.len()
    }

    pub fn equations(&self) -> usize {
        self.dims().rn()
    }

    pub fn is_square(&self) -> bool {
        self.unknowns() == self.equations()
    }

    /// `2^(RN)`, saturating.
    pub fn bezout_cap(&self) -> u128 {
        1u128.checked_shl(self.equations() as u32).unwrap_or(u128::MAX)
    }

    pub fn split(&self, u: &[Complex64]) -> Result<(FadingDraw, InputBlock)> {
        let d = self.dims();
        if u.len() != self.unknowns() {
            return Err(Error::Shape(format!(
                "unknown vector has length {}, expected {}",
                u.len(),
                self.unknowns()
            )));
        }
        let s = FadingDraw::from_stacked(d, &u[..d.tr()])?;
        let x = InputBlock::from_data(d, &self.pattern, &u[d.tr()..])?;
        Ok((s, x))
    }

    pub fn join(&self, s: &FadingDraw, x: &InputBlock) -> Vec<Complex64> {
        let mut u = s.stacked();
        let dims = self.dims();
        u.extend(
            self.pattern
                .data_positions(dims)
                .into_iter()
                .map(|(t, n)| x.get(t, n)),
        );
        u
    }

    pub fn eval(&self, u: &[Complex64]) -> Result<CVector> {
        let (s, x) = self.split(u)?;
        model::noiseless(&self.z, &x, &s)
    }

    pub fn jacobian(&self, u: &[Complex64]) -> Result<CMatrix> {
        let (s, x) = self.split(u)?;
        jacobian_matrix(&self.z, &s, &x, &self.pattern)
    }

    /// `max_i |phi(u)_i - ybar_i|`.
    pub fn residual(&self, u: &[Complex64], ybar: &CVector) -> Result<f64> {
        let f = self.eval(u)? - ybar;
        Ok(linalg::max_abs(f.as_slice()))
    }

    /// A Gaussian point `u` with its image under the map.
    pub fn random_instance(&self, seed: u64, index: u64) -> Result<(Vec<Complex64>, CVector)> {
        let mut rng = stream(seed, index);
        let u: Vec<Complex64> = (0..self.unknowns()).map(|_| complex_normal(&mut rng)).collect();
        let ybar = self.eval(&u)?;
        Ok((u, ybar))
    }
}

/// `phi_{x_P}(s, x_D)`: the noiseless output with pilots substituted.
pub fn forward_map(
    z: &CorrelationSet,
    pattern: &PilotPattern,
    s: &FadingDraw,
    x_data: &[Complex64],
) -> Result<CVector> {
    let x = InputBlock::from_data(z.dims(), pattern, x_data)?;
    model::noiseless(z, &x, s)
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Absolute max-norm tolerance; `None` means `1e-9 (1 + ||ybar||_inf)`.
    pub tol: Option<f64>,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iter: 100,
            tol: None,
            max_halvings: 30,
        }
    }
}

impl NewtonOptions {
    pub fn tolerance_for(&self, ybar: &CVector) -> f64 {
        self.tol
            .unwrap_or_else(|| 1e-9 * (1.0 + linalg::max_abs(ybar.as_slice())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solution {
    pub u: Vec<Complex64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Damped Newton on `phi(u) = ybar`.
///
/// The complex system is solved through its real `2RN x 2RN` form. Each
/// step is halved until the Euclidean residual decreases.
pub fn newton_solve(
    system: &PilotSystem,
    ybar: &CVector,
    start: &[Complex64],
    opts: &NewtonOptions,
) -> Result<Solution> {
    if !system.is_square() {
        return Err(Error::Shape(format!(
            "Newton needs a square system ({} equations, {} unknowns)",
            system.equations(),
            system.unknowns()
        )));
    }
    let tol = opts.tolerance_for(ybar);
    if !(tol > 0.0) {
        return Err(Error::Config("tolerance must be positive".into()));
    }
    let mut u = start.to_vec();
    let mut f = system.eval(&u)? - ybar;
    for iter in 0..=opts.max_iter {
        let res = linalg::max_abs(f.as_slice());
        if res <= tol {
            return Ok(Solution {
                u,
                residual: res,
                iterations: iter,
            });
        }
        if iter == opts.max_iter {
            return Err(Error::NonConvergence {
                iterations: iter,
                residual: res,
            });
        }
        let j = system.jacobian(&u)?;
        let ratio = linalg::sigma_ratio(&linalg::singular_values(&j));
        if ratio < SINGULAR_RATIO {
            return Err(Error::SingularJacobian { ratio });
        }
        let rhs = -realify(f.as_slice());
        let step = real_embedding(&j)
            .lu()
            .solve(&rhs)
            .ok_or(Error::SingularJacobian { ratio })?;
        let step = linalg::complexify(&step);

        let merit = f.norm();
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<Complex64> = u.iter().zip(&step).map(|(a, b)| a + b * lambda).collect();
            let f_trial = system.eval(&trial)? - ybar;
            if f_trial.norm() < merit {
                accepted = Some((trial, f_trial));
                break;
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((next, f_next)) => {
                u = next;
                f = f_next;
            }
            None => {
                return Err(Error::NonConvergence {
                    iterations: iter + 1,
                    residual: res,
                })
            }
        }
    }
    unreachable!("loop returns on its last iteration")
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveResult {
    /// Distinct converged roots.
    pub solutions: Vec<Vec<Complex64>>,
    pub residuals: Vec<f64>,
    pub iterations: Vec<usize>,
    pub distinct_count: usize,
    pub bezout_cap: u128,
    pub starts: usize,
    pub converged: usize,
    pub converged_fraction: f64,
    pub singular_failures: usize,
    pub nonconvergence_failures: usize,
    /// Whether a root within [`DEDUP_TOL`] of the known truth was found.
    pub truth_found: Option<bool>,
}

impl SolveResult {
    pub fn within_bezout_cap(&self) -> bool {
        (self.distinct_count as u128) <= self.bezout_cap
    }

    pub const CSV_HEADER: &'static str = "root,component,re,im,residual";

    pub fn roots_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for (i, (root, res)) in self.solutions.iter().zip(&self.residuals).enumerate() {
            for (j, c) in root.iter().enumerate() {
                out.push_str(&format!("{i},{j},{},{},{res:e}\n", c.re, c.im));
            }
        }
        out
    }
}

pub fn max_norm_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Greedy clustering: a root joins the first representative within `tol`.
pub fn dedup(roots: &[Solution], tol: f64) -> Vec<Solution> {
    let mut reps: Vec<Solution> = Vec::new();
    for r in roots {
        if !reps.iter().any(|rep| max_norm_distance(&rep.u, &r.u) <= tol) {
            reps.push(r.clone());
        }
    }
    reps
}

/// Relative size of the perturbation added to the truth for the extra start.
pub const TRUTH_PERTURBATION: f64 = 1e-3;

/// Newton from `starts` Gaussian points (start `i` from stream `(seed, i)`),
/// plus a perturbed copy of `truth` when it is known.
pub fn enumerate_solutions(
    system: &PilotSystem,
    ybar: &CVector,
    starts: usize,
    seed: u64,
    truth: Option<&[Complex64]>,
    opts: &NewtonOptions,
) -> Result<SolveResult> {
    if !system.is_square() {
        return Err(Error::Shape("multistart search needs a square system".into()));
    }
    let m = system.unknowns();
    let mut initial: Vec<Vec<Complex64>> = (0..starts as u64)
        .map(|i| {
            let mut rng = stream(seed, i);
            (0..m).map(|_| complex_normal(&mut rng)).collect()
        })
        .collect();
    if let Some(t) = truth {
        initial.push(perturb(t, TRUTH_PERTURBATION, seed, starts as u64));
    }

    let outcomes: Vec<Result<Solution>> = initial
        .par_iter()
        .map(|u0| newton_solve(system, ybar, u0, opts))
        .collect();

    let mut converged = Vec::new();
    let (mut singular, mut nonconv) = (0, 0);
    for o in outcomes {
        match o {
            Ok(sol) => converged.push(sol),
            Err(Error::SingularJacobian { .. }) => singular += 1,
            Err(Error::NonConvergence { .. }) => nonconv += 1,
            Err(e) => return Err(e),
        }
    }
    let total = initial.len();
    let n_conv = converged.len();
    let distinct = dedup(&converged, DEDUP_TOL);
    let truth_found = truth.map(|t| distinct.iter().any(|s| max_norm_distance(&s.u, t) <= DEDUP_TOL));
    Ok(SolveResult {
        residuals: distinct.iter().map(|s| s.residual).collect(),
        iterations: distinct.iter().map(|s| s.iterations).collect(),
        distinct_count: distinct.len(),
        solutions: distinct.into_iter().map(|s| s.u).collect(),
        bezout_cap: system.bezout_cap(),
        starts: total,
        converged: n_conv,
        converged_fraction: n_conv as f64 / total as f64,
        singular_failures: singular,
        nonconvergence_failures: nonconv,
        truth_found,
    })
}

/// `u + scale * g` with `g` i.i.d. CN(0, 1) from stream `(seed, index)`.
pub fn perturb(u: &[Complex64], scale: f64, seed: u64, index: u64) -> Vec<Complex64> {
    let mut rng = stream(seed ^ 0xA5A5_5A5A, index);
    u.iter().map(|&v| v + complex_normal(&mut rng) * scale).collect()
}
