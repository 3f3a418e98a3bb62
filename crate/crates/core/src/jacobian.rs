//! Jacobian of the pilot-parametrized map `(s, x_D) -> ybar`.
//!
//! With the pilot entries `x_P` held fixed, `ybar` is a degree-2 polynomial
//! in the fading vector `s` and the data entries `x_D`. Its Jacobian is
//! `[B | A]`: the first `TR` columns are the columns of the mix matrix `B`
//! (derivatives with respect to `s`), the remaining ones are derivatives
//! with respect to each data entry `[x_t]_n`, which put `s_{r,t} [z_{r,t}]_n`
//! in row `r N + n` for every receive antenna `r`.
//!
//! Nonsingularity of this matrix at almost every point is what makes the
//! map finite-to-one; [`genericity_test`] samples it and [`witness_point`]
//! builds the explicit certificate point for `(T, R, N) = (2, 3, 4)`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::model::{CorrelationSet, Dims, FadingDraw, InputBlock, MixMatrix, PilotPattern};
use crate::prelog::pilot_count;
use crate::rng::{stream, StreamRng};

/// Singular values at or below `RANK_TOL * sigma_max` count as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Pilot layout used throughout: `(t, t)` for every antenna first, then
/// remaining slots in column-major order (antenna index fastest), all
/// pilot values `1 + 0i`.
pub fn default_pilot_pattern(dims: Dims) -> Result<PilotPattern> {
    pilot_pattern_with_count(dims, pilot_count(dims))
}

pub fn pilot_pattern_with_count(dims: Dims, count: usize) -> Result<PilotPattern> {
    dims.validate()?;
    if count > dims.tn() {
        return Err(Error::Shape(format!(
            "{count} pilots requested but a block has only T*N={} entries",
            dims.tn()
        )));
    }
    let mut positions: Vec<(usize, usize)> = (0..dims.t).map(|t| (t, t % dims.n)).take(count).collect();
    let column_major = (0..dims.n).flat_map(|n| (0..dims.t).map(move |t| (t, n)));
    for pos in column_major {
        if positions.len() >= count {
            break;
        }
        if !positions.contains(&pos) {
            positions.push(pos);
        }
    }
    PilotPattern::unit(&positions)
}

/// Jacobian matrix only; see [`assemble_jacobian`] for diagnostics.
pub fn jacobian_matrix(
    z: &CorrelationSet,
    s: &FadingDraw,
    x: &InputBlock,
    pattern: &PilotPattern,
) -> Result<CMatrix> {
    let d = z.dims();
    pattern.check_dims(d)?;
    let b = MixMatrix::build(z, x)?.into_matrix();
    if s.matrix().shape() != (d.r, d.t) {
        return Err(Error::Shape(format!(
            "fading draw is {:?}, expected {} x {}",
            s.matrix().shape(),
            d.r,
            d.t
        )));
    }
    let data = pattern.data_positions(d);
    let mut j = CMatrix::zeros(d.rn(), d.tr() + data.len());
    j.columns_mut(0, d.tr()).copy_from(&b);
    for (k, &(t, n)) in data.iter().enumerate() {
        let col = d.tr() + k;
        for r in 0..d.r {
            j[(r * d.n + n, col)] = s.get(r, t) * z.entry(r, t, n);
        }
    }
    Ok(j)
}

#[derive(Debug, Clone)]
pub struct JacobianEval {
    pub matrix: CMatrix,
    /// Present only for square Jacobians.
    pub det: Option<Complex64>,
    pub singular_values: Vec<f64>,
    pub rank: usize,
    /// `2 log|det|`; `-inf` when the determinant vanishes, absent when not square.
    pub log_abs_det_sq: Option<f64>,
}

impl JacobianEval {
    pub fn from_matrix(matrix: CMatrix) -> Self {
        let singular_values = linalg::singular_values(&matrix);
        let rank = linalg::numeric_rank(&singular_values, RANK_TOL);
        let det = matrix.is_square().then(|| linalg::det(&matrix));
        let log_abs_det_sq = det.map(|d| {
            let a = d.norm();
            if a > 0.0 {
                2.0 * a.ln()
            } else {
                f64::NEG_INFINITY
            }
        });
        JacobianEval {
            matrix,
            det,
            singular_values,
            rank,
            log_abs_det_sq,
        }
    }

    pub fn is_square(&self) -> bool {
        self.matrix.is_square()
    }

    /// Full column rank at [`RANK_TOL`].
    pub fn full_column_rank(&self) -> bool {
        self.rank == self.matrix.ncols()
    }

    pub fn sigma_ratio(&self) -> f64 {
        linalg::sigma_ratio(&self.singular_values)
    }
}

pub fn assemble_jacobian(
    z: &CorrelationSet,
    s: &FadingDraw,
    x: &InputBlock,
    pattern: &PilotPattern,
) -> Result<JacobianEval> {
    Ok(JacobianEval::from_matrix(jacobian_matrix(z, s, x, pattern)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub abs_det: Option<f64>,
    pub sigma_ratio: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GenericityReport {
    pub dims: Dims,
    pub trials: u64,
    pub rows: usize,
    pub cols: usize,
    pub fraction_nonsingular: f64,
    pub min_sigma_ratio: f64,
    /// Sample mean of `log|det J|^2`; absent for non-square Jacobians.
    #[serde(serialize_with = "ser_log_stat")]
    pub mean_log_abs_det_sq: Option<f64>,
    #[serde(skip)]
    pub per_trial: Vec<TrialRecord>,
}

impl GenericityReport {
    pub const CSV_HEADER: &'static str = "trial,abs_det,sigma_ratio,rank";

    pub fn csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for rec in &self.per_trial {
            out.push_str(&format!(
                "{},{},{:e},{}\n",
                rec.trial,
                rec.abs_det.map(|d| format!("{d:e}")).unwrap_or_default(),
                rec.sigma_ratio,
                rec.rank
            ));
        }
        out
    }
}

fn ser_log_stat<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_finite() => s.serialize_f64(*x),
        Some(_) => s.serialize_str("-inf"),
        None => s.serialize_none(),
    }
}

/// Draws one Gaussian point `(s, x)` with pilots overwritten.
pub fn random_point(dims: Dims, pattern: &PilotPattern, rng: &mut StreamRng) -> Result<(FadingDraw, InputBlock)> {
    let s = FadingDraw::draw(dims, rng);
    let x = InputBlock::gaussian(dims, pattern, rng)?;
    Ok((s, x))
}

/// Samples the Jacobian at `trials` i.i.d. Gaussian points `(s, x_D)` with
/// the pilots of `pattern` held fixed. Trial `i` uses stream `(seed, i)`.
pub fn genericity_test(
    z: &CorrelationSet,
    pattern: &PilotPattern,
    trials: u64,
    seed: u64,
) -> Result<GenericityReport> {
    if trials == 0 {
        return Err(Error::Config("genericity test needs at least one trial".into()));
    }
    let dims = z.dims();
    pattern.check_dims(dims)?;
    let rows = dims.rn();
    let cols = dims.tr() + dims.tn() - pattern.len();

    let per_trial = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<(TrialRecord, Option<f64>, bool)> {
            let mut rng = stream(seed, trial);
            let (s, x) = random_point(dims, pattern, &mut rng)?;
            let eval = assemble_jacobian(z, &s, &x, pattern)?;
            Ok((
                TrialRecord {
                    trial,
                    abs_det: eval.det.map(|d| d.norm()),
                    sigma_ratio: eval.sigma_ratio(),
                    rank: eval.rank,
                },
                eval.log_abs_det_sq,
                eval.full_column_rank(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let nonsingular = per_trial.iter().filter(|(_, _, ok)| *ok).count();
    let min_sigma_ratio = per_trial
        .iter()
        .map(|(rec, _, _)| rec.sigma_ratio)
        .fold(f64::INFINITY, f64::min);
    let mean_log_abs_det_sq = if rows == cols {
        Some(per_trial.iter().map(|(_, l, _)| l.unwrap_or(f64::NEG_INFINITY)).sum::<f64>() / trials as f64)
    } else {
        None
    };

    Ok(GenericityReport {
        dims,
        trials,
        rows,
        cols,
        fraction_nonsingular: nonsingular as f64 / trials as f64,
        min_sigma_ratio,
        mean_log_abs_det_sq,
        per_trial: per_trial.into_iter().map(|(rec, _, _)| rec).collect(),
    })
}

/// Explicit point `(Z~, s~, x~)` with a nonsingular Jacobian at `(2, 3, 4)`.
#[derive(Debug, Clone)]
pub struct WitnessPoint {
    pub z: CorrelationSet,
    pub s: FadingDraw,
    pub x: InputBlock,
    pub pattern: PilotPattern,
}

/// `(r, t, n)` entries of `Z~` forced to zero (zero-based).
pub const WITNESS_Z_ZEROS: [(usize, usize, usize); 4] = [(2, 1, 2), (2, 0, 3), (2, 1, 0), (2, 0, 1)];
/// `(r, t)` fading coefficients forced to zero (zero-based).
pub const WITNESS_S_ZEROS: [(usize, usize); 2] = [(0, 1), (1, 0)];

/// Entries that must be nonzero for the two Laplace expansions to go through.
const WITNESS_Z_NONZERO: [(usize, usize, usize); 8] = [
    (2, 0, 0),
    (2, 0, 2),
    (2, 1, 1),
    (2, 1, 3),
    (0, 0, 1),
    (0, 0, 3),
    (1, 1, 0),
    (1, 1, 2),
];
const WITNESS_S_NONZERO: [(usize, usize); 4] = [(2, 0), (2, 1), (0, 0), (1, 1)];

/// Entries that make the residual 4x4 block
/// `[[z111 x11, z121 x21], [z113 x13, z123 x23]] (+) [[z212 x12, z222 x22], [z214 x14, z224 x24]]`
/// nonsingular when every input entry equals one (one-based labels).
const WITNESS_RESIDUAL: [((usize, usize, usize), f64); 8] = [
    ((0, 0, 0), 1.0),
    ((0, 0, 2), 1.0),
    ((0, 1, 0), 1.0),
    ((0, 1, 2), 2.0),
    ((1, 0, 1), 1.0),
    ((1, 0, 3), 1.0),
    ((1, 1, 1), 1.0),
    ((1, 1, 3), 2.0),
];

const WITNESS_SEED: u64 = 0x5EED_0F_F1_61;

/// Minimum accepted `|det|` after row/column equilibration.
pub const WITNESS_DET_FLOOR: f64 = 1e-6;

pub fn witness_point(dims: Dims) -> Result<WitnessPoint> {
    if (dims.t, dims.r, dims.n) != (2, 3, 4) {
        return Err(Error::Unsupported {
            t: dims.t,
            r: dims.r,
            n: dims.n,
            reason: "the witness construction exists only for T=2, R=3, N=4",
        });
    }
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);

    // unconstrained entries stay generic
    let mut z = CorrelationSet::generic_random(dims, WITNESS_SEED)?;
    for &(r, t, n) in &WITNESS_Z_ZEROS {
        z.set_entry(r, t, n, zero);
    }
    for &(r, t, n) in &WITNESS_Z_NONZERO {
        z.set_entry(r, t, n, one);
    }
    for &((r, t, n), v) in &WITNESS_RESIDUAL {
        z.set_entry(r, t, n, Complex64::new(v, 0.0));
    }

    let mut s = FadingDraw::zeros(dims);
    for &(r, t) in &WITNESS_S_NONZERO {
        s.set(r, t, one);
    }

    let pattern = default_pilot_pattern(dims)?;
    let data = vec![one; dims.tn() - pattern.len()];
    let x = InputBlock::from_data(dims, &pattern, &data)?;

    let point = WitnessPoint { z, s, x, pattern };
    let det = point.scaled_abs_det()?;
    if det <= WITNESS_DET_FLOOR {
        return Err(Error::Assertion(format!(
            "witness Jacobian is singular (scaled |det| = {det:e})"
        )));
    }
    Ok(point)
}

impl WitnessPoint {
    pub fn jacobian(&self) -> Result<JacobianEval> {
        assemble_jacobian(&self.z, &self.s, &self.x, &self.pattern)
    }

    pub fn scaled_abs_det(&self) -> Result<f64> {
        Ok(linalg::scaled_abs_det(&jacobian_matrix(
            &self.z,
            &self.s,
            &self.x,
            &self.pattern,
        )?))
    }

    /// The forced zeros hold exactly and the required entries are nonzero.
    pub fn zero_pattern_holds(&self) -> bool {
        let zero = Complex64::new(0.0, 0.0);
        WITNESS_Z_ZEROS.iter().all(|&(r, t, n)| self.z.entry(r, t, n) == zero)
            && WITNESS_S_ZEROS.iter().all(|&(r, t)| self.s.get(r, t) == zero)
            && WITNESS_Z_NONZERO.iter().all(|&(r, t, n)| self.z.entry(r, t, n) != zero)
            && WITNESS_S_NONZERO.iter().all(|&(r, t)| self.s.get(r, t) != zero)
            && self.pattern.pilots().iter().all(|p| p.value != zero)
    }
}
