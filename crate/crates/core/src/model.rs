//! The block-fading channel
//!
//! ```text
//! y_r = sqrt(rho / T) * sum_t s_{r,t} * diag(z_{r,t}) * x_t + w_r,   r = 1..R
//! ```
//!
//! and its noiseless lift `ybar = B s`, where `B` stacks the vectors
//! `Z_{r,t} x_t` block-diagonally per transmit antenna and `s` stacks the
//! fading coefficients with the receive index running fastest.
//!
//! All indices are zero-based: `t in 0..T`, `r in 0..R`, `n in 0..N`.

use std::collections::BTreeSet;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector};
use crate::rng::{complex_normal, stream};

/// Antenna counts and block length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "R")]
    pub r: usize,
    #[serde(rename = "N")]
    pub n: usize,
}

impl Dims {
    pub fn new(t: usize, r: usize, n: usize) -> Result<Self> {
        let dims = Dims { t, r, n };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t == 0 || self.r == 0 || self.n == 0 {
            return Err(Error::InvalidDims(format!(
                "T, R, N must all be positive (got T={}, R={}, N={})",
                self.t, self.r, self.n
            )));
        }
        Ok(())
    }

    /// Length of the stacked output `y`.
    pub fn rn(&self) -> usize {
        self.r * self.n
    }

    /// Number of fading coefficients.
    pub fn tr(&self) -> usize {
        self.t * self.r
    }

    /// Number of input entries per block.
    pub fn tn(&self) -> usize {
        self.t * self.n
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(T={}, R={}, N={})", self.t, self.r, self.n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum CorrelationKind {
    /// All `z_{r,t}` equal to the all-ones vector: constant block fading.
    Constant,
    /// Entries drawn i.i.d. CN(0, 1) from the given seed.
    GenericRandom { seed: u64 },
    Explicit,
}

/// The deterministic correlation vectors `z_{r,t}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSet {
    dims: Dims,
    /// Row-major over `(r, t)` with `t` fastest; each vector has length `N`.
    z: Vec<Vec<Complex64>>,
    kind: CorrelationKind,
}

impl CorrelationSet {
    pub fn constant(dims: Dims) -> Result<Self> {
        dims.validate()?;
        Ok(CorrelationSet {
            dims,
            z: vec![vec![Complex64::new(1.0, 0.0); dims.n]; dims.tr()],
            kind: CorrelationKind::Constant,
        })
    }

    pub fn generic_random(dims: Dims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = stream(seed, 0);
        let z = (0..dims.tr())
            .map(|_| (0..dims.n).map(|_| complex_normal(&mut rng)).collect())
            .collect();
        Ok(CorrelationSet {
            dims,
            z,
            kind: CorrelationKind::GenericRandom { seed },
        })
    }

    /// `z` is indexed by `r * T + t`, each entry a length-`N` vector.
    pub fn explicit(dims: Dims, z: Vec<Vec<Complex64>>) -> Result<Self> {
        dims.validate()?;
        if z.len() != dims.tr() {
            return Err(Error::Shape(format!(
                "expected {} correlation vectors (R*T), got {}",
                dims.tr(),
                z.len()
            )));
        }
        if let Some((i, v)) = z.iter().enumerate().find(|(_, v)| v.len() != dims.n) {
            return Err(Error::Shape(format!(
                "correlation vector {} has length {}, expected N={}",
                i,
                v.len(),
                dims.n
            )));
        }
        if z.iter().flatten().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Shape("correlation entries must be finite".into()));
        }
        Ok(CorrelationSet {
            dims,
            z,
            kind: CorrelationKind::Explicit,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn kind(&self) -> CorrelationKind {
        self.kind
    }

    pub fn z(&self, r: usize, t: usize) -> &[Complex64] {
        &self.z[r * self.dims.t + t]
    }

    pub fn entry(&self, r: usize, t: usize, n: usize) -> Complex64 {
        self.z[r * self.dims.t + t][n]
    }

    pub(crate) fn set_entry(&mut self, r: usize, t: usize, n: usize, value: Complex64) {
        self.z[r * self.dims.t + t][n] = value;
        self.kind = CorrelationKind::Explicit;
    }

    /// The stacked `RN x T` matrix whose column `t` is `(z_{1,t}; ...; z_{R,t})`.
    pub fn stacked(&self) -> CMatrix {
        let d = self.dims;
        CMatrix::from_fn(d.rn(), d.t, |row, t| self.entry(row / d.n, t, row % d.n))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&CorrelationDoc::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CorrelationDoc = serde_json::from_str(text)?;
        doc.try_into()
    }
}

/// On-disk form: `{"T", "R", "N", "kind", "seed"?, "z": [[[re, im], ...], ...]}`
/// with vectors ordered by `(r, t)` lexicographically, `t` fastest.
#[derive(Debug, Serialize, Deserialize)]
struct CorrelationDoc {
    #[serde(rename = "T")]
    t: usize,
    #[serde(rename = "R")]
    r: usize,
    #[serde(rename = "N")]
    n: usize,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    z: Vec<Vec<[f64; 2]>>,
}

impl From<&CorrelationSet> for CorrelationDoc {
    fn from(set: &CorrelationSet) -> Self {
        let (kind, seed) = match set.kind {
            CorrelationKind::Constant => ("constant", None),
            CorrelationKind::GenericRandom { seed } => ("generic-random", Some(seed)),
            CorrelationKind::Explicit => ("explicit", None),
        };
        CorrelationDoc {
            t: set.dims.t,
            r: set.dims.r,
            n: set.dims.n,
            kind: kind.to_string(),
            seed,
            z: set
                .z
                .iter()
                .map(|v| v.iter().map(|c| [c.re, c.im]).collect())
                .collect(),
        }
    }
}

impl TryFrom<CorrelationDoc> for CorrelationSet {
    type Error = Error;

    fn try_from(doc: CorrelationDoc) -> Result<Self> {
        let dims = Dims::new(doc.t, doc.r, doc.n)?;
        let z = doc
            .z
            .iter()
            .map(|v| v.iter().map(|&[re, im]| Complex64::new(re, im)).collect())
            .collect();
        let mut set = CorrelationSet::explicit(dims, z)?;
        set.kind = match (doc.kind.as_str(), doc.seed) {
            ("constant", _) => {
                if set.z.iter().flatten().any(|&c| c != Complex64::new(1.0, 0.0)) {
                    return Err(Error::Shape(
                        "kind \"constant\" requires every entry to equal 1".into(),
                    ));
                }
                CorrelationKind::Constant
            }
            ("generic-random", Some(seed)) => CorrelationKind::GenericRandom { seed },
            ("generic-random", None) | ("explicit", _) => CorrelationKind::Explicit,
            (other, _) => {
                return Err(Error::Shape(format!("unknown correlation kind {other:?}")));
            }
        };
        Ok(set)
    }
}

/// Fading coefficients `s_{r,t}` as an `R x T` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingDraw {
    s: CMatrix,
}

impl FadingDraw {
    /// `R*T` i.i.d. CN(0, 1) coefficients, drawn in stacked order.
    pub fn draw<G: Rng + ?Sized>(dims: Dims, rng: &mut G) -> Self {
        let stacked: Vec<Complex64> = (0..dims.tr()).map(|_| complex_normal(rng)).collect();
        Self::from_stacked(dims, &stacked).expect("length matches by construction")
    }

    pub fn from_matrix(s: CMatrix) -> Self {
        FadingDraw { s }
    }

    pub fn zeros(dims: Dims) -> Self {
        FadingDraw {
            s: CMatrix::zeros(dims.r, dims.t),
        }
    }

    /// Inverse of [`FadingDraw::stacked`].
    pub fn from_stacked(dims: Dims, s: &[Complex64]) -> Result<Self> {
        if s.len() != dims.tr() {
            return Err(Error::Shape(format!(
                "stacked fading vector has length {}, expected R*T={}",
                s.len(),
                dims.tr()
            )));
        }
        Ok(FadingDraw {
            s: CMatrix::from_fn(dims.r, dims.t, |r, t| s[t * dims.r + r]),
        })
    }

    pub fn get(&self, r: usize, t: usize) -> Complex64 {
        self.s[(r, t)]
    }

    pub fn set(&mut self, r: usize, t: usize, value: Complex64) {
        self.s[(r, t)] = value;
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.s
    }

    /// `(s_{1,1}, ..., s_{R,1}, s_{1,2}, ..., s_{R,T})`: receive index fastest.
    pub fn stacked(&self) -> Vec<Complex64> {
        let (rows, cols) = self.s.shape();
        (0..cols)
            .flat_map(|t| (0..rows).map(move |r| (r, t)))
            .map(|idx| self.s[idx])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pilot {
    pub t: usize,
    pub n: usize,
    pub value: Complex64,
}

/// Input positions fixed to known values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PilotPattern {
    pilots: Vec<Pilot>,
}

impl PilotPattern {
    pub fn new(pilots: Vec<Pilot>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for p in &pilots {
            if !seen.insert((p.t, p.n)) {
                return Err(Error::Shape(format!(
                    "duplicate pilot position (t={}, n={})",
                    p.t, p.n
                )));
            }
        }
        Ok(PilotPattern { pilots })
    }

    pub fn empty() -> Self {
        PilotPattern::default()
    }

    /// Pilots at the given positions, all with value `1 + 0i`.
    pub fn unit(positions: &[(usize, usize)]) -> Result<Self> {
        Self::new(
            positions
                .iter()
                .map(|&(t, n)| Pilot {
                    t,
                    n,
                    value: Complex64::new(1.0, 0.0),
                })
                .collect(),
        )
    }

    pub fn pilots(&self) -> &[Pilot] {
        &self.pilots
    }

    pub fn positions(&self) -> Vec<(usize, usize)> {
        self.pilots.iter().map(|p| (p.t, p.n)).collect()
    }

    pub fn len(&self) -> usize {
        self.pilots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pilots.is_empty()
    }

    pub fn value_at(&self, t: usize, n: usize) -> Option<Complex64> {
        self.pilots
            .iter()
            .find(|p| p.t == t && p.n == n)
            .map(|p| p.value)
    }

    pub fn check_dims(&self, dims: Dims) -> Result<()> {
        match self.pilots.iter().find(|p| p.t >= dims.t || p.n >= dims.n) {
            Some(p) => Err(Error::Shape(format!(
                "pilot position (t={}, n={}) outside {}",
                p.t, p.n, dims
            ))),
            None => Ok(()),
        }
    }

    /// Non-pilot positions, ordered by antenna then time: `(x_1 data..., x_2 data..., ...)`.
    pub fn data_positions(&self, dims: Dims) -> Vec<(usize, usize)> {
        let pilots: BTreeSet<_> = self.pilots.iter().map(|p| (p.t, p.n)).collect();
        (0..dims.t)
            .flat_map(|t| (0..dims.n).map(move |n| (t, n)))
            .filter(|pos| !pilots.contains(pos))
            .collect()
    }
}

/// Transmitted block `x` (`T x N`, row `t` is `x_t`) with its pilot layout.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBlock {
    x: CMatrix,
    pilots: PilotPattern,
}

impl InputBlock {
    /// All `TN` entries i.i.d. CN(0, 1), then pilot positions overwritten.
    pub fn gaussian<G: Rng + ?Sized>(dims: Dims, pattern: &PilotPattern, rng: &mut G) -> Result<Self> {
        pattern.check_dims(dims)?;
        let mut x = CMatrix::zeros(dims.t, dims.n);
        for t in 0..dims.t {
            for n in 0..dims.n {
                x[(t, n)] = complex_normal(rng);
            }
        }
        for p in pattern.pilots() {
            x[(p.t, p.n)] = p.value;
        }
        Ok(InputBlock {
            x,
            pilots: pattern.clone(),
        })
    }

    /// Wraps an explicit `T x N` matrix; pilot entries must already hold the pilot values.
    pub fn new(x: CMatrix, pilots: PilotPattern) -> Result<Self> {
        let dims_like = Dims {
            t: x.nrows(),
            r: 1,
            n: x.ncols(),
        };
        pilots.check_dims(dims_like)?;
        if let Some(p) = pilots.pilots().iter().find(|p| x[(p.t, p.n)] != p.value) {
            return Err(Error::Shape(format!(
                "input entry (t={}, n={}) disagrees with its pilot value",
                p.t, p.n
            )));
        }
        Ok(InputBlock { x, pilots })
    }

    pub fn zeros(dims: Dims) -> Self {
        InputBlock {
            x: CMatrix::zeros(dims.t, dims.n),
            pilots: PilotPattern::empty(),
        }
    }

    /// Rebuilds a block from pilot values plus data entries in
    /// [`PilotPattern::data_positions`] order.
    pub fn from_data(dims: Dims, pattern: &PilotPattern, data: &[Complex64]) -> Result<Self> {
        pattern.check_dims(dims)?;
        let positions = pattern.data_positions(dims);
        if positions.len() != data.len() {
            return Err(Error::Shape(format!(
                "expected {} data entries, got {}",
                positions.len(),
                data.len()
            )));
        }
        let mut x = CMatrix::zeros(dims.t, dims.n);
        for p in pattern.pilots() {
            x[(p.t, p.n)] = p.value;
        }
        for (&(t, n), &v) in positions.iter().zip(data) {
            x[(t, n)] = v;
        }
        Ok(InputBlock {
            x,
            pilots: pattern.clone(),
        })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.x
    }

    pub fn pilots(&self) -> &PilotPattern {
        &self.pilots
    }

    pub fn get(&self, t: usize, n: usize) -> Complex64 {
        self.x[(t, n)]
    }

    pub fn dims_tn(&self) -> (usize, usize) {
        self.x.shape()
    }

    /// Data entries `x_D` in [`PilotPattern::data_positions`] order.
    pub fn data(&self) -> Vec<Complex64> {
        let dims = Dims {
            t: self.x.nrows(),
            r: 1,
            n: self.x.ncols(),
        };
        self.pilots
            .data_positions(dims)
            .into_iter()
            .map(|idx| self.x[idx])
            .collect()
    }

    pub fn energy(&self) -> f64 {
        self.x.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// `B` with `ybar = B s`: column `t * R + r` holds `Z_{r,t} x_t` in row block `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixMatrix {
    b: CMatrix,
}

impl MixMatrix {
    pub fn build(z: &CorrelationSet, x: &InputBlock) -> Result<Self> {
        let d = z.dims();
        check_input(d, x)?;
        let mut b = CMatrix::zeros(d.rn(), d.tr());
        for t in 0..d.t {
            for r in 0..d.r {
                let zrt = z.z(r, t);
                for n in 0..d.n {
                    b[(r * d.n + n, t * d.r + r)] = zrt[n] * x.get(t, n);
                }
            }
        }
        Ok(MixMatrix { b })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.b
    }

    pub fn into_matrix(self) -> CMatrix {
        self.b
    }
}

pub fn build_mix_matrix(z: &CorrelationSet, x: &InputBlock) -> Result<MixMatrix> {
    MixMatrix::build(z, x)
}

fn check_input(d: Dims, x: &InputBlock) -> Result<()> {
    if x.dims_tn() != (d.t, d.n) {
        return Err(Error::Shape(format!(
            "input block is {:?}, expected T x N = {} x {}",
            x.dims_tn(),
            d.t,
            d.n
        )));
    }
    Ok(())
}

fn check_fading(d: Dims, s: &FadingDraw) -> Result<()> {
    if s.matrix().shape() != (d.r, d.t) {
        return Err(Error::Shape(format!(
            "fading draw is {:?}, expected R x T = {} x {}",
            s.matrix().shape(),
            d.r,
            d.t
        )));
    }
    Ok(())
}

/// Noiseless output `[ybar]_{r N + n} = sum_t s_{r,t} [z_{r,t}]_n [x_t]_n`.
pub fn noiseless(z: &CorrelationSet, x: &InputBlock, s: &FadingDraw) -> Result<CVector> {
    let d = z.dims();
    check_input(d, x)?;
    check_fading(d, s)?;
    Ok(CVector::from_fn(d.rn(), |row, _| {
        let (r, n) = (row / d.n, row % d.n);
        (0..d.t)
            .map(|t| s.get(r, t) * z.entry(r, t, n) * x.get(t, n))
            .sum()
    }))
}

/// One channel output together with its noiseless lift.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub y: CVector,
    pub ybar: CVector,
    pub rho: f64,
}

/// `y = sqrt(rho / T) ybar + w` with `w ~ CN(0, I_RN)` drawn from `rng`.
pub fn simulate<G: Rng + ?Sized>(
    z: &CorrelationSet,
    x: &InputBlock,
    s: &FadingDraw,
    rho: f64,
    rng: &mut G,
) -> Result<Observation> {
    let rn = z.dims().rn();
    let w: Vec<Complex64> = (0..rn).map(|_| complex_normal(rng)).collect();
    simulate_with_noise(z, x, s, rho, &w)
}

/// [`simulate`] with an explicit noise vector.
pub fn simulate_with_noise(
    z: &CorrelationSet,
    x: &InputBlock,
    s: &FadingDraw,
    rho: f64,
    w: &[Complex64],
) -> Result<Observation> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Domain(format!("SNR must be positive and finite, got {rho}")));
    }
    let d = z.dims();
    if w.len() != d.rn() {
        return Err(Error::Shape(format!(
            "noise vector has length {}, expected RN={}",
            w.len(),
            d.rn()
        )));
    }
    let ybar = noiseless(z, x, s)?;
    let gain = (rho / d.t as f64).sqrt();
    let y = CVector::from_fn(d.rn(), |i, _| ybar[i] * gain + w[i]);
    Ok(Observation { y, ybar, rho })
}
