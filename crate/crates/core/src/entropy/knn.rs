use std::num::NonZeroUsize;

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use nalgebra::DMatrix;
use log::warn;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::rng::stream;

pub const DEFAULT_K: usize = 4;

/// Number of disjoint subsets used for the standard error.
const SPLITS: usize = 8;

const JITTER: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
    pub k_neighbors: usize,
}

/// Real sample vectors stored row-major in one buffer.
#[derive(Debug, Clone)]
pub struct Samples {
    dim: usize,
    data: Vec<f64>,
}

impl Samples {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::Shape(format!(
                "buffer of length {} is not a whole number of {dim}-vectors",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("samples must be finite".into()));
        }
        Ok(Samples { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("sample vectors differ in length".into()));
        }
        Self::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn scaled(&self, factor: f64) -> Samples {
        Samples {
            dim: self.dim,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    fn slice(&self, start: usize, end: usize) -> Samples {
        Samples {
            dim: self.dim,
            data: self.data[start * self.dim..end * self.dim].to_vec(),
        }
    }
}

/// Flattens complex vectors `(re_1, im_1, re_2, im_2, ...)`.
pub fn flatten_complex<'a, I>(rows: I, complex_dim: usize) -> Result<Samples>
where
    I: IntoIterator<Item = &'a [Complex64]>,
{
    let mut data = Vec::new();
    for row in rows {
        if row.len() != complex_dim {
            return Err(Error::Shape(format!(
                "complex sample of length {} (expected {complex_dim})",
                row.len()
            )));
        }
        data.extend(row.iter().flat_map(|c| [c.re, c.im]));
    }
    Samples::new(2 * complex_dim, data)
}

/// Kozachenko-Leonenko estimate
///
/// ```text
/// h = psi(n) - psi(k) + log V_d + (d / n) sum_i log eps_i
/// ```
///
/// with `eps_i` the Euclidean distance from sample `i` to its `k`-th nearest
/// neighbor and `V_d` the volume of the unit `d`-ball. The standard error is
/// the spread of the estimates on eight disjoint subsets divided by `sqrt 8`.
pub fn knn_entropy(samples: &Samples, k: usize) -> Result<EntropyEstimate> {
    let n = samples.len();
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if n < k + 1 {
        return Err(Error::InsufficientSamples { needed: k + 1, got: n });
    }
    let value = kl_estimate(samples, k);

    let splits = SPLITS.min(n / (k + 1));
    let std_error = if splits >= 2 {
        let chunk = n / splits;
        let parts: Vec<f64> = (0..splits)
            .map(|i| kl_estimate(&samples.slice(i * chunk, (i + 1) * chunk), k))
            .collect();
        let mean = parts.iter().sum::<f64>() / splits as f64;
        let var = parts.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (splits - 1) as f64;
        (var / splits as f64).sqrt()
    } else {
        0.0
    };

    Ok(EntropyEstimate {
        value,
        std_error,
        samples: n,
        k_neighbors: k,
    })
}

fn kl_estimate(samples: &Samples, k: usize) -> f64 {
    let n = samples.len();
    let d = samples.dim();
    let mut log_dist = kth_neighbor_log_distances(samples, k);
    if log_dist.iter().any(|v| !v.is_finite()) {
        warn!("duplicate samples in kNN entropy estimate; jittering by {JITTER:e}");
        let mut rng = stream(0x7177_E5, n as u64);
        let data = samples
            .data
            .iter()
            .map(|v| v + JITTER * rng.sample::<f64, _>(StandardNormal))
            .collect();
        log_dist = kth_neighbor_log_distances(&Samples { dim: d, data }, k);
    }
    let df = d as f64;
    let log_unit_ball = 0.5 * df * std::f64::consts::PI.ln() - ln_gamma(0.5 * df + 1.0);
    digamma(n as f64) - digamma(k as f64) + log_unit_ball + df * log_dist.iter().sum::<f64>() / n as f64
}

/// `log` of the distance from each sample to its `k`-th nearest other sample.
fn kth_neighbor_log_distances(samples: &Samples, k: usize) -> Vec<f64> {
    macro_rules! dispatch {
        ($($dim:literal),*) => {
            match samples.dim() {
                $($dim => tree_search::<$dim>(samples, k),)*
                _ => blocked_search(samples, k),
            }
        };
    }
    dispatch!(1, 2, 3, 4, 6, 8)
}

fn tree_search<const D: usize>(samples: &Samples, k: usize) -> Vec<f64> {
    let points: Vec<[f64; D]> = samples
        .data
        .chunks_exact(D)
        .map(|c| c.try_into().expect("chunk has length D"))
        .collect();
    let tree: ImmutableKdTree<f64, D> =
        ImmutableKdTree::new_from_slice(&points).expect("finite points build a tree");
    // the query point itself comes back at distance zero
    let want = NonZeroUsize::new(k + 1).expect("k + 1 > 0");
    points
        .par_iter()
        .map(|p| {
            let found = tree.query(p).nearest_n::<SquaredEuclidean<f64>>(want).execute();
            let sq = found.last().map_or(0.0, |item| item.distance);
            0.5 * sq.ln()
        })
        .collect()
}

const QUERY_BLOCK: usize = 256;
const REFERENCE_BLOCK: usize = 4096;

/// Exact search by blocks of pairwise distances `|p|^2 + |q|^2 - 2 p.q`,
/// with the inner products from a matrix product. Used where kd-trees
/// degrade to a linear scan anyway.
fn blocked_search(samples: &Samples, k: usize) -> Vec<f64> {
    let n = samples.len();
    let all = DMatrix::from_column_slice(samples.dim(), n, &samples.data);
    let rows = all.transpose();
    let norms: Vec<f64> = all.column_iter().map(|c| c.norm_squared()).collect();
    let starts: Vec<usize> = (0..n).step_by(QUERY_BLOCK).collect();
    starts
        .par_iter()
        .flat_map_iter(|&q0| {
            let q1 = (q0 + QUERY_BLOCK).min(n);
            let queries = all.columns(q0, q1 - q0);
            let mut best = vec![Neighbors::new(k); q1 - q0];
            for r0 in (0..n).step_by(REFERENCE_BLOCK) {
                let r1 = (r0 + REFERENCE_BLOCK).min(n);
                let gram = rows.rows(r0, r1 - r0) * queries;
                for (qi, list) in best.iter_mut().enumerate() {
                    let i = q0 + qi;
                    for (rj, g) in gram.column(qi).iter().enumerate() {
                        let j = r0 + rj;
                        if j != i {
                            list.offer(norms[i] + norms[j] - 2.0 * g, j);
                        }
                    }
                }
            }
            best.into_iter().enumerate().map(move |(qi, list)| {
                let p = samples.row(q0 + qi);
                // rescore the candidates exactly
                let sq = list
                    .indices()
                    .map(|j| {
                        let q = samples.row(j);
                        p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                    })
                    .fold(0.0, f64::max);
                0.5 * sq.ln()
            })
        })
        .collect()
}

/// The `k` smallest offered distances, kept sorted.
#[derive(Debug, Clone)]
struct Neighbors {
    k: usize,
    items: Vec<(f64, usize)>,
}

impl Neighbors {
    fn new(k: usize) -> Self {
        Neighbors {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    fn offer(&mut self, dist: f64, index: usize) {
        if self.items.len() == self.k && dist >= self.items[self.k - 1].0 {
            return;
        }
        let pos = self.items.partition_point(|&(d, _)| d <= dist);
        self.items.insert(pos, (dist, index));
        self.items.truncate(self.k);
    }

    fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.items.iter().map(|&(_, j)| j)
    }
}
