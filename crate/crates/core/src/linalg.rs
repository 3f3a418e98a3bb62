//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Singular values in nonincreasing order.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn numeric_rank(sv: &[f64], rel_tol: f64) -> usize {
    match sv.first() {
        Some(&max) if max > 0.0 => sv.iter().filter(|&&s| s > rel_tol * max).count(),
        _ => 0,
    }
}

/// `sigma_min / sigma_max` over the `min(rows, cols)` singular values; 0 for a zero matrix.
pub fn sigma_ratio(sv: &[f64]) -> f64 {
    match (sv.first(), sv.last()) {
        (Some(&max), Some(&min)) if max > 0.0 => min / max,
        _ => 0.0,
    }
}

/// Natural log of the determinant of a Hermitian positive-definite matrix.
pub fn log_det_hpd(m: &CMatrix) -> Option<f64> {
    let chol = m.clone().cholesky()?;
    let l = chol.l_dirty();
    Some((0..m.nrows()).map(|i| 2.0 * l[(i, i)].norm().ln()).sum())
}

pub fn det(m: &CMatrix) -> Complex64 {
    m.clone().lu().determinant()
}

/// Real `2n x 2m` representation `[[Re, -Im], [Im, Re]]` of a complex matrix.
///
/// For a holomorphic map this is the real Jacobian of the realified map and
/// its determinant equals `|det m|^2`.
pub fn real_embedding(m: &CMatrix) -> DMatrix<f64> {
    let (r, c) = m.shape();
    DMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let z = m[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

pub fn realify(v: &[Complex64]) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

pub fn complexify(v: &DVector<f64>) -> Vec<Complex64> {
    let n = v.len() / 2;
    (0..n).map(|i| Complex64::new(v[i], v[i + n])).collect()
}

/// `|det|` after scaling every row, then every column, to unit max-modulus.
///
/// Removes the arbitrary magnitude of individual entries so that a
/// threshold on the result measures structural nonsingularity.
pub fn scaled_abs_det(m: &CMatrix) -> f64 {
    let mut a = m.clone();
    for mut row in a.row_iter_mut() {
        let s = row.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if s > 0.0 {
            row.unscale_mut(s);
        }
    }
    for mut col in a.column_iter_mut() {
        let s = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if s > 0.0 {
            col.unscale_mut(s);
        }
    }
    det(&a).norm()
}

pub fn max_abs(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_normal, stream};

    fn random(n: usize, m: usize, seed: u64) -> CMatrix {
        let mut rng = stream(seed, 0);
        CMatrix::from_fn(n, m, |_, _| complex_normal(&mut rng))
    }

    #[test]
    fn real_embedding_determinant_is_squared_modulus() {
        for seed in 0..5 {
            let m = random(5, 5, seed);
            let d = det(&m).norm_sqr();
            let dr = real_embedding(&m).determinant();
            assert!((d - dr).abs() <= 1e-10 * d.max(1.0), "{d} vs {dr}");
        }
    }

    #[test]
    fn real_embedding_matches_complex_product() {
        let m = random(4, 3, 11);
        let v: Vec<Complex64> = random(3, 1, 12).iter().copied().collect();
        let direct = &m * CVector::from_vec(v.clone());
        let via_real = complexify(&(real_embedding(&m) * realify(&v)));
        for (a, b) in direct.iter().zip(&via_real) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn log_det_matches_lu() {
        let a = random(4, 4, 3);
        let h = &a * a.adjoint() + CMatrix::identity(4, 4);
        let ld = log_det_hpd(&h).unwrap();
        assert!((ld - det(&h).norm().ln()).abs() < 1e-10);
    }

    #[test]
    fn rank_of_outer_product_is_one() {
        let u = random(4, 1, 5);
        let v = random(1, 3, 6);
        let sv = singular_values(&(u * v));
        assert_eq!(numeric_rank(&sv, 1e-10), 1);
        assert!(sv.windows(2).all(|w| w[0] >= w[1]));
    }
}
