//! Small dense linear-algebra helpers shared by the checkers and solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Tolerance on `| |v| - 1 |` for a vector to count as a unit normal.
pub const UNIT_TOL: f64 = 1e-12;

pub fn check_unit(v: &DVector<f64>) -> Result<()> {
    let norm = v.norm();
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(Error::NonUnitNormal { norm });
    }
    Ok(())
}

pub fn unit_axis(dim: usize, i: usize) -> DVector<f64> {
    let mut e = DVector::zeros(dim);
    e[i] = 1.0;
    e
}

/// Splits `ᵗM ν` into its component along `ν` and the orthogonal residual.
///
/// Returns `(g, f)` with `ᵗM ν = g ν + f` and `(f, ν) = 0`.
pub fn left_split(m: &DMatrix<f64>, nu: &DVector<f64>) -> (f64, DVector<f64>) {
    let w = m.tr_mul(nu);
    let g = w.dot(nu);
    let mut f = w - nu * g;
    // one re-orthogonalization pass keeps (f, ν) at rounding level
    let drift = f.dot(nu);
    f -= nu * drift;
    (g, f)
}

/// Smallest eigenvalue of the symmetric part of a square matrix.
pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

/// Singular values in non-increasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Orthonormal basis of the numerical null space of `m` (columns), using a
/// relative singular-value threshold.
pub fn null_space(m: &DMatrix<f64>, rel_tol: f64) -> Vec<DVector<f64>> {
    let cols = m.ncols();
    // pad to at least square so that SVD returns a full right basis
    let rows = m.nrows().max(cols);
    let mut padded = DMatrix::zeros(rows, cols);
    padded.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    let smax = svd.singular_values.max();
    let cutoff = rel_tol * smax.max(f64::MIN_POSITIVE);
    (0..cols)
        .filter(|&i| svd.singular_values[i] <= cutoff)
        .map(|i| v_t.row(i).transpose())
        .collect()
}

/// Determinant of the matrix whose columns are the given vectors.
pub fn det_of_columns(cols: &[&DVector<f64>]) -> f64 {
    let dim = cols.len();
    let mut m = DMatrix::zeros(dim, dim);
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m.determinant()
}

/// Calls `visit` on every `k`-subset of `0..n` in lexicographic order.
/// Stops early if `visit` returns `false`.
pub fn for_each_subset(n: usize, k: usize, mut visit: impl FnMut(&[usize]) -> bool) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        if !visit(&idx) {
            return;
        }
        let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653; // π(3 − √5)
const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Deterministic quasi-uniform points on the unit sphere of `ℝ^dim`.
///
/// `dim = 1` yields `{+1, -1}`; `dim = 2` equally spaced angles starting at
/// the first axis; `dim = 3` a Fibonacci lattice; higher dimensions map a
/// Halton sequence through Box–Muller and normalize.
pub fn sphere_points(dim: usize, count: usize) -> Vec<DVector<f64>> {
    match dim {
        0 => Vec::new(),
        1 => vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
        2 => (0..count)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / count as f64;
                DVector::from_vec(vec![t.cos(), t.sin()])
            })
            .collect(),
        3 => (0..count)
            .map(|k| {
                let z = 1.0 - (2.0 * k as f64 + 1.0) / count as f64;
                let r = (1.0 - z * z).max(0.0).sqrt();
                let phi = GOLDEN_ANGLE * k as f64;
                DVector::from_vec(vec![r * phi.cos(), r * phi.sin(), z])
            })
            .collect(),
        _ => {
            assert!(2 * dim.div_ceil(2) <= PRIMES.len(), "sphere_points: dim too large");
            let pairs = dim.div_ceil(2);
            (1..=count as u64)
                .map(|i| {
                    let mut v = Vec::with_capacity(2 * pairs);
                    for p in 0..pairs {
                        let u1 = radical_inverse(i, PRIMES[2 * p]).max(1e-12);
                        let u2 = radical_inverse(i, PRIMES[2 * p + 1]);
                        let r = (-2.0 * u1.ln()).sqrt();
                        let t = std::f64::consts::TAU * u2;
                        v.push(r * t.cos());
                        v.push(r * t.sin());
                    }
                    v.truncate(dim);
                    let v = DVector::from_vec(v);
                    let n = v.norm();
                    v / n
                })
                .collect()
        }
    }
}

/// Packed index of the pair `(j, k)` (any order) in the upper-triangular
/// enumeration `(0,0), (0,1), …, (0,n-1), (1,1), …, (n-1,n-1)`.
pub fn packed_index(n: usize, j: usize, k: usize) -> usize {
    let (a, b) = if j <= k { (j, k) } else { (k, j) };
    a * n - a * (a + 1) / 2 + b
}

/// The pairs `(j, k)`, `j <= k`, in packed order.
pub fn packed_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for k in j..n {
            out.push((j, k));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packed_index_matches_enumeration() {
        for n in 1..5 {
            for (i, (j, k)) in packed_pairs(n).into_iter().enumerate() {
                assert_eq!(packed_index(n, j, k), i);
                assert_eq!(packed_index(n, k, j), i);
            }
        }
    }

    #[test]
    fn subsets_are_enumerated_once() {
        let mut seen = Vec::new();
        for_each_subset(5, 3, |s| {
            seen.push(s.to_vec());
            true
        });
        assert_eq!(seen.len(), 10);
        assert_eq!(seen.first().unwrap(), &vec![0, 1, 2]);
        assert_eq!(seen.last().unwrap(), &vec![2, 3, 4]);
        let mut one = 0;
        for_each_subset(3, 3, |_| {
            one += 1;
            true
        });
        assert_eq!(one, 1);
    }

    #[test]
    fn sphere_points_are_unit() {
        for dim in 1..7 {
            for p in sphere_points(dim, 40) {
                assert!((p.norm() - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn split_is_orthogonal() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, -1.0, 0.5, 3.0, 0.0, 4.0, -2.0, 1.0]);
        let nu = DVector::from_vec(vec![1.0, 2.0, 2.0]) / 3.0;
        let (g, f) = left_split(&m, &nu);
        assert!(f.dot(&nu).abs() < 1e-14);
        let w = m.tr_mul(&nu);
        assert!((w - (&nu * g + f)).norm() < 1e-14);
    }

    #[test]
    fn null_space_of_rank_deficient() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let ns = null_space(&m, 1e-10);
        assert_eq!(ns.len(), 1);
        assert!((ns[0][2].abs() - 1.0).abs() < 1e-12);
    }
}
