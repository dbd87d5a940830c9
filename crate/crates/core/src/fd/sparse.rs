//! Compressed sparse rows and the three linear solvers used by the grid
//! problems: banded LU with partial pivoting, BiCGSTAB with a block-Jacobi
//! preconditioner and Gauss–Seidel sweeps.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds an `n × n` matrix from triplets, summing duplicates and
    /// dropping exact zeros.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().expect("merged entry") += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut m = CsrMatrix {
            n,
            row_ptr,
            cols,
            vals,
        };
        m.drop_zeros();
        m
    }

    fn drop_zeros(&mut self) {
        let mut row_ptr = vec![0; self.n + 1];
        let mut cols = Vec::with_capacity(self.cols.len());
        let mut vals = Vec::with_capacity(self.vals.len());
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.vals[k] != 0.0 {
                    cols.push(self.cols[k]);
                    vals.push(self.vals[k]);
                }
            }
            row_ptr[r + 1] = cols.len();
        }
        self.row_ptr = row_ptr;
        self.cols = cols;
        self.vals = vals;
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(j, _)| j == c).map_or(0.0, |(_, v)| v)
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            *out = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    /// `‖b − A x‖₂`.
    pub fn residual_norm(&self, x: &[f64], b: &[f64]) -> f64 {
        (0..self.n)
            .map(|r| {
                let ax: f64 = self.row(r).map(|(c, v)| v * x[c]).sum();
                (b[r] - ax).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    /// `(kl, ku)`: numbers of sub- and super-diagonals.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for r in 0..self.n {
            for (c, _) in self.row(r) {
                if c < r {
                    kl = kl.max(r - c);
                } else {
                    ku = ku.max(c - r);
                }
            }
        }
        (kl, ku)
    }
}

/// LU factors of a band matrix with partial pivoting, kept in product form
/// `P₁ L₁ ⋯ P_{n−1} L_{n−1} U`.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    width: usize,
    /// Row `i` holds columns `i − kl ..= i + kl + ku`.
    data: Vec<f64>,
    mult: Vec<f64>,
    piv: Vec<usize>,
}

impl BandedLu {
    /// Storage needed for a matrix of size `n` with the given bandwidths.
    pub fn storage(n: usize, kl: usize, ku: usize) -> usize {
        n * (2 * kl + ku + 1)
    }

    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.dim();
        let (kl, ku) = a.bandwidths();
        let width = 2 * kl + ku + 1;
        let mut data = vec![0.0; n * width];
        for r in 0..n {
            for (c, v) in a.row(r) {
                data[r * width + c + kl - r] = v;
            }
        }
        let mut mult = vec![0.0; n * kl.max(1)];
        let mut piv = vec![0; n];
        let scale = a.vals.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        for i in 0..n {
            let last_row = (i + kl).min(n - 1);
            let last_col = (i + kl + ku).min(n - 1);
            let at = |r: usize, c: usize| r * width + c + kl - r;
            let mut p = i;
            let mut best = data[at(i, i)].abs();
            for r in i + 1..=last_row {
                let v = data[at(r, i)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best <= f64::EPSILON * scale * 1e-3 {
                return Err(Error::Singular(format!("zero pivot in column {i}")));
            }
            piv[i] = p;
            if p != i {
                for c in i..=last_col {
                    data.swap(at(i, c), at(p, c));
                }
            }
            let pivot = data[at(i, i)];
            for r in i + 1..=last_row {
                let l = data[at(r, i)] / pivot;
                mult[i * kl + (r - i - 1)] = l;
                data[at(r, i)] = 0.0;
                if l != 0.0 {
                    let (src, dst) = (at(i, i + 1), at(r, i + 1));
                    let len = last_col - i;
                    // rows i and r are disjoint slices of `data`
                    let (head, tail) = data.split_at_mut(dst);
                    let src_row = &head[src..src + len];
                    for (d, s) in tail[..len].iter_mut().zip(src_row) {
                        *d -= l * s;
                    }
                }
            }
        }
        Ok(BandedLu {
            n,
            kl,
            width,
            data,
            mult,
            piv,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, kl, w) = (self.n, self.kl, self.width);
        let mut x = b.to_vec();
        for i in 0..n {
            let p = self.piv[i];
            if p != i {
                x.swap(i, p);
            }
            let xi = x[i];
            if xi != 0.0 {
                for r in i + 1..=(i + kl).min(n - 1) {
                    x[r] -= self.mult[i * kl + (r - i - 1)] * xi;
                }
            }
        }
        let ku_total = w - 1 - kl;
        for i in (0..n).rev() {
            let row = &self.data[i * w..(i + 1) * w];
            let mut s = x[i];
            for c in i + 1..=(i + ku_total).min(n - 1) {
                s -= row[c + kl - i] * x[c];
            }
            x[i] = s / row[kl];
        }
        x
    }
}

/// Inverses of the `block × block` diagonal blocks.
#[derive(Debug, Clone)]
pub struct BlockJacobi {
    block: usize,
    inv: Vec<DMatrix<f64>>,
}

impl BlockJacobi {
    pub fn new(a: &CsrMatrix, block: usize) -> Result<Self> {
        let blocks = a.dim() / block;
        let mut inv = Vec::with_capacity(blocks);
        for b in 0..blocks {
            let d = DMatrix::from_fn(block, block, |i, j| a.get(b * block + i, b * block + j));
            inv.push(
                d.try_inverse()
                    .ok_or_else(|| Error::Singular(format!("diagonal block {b}")))?,
            );
        }
        Ok(BlockJacobi { block, inv })
    }

    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let k = self.block;
        for (b, m) in self.inv.iter().enumerate() {
            for i in 0..k {
                z[b * k + i] = (0..k).map(|j| m[(i, j)] * r[b * k + j]).sum();
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Right-preconditioned BiCGSTAB. Returns the iteration count.
pub fn bicgstab(
    a: &CsrMatrix,
    pre: &BlockJacobi,
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    max_iterations: usize,
) -> Result<usize> {
    let n = a.dim();
    let bnorm = norm(b).max(f64::MIN_POSITIVE);
    let mut r = vec![0.0; n];
    a.mul_vec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    if norm(&r) <= rtol * bnorm {
        return Ok(0);
    }
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut res = norm(&r) / bnorm;
    for it in 1..=max_iterations {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(Error::NoConvergence {
                iterations: it,
                residual: res,
            });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        pre.apply(&p, &mut phat);
        a.mul_vec(&phat, &mut v);
        alpha = rho / dot(&r0, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= rtol * bnorm {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            return Ok(it);
        }
        pre.apply(&s, &mut shat);
        a.mul_vec(&shat, &mut t);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        res = norm(&r) / bnorm;
        if res <= rtol {
            return Ok(it);
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iterations,
        residual: res,
    })
}

/// Forward Gauss–Seidel sweeps until the relative residual drops below
/// `rtol`. Converges for diagonally dominant rows.
pub fn gauss_seidel(a: &CsrMatrix, b: &[f64], x: &mut [f64], rtol: f64, max_iterations: usize) -> Result<usize> {
    let n = a.dim();
    let bnorm = norm(b).max(f64::MIN_POSITIVE);
    let mut res = a.residual_norm(x, b) / bnorm;
    if res <= rtol {
        return Ok(0);
    }
    for it in 1..=max_iterations {
        for r in 0..n {
            let mut diag = 0.0;
            let mut s = b[r];
            for (c, v) in a.row(r) {
                if c == r {
                    diag = v;
                } else {
                    s -= v * x[c];
                }
            }
            if diag == 0.0 {
                return Err(Error::Singular(format!("zero diagonal in row {r}")));
            }
            x[r] = s / diag;
        }
        // the residual is only checked every few sweeps
        if it % 10 == 0 || it == max_iterations {
            res = a.residual_norm(x, b) / bnorm;
            if !res.is_finite() {
                break;
            }
            if res <= rtol {
                return Ok(it);
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iterations,
        residual: res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -2.0));
            }
        }
        CsrMatrix::from_triplets(n, t)
    }

    #[test]
    fn duplicates_are_summed() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, 1.0), (1, 0, -1.0)]);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.nnz(), 1);
    }

    #[test]
    fn banded_lu_matches_dense_solve() {
        let n = 30;
        let mut t = Vec::new();
        for i in 0..n {
            for d in 0..4usize {
                if i + d < n {
                    t.push((i, i + d, ((i * 7 + d * 3) % 5) as f64 - 2.0));
                }
                if i > d && d < 2 {
                    t.push((i, i - d - 1, ((i * 3 + d) % 7) as f64 - 3.0));
                }
            }
            t.push((i, i, 0.1));
        }
        let a = CsrMatrix::from_triplets(n, t);
        let dense = DMatrix::from_fn(n, n, |i, j| a.get(i, j));
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = BandedLu::factor(&a).unwrap().solve(&b);
        let expected = dense.lu().solve(&nalgebra::DVector::from_vec(b.clone())).unwrap();
        for i in 0..n {
            assert!((x[i] - expected[i]).abs() < 1e-9 * (1.0 + expected[i].abs()));
        }
    }

    #[test]
    fn iterative_solvers_converge_on_dominant_matrix() {
        let a = tridiag(50);
        let b: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let pre = BlockJacobi::new(&a, 2).unwrap();
        let mut x = vec![0.0; 50];
        bicgstab(&a, &pre, &b, &mut x, 1e-12, 500).unwrap();
        assert!(a.residual_norm(&x, &b) <= 1e-11 * norm(&b));
        let mut y = vec![0.0; 50];
        gauss_seidel(&a, &b, &mut y, 1e-12, 5000).unwrap();
        assert!(a.residual_norm(&y, &b) <= 1e-11 * norm(&b));
    }
}
