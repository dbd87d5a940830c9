//! Coefficient tensors of second-order systems
//! `Σ A_jk ∂²u/∂x_j∂x_k + Σ A_j ∂u/∂x_j = 0` and their quasilinear variant
//! `Σ B_jk(x, Du) ∂²u/∂x_j∂x_k = 0`.
//!
//! Second-order tensors are stored packed over `j ≤ k` (see
//! [`packed_index`](crate::linalg::packed_index)), so `A_jk = A_kj` holds by
//! construction.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{packed_index, packed_pairs};

/// Spatially varying matrix family `x ↦ [M_0(x), M_1(x), …]`.
pub type MatrixFieldFn = Arc<dyn Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync>;

/// Quasilinear family `(x, η) ↦ [B_jk(x, η)]` in packed order, where
/// `η = (∂_1 u_1, …, ∂_n u_1, ∂_1 u_2, …, ∂_n u_m) ∈ ℝ^{mn}`.
pub type QuasilinearFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<DMatrix<f64>> + Send + Sync>;

/// Default bound on coefficient entries.
pub const DEFAULT_COEFFICIENT_BOUND: f64 = 1e12;

#[derive(Clone)]
pub enum MatrixField {
    Constant(Vec<DMatrix<f64>>),
    Sampled(MatrixFieldFn),
}

impl fmt::Debug for MatrixField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixField::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            MatrixField::Sampled(_) => f.write_str("Sampled(..)"),
        }
    }
}

impl MatrixField {
    fn eval(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        match self {
            MatrixField::Constant(v) => v.clone(),
            MatrixField::Sampled(f) => f(x),
        }
    }

    fn left_multiply(&self, p: &DMatrix<f64>) -> MatrixField {
        match self {
            MatrixField::Constant(v) => MatrixField::Constant(v.iter().map(|a| p * a).collect()),
            MatrixField::Sampled(f) => {
                let f = f.clone();
                let p = p.clone();
                MatrixField::Sampled(Arc::new(move |x| f(x).iter().map(|a| &p * a).collect()))
            }
        }
    }
}

#[derive(Clone)]
pub struct SystemCoefficients {
    n: usize,
    m: usize,
    second_order: MatrixField,
    first_order: Option<MatrixField>,
    quasilinear: Option<QuasilinearFn>,
    bound: f64,
}

impl fmt::Debug for SystemCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemCoefficients")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("second_order", &self.second_order)
            .field("first_order", &self.first_order)
            .field("quasilinear", &self.quasilinear.is_some())
            .finish()
    }
}

fn check_square(mats: &[DMatrix<f64>], m: usize, what: &str) -> Result<()> {
    for (i, a) in mats.iter().enumerate() {
        if a.nrows() != m || a.ncols() != m {
            return Err(Error::Dimension(format!(
                "{what}[{i}] is {}x{}, expected {m}x{m}",
                a.nrows(),
                a.ncols()
            )));
        }
    }
    Ok(())
}

impl SystemCoefficients {
    /// Constant second-order coefficients in packed `j ≤ k` order.
    pub fn constant(n: usize, m: usize, packed: Vec<DMatrix<f64>>) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::Dimension("n and m must be positive".into()));
        }
        if packed.len() != n * (n + 1) / 2 {
            return Err(Error::Dimension(format!(
                "expected {} second-order matrices, got {}",
                n * (n + 1) / 2,
                packed.len()
            )));
        }
        check_square(&packed, m, "A2")?;
        let out = SystemCoefficients {
            n,
            m,
            second_order: MatrixField::Constant(packed),
            first_order: None,
            quasilinear: None,
            bound: DEFAULT_COEFFICIENT_BOUND,
        };
        out.check_finite(&[])?;
        Ok(out)
    }

    /// Constant coefficients from the full `n × n` array `full[j][k]`, which
    /// must be symmetric in `(j, k)`.
    pub fn from_full(n: usize, m: usize, full: &[Vec<DMatrix<f64>>]) -> Result<Self> {
        if full.len() != n || full.iter().any(|row| row.len() != n) {
            return Err(Error::Dimension("full coefficient array must be n x n".into()));
        }
        for j in 0..n {
            for k in j + 1..n {
                if full[j][k] != full[k][j] {
                    return Err(Error::InvalidInput(format!(
                        "A_{j}{k} differs from A_{k}{j}; symmetrize as (A_jk + A_kj)/2"
                    )));
                }
            }
        }
        let packed = packed_pairs(n).into_iter().map(|(j, k)| full[j][k].clone()).collect();
        Self::constant(n, m, packed)
    }

    /// `Σ A_jk ∂_j∂_k` with `A_jk = δ_jk I_m`.
    pub fn laplacian(n: usize, m: usize) -> Self {
        let packed = packed_pairs(n)
            .into_iter()
            .map(|(j, k)| if j == k { DMatrix::identity(m, m) } else { DMatrix::zeros(m, m) })
            .collect();
        Self::constant(n, m, packed).expect("laplacian is well formed")
    }

    /// Spatially sampled second-order coefficients (packed order).
    pub fn sampled(n: usize, m: usize, field: MatrixFieldFn) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::Dimension("n and m must be positive".into()));
        }
        Ok(SystemCoefficients {
            n,
            m,
            second_order: MatrixField::Sampled(field),
            first_order: None,
            quasilinear: None,
            bound: DEFAULT_COEFFICIENT_BOUND,
        })
    }

    /// Quasilinear system `Σ B_jk(x, Du) ∂_j∂_k u = 0`. The linear view of the
    /// coefficients (`second_order_at`) freezes `η = 0`.
    pub fn quasilinear(n: usize, m: usize, field: QuasilinearFn) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::Dimension("n and m must be positive".into()));
        }
        let zero = vec![0.0; n * m];
        let frozen = field.clone();
        Ok(SystemCoefficients {
            n,
            m,
            second_order: MatrixField::Sampled(Arc::new(move |x| frozen(x, &zero))),
            first_order: None,
            quasilinear: Some(field),
            bound: DEFAULT_COEFFICIENT_BOUND,
        })
    }

    pub fn with_first_order(mut self, first: Vec<DMatrix<f64>>) -> Result<Self> {
        if first.len() != self.n {
            return Err(Error::Dimension(format!(
                "expected {} first-order matrices, got {}",
                self.n,
                first.len()
            )));
        }
        check_square(&first, self.m, "A1")?;
        self.first_order = Some(MatrixField::Constant(first));
        self.check_finite(&[])?;
        Ok(self)
    }

    pub fn with_first_order_field(mut self, field: MatrixFieldFn) -> Self {
        self.first_order = Some(MatrixField::Sampled(field));
        self
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = bound;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn has_first_order(&self) -> bool {
        self.first_order.is_some()
    }

    pub fn is_quasilinear(&self) -> bool {
        self.quasilinear.is_some()
    }

    /// True when the coefficients do not depend on `x` (and there is no
    /// quasilinear part).
    pub fn is_constant(&self) -> bool {
        self.quasilinear.is_none()
            && matches!(self.second_order, MatrixField::Constant(_))
            && !matches!(self.first_order, Some(MatrixField::Sampled(_)))
    }

    /// The packed constant second-order tensor, if constant.
    pub fn constant_second_order(&self) -> Option<&[DMatrix<f64>]> {
        match (&self.second_order, &self.quasilinear) {
            (MatrixField::Constant(v), None) => Some(v),
            _ => None,
        }
    }

    fn validate(&self, mats: &[DMatrix<f64>], expected: usize, what: &str, x: &[f64]) -> Result<()> {
        if mats.len() != expected {
            return Err(Error::BadCoefficient {
                location: format!("{what} at x = {x:?}: expected {expected} matrices, got {}", mats.len()),
            });
        }
        for (i, a) in mats.iter().enumerate() {
            if a.nrows() != self.m || a.ncols() != self.m {
                return Err(Error::BadCoefficient {
                    location: format!("{what}[{i}] at x = {x:?}: wrong shape"),
                });
            }
            if a.iter().any(|v| !v.is_finite() || v.abs() > self.bound) {
                return Err(Error::BadCoefficient {
                    location: format!("{what}[{i}] at x = {x:?}"),
                });
            }
        }
        Ok(())
    }

    fn check_finite(&self, x: &[f64]) -> Result<()> {
        if let MatrixField::Constant(v) = &self.second_order {
            self.validate(v, self.n * (self.n + 1) / 2, "A2", x)?;
        }
        if let Some(MatrixField::Constant(v)) = &self.first_order {
            self.validate(v, self.n, "A1", x)?;
        }
        Ok(())
    }

    /// Packed second-order matrices at `x`.
    pub fn second_order_at(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        let v = self.second_order.eval(x);
        self.validate(&v, self.n * (self.n + 1) / 2, "A2", x)?;
        Ok(v)
    }

    /// First-order matrices at `x` (empty when the system has none).
    pub fn first_order_at(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        match &self.first_order {
            None => Ok(Vec::new()),
            Some(field) => {
                let v = field.eval(x);
                self.validate(&v, self.n, "A1", x)?;
                Ok(v)
            }
        }
    }

    /// Packed `B_jk(x, η)`; for linear systems this is `A_jk(x)`.
    pub fn quasilinear_at(&self, x: &[f64], eta: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        match &self.quasilinear {
            None => self.second_order_at(x),
            Some(f) => {
                if eta.len() != self.n * self.m {
                    return Err(Error::Dimension(format!(
                        "eta has length {}, expected {}",
                        eta.len(),
                        self.n * self.m
                    )));
                }
                let v = f(x, eta);
                self.validate(&v, self.n * (self.n + 1) / 2, "B2", x)?;
                Ok(v)
            }
        }
    }

    /// Coefficients of `P·𝔄`, an equivalent system for non-degenerate `P`.
    pub fn left_multiply(&self, p: &DMatrix<f64>) -> Result<Self> {
        if p.nrows() != self.m || p.ncols() != self.m {
            return Err(Error::Dimension("left factor must be m x m".into()));
        }
        let quasilinear = self.quasilinear.as_ref().map(|f| {
            let f = f.clone();
            let p = p.clone();
            Arc::new(move |x: &[f64], eta: &[f64]| f(x, eta).iter().map(|a| &p * a).collect())
                as QuasilinearFn
        });
        Ok(SystemCoefficients {
            n: self.n,
            m: self.m,
            second_order: self.second_order.left_multiply(p),
            first_order: self.first_order.as_ref().map(|f| f.left_multiply(p)),
            quasilinear,
            bound: self.bound,
        })
    }
}

/// `Σ_jk A_jk σ_j σ_k` for a packed tensor.
pub fn symbol(packed: &[DMatrix<f64>], n: usize, sigma: &DVector<f64>) -> DMatrix<f64> {
    let m = packed[0].nrows();
    let mut out = DMatrix::zeros(m, m);
    for (idx, (j, k)) in packed_pairs(n).into_iter().enumerate() {
        let w = if j == k { sigma[j] * sigma[j] } else { 2.0 * sigma[j] * sigma[k] };
        out += &packed[idx] * w;
    }
    out
}

/// `A_jk` from a packed tensor.
pub fn packed_get(packed: &[DMatrix<f64>], n: usize, j: usize, k: usize) -> &DMatrix<f64> {
    &packed[packed_index(n, j, k)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn from_full_rejects_asymmetric_tensor() {
        let i = DMatrix::identity(2, 2);
        let e = dmatrix![0.0, 1.0; 0.0, 0.0];
        let full = vec![vec![i.clone(), e.clone()], vec![e.transpose(), i.clone()]];
        assert!(SystemCoefficients::from_full(2, 2, &full).is_err());
        let full = vec![vec![i.clone(), e.clone()], vec![e, i]];
        assert!(SystemCoefficients::from_full(2, 2, &full).is_ok());
    }

    #[test]
    fn sampled_nan_is_reported_with_location() {
        let c = SystemCoefficients::sampled(
            1,
            1,
            Arc::new(|x| vec![DMatrix::from_element(1, 1, if x[0] > 0.5 { f64::NAN } else { 1.0 })]),
        )
        .unwrap();
        assert!(c.second_order_at(&[0.2]).is_ok());
        assert!(matches!(c.second_order_at(&[0.7]), Err(Error::BadCoefficient { .. })));
    }

    #[test]
    fn laplacian_symbol_is_scaled_identity() {
        let c = SystemCoefficients::laplacian(3, 2);
        let s = DVector::from_vec(vec![1.0, 2.0, 2.0]);
        let a = symbol(c.constant_second_order().unwrap(), 3, &s);
        assert_eq!(a, DMatrix::identity(2, 2) * 9.0);
    }
}
