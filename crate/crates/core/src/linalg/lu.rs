use super::{DenseMatrix, Scalar};
use crate::error::{Error, Result};

/// Pivots smaller than this fraction of the matrix infinity norm count as singular.
const SINGULAR_RTOL: f64 = 1e-14;

/// `P·A = L·U` with partial pivoting.
///
/// `perm[i]` is the row of `A` that ended up in row `i` of `P·A`.
#[derive(Debug, Clone)]
pub struct LuDecomposition<T: Scalar> {
    factors: DenseMatrix<T>,
    perm: Vec<usize>,
    sign: f64,
}

impl<T: Scalar> LuDecomposition<T> {
    /// Factorizes with partial pivoting, keeping zero or tiny pivots.
    pub fn factor_unchecked(a: &DenseMatrix<T>) -> Self {
        factor(a).0
    }

    pub fn l(&self) -> DenseMatrix<T> {
        let n = self.factors.rows();
        let mut l = DenseMatrix::identity(n);
        for i in 0..n {
            for j in 0..i {
                l[(i, j)] = self.factors[(i, j)];
            }
        }
        l
    }

    pub fn u(&self) -> DenseMatrix<T> {
        let n = self.factors.rows();
        let mut u = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                u[(i, j)] = self.factors[(i, j)];
            }
        }
        u
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Parity of the row permutation, `+1` or `-1`.
    pub fn sign(&self) -> f64 {
        self.sign
    }

    pub fn determinant(&self) -> T {
        let n = self.factors.rows();
        (0..n).fold(T::from_real(self.sign), |acc, i| acc * self.factors[(i, i)])
    }

    /// Solves `A x = b` with the stored factors.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.factors.rows();
        assert_eq!(b.len(), n);
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.factors[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.factors[(i, j)] * x[j];
            }
            x[i] = s / self.factors[(i, i)];
        }
        x
    }

    /// Rebuilds `A = P⁻¹·L·U`.
    pub fn reconstruct(&self) -> DenseMatrix<T> {
        let lu = self.l().matmul(&self.u());
        let n = lu.rows();
        let mut a = DenseMatrix::zeros(n, n);
        for (i, &p) in self.perm.iter().enumerate() {
            for j in 0..n {
                a[(p, j)] = lu[(i, j)];
            }
        }
        a
    }
}

/// Factorizes without rejecting small pivots. Returns the smallest pivot modulus seen.
fn factor<T: Scalar>(a: &DenseMatrix<T>) -> (LuDecomposition<T>, f64) {
    assert!(a.is_square(), "LU requires a square matrix");
    let n = a.rows();
    let mut f = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;
    let mut min_pivot = f64::INFINITY;

    for k in 0..n {
        let (p, pmax) = (k..n)
            .map(|i| (i, f[(i, k)].modulus()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        min_pivot = min_pivot.min(pmax);
        if p != k {
            for j in 0..n {
                let tmp = f[(k, j)];
                f[(k, j)] = f[(p, j)];
                f[(p, j)] = tmp;
            }
            perm.swap(k, p);
            sign = -sign;
        }
        let pivot = f[(k, k)];
        if pivot == T::zero() {
            continue;
        }
        for i in (k + 1)..n {
            let m = f[(i, k)] / pivot;
            f[(i, k)] = m;
            if m == T::zero() {
                continue;
            }
            for j in (k + 1)..n {
                let fkj = f[(k, j)];
                f[(i, j)] -= m * fkj;
            }
        }
    }
    (
        LuDecomposition {
            factors: f,
            perm,
            sign,
        },
        min_pivot,
    )
}

/// LU factorization with partial pivoting.
///
/// Fails with [`Error::Singular`] when a pivot falls below `1e-14·‖A‖∞`.
pub fn lu_decompose<T: Scalar>(a: &DenseMatrix<T>) -> Result<LuDecomposition<T>> {
    if !a.is_square() {
        return Err(Error::InvalidInput("LU requires a square matrix".into()));
    }
    let (lu, min_pivot) = factor(a);
    let threshold = SINGULAR_RTOL * a.norm_inf();
    if min_pivot < threshold || min_pivot == 0.0 {
        return Err(Error::Singular {
            pivot: min_pivot,
            threshold,
        });
    }
    Ok(lu)
}

/// Determinant as the signed product of LU pivots. Singular input gives 0 or a tiny value.
pub fn determinant<T: Scalar>(a: &DenseMatrix<T>) -> T {
    assert!(a.is_square(), "determinant requires a square matrix");
    factor(a).0.determinant()
}

pub fn solve_dense<T: Scalar>(a: &DenseMatrix<T>, b: &[T]) -> Result<Vec<T>> {
    if a.rows() != b.len() {
        return Err(Error::InvalidInput(format!(
            "right-hand side has length {}, matrix has {} rows",
            b.len(),
            a.rows()
        )));
    }
    Ok(lu_decompose(a)?.solve(b))
}
