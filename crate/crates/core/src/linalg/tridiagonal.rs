use super::{DenseMatrix, Scalar};
use crate::error::{Error, Result};

/// Tridiagonal matrix stored as three bands.
///
/// `lower[i]` sits at `(i + 1, i)` and `upper[i]` at `(i, i + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal<T = f64> {
    lower: Vec<T>,
    diagonal: Vec<T>,
    upper: Vec<T>,
}

impl<T: Scalar> Tridiagonal<T> {
    pub fn new(lower: Vec<T>, diagonal: Vec<T>, upper: Vec<T>) -> Result<Self> {
        let n = diagonal.len();
        if n == 0 || lower.len() + 1 != n || upper.len() + 1 != n {
            return Err(Error::InvalidInput(format!(
                "inconsistent band lengths: lower {}, diagonal {}, upper {}",
                lower.len(),
                n,
                upper.len()
            )));
        }
        Ok(Self {
            lower,
            diagonal,
            upper,
        })
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn diagonal(&self) -> &[T] {
        &self.diagonal
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(x.len(), n);
        (0..n)
            .map(|i| {
                let mut s = self.diagonal[i] * x[i];
                if i > 0 {
                    s += self.lower[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.upper[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    /// `I - alpha * self`, the Newton matrix for a node solve.
    pub fn shifted_identity(&self, alpha: f64) -> Self {
        Self {
            lower: self.lower.iter().map(|&x| -x.scale(alpha)).collect(),
            diagonal: self.diagonal.iter().map(|&x| T::one() - x.scale(alpha)).collect(),
            upper: self.upper.iter().map(|&x| -x.scale(alpha)).collect(),
        }
    }

    pub fn norm_inf(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut s = self.diagonal[i].modulus();
                if i > 0 {
                    s += self.lower[i - 1].modulus();
                }
                if i + 1 < n {
                    s += self.upper[i].modulus();
                }
                s
            })
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let n = self.dim();
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = self.diagonal[i];
            if i + 1 < n {
                a[(i + 1, i)] = self.lower[i];
                a[(i, i + 1)] = self.upper[i];
            }
        }
        a
    }
}

/// Thomas algorithm. No pivoting, so the matrix should be diagonally dominant
/// or otherwise safe for elimination in natural order.
pub fn solve_tridiagonal<T: Scalar>(t: &Tridiagonal<T>, b: &[T]) -> Result<Vec<T>> {
    let n = t.dim();
    if b.len() != n {
        return Err(Error::InvalidInput(format!(
            "right-hand side has length {}, matrix has dimension {n}",
            b.len()
        )));
    }
    let threshold = 1e-14 * t.norm_inf();
    let mut c = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];

    let mut pivot = t.diagonal[0];
    if pivot.modulus() <= threshold {
        return Err(Error::Singular {
            pivot: pivot.modulus(),
            threshold,
        });
    }
    if n > 1 {
        c[0] = t.upper[0] / pivot;
    }
    d[0] = b[0] / pivot;
    for i in 1..n {
        pivot = t.diagonal[i] - t.lower[i - 1] * c[i - 1];
        if pivot.modulus() <= threshold {
            return Err(Error::Singular {
                pivot: pivot.modulus(),
                threshold,
            });
        }
        if i + 1 < n {
            c[i] = t.upper[i] / pivot;
        }
        d[i] = (b[i] - t.lower[i - 1] * d[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        let next = d[i + 1];
        d[i] -= c[i] * next;
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{norm_inf, solve_dense};
    use proptest::prelude::*;

    #[test]
    fn second_difference_with_unit_load() {
        let t = Tridiagonal::new(vec![-1.0; 4], vec![2.0; 5], vec![-1.0; 4]).unwrap();
        let x = solve_tridiagonal(&t, &[1.0; 5]).unwrap();
        // Frozen from a dense LU solve of the same system.
        let dense = solve_dense(&t.to_dense(), &[1.0; 5]).unwrap();
        for (a, b) in x.iter().zip([2.5, 4.0, 4.5, 4.0, 2.5]) {
            assert!((a - b).abs() < 1e-13);
        }
        for (a, b) in x.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn one_by_one() {
        let t = Tridiagonal::new(vec![], vec![4.0], vec![]).unwrap();
        assert_eq!(solve_tridiagonal(&t, &[2.0]).unwrap(), vec![0.5]);
    }

    #[test]
    fn rejects_bad_bands_and_zero_pivot() {
        assert!(Tridiagonal::new(vec![1.0], vec![1.0], vec![]).is_err());
        let t = Tridiagonal::new(vec![1.0], vec![0.0, 1.0], vec![1.0]).unwrap();
        assert!(matches!(solve_tridiagonal(&t, &[1.0, 1.0]), Err(Error::Singular { .. })));
    }

    fn dominant() -> impl Strategy<Value = (Tridiagonal<f64>, Vec<f64>)> {
        (1usize..=64).prop_flat_map(|n| {
            let off = proptest::collection::vec(-1.0f64..1.0, n.saturating_sub(1));
            let diag = proptest::collection::vec(2.1f64..5.0, n);
            let rhs = proptest::collection::vec(-10.0f64..10.0, n);
            (off.clone(), diag, off, rhs).prop_map(|(l, d, u, b)| (Tridiagonal::new(l, d, u).unwrap(), b))
        })
    }

    proptest! {
        #[test]
        fn thomas_agrees_with_dense((t, b) in dominant()) {
            let x = solve_tridiagonal(&t, &b).unwrap();
            let y = solve_dense(&t.to_dense(), &b).unwrap();
            let diff: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p - q).collect();
            prop_assert!(norm_inf(&diff) <= 1e-12 * norm_inf(&y).max(1.0));
        }
    }
}
