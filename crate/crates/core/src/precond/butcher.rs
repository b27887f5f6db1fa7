use serde::{Deserialize, Serialize};

use super::{PrecondKind, Preconditioner};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::quadrature::CollocationSystem;

/// Runge-Kutta tableau `(A, b, c)`.
///
/// Run through the sweeper with `Q_Δ = Q = A` and nodes `c`; the step value
/// is `u₀ + Δt·bᵀ f(stages)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ButcherTableau {
    pub name: String,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl ButcherTableau {
    pub fn new(name: impl Into<String>, a: Vec<Vec<f64>>, b: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        let s = b.len();
        if s == 0 || c.len() != s || a.len() != s || a.iter().any(|r| r.len() != s) {
            return Err(Error::InvalidInput("tableau dimensions are inconsistent".into()));
        }
        if a.iter().flatten().chain(&b).chain(&c).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("tableau has non-finite entries".into()));
        }
        Ok(Self {
            name: name.into(),
            a,
            b,
            c,
        })
    }

    /// Classical explicit fourth-order method.
    pub fn rk4() -> Self {
        Self::new(
            "rk4",
            vec![
                vec![0.0, 0.0, 0.0, 0.0],
                vec![0.5, 0.0, 0.0, 0.0],
                vec![0.0, 0.5, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0],
            ],
            vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
            vec![0.0, 0.5, 0.5, 1.0],
        )
        .expect("static tableau")
    }

    /// Kennedy-Carpenter ESDIRK4(3)6L[2]SA, stiffly accurate, `γ = 1/4`.
    pub fn esdirk43() -> Self {
        let s2 = std::f64::consts::SQRT_2;
        let g = 0.25;
        let a21 = 0.25;
        let a31 = (1.0 - s2) / 8.0;
        let a41 = (5.0 - 7.0 * s2) / 64.0;
        let a43 = 7.0 * (1.0 + s2) / 32.0;
        let a51 = (-13796.0 - 54539.0 * s2) / 125000.0;
        let a53 = (506605.0 + 132109.0 * s2) / 437500.0;
        let a54 = 166.0 * (-97.0 + 376.0 * s2) / 109375.0;
        let a61 = (1181.0 - 987.0 * s2) / 13782.0;
        let a63 = 47.0 * (-267.0 + 1783.0 * s2) / 273343.0;
        let a64 = -16.0 * (-22922.0 + 3525.0 * s2) / 571953.0;
        let a65 = -15625.0 * (97.0 + 376.0 * s2) / 90749876.0;
        let a = vec![
            vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            vec![a21, g, 0.0, 0.0, 0.0, 0.0],
            vec![a31, a31, g, 0.0, 0.0, 0.0],
            vec![a41, a41, a43, g, 0.0, 0.0],
            vec![a51, a51, a53, a54, g, 0.0],
            vec![a61, a61, a63, a64, a65, g],
        ];
        let b = a[5].clone();
        let c = a.iter().map(|r| r.iter().sum()).collect();
        Self::new("esdirk43", a, b, c).expect("static tableau")
    }

    /// Collocation method on the given nodes: `A = Q`, `b` the quadrature weights.
    pub fn from_collocation(coll: &CollocationSystem) -> Self {
        let m = coll.m();
        let a = (0..m).map(|i| coll.q().row(i).to_vec()).collect();
        Self::new(format!("collocation-{}-{m}", coll.nodes().family()), a, coll.b().to_vec(), coll.tau().to_vec())
            .expect("collocation data is finite")
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn a_matrix(&self) -> DenseMatrix {
        let s = self.stages();
        DenseMatrix::from_row_major(s, s, self.a.iter().flatten().copied().collect()).expect("finite")
    }

    pub fn is_explicit(&self) -> bool {
        self.a_matrix().is_strictly_lower_triangular()
    }

    /// Last stage equals the step value (`b` is the last row of `A`).
    pub fn is_stiffly_accurate(&self) -> bool {
        let s = self.stages();
        (self.c[s - 1] - 1.0).abs() <= 1e-14 && self.a[s - 1].iter().zip(&self.b).all(|(x, y)| x == y)
    }

    /// Largest `p ≤ 4` whose order conditions hold within `tol`.
    pub fn order(&self, tol: f64) -> usize {
        let s = self.stages();
        let a = &self.a;
        let b = &self.b;
        let c = &self.c;
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
        let a_times = |v: &[f64]| -> Vec<f64> { (0..s).map(|i| dot(&a[i], v)).collect() };
        let cc: Vec<f64> = c.iter().map(|x| x * x).collect();
        let ac = a_times(c);
        let conditions: [Vec<(f64, f64)>; 4] = [
            vec![(b.iter().sum(), 1.0)],
            vec![(dot(b, c), 0.5)],
            vec![(dot(b, &cc), 1.0 / 3.0), (dot(b, &ac), 1.0 / 6.0)],
            vec![
                (dot(b, &c.iter().map(|x| x * x * x).collect::<Vec<_>>()), 0.25),
                (dot(b, &c.iter().zip(&ac).map(|(x, y)| x * y).collect::<Vec<_>>()), 0.125),
                (dot(b, &a_times(&cc)), 1.0 / 12.0),
                (dot(b, &a_times(&ac)), 1.0 / 24.0),
            ],
        ];
        let row_sums_ok = (0..s).all(|i| (a[i].iter().sum::<f64>() - c[i]).abs() <= tol);
        if !row_sums_ok {
            return 0;
        }
        conditions
            .iter()
            .take_while(|group| group.iter().all(|(got, want)| (got - want).abs() <= tol))
            .count()
    }
}

/// `Q_Δ = A` for a DIRK or explicit tableau.
pub fn butcher_preconditioner(tableau: &ButcherTableau) -> Result<Preconditioner> {
    let a = tableau.a_matrix();
    if !a.is_lower_triangular() {
        return Err(Error::InvalidInput(format!(
            "tableau '{}' is not lower triangular",
            tableau.name
        )));
    }
    Ok(Preconditioner::from_parts(PrecondKind::ButcherDirk, vec![a]))
}
