//! Benchmark right-hand sides with analytic Jacobians.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Scalar, Tridiagonal};
use crate::sweeper::Trajectory;

/// Jacobian of the right-hand side in the storage the Newton solver uses.
#[derive(Debug, Clone, PartialEq)]
pub enum Jacobian<T: Scalar> {
    /// One-dimensional problems.
    Scalar(T),
    Dense(DenseMatrix<T>),
    Tridiagonal(Tridiagonal<T>),
}

impl<T: Scalar> Jacobian<T> {
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        match self {
            Jacobian::Scalar(j) => vec![*j * x[0]],
            Jacobian::Dense(a) => a.matvec(x),
            Jacobian::Tridiagonal(t) => t.matvec(x),
        }
    }

    pub fn solver_tag(&self) -> &'static str {
        match self {
            Jacobian::Scalar(_) => "scalar",
            Jacobian::Dense(_) => "dense",
            Jacobian::Tridiagonal(_) => "tridiagonal",
        }
    }
}

/// Cost weighting of Newton iterations against right-hand-side evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostWeight {
    /// `N_Newton + N_RHS`.
    Standard,
    /// `2·N_Newton + N_RHS`.
    AllenCahn,
}

/// An initial value problem `du/dt = f(t, u)`.
pub trait Problem: Sync {
    type Scalar: Scalar;

    fn name(&self) -> &'static str;
    fn dim(&self) -> usize;
    fn initial_value(&self) -> Vec<Self::Scalar>;
    /// Default final time.
    fn t_end(&self) -> f64;
    /// Default bound on the Newton residual infinity norm.
    fn newton_tol(&self) -> f64;
    fn rhs(&self, t: f64, u: &[Self::Scalar]) -> Vec<Self::Scalar>;
    fn jacobian(&self, t: f64, u: &[Self::Scalar]) -> Jacobian<Self::Scalar>;

    fn exact_solution(&self, _t: f64) -> Option<Vec<Self::Scalar>> {
        None
    }

    /// Weight of the discrete L2 norm; `1` for ODE systems.
    fn grid_spacing(&self) -> f64 {
        1.0
    }

    fn cost_weight(&self) -> CostWeight {
        CostWeight::Standard
    }

    /// Named parameters, echoed into output headers.
    fn params(&self) -> Vec<(&'static str, String)>;
}

/// `du/dt = λu`, `u(0) = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dahlquist {
    pub lambda: Complex64,
}

pub fn dahlquist(lambda: Complex64) -> Dahlquist {
    Dahlquist { lambda }
}

impl Problem for Dahlquist {
    type Scalar = Complex64;

    fn name(&self) -> &'static str {
        "dahlquist"
    }
    fn dim(&self) -> usize {
        1
    }
    fn initial_value(&self) -> Vec<Complex64> {
        vec![Complex64::new(1.0, 0.0)]
    }
    fn t_end(&self) -> f64 {
        2.0 * PI
    }
    fn newton_tol(&self) -> f64 {
        1e-14
    }
    fn rhs(&self, _t: f64, u: &[Complex64]) -> Vec<Complex64> {
        vec![self.lambda * u[0]]
    }
    fn jacobian(&self, _t: f64, _u: &[Complex64]) -> Jacobian<Complex64> {
        Jacobian::Scalar(self.lambda)
    }
    fn exact_solution(&self, t: f64) -> Option<Vec<Complex64>> {
        Some(vec![(self.lambda * t).exp()])
    }
    fn params(&self) -> Vec<(&'static str, String)> {
        vec![("lambda_re", fmt_f64(self.lambda.re)), ("lambda_im", fmt_f64(self.lambda.im))]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lorenz {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

pub fn lorenz() -> Lorenz {
    Lorenz {
        sigma: 10.0,
        rho: 28.0,
        beta: 8.0 / 3.0,
    }
}

impl Problem for Lorenz {
    type Scalar = f64;

    fn name(&self) -> &'static str {
        "lorenz"
    }
    fn dim(&self) -> usize {
        3
    }
    fn initial_value(&self) -> Vec<f64> {
        vec![5.0, -5.0, 20.0]
    }
    fn t_end(&self) -> f64 {
        1.24
    }
    fn newton_tol(&self) -> f64 {
        1e-12
    }
    fn rhs(&self, _t: f64, u: &[f64]) -> Vec<f64> {
        let (x, y, z) = (u[0], u[1], u[2]);
        vec![self.sigma * (y - x), x * (self.rho - z) - y, x * y - self.beta * z]
    }
    fn jacobian(&self, _t: f64, u: &[f64]) -> Jacobian<f64> {
        let (x, y, z) = (u[0], u[1], u[2]);
        Jacobian::Dense(
            DenseMatrix::from_row_major(
                3,
                3,
                vec![-self.sigma, self.sigma, 0.0, self.rho - z, -1.0, -x, y, x, -self.beta],
            )
            .expect("finite state"),
        )
    }
    fn params(&self) -> Vec<(&'static str, String)> {
        vec![("sigma", fmt_f64(self.sigma)), ("rho", fmt_f64(self.rho)), ("beta", fmt_f64(self.beta))]
    }
}

/// `du/dt = −(u − g)/ε + g′` with `g = cos`; the solution `u = g` attracts
/// neighbouring trajectories at rate `1/ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtheroRobinson {
    pub eps: f64,
}

pub fn prothero_robinson(eps: f64) -> Result<ProtheroRobinson> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {eps}")));
    }
    Ok(ProtheroRobinson { eps })
}

impl Problem for ProtheroRobinson {
    type Scalar = f64;

    fn name(&self) -> &'static str {
        "prothero-robinson"
    }
    fn dim(&self) -> usize {
        1
    }
    fn initial_value(&self) -> Vec<f64> {
        vec![1.0]
    }
    fn t_end(&self) -> f64 {
        2.0 * PI
    }
    fn newton_tol(&self) -> f64 {
        1e-12
    }
    fn rhs(&self, t: f64, u: &[f64]) -> Vec<f64> {
        vec![-(u[0] - t.cos()) / self.eps - t.sin()]
    }
    fn jacobian(&self, _t: f64, _u: &[f64]) -> Jacobian<f64> {
        Jacobian::Scalar(-1.0 / self.eps)
    }
    fn exact_solution(&self, t: f64) -> Option<Vec<f64>> {
        Some(vec![t.cos()])
    }
    fn params(&self) -> Vec<(&'static str, String)> {
        vec![("eps", fmt_f64(self.eps))]
    }
}

/// 1D Allen-Cahn equation with driving force on `x ∈ [−0.5, 0.5]`,
/// second-order finite differences on `n` interior points and Dirichlet
/// values taken from the travelling-wave solution.
#[derive(Debug, Clone, PartialEq)]
pub struct AllenCahn {
    pub eps: f64,
    pub dw: f64,
    n: usize,
    dx: f64,
    x: Vec<f64>,
    newton_tol: f64,
}

pub fn allen_cahn_1d(eps: f64, dw: f64, n: usize) -> Result<AllenCahn> {
    if !(eps > 0.0 && dw > 0.0 && eps.is_finite() && dw.is_finite()) {
        return Err(Error::InvalidInput("allen-cahn parameters must be positive".into()));
    }
    if n < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 grid points, got {n}")));
    }
    let dx = 1.0 / (n + 1) as f64;
    let x = (1..=n).map(|i| -0.5 + i as f64 * dx).collect();
    Ok(AllenCahn {
        eps,
        dw,
        n,
        dx,
        x,
        newton_tol: 1e-10,
    })
}

impl AllenCahn {
    pub fn with_newton_tol(mut self, tol: f64) -> Self {
        self.newton_tol = tol;
        self
    }

    pub fn grid(&self) -> &[f64] {
        &self.x
    }

    /// Travelling-wave solution.
    pub fn profile(&self, x: f64, t: f64) -> f64 {
        let v = 3.0 * SQRT_2 * self.eps * self.dw;
        0.5 * (1.0 + ((x - v * t) / (SQRT_2 * self.eps)).tanh())
    }

    fn reaction(&self, u: f64) -> f64 {
        -2.0 / (self.eps * self.eps) * u * (1.0 - u) * (1.0 - 2.0 * u) - 6.0 * self.dw * u * (1.0 - u)
    }

    fn reaction_derivative(&self, u: f64) -> f64 {
        -2.0 / (self.eps * self.eps) * (1.0 - 6.0 * u + 6.0 * u * u) - 6.0 * self.dw * (1.0 - 2.0 * u)
    }
}

impl Problem for AllenCahn {
    type Scalar = f64;

    fn name(&self) -> &'static str {
        "allen-cahn"
    }
    fn dim(&self) -> usize {
        self.n
    }
    fn initial_value(&self) -> Vec<f64> {
        self.x.iter().map(|&x| self.profile(x, 0.0)).collect()
    }
    fn t_end(&self) -> f64 {
        50.0
    }
    fn newton_tol(&self) -> f64 {
        self.newton_tol
    }
    fn rhs(&self, t: f64, u: &[f64]) -> Vec<f64> {
        let n = self.n;
        let left = self.profile(-0.5, t);
        let right = self.profile(0.5, t);
        let idx2 = 1.0 / (self.dx * self.dx);
        (0..n)
            .map(|i| {
                let um = if i == 0 { left } else { u[i - 1] };
                let up = if i + 1 == n { right } else { u[i + 1] };
                (um - 2.0 * u[i] + up) * idx2 + self.reaction(u[i])
            })
            .collect()
    }
    fn jacobian(&self, _t: f64, u: &[f64]) -> Jacobian<f64> {
        let idx2 = 1.0 / (self.dx * self.dx);
        let diag = u.iter().map(|&v| -2.0 * idx2 + self.reaction_derivative(v)).collect();
        let off = vec![idx2; self.n - 1];
        Jacobian::Tridiagonal(Tridiagonal::new(off.clone(), diag, off).expect("consistent bands"))
    }
    fn exact_solution(&self, t: f64) -> Option<Vec<f64>> {
        Some(self.x.iter().map(|&x| self.profile(x, t)).collect())
    }
    fn grid_spacing(&self) -> f64 {
        self.dx
    }
    fn cost_weight(&self) -> CostWeight {
        CostWeight::AllenCahn
    }
    fn params(&self) -> Vec<(&'static str, String)> {
        vec![
            ("eps", fmt_f64(self.eps)),
            ("dw", fmt_f64(self.dw)),
            ("n", self.n.to_string()),
            ("newton_tol", fmt_f64(self.newton_tol)),
        ]
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorMetric {
    /// Maximum over stored step endpoints of the pointwise infinity norm.
    LinfTrajectory,
    /// `sqrt(Δx·Σ eᵢ²)` at the final time.
    L2Final,
    /// Unweighted Euclidean norm `sqrt(Σ eᵢ²)` at the final time.
    L2FinalEuclidean,
}

/// Error of a trajectory against the analytic solution.
pub fn error_metric<P: Problem>(traj: &Trajectory<P::Scalar>, problem: &P, metric: ErrorMetric) -> Result<f64> {
    let exact: Vec<Vec<P::Scalar>> = traj
        .times
        .iter()
        .map(|&t| problem.exact_solution(t))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Unsupported(format!("{} has no analytic solution", problem.name())))?;
    Ok(metric_between(&traj.states, &exact, metric, problem.grid_spacing()))
}

/// Error of a trajectory against reference states at the same times.
///
/// The reference may be sampled more finely; each trajectory time must
/// match a reference time to `1e-12·max(1, |t|)`.
pub fn error_against<T: Scalar>(
    traj: &Trajectory<T>,
    reference: &Trajectory<T>,
    metric: ErrorMetric,
    grid_spacing: f64,
) -> Result<f64> {
    let mut matched = Vec::with_capacity(traj.times.len());
    let mut j = 0;
    for &t in &traj.times {
        let tol = 1e-12 * t.abs().max(1.0);
        while j < reference.times.len() && reference.times[j] < t - tol {
            j += 1;
        }
        if j == reference.times.len() || (reference.times[j] - t).abs() > tol {
            return Err(Error::InvalidInput(format!("reference has no sample at t = {t}")));
        }
        matched.push(reference.states[j].clone());
    }
    Ok(metric_between(&traj.states, &matched, metric, grid_spacing))
}

fn metric_between<T: Scalar>(states: &[Vec<T>], exact: &[Vec<T>], metric: ErrorMetric, dx: f64) -> f64 {
    let diff = |a: &[T], b: &[T]| a.iter().zip(b).map(|(&x, &y)| (x - y).modulus()).collect::<Vec<f64>>();
    match metric {
        ErrorMetric::LinfTrajectory => states
            .iter()
            .zip(exact)
            .flat_map(|(a, b)| diff(a, b))
            .fold(0.0, |acc, e| if e.is_nan() || acc.is_nan() { f64::NAN } else { acc.max(e) }),
        ErrorMetric::L2Final => {
            let (a, b) = (states.last().expect("non-empty"), exact.last().expect("non-empty"));
            (dx * diff(a, b).iter().map(|e| e * e).sum::<f64>()).sqrt()
        }
        ErrorMetric::L2FinalEuclidean => metric_between(states, exact, ErrorMetric::L2Final, 1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::linalg::norm_inf;

    /// Relative mismatch between a forward difference of `f` and `J·e`.
    fn fd_mismatch<P: Problem<Scalar = f64>>(p: &P, t: f64, u: &[f64], e: &[f64]) -> f64 {
        let h = 1e-6 * norm_inf(u).max(1.0);
        let up: Vec<f64> = u.iter().zip(e).map(|(a, b)| a + h * b).collect();
        let (f0, f1) = (p.rhs(t, u), p.rhs(t, &up));
        let fd: Vec<f64> = f0.iter().zip(&f1).map(|(a, b)| (b - a) / h).collect();
        let je = p.jacobian(t, u).matvec(e);
        let diff: Vec<f64> = fd.iter().zip(&je).map(|(a, b)| a - b).collect();
        norm_inf(&diff) / norm_inf(&je).max(1.0)
    }

    #[test]
    fn dahlquist_values() {
        let p = dahlquist(Complex64::new(0.0, 0.0));
        assert_eq!(p.exact_solution(3.0).unwrap()[0], Complex64::new(1.0, 0.0));
        let p = dahlquist(Complex64::new(0.0, 1.0));
        let u = p.exact_solution(2.0 * PI).unwrap()[0];
        assert!((u - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let p = dahlquist(Complex64::new(-1.0, 0.0));
        assert!((p.exact_solution(1.0).unwrap()[0].re - (-1.0f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn lorenz_values() {
        let p = lorenz();
        let f = p.rhs(0.0, &[1.0, 1.0, 1.0]);
        assert_eq!(f[0], 0.0);
        assert_eq!(f[1], 26.0);
        assert!((f[2] - (1.0 - 8.0 / 3.0)).abs() < 1e-15);
        let Jacobian::Dense(j) = p.jacobian(0.0, &[2.0, 3.0, 5.0]) else { panic!() };
        assert_eq!(j[(1, 0)], 28.0 - 5.0);
        assert_eq!(p.initial_value(), vec![5.0, -5.0, 20.0]);
    }

    #[test]
    fn prothero_robinson_on_manifold() {
        let p = prothero_robinson(1e-3).unwrap();
        for t in [0.0, 0.3, 2.0, 5.0] {
            assert!((p.rhs(t, &[t.cos()])[0] + t.sin()).abs() < 1e-15);
        }
        assert_eq!(p.jacobian(0.0, &[0.0]), Jacobian::Scalar(-1000.0));
        assert!(prothero_robinson(0.0).is_err());
        assert_eq!(p.exact_solution(1.0).unwrap(), vec![1.0f64.cos()]);
    }

    #[test]
    fn allen_cahn_reaction_terms() {
        let p = allen_cahn_1d(0.04, 0.04, 15).unwrap();
        let f = p.rhs(0.0, &vec![0.0; 15]);
        let idx2 = 1.0 / (p.dx * p.dx);
        for (i, v) in f.iter().enumerate() {
            let want = match i {
                0 => p.profile(-0.5, 0.0) * idx2,
                14 => p.profile(0.5, 0.0) * idx2,
                _ => 0.0,
            };
            assert!((v - want).abs() <= 1e-12 * idx2);
        }
        assert!((p.reaction(0.5) + 1.5 * 0.04).abs() < 1e-15);
        assert_eq!(p.grid().len(), 15);
        assert!((p.grid()[7]).abs() < 1e-15);
        assert!(allen_cahn_1d(0.04, 0.04, 2).is_err());
    }

    #[test]
    fn allen_cahn_default_grid() {
        let p = allen_cahn_1d(0.04, 0.04, 2047).unwrap();
        assert_eq!(p.grid_spacing(), 1.0 / 2048.0);
        assert!((p.grid()[0] + 0.5 - 1.0 / 2048.0).abs() < 1e-15);
    }

    /// Max-norm defect of the semi-discrete operator on the travelling wave.
    fn spatial_defect(n: usize) -> f64 {
        let p = allen_cahn_1d(0.04, 0.04, n).unwrap();
        let t = 0.7;
        let u = p.exact_solution(t).unwrap();
        let f = p.rhs(t, &u);
        let h = 1e-5;
        let dudt: Vec<f64> = p
            .grid()
            .iter()
            .map(|&x| (p.profile(x, t + h) - p.profile(x, t - h)) / (2.0 * h))
            .collect();
        f.iter().zip(&dudt).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn allen_cahn_spatial_order() {
        let errs: Vec<f64> = [127, 255, 511].iter().map(|&n| spatial_defect(n)).collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.8, "{errs:?}");
        }
    }

    #[test]
    fn l2_of_constant_offset() {
        let n = 5;
        let dx = 0.1;
        let traj = Trajectory {
            times: vec![0.0, 1.0],
            states: vec![vec![0.0; n], vec![0.25; n]],
            counters: Default::default(),
            step_counters: Vec::new(),
        };
        let exact = Trajectory {
            times: vec![0.0, 1.0],
            states: vec![vec![0.0; n], vec![0.0; n]],
            counters: Default::default(),
            step_counters: Vec::new(),
        };
        let e = error_against(&traj, &exact, ErrorMetric::L2Final, dx).unwrap();
        assert!((e - 0.25 * (n as f64 * dx).sqrt()).abs() < 1e-15);
        let e = error_against(&traj, &exact, ErrorMetric::L2FinalEuclidean, dx).unwrap();
        assert!((e - 0.25 * (n as f64).sqrt()).abs() < 1e-14);
        assert_eq!(error_against(&exact, &exact, ErrorMetric::LinfTrajectory, dx).unwrap(), 0.0);
        assert!(error_against(&traj, &Trajectory { times: vec![0.5], ..exact.clone() }, ErrorMetric::L2Final, dx).is_err());
    }

    proptest! {
        #[test]
        fn lorenz_jacobian_matches_differences(
            u in proptest::collection::vec(-20.0f64..20.0, 3),
            e in proptest::collection::vec(-1.0f64..1.0, 3),
        ) {
            prop_assert!(fd_mismatch(&lorenz(), 0.0, &u, &e) <= 1e-5);
        }

        #[test]
        fn prothero_robinson_jacobian_matches_differences(u in -2.0f64..2.0, t in 0.0f64..7.0) {
            let p = prothero_robinson(1e-3).unwrap();
            prop_assert!(fd_mismatch(&p, t, &[u], &[1.0]) <= 1e-5);
        }

        #[test]
        fn allen_cahn_jacobian_matches_differences(
            u in proptest::collection::vec(-0.2f64..1.2, 31),
            e in proptest::collection::vec(-1.0f64..1.0, 31),
            t in 0.0f64..50.0,
        ) {
            let p = allen_cahn_1d(0.04, 0.04, 31).unwrap();
            prop_assert!(fd_mismatch(&p, t, &u, &e) <= 1e-5);
        }

        #[test]
        fn dahlquist_jacobian_matches_differences(re in -5.0f64..5.0, im in -5.0f64..5.0, ur in -2.0f64..2.0, ui in -2.0f64..2.0) {
            let p = dahlquist(Complex64::new(re, im));
            let u = [Complex64::new(ur, ui)];
            let h = 1e-6;
            let fd = (p.rhs(0.0, &[u[0] + h])[0] - p.rhs(0.0, &u)[0]) / h;
            let je = p.jacobian(0.0, &u).matvec(&[Complex64::new(1.0, 0.0)])[0];
            prop_assert!((fd - je).norm() <= 1e-5 * je.norm().max(1.0));
        }
    }
}
