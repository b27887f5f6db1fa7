//! Stability functions, order fits and the cost model.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lu_decompose, DenseMatrix};
use crate::problems::{error_against, error_metric, CostWeight, ErrorMetric, Problem};
use crate::sweeper::{integrate, Counters, SweepConfig, Trajectory};

/// Parallel efficiency assumed for node-parallel sweeps.
pub const P_EFF: f64 = 0.8;

/// Errors at or below this are treated as round-off and rejected by the fit.
pub const ERROR_FLOOR: f64 = 1e-13;

/// `R(z)`: the step value of the scalar recursion
/// `(I − zQ_Δ)u^{k+1} = z(Q − Q_Δ)u^k + 𝟙` after `K` sweeps from `u⁰ = 𝟙`.
///
/// `None` when `I − zQ_Δ` is singular at `z`.
pub fn stability_function(z: Complex64, config: &SweepConfig) -> Option<Complex64> {
    let scheme = config.scheme();
    let m = config.m();
    let one = Complex64::new(1.0, 0.0);
    let q = scheme.q.to_complex();
    let mut u = vec![one; m];
    for k in 1..=config.sweeps() {
        let qd = config.precond().matrix(k).to_complex();
        let mut lhs = DenseMatrix::<Complex64>::identity(m);
        let mut rhs = vec![one; m];
        for i in 0..m {
            for j in 0..m {
                lhs[(i, j)] -= z * qd[(i, j)];
                rhs[i] += z * (q[(i, j)] - qd[(i, j)]) * u[j];
            }
        }
        u = lu_decompose(&lhs).ok()?.solve(&rhs);
    }
    if config.sweeps() == 0 {
        return Some(one);
    }
    let r = if config.collocation_update() {
        one + z * scheme.b.iter().zip(&u).map(|(&b, &x)| x * b).sum::<Complex64>()
    } else {
        u[m - 1]
    };
    r.is_finite().then_some(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(re: (f64, f64), im: (f64, f64), nx: usize, ny: usize) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidInput(format!("grid needs at least 2×2 samples, got {nx}×{ny}")));
        }
        if !(re.0 < re.1 && im.0 < im.1) || ![re.0, re.1, im.0, im.1].iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidInput("grid ranges must be finite and increasing".into()));
        }
        Ok(Self {
            re_min: re.0,
            re_max: re.1,
            im_min: im.0,
            im_max: im.1,
            nx,
            ny,
        })
    }

    /// `[−16, 4] × [−16i, 16i]` at 400×400.
    pub fn default_grid() -> Self {
        Self::new((-16.0, 4.0), (-16.0, 16.0), 400, 400).expect("valid preset")
    }

    /// `[−80, 20] × [−80i, 80i]` at 400×400.
    pub fn wide() -> Self {
        Self::new((-80.0, 20.0), (-80.0, 80.0), 400, 400).expect("valid preset")
    }

    pub fn re(&self, ix: usize) -> f64 {
        self.re_min + (self.re_max - self.re_min) * ix as f64 / (self.nx - 1) as f64
    }

    pub fn im(&self, iy: usize) -> f64 {
        self.im_min + (self.im_max - self.im_min) * iy as f64 / (self.ny - 1) as f64
    }

    pub fn point(&self, ix: usize, iy: usize) -> Complex64 {
        Complex64::new(self.re(ix), self.im(iy))
    }
}

/// `|R(z)|` on a grid, row-major in the imaginary index. Singular samples are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl StabilityGrid {
    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.spec.nx + ix]
    }

    /// Largest sampled `|R|` over points with `Re z ≤ 0`, with its location.
    pub fn max_left_half_plane(&self) -> Option<(f64, Complex64)> {
        let mut best: Option<(f64, Complex64)> = None;
        for iy in 0..self.spec.ny {
            for ix in 0..self.spec.nx {
                let v = self.value(ix, iy);
                if self.spec.re(ix) <= 0.0 && v.is_finite() && best.is_none_or(|(b, _)| v > b) {
                    best = Some((v, self.spec.point(ix, iy)));
                }
            }
        }
        best
    }

    /// Line segments of the level set `|R| = level` by marching squares.
    pub fn contour(&self, level: f64) -> Vec<[(f64, f64); 2]> {
        let s = &self.spec;
        let mut out = Vec::new();
        for iy in 0..s.ny - 1 {
            for ix in 0..s.nx - 1 {
                // Corners counter-clockwise from the lower left.
                let corners = [(ix, iy), (ix + 1, iy), (ix + 1, iy + 1), (ix, iy + 1)];
                let vals: Vec<f64> = corners.iter().map(|&(x, y)| self.value(x, y) - level).collect();
                if vals.iter().any(|v| !v.is_finite()) {
                    continue;
                }
                let crossing = |a: usize, b: usize| {
                    let t = vals[a] / (vals[a] - vals[b]);
                    let (pa, pb) = (s.point(corners[a].0, corners[a].1), s.point(corners[b].0, corners[b].1));
                    (pa.re + t * (pb.re - pa.re), pa.im + t * (pb.im - pa.im))
                };
                let edges: Vec<(usize, usize)> = [(0, 1), (1, 2), (2, 3), (3, 0)]
                    .into_iter()
                    .filter(|&(a, b)| (vals[a] > 0.0) != (vals[b] > 0.0))
                    .collect();
                match edges.len() {
                    2 => out.push([crossing(edges[0].0, edges[0].1), crossing(edges[1].0, edges[1].1)]),
                    4 => {
                        // Saddle: pair edges according to the cell average.
                        let centre = vals.iter().sum::<f64>() / 4.0;
                        let pairs = if (centre > 0.0) == (vals[0] > 0.0) {
                            [(0, 1), (2, 3)]
                        } else {
                            [(3, 0), (1, 2)]
                        };
                        for (e1, e2) in pairs {
                            out.push([crossing(edges[e1].0, edges[e1].1), crossing(edges[e2].0, edges[e2].1)]);
                        }
                    }
                    _ => {}
                }
            }
        }
        out
    }
}

/// Samples `|R(z)|` on the grid, in parallel over rows.
pub fn scan_stability(config: &SweepConfig, grid: &GridSpec) -> StabilityGrid {
    let values = (0..grid.ny)
        .into_par_iter()
        .flat_map_iter(|iy| {
            (0..grid.nx).map(move |ix| stability_function(grid.point(ix, iy), config).map_or(f64::NAN, |r| r.norm()))
        })
        .collect();
    StabilityGrid { spec: *grid, values }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AStabilityReport {
    pub samples: usize,
    pub max_abs_r: f64,
    pub worst_z: (f64, f64),
    /// Samples with `|R| > 1 + tol`.
    pub violations: usize,
    pub tol: f64,
}

impl AStabilityReport {
    /// No sampled violation; evidence, not a proof.
    pub fn no_violation_found(&self) -> bool {
        self.violations == 0
    }
}

/// Checks `|R(z)| ≤ 1 + tol` on the left-half-plane part of `grid` and at
/// `n_random` random points `z = r·e^{iθ}`, `θ ∈ [π/2, 3π/2]`,
/// `log₁₀ r ∈ [−3, 4]`.
pub fn check_a_stability(config: &SweepConfig, grid: &GridSpec, n_random: usize, seed: u64, tol: f64) -> AStabilityReport {
    let mut points: Vec<Complex64> = Vec::with_capacity(grid.nx * grid.ny + n_random);
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            if grid.re(ix) <= 0.0 {
                points.push(grid.point(ix, iy));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_random {
        let r = 10f64.powf(rng.gen_range(-3.0..4.0));
        let theta = rng.gen_range(std::f64::consts::FRAC_PI_2..=3.0 * std::f64::consts::FRAC_PI_2);
        points.push(Complex64::from_polar(r, theta));
    }
    let values: Vec<f64> = points
        .par_iter()
        .map(|&z| stability_function(z, config).map_or(f64::NAN, |r| r.norm()))
        .collect();
    let mut report = AStabilityReport {
        samples: points.len(),
        max_abs_r: 0.0,
        worst_z: (0.0, 0.0),
        violations: 0,
        tol,
    };
    for (z, v) in points.iter().zip(values) {
        // A pole in the closed left half-plane is a violation too.
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if v > 1.0 + tol {
            report.violations += 1;
        }
        if v > report.max_abs_r {
            report.max_abs_r = v;
            report.worst_z = (z.re, z.im);
        }
    }
    report
}

/// Least-squares slope of `log err` against `log dt`.
pub fn estimate_order(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::InvalidInput(format!("order fit needs at least 3 points, got {}", points.len())));
    }
    if let Some(&(dt, e)) = points.iter().find(|&&(dt, e)| !(dt > 0.0 && dt.is_finite() && e > ERROR_FLOOR && e.is_finite())) {
        return Err(Error::InvalidInput(format!("point (dt={dt}, err={e}) is outside the fit range")));
    }
    let n = points.len() as f64;
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), &(dt, e)| (a + dt.ln() / n, b + e.ln() / n));
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(dt, e) in points {
        let (dx, dy) = (dt.ln() - mx, e.ln() - my);
        sxy += dx * dy;
        sxx += dx * dx;
    }
    if sxx <= 1e-24 {
        return Err(Error::InvalidInput("order fit needs distinct step sizes".into()));
    }
    Ok(sxy / sxx)
}

/// Slopes between consecutive points, ordered as given.
pub fn local_orders(points: &[(f64, f64)]) -> Vec<f64> {
    points
        .windows(2)
        .map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostMode {
    Serial,
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub rhs_evals: u64,
    pub newton_iters: u64,
    pub mode: CostMode,
    pub m: usize,
    pub p_eff: f64,
    pub weight: CostWeight,
    pub cost: f64,
}

/// `N_Newton + N_RHS` (Newton doubled for the Allen-Cahn weight), divided
/// by `M·P_eff` for parallel runs.
pub fn cost(counters: Counters, mode: CostMode, m: usize, weight: CostWeight, diagonal: bool) -> Result<CostReport> {
    if mode == CostMode::Parallel && !diagonal {
        return Err(Error::InvalidInput("parallel cost needs a diagonal preconditioner".into()));
    }
    if m == 0 {
        return Err(Error::InvalidInput("M must be positive".into()));
    }
    let newton_weight = match weight {
        CostWeight::Standard => 1.0,
        CostWeight::AllenCahn => 2.0,
    };
    let serial = newton_weight * counters.newton_iters as f64 + counters.rhs_evals as f64;
    let cost = match mode {
        CostMode::Serial => serial,
        CostMode::Parallel => serial / (m as f64 * P_EFF),
    };
    Ok(CostReport {
        rhs_evals: counters.rhs_evals,
        newton_iters: counters.newton_iters,
        mode,
        m,
        p_eff: P_EFF,
        weight,
        cost,
    })
}

/// Cost needed to reach `target` error, by log-log interpolation along
/// `(cost, error)` points ordered from cheap to expensive. `None` when the
/// error curve never reaches the target.
pub fn cost_at_error(points: &[(f64, f64)], target: f64) -> Option<f64> {
    for w in points.windows(2) {
        let ((c0, e0), (c1, e1)) = (w[0], w[1]);
        if e0 >= target && e1 <= target && e0 > 0.0 && e1 > 0.0 {
            if e0 == e1 {
                return Some(c0);
            }
            let t = (target.ln() - e0.ln()) / (e1.ln() - e0.ln());
            return Some((c0.ln() + t * (c1.ln() - c0.ln())).exp());
        }
    }
    points.first().filter(|p| p.1 <= target).map(|p| p.0)
}

/// Where errors are measured from.
pub enum ErrorSource<'a, T: crate::linalg::Scalar> {
    Exact,
    Reference(&'a Trajectory<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub n_steps: usize,
    pub dt: f64,
    pub error: f64,
    pub counters: Counters,
}

/// Runs `integrate` for each step count and measures the error.
pub fn convergence_study<P: Problem>(
    problem: &P,
    t_end: f64,
    steps: &[usize],
    config: &SweepConfig,
    source: &ErrorSource<'_, P::Scalar>,
    metric: ErrorMetric,
) -> Result<Vec<ConvergencePoint>> {
    steps
        .iter()
        .map(|&n| {
            let traj = integrate(problem, t_end, n, config)?;
            let error = match source {
                ErrorSource::Exact => error_metric(&traj, problem, metric)?,
                ErrorSource::Reference(r) => error_against(&traj, r, metric, problem.grid_spacing())?,
            };
            Ok(ConvergencePoint {
                n_steps: n,
                dt: t_end / n as f64,
                error,
                counters: traj.counters,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precond::{build, ButcherTableau, PrecondKind};
    use crate::quadrature::{CollocationSystem, NodeFamily};
    use proptest::prelude::*;

    fn config(kind: PrecondKind, family: NodeFamily, m: usize, k: usize) -> SweepConfig {
        let c = CollocationSystem::new(family, m).unwrap();
        SweepConfig::new(&c, build(kind, &c).unwrap(), k).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn truncated_exp(z: Complex64, k: usize) -> Complex64 {
        let mut term = c(1.0, 0.0);
        let mut s = term;
        for n in 1..=k {
            term = term * z / n as f64;
            s += term;
        }
        s
    }

    #[test]
    fn r_of_zero_is_one() {
        for kind in [PrecondKind::Pic, PrecondKind::MinSrS, PrecondKind::Lu, PrecondKind::MinSrFlex] {
            let r = stability_function(c(0.0, 0.0), &config(kind, NodeFamily::RadauRight, 4, 3)).unwrap();
            assert!((r - c(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn picard_closed_form() {
        for k in 1..=4 {
            let cfg = config(PrecondKind::Pic, NodeFamily::RadauRight, 4, k);
            let mut worst: f64 = 0.0;
            for i in 0..10 {
                for j in 0..10 {
                    let z = c(-3.0 + 0.4 * i as f64, -2.0 + 0.4 * j as f64);
                    worst = worst.max((stability_function(z, &cfg).unwrap() - truncated_exp(z, k)).norm());
                }
            }
            assert!(worst <= 1e-12, "K={k} {worst}");
        }
    }

    #[test]
    fn implicit_euler_single_node() {
        let cfg = config(PrecondKind::Collocation, NodeFamily::RadauRight, 1, 1);
        for z in [c(-2.0, 1.0), c(0.5, 0.0), c(-100.0, 30.0)] {
            assert!((stability_function(z, &cfg).unwrap() - c(1.0, 0.0) / (c(1.0, 0.0) - z)).norm() < 1e-14);
        }
        assert!(stability_function(c(1.0, 0.0), &cfg).is_none());
    }

    #[test]
    fn collocation_b_update_matches_rational_formula() {
        for m in 2..=5 {
            let coll = CollocationSystem::new(NodeFamily::RadauRight, m).unwrap();
            let cfg = SweepConfig::new(&coll, build(PrecondKind::Collocation, &coll).unwrap(), 1)
                .unwrap()
                .with_collocation_update(true);
            let qc = coll.q().to_complex();
            for i in 0..8 {
                for j in 0..8 {
                    let z = c(-6.0 + 1.1 * i as f64, -4.0 + 1.05 * j as f64);
                    // 1 + z·bᵀ(I − zQ)⁻¹𝟙 via an independent Gaussian elimination.
                    let mut a = DenseMatrix::<Complex64>::identity(m);
                    for r in 0..m {
                        for s in 0..m {
                            a[(r, s)] -= z * qc[(r, s)];
                        }
                    }
                    let x = crate::linalg::solve_dense(&a, &vec![c(1.0, 0.0); m]).unwrap();
                    let want = c(1.0, 0.0) + z * coll.b().iter().zip(&x).map(|(&b, &v)| v * b).sum::<Complex64>();
                    let got = stability_function(z, &cfg).unwrap();
                    assert!((got - want).norm() <= 1e-12 * want.norm().max(1.0));
                }
            }
        }
    }

    #[test]
    fn rk4_real_axis_limit() {
        let cfg = config(PrecondKind::Pic, NodeFamily::RadauRight, 4, 4);
        assert!(stability_function(c(-2.78, 0.0), &cfg).unwrap().norm() <= 1.0);
        assert!(stability_function(c(-3.0, 0.0), &cfg).unwrap().norm() > 1.0);
        let tab = SweepConfig::from_tableau(&ButcherTableau::rk4()).unwrap();
        let z = c(-1.0, 2.0);
        assert!((stability_function(z, &tab).unwrap() - truncated_exp(z, 4)).norm() < 1e-13);
    }

    #[test]
    fn scan_is_deterministic_and_symmetric() {
        let cfg = config(PrecondKind::MinSrS, NodeFamily::RadauRight, 4, 2);
        let grid = GridSpec::new((-4.0, 1.0), (-3.0, 3.0), 21, 31).unwrap();
        let a = scan_stability(&cfg, &grid);
        let b = scan_stability(&cfg, &grid);
        assert_eq!(a, b);
        for iy in 0..31 {
            for ix in 0..21 {
                let (p, q) = (a.value(ix, iy), a.value(ix, 30 - iy));
                assert!((p - q).abs() <= 1e-12 * p.max(1.0));
            }
        }
    }

    #[test]
    fn contour_of_explicit_euler_is_the_unit_circle_at_minus_one() {
        let cfg = config(PrecondKind::Pic, NodeFamily::RadauRight, 2, 1);
        let grid = GridSpec::new((-2.5, 0.5), (-1.5, 1.5), 121, 121).unwrap();
        let segs = scan_stability(&cfg, &grid).contour(1.0);
        assert!(segs.len() > 50);
        for s in segs {
            for (x, y) in s {
                let r = ((x + 1.0).powi(2) + y * y).sqrt();
                assert!((r - 1.0).abs() < 2e-3, "{x} {y}");
            }
        }
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new((0.0, 1.0), (0.0, 1.0), 1, 5).is_err());
        assert!(GridSpec::new((1.0, 0.0), (0.0, 1.0), 5, 5).is_err());
        let g = GridSpec::default_grid();
        assert_eq!((g.nx, g.ny, g.re_min, g.im_max), (400, 400, -16.0, 16.0));
    }

    #[test]
    fn implicit_methods_are_a_stable() {
        let cfg = config(PrecondKind::Collocation, NodeFamily::RadauRight, 3, 1);
        let grid = GridSpec::new((-20.0, 0.0), (-20.0, 20.0), 41, 41).unwrap();
        assert!(check_a_stability(&cfg, &grid, 200, 7, 1e-12).no_violation_found());
        let ee = config(PrecondKind::Pic, NodeFamily::RadauRight, 3, 1);
        let rep = check_a_stability(&ee, &grid, 200, 7, 1e-12);
        assert!(!rep.no_violation_found() && rep.max_abs_r > 1.0);
    }

    #[test]
    fn order_fit_synthetic() {
        let pts: Vec<(f64, f64)> = [0.1, 0.05, 0.025, 0.0125].iter().map(|&h| (h, 3.0 * h * h)).collect();
        assert!((estimate_order(&pts).unwrap() - 2.0).abs() < 1e-10);
        assert!(estimate_order(&pts[..2]).is_err());
        assert!(estimate_order(&[(0.1, 1e-14), (0.05, 1e-15), (0.01, 1e-16)]).is_err());
        assert!(estimate_order(&[(0.1, 1.0), (0.1, 0.5), (0.1, 0.2)]).is_err());
        for o in local_orders(&pts) {
            assert!((o - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cost_formula() {
        let counters = Counters {
            rhs_evals: 100,
            newton_iters: 50,
        };
        assert_eq!(cost(counters, CostMode::Serial, 4, CostWeight::Standard, false).unwrap().cost, 150.0);
        assert_eq!(cost(counters, CostMode::Parallel, 4, CostWeight::Standard, true).unwrap().cost, 46.875);
        assert_eq!(cost(counters, CostMode::Serial, 4, CostWeight::AllenCahn, true).unwrap().cost, 200.0);
        assert!(cost(counters, CostMode::Parallel, 4, CostWeight::Standard, false).is_err());
    }

    #[test]
    fn cost_interpolation() {
        let pts = [(10.0, 1e-2), (100.0, 1e-6), (1000.0, 1e-10)];
        assert!((cost_at_error(&pts, 1e-4).unwrap() - 10f64.powf(1.5)).abs() < 1e-9);
        assert_eq!(cost_at_error(&pts, 1e-12), None);
        assert_eq!(cost_at_error(&pts, 1.0), Some(10.0));
    }

    #[test]
    fn explicit_euler_halving_ratio() {
        let p = crate::problems::dahlquist(c(0.0, 1.0));
        let cfg = config(PrecondKind::Pic, NodeFamily::RadauRight, 1, 1);
        let t = 2.0 * std::f64::consts::PI;
        let pts = convergence_study(&p, t, &[2000, 4000], &cfg, &ErrorSource::Exact, ErrorMetric::LinfTrajectory).unwrap();
        let ratio = pts[0].error / pts[1].error;
        assert!((ratio - 2.0).abs() < 0.02, "{ratio}");
    }

    proptest! {
        #[test]
        fn conjugate_symmetry(re in -10.0f64..2.0, im in -10.0f64..10.0, k in 1usize..5) {
            for kind in [PrecondKind::MinSrS, PrecondKind::Lu, PrecondKind::MinSrFlex, PrecondKind::Vdhs] {
                let cfg = config(kind, NodeFamily::RadauRight, 4, k);
                let z = c(re, im);
                if let (Some(a), Some(b)) = (stability_function(z, &cfg), stability_function(z.conj(), &cfg)) {
                    prop_assert!((a.conj() - b).norm() <= 1e-12 * a.norm().max(1.0));
                }
            }
        }

        #[test]
        fn order_fit_recovers_exponent(p in 0.5f64..8.0, c0 in 1e-3f64..1e3, h0 in 0.01f64..1.0) {
            let pts: Vec<(f64, f64)> = (0..5).map(|i| {
                let h = h0 / 2f64.powi(i);
                (h, c0 * h.powf(p))
            }).filter(|&(_, e)| e > ERROR_FLOOR).collect();
            prop_assume!(pts.len() >= 3);
            prop_assert!((estimate_order(&pts).unwrap() - p).abs() < 1e-8);
        }
    }
}
