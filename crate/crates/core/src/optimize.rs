//! Diagonal coefficients that make the stiff iteration matrix nilpotent,
//! plus spectral radii of the iteration matrices.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{determinant, fit_power_law, norm_inf, solve_dense, spectral_radius, DenseMatrix};
use crate::precond::reduce_zero_node;
use crate::quadrature::{CollocationSystem, NodeFamily, MAX_NODES};

pub const RESIDUAL_TOL: f64 = 1e-11;
const MAX_ITERATIONS: usize = 200;
const MAX_HALVINGS: usize = 30;
const FD_STEP: f64 = 1e-7;

/// `Fᵢ(d) = det[(1−τᵢ)I + τᵢ·diag(d)⁻¹Q] − 1` over the nodes with `τᵢ > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StiffResidual {
    tau: Vec<f64>,
    q: DenseMatrix,
    zero_node: bool,
}

impl StiffResidual {
    /// Residual for a collocation system; a zero first node is reduced away.
    pub fn new(coll: &CollocationSystem) -> Result<Self> {
        if coll.nodes().has_zero_node() {
            let r = reduce_zero_node(coll)?;
            return Ok(Self {
                tau: r.tau,
                q: r.q,
                zero_node: true,
            });
        }
        Self::from_parts(coll.tau().to_vec(), coll.q().clone())
    }

    pub fn from_parts(tau: Vec<f64>, q: DenseMatrix) -> Result<Self> {
        if q.rows() != tau.len() || !q.is_square() || tau.is_empty() {
            return Err(Error::InvalidInput("nodes and matrix sizes differ".into()));
        }
        Ok(Self {
            tau,
            q,
            zero_node: false,
        })
    }

    /// Number of unknown coefficients.
    pub fn dim(&self) -> usize {
        self.tau.len()
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn q(&self) -> &DenseMatrix {
        &self.q
    }

    pub fn has_reduced_zero_node(&self) -> bool {
        self.zero_node
    }

    /// Residual at an arbitrary evaluation point `t`.
    pub fn polynomial(&self, d: &[f64], t: f64) -> Result<f64> {
        check_positive(d, self.dim())?;
        Ok(self.det_minus_one(d, t))
    }

    pub fn evaluate(&self, d: &[f64]) -> Result<Vec<f64>> {
        check_positive(d, self.dim())?;
        Ok(self.tau.iter().map(|&t| self.det_minus_one(d, t)).collect())
    }

    fn det_minus_one(&self, d: &[f64], t: f64) -> f64 {
        let n = self.dim();
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = t * self.q[(i, j)] / d[i];
            }
            a[(i, i)] += 1.0 - t;
        }
        determinant(&a) - 1.0
    }

    /// Full-size diagonal: prepends the zero coefficient when the node was reduced.
    pub fn embed(&self, d: &[f64]) -> Vec<f64> {
        if self.zero_node {
            std::iter::once(0.0).chain(d.iter().copied()).collect()
        } else {
            d.to_vec()
        }
    }
}

fn check_positive(d: &[f64], n: usize) -> Result<()> {
    if d.len() != n {
        return Err(Error::InvalidInput(format!("expected {n} coefficients, got {}", d.len())));
    }
    if let Some(x) = d.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidInput(format!("coefficient {x} is not positive")));
    }
    Ok(())
}

pub fn residual(d: &[f64], sys: &StiffResidual) -> Result<Vec<f64>> {
    sys.evaluate(d)
}

/// Damped Newton on `F(d) = 0` with a forward-difference Jacobian.
///
/// Succeeds when `‖F‖∞ ≤ 1e-11` and the solution is strictly increasing.
pub fn solve_min_sr_s(sys: &StiffResidual, guess: &[f64]) -> Result<Vec<f64>> {
    check_positive(guess, sys.dim())?;
    let m = sys.dim();
    let fail = |reason: String| Error::OptimizerFailed { m, reason };
    let mut d = guess.to_vec();
    let mut f = sys.evaluate(&d)?;
    let mut fnorm = norm_inf(&f);
    let mut iterations = 0;
    while fnorm > RESIDUAL_TOL {
        if iterations == MAX_ITERATIONS {
            return Err(fail(format!("no convergence after {MAX_ITERATIONS} iterations, residual {fnorm:.3e}")));
        }
        iterations += 1;
        let mut jac = DenseMatrix::zeros(m, m);
        for j in 0..m {
            let h = FD_STEP * d[j].abs().max(1.0);
            let mut dp = d.clone();
            dp[j] += h;
            let fp = sys.evaluate(&dp)?;
            for i in 0..m {
                jac[(i, j)] = (fp[i] - f[i]) / h;
            }
        }
        let step = solve_dense(&jac, &f).map_err(|e| fail(format!("jacobian solve failed: {e}")))?;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = d.iter().zip(&step).map(|(x, s)| x - lambda * s).collect();
            if trial.iter().all(|&x| x > 0.0 && x.is_finite()) {
                let ft = sys.evaluate(&trial)?;
                let n = norm_inf(&ft);
                if n < fnorm {
                    accepted = Some((trial, ft, n));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let (dn, fnew, nnew) = accepted.ok_or_else(|| fail(format!("line search stalled at residual {fnorm:.3e}")))?;
        d = dn;
        f = fnew;
        fnorm = nnew;
    }
    if d.windows(2).any(|w| w[0] >= w[1]) {
        return Err(fail(format!("solution {d:?} is not increasingly ordered")));
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub family: NodeFamily,
    pub m: usize,
    /// Full-size diagonal, including a leading zero for a zero first node.
    pub d: Vec<f64>,
    /// `ρ(I − Q_Δ⁻¹Q)`, on the reduced system for a zero first node.
    pub rho_stiff: f64,
    pub residual_norm: f64,
}

/// Optimized diagonals keyed by `(family, M)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTable {
    entries: Vec<TableEntry>,
}

impl CoefficientTable {
    pub fn get(&self, family: NodeFamily, m: usize) -> Option<&TableEntry> {
        self.entries.iter().find(|e| e.family == family && e.m == m)
    }

    pub fn insert(&mut self, entry: TableEntry) {
        self.entries.retain(|e| !(e.family == entry.family && e.m == entry.m));
        self.entries.push(entry);
        self.entries.sort_by_key(|e| (e.family.as_str(), e.m));
    }

    pub fn entries(&self) -> &[TableEntry] {
        &self.entries
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("bad coefficient table: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }
}

/// Solves for every `M` from the family minimum up to `m_target`, seeding
/// each solve with a power law fitted through the previous solution.
pub fn continuation(family: NodeFamily, m_target: usize) -> Result<CoefficientTable> {
    if m_target > MAX_NODES || m_target < family.min_nodes() {
        return Err(Error::InvalidInput(format!(
            "M = {m_target} outside [{}, {MAX_NODES}] for {family}",
            family.min_nodes()
        )));
    }
    let mut table = CoefficientTable::default();
    let mut prev: Option<(Vec<f64>, Vec<f64>, usize)> = None;
    for m in family.min_nodes()..=m_target {
        let coll = CollocationSystem::new(family, m)?;
        let sys = StiffResidual::new(&coll)?;
        let guess: Vec<f64> = match &prev {
            Some((tau, d, pm)) if d.len() >= 2 => {
                let pts: Vec<(f64, f64)> = tau.iter().zip(d).map(|(&t, &x)| (t, *pm as f64 * x)).collect();
                let (alpha, beta) = fit_power_law(&pts)?;
                sys.tau().iter().map(|t| alpha * t.powf(beta) / m as f64).collect()
            }
            _ => sys.tau().iter().map(|t| t / m as f64).collect(),
        };
        let d = solve_min_sr_s(&sys, &guess)?;
        let residual_norm = norm_inf(&sys.evaluate(&d)?);
        let k = stiff_matrix(&DenseMatrix::from_diagonal(&d), sys.q())?;
        table.insert(TableEntry {
            family,
            m,
            d: sys.embed(&d),
            rho_stiff: spectral_radius(&k)?,
            residual_norm,
        });
        prev = Some((sys.tau().to_vec(), d, m));
    }
    Ok(table)
}

fn cache() -> &'static Mutex<BTreeMap<(&'static str, usize), TableEntry>> {
    static CACHE: OnceLock<Mutex<BTreeMap<(&'static str, usize), TableEntry>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Continuation entry for `(family, M)`, memoized per process.
pub fn min_sr_s_entry(family: NodeFamily, m: usize) -> Result<TableEntry> {
    let key = (family.as_str(), m);
    if let Some(e) = cache().lock().expect("cache lock").get(&key) {
        return Ok(e.clone());
    }
    let table = continuation(family, m)?;
    let mut c = cache().lock().expect("cache lock");
    for e in table.entries() {
        c.insert((e.family.as_str(), e.m), e.clone());
    }
    Ok(c[&key].clone())
}

/// Full-size `MIN-SR-S` diagonal for a collocation system.
pub fn min_sr_s_diagonal(coll: &CollocationSystem) -> Result<Vec<f64>> {
    Ok(min_sr_s_entry(coll.nodes().family(), coll.m())?.d)
}

/// `ρ(Q − Q_Δ)`.
pub fn spectral_radius_nonstiff(qd: &DenseMatrix, coll: &CollocationSystem) -> Result<f64> {
    check_shape(qd, coll)?;
    spectral_radius(&(coll.q() - qd))
}

/// `ρ(I − Q_Δ⁻¹Q)`. With a zero first node and a zero first row in `Q_Δ`
/// the reduced system is used.
pub fn spectral_radius_stiff(qd: &DenseMatrix, coll: &CollocationSystem) -> Result<f64> {
    check_shape(qd, coll)?;
    let (q, qd) = if coll.nodes().has_zero_node() && qd.row(0).iter().all(|&x| x == 0.0) {
        (coll.q().trailing_block(1), qd.trailing_block(1))
    } else {
        (coll.q().clone(), qd.clone())
    };
    spectral_radius(&stiff_matrix(&qd, &q)?)
}

/// `I − Q_Δ⁻¹Q`.
pub fn stiff_matrix(qd: &DenseMatrix, q: &DenseMatrix) -> Result<DenseMatrix> {
    let lu = crate::linalg::lu_decompose(qd)?;
    let n = q.rows();
    let mut k = DenseMatrix::identity(n);
    for j in 0..n {
        let col: Vec<f64> = (0..n).map(|i| q[(i, j)]).collect();
        let x = lu.solve(&col);
        for i in 0..n {
            k[(i, j)] -= x[i];
        }
    }
    Ok(k)
}

fn check_shape(qd: &DenseMatrix, coll: &CollocationSystem) -> Result<()> {
    if qd.rows() != coll.m() || !qd.is_square() {
        return Err(Error::InvalidInput(format!(
            "preconditioner is {}x{}, collocation has {} nodes",
            qd.rows(),
            qd.cols(),
            coll.m()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precond::{build, PrecondKind};

    fn radau(m: usize) -> CollocationSystem {
        CollocationSystem::new(NodeFamily::RadauRight, m).unwrap()
    }

    #[test]
    fn single_node_residual_vanishes_at_one() {
        let sys = StiffResidual::new(&radau(1)).unwrap();
        assert_eq!(sys.evaluate(&[1.0]).unwrap(), vec![0.0]);
        assert_eq!(solve_min_sr_s(&sys, &[1.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn residual_vanishes_at_zero() {
        let sys = StiffResidual::new(&radau(4)).unwrap();
        for d in [[0.1, 0.2, 0.3, 0.4], [1.0, 0.5, 2.0, 0.01]] {
            assert!(sys.polynomial(&d, 0.0).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_non_positive() {
        let sys = StiffResidual::new(&radau(2)).unwrap();
        assert!(sys.evaluate(&[0.0, 1.0]).is_err());
        assert!(sys.evaluate(&[-1.0, 1.0]).is_err());
        assert!(sys.evaluate(&[1.0]).is_err());
    }

    #[test]
    fn published_four_node_values() {
        let published = [0.05363588, 0.18297728, 0.31493338, 0.38516736];
        let sys = StiffResidual::new(&radau(4)).unwrap();
        assert!(norm_inf(&sys.evaluate(&published).unwrap()) <= 1e-6);
        let guess: Vec<f64> = sys.tau().iter().map(|t| t / 4.0).collect();
        let d = solve_min_sr_s(&sys, &guess).unwrap();
        for (x, p) in d.iter().zip(published) {
            assert!((x - p).abs() < 1e-5, "{d:?}");
        }
    }

    /// Coarse grid minimization of `ρ(K_S)` over ordered pairs, then a
    /// polish on the 2×2 nilpotency conditions `tr K = 0`, `det K = 0`.
    fn two_node_grid_minimizer() -> (f64, f64) {
        let coll = radau(2);
        let q = coll.q();
        let rho = |a: f64, b: f64| spectral_radius_stiff(&DenseMatrix::from_diagonal(&[a, b]), &coll).unwrap();
        let (mut best, mut arg) = (f64::INFINITY, (0.0, 0.0));
        let n = 400;
        for i in 1..n {
            for j in (i + 1)..n {
                let (a, b) = (i as f64 / n as f64, j as f64 / n as f64);
                let r = rho(a, b);
                if r < best {
                    best = r;
                    arg = (a, b);
                }
            }
        }
        // Zero trace fixes b(a); det(D − Q) = 0 leaves a scalar root in a.
        let b_of = |a: f64| q[(1, 1)] / (2.0 - q[(0, 0)] / a);
        let g = |a: f64| (a - q[(0, 0)]) * (b_of(a) - q[(1, 1)]) - q[(0, 1)] * q[(1, 0)];
        let (mut lo, mut hi) = (arg.0 - 0.01, arg.0 + 0.01);
        assert!(g(lo) * g(hi) < 0.0, "no sign change near the grid minimizer");
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(lo) * g(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let a = 0.5 * (lo + hi);
        (a, b_of(a))
    }

    #[test]
    fn two_nodes_match_ordered_grid_minimizer() {
        let table = continuation(NodeFamily::RadauRight, 2).unwrap();
        let d = &table.get(NodeFamily::RadauRight, 2).unwrap().d;
        let (a, b) = two_node_grid_minimizer();
        assert!((d[0] - a).abs() < 1e-9 && (d[1] - b).abs() < 1e-9, "{d:?} vs ({a}, {b})");
        assert!(d[0] < d[1]);
    }

    #[test]
    fn continuation_radau_up_to_eight() {
        let table = continuation(NodeFamily::RadauRight, 8).unwrap();
        for m in 1..=8 {
            let e = table.get(NodeFamily::RadauRight, m).unwrap();
            assert!(e.d.iter().all(|&x| x > 0.0));
            assert!(e.d.windows(2).all(|w| w[0] < w[1]));
            assert!(e.residual_norm <= RESIDUAL_TOL);
            let coll = radau(m);
            let rho = spectral_radius_stiff(&DenseMatrix::from_diagonal(&e.d), &coll).unwrap();
            assert!((rho - e.rho_stiff).abs() < 1e-12);
            assert!(rho < 0.05, "M={m} rho={rho}");
            let k = stiff_matrix(&DenseMatrix::from_diagonal(&e.d), coll.q()).unwrap();
            assert!(k.pow(m as u32).norm_inf() <= 1e-7, "M={m}");
        }
        assert!(table.get(NodeFamily::RadauRight, 4).unwrap().rho_stiff <= 1e-3);
    }

    #[test]
    fn continuation_is_deterministic() {
        let a = continuation(NodeFamily::RadauRight, 5).unwrap();
        let b = continuation(NodeFamily::RadauRight, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lobatto_prepends_zero() {
        let table = continuation(NodeFamily::Lobatto, 5).unwrap();
        let e = table.get(NodeFamily::Lobatto, 5).unwrap();
        assert_eq!(e.d.len(), 5);
        assert_eq!(e.d[0], 0.0);
        assert!(e.d[1..].windows(2).all(|w| w[0] < w[1]));
        assert!(e.d[1] > 0.0);
        let coll = CollocationSystem::new(NodeFamily::Lobatto, 5).unwrap();
        assert!(spectral_radius_stiff(&DenseMatrix::from_diagonal(&e.d), &coll).unwrap() < 0.05);
        assert!((table.get(NodeFamily::Lobatto, 2).unwrap().d[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn table_json_round_trip() {
        let table = continuation(NodeFamily::RadauRight, 3).unwrap();
        let back = CoefficientTable::from_json(&table.to_json()).unwrap();
        assert_eq!(table, back);
        let dir = std::env::temp_dir().join(format!("psdc-table-{}.json", std::process::id()));
        table.save(&dir).unwrap();
        assert_eq!(CoefficientTable::load(&dir).unwrap(), table);
        std::fs::remove_file(dir).ok();
    }

    #[test]
    fn rejects_out_of_range_targets() {
        assert!(continuation(NodeFamily::RadauRight, 17).is_err());
        assert!(continuation(NodeFamily::Lobatto, 1).is_err());
    }

    #[test]
    fn non_stiff_radius_of_min_sr_ns_is_zero() {
        for m in 1..=8 {
            let c = radau(m);
            let qd = build(PrecondKind::MinSrNs, &c).unwrap();
            let rho = spectral_radius_nonstiff(qd.matrix(1), &c).unwrap();
            if m <= 2 {
                assert!(rho <= 1e-8, "M={m} rho={rho}");
            }
            // A rounding-level perturbation of a nilpotent matrix moves its
            // eigenvalues by O(eps^(1/M)).
            assert!(rho.powi(m as i32) <= 1e-13 * c.q().norm_inf().powi(m as i32), "M={m} rho={rho}");
        }
    }

    #[test]
    fn literature_radii() {
        let c = radau(4);
        let rho = |k| spectral_radius_stiff(build(k, &c).unwrap().matrix(1), &c).unwrap();
        assert!((rho(PrecondKind::Vdhs) - 0.025).abs() <= 0.05 * 0.025);
        assert!((rho(PrecondKind::Min) - 0.42).abs() <= 0.05 * 0.42);
    }

    #[test]
    fn singular_preconditioner_has_no_stiff_radius() {
        let c = radau(3);
        assert!(spectral_radius_stiff(&DenseMatrix::zeros(3, 3), &c).is_err());
        assert!(spectral_radius_stiff(&DenseMatrix::zeros(2, 2), &c).is_err());
    }
}
