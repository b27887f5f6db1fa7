//! SDC sweeps, node-implicit Newton solves and the time-step loop.
//!
//! One sweep solves, node by node,
//!
//! ```text
//! u_m − Δt·qΔ_mm·f(t_m, u_m) = u₀ + Δt·Σ_j (Q − Q_Δ)_mj·f(u_j^k) + Δt·Σ_{j<m} qΔ_mj·f(u_j^{k+1})
//! ```
//!
//! Right-hand-side evaluations are made lazily: `f(u_j)` is computed only
//! when a later term needs column `j`. With a diagonal `Q_Δ` the node solves
//! of one sweep are independent and can run on `M` workers; the same per-node
//! routine runs in both modes, so results do not depend on the worker count.

use std::ops::AddAssign;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm_inf, solve_tridiagonal, DenseMatrix, Scalar};
use crate::precond::{ButcherTableau, Preconditioner, PrecondKind};
use crate::problems::{Jacobian, Problem};
use crate::quadrature::CollocationSystem;

pub const DEFAULT_NEWTON_MAX: usize = 300;

/// Largest coupled Newton system (`M·N` unknowns) solved with dense LU.
const MAX_COUPLED_UNKNOWNS: usize = 2048;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub rhs_evals: u64,
    pub newton_iters: u64,
}

impl AddAssign for Counters {
    fn add_assign(&mut self, other: Self) {
        self.rhs_evals += other.rhs_evals;
        self.newton_iters += other.newton_iters;
    }
}

/// Nodes, integration matrix and weights the sweep runs on: either a
/// collocation system or a Runge-Kutta tableau.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeScheme {
    pub label: String,
    pub tau: Vec<f64>,
    pub q: DenseMatrix,
    pub b: Vec<f64>,
}

impl From<&CollocationSystem> for NodeScheme {
    fn from(coll: &CollocationSystem) -> Self {
        Self {
            label: format!("{}-{}", coll.nodes().family(), coll.m()),
            tau: coll.tau().to_vec(),
            q: coll.q().clone(),
            b: coll.b().to_vec(),
        }
    }
}

impl From<&ButcherTableau> for NodeScheme {
    fn from(t: &ButcherTableau) -> Self {
        Self {
            label: t.name.clone(),
            tau: t.c.clone(),
            q: t.a_matrix(),
            b: t.b.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    scheme: NodeScheme,
    precond: Preconditioner,
    sweeps: usize,
    newton_tol: Option<f64>,
    newton_max: usize,
    collocation_update: bool,
    workers: usize,
}

impl SweepConfig {
    pub fn new(coll: &CollocationSystem, precond: Preconditioner, sweeps: usize) -> Result<Self> {
        Self::from_scheme(NodeScheme::from(coll), precond, sweeps)
    }

    pub fn from_scheme(scheme: NodeScheme, precond: Preconditioner, sweeps: usize) -> Result<Self> {
        if precond.size() != scheme.tau.len() {
            return Err(Error::InvalidInput(format!(
                "preconditioner has size {}, scheme has {} nodes",
                precond.size(),
                scheme.tau.len()
            )));
        }
        Ok(Self {
            scheme,
            precond,
            sweeps,
            newton_tol: None,
            newton_max: DEFAULT_NEWTON_MAX,
            collocation_update: false,
            workers: 1,
        })
    }

    /// Runs a Runge-Kutta method: one sweep with `Q_Δ = Q = A` and the
    /// `b`-weighted step update.
    pub fn from_tableau(tableau: &ButcherTableau) -> Result<Self> {
        let precond = crate::precond::butcher_preconditioner(tableau)?;
        Ok(Self::from_scheme(NodeScheme::from(tableau), precond, 1)?.with_collocation_update(true))
    }

    /// Overrides the problem's default Newton tolerance.
    pub fn with_newton_tol(mut self, tol: f64) -> Result<Self> {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::InvalidInput(format!("newton tolerance must be positive, got {tol}")));
        }
        self.newton_tol = Some(tol);
        Ok(self)
    }

    pub fn with_newton_max(mut self, max: usize) -> Result<Self> {
        if max == 0 {
            return Err(Error::InvalidInput("newton iteration cap must be at least 1".into()));
        }
        self.newton_max = max;
        Ok(self)
    }

    pub fn with_collocation_update(mut self, on: bool) -> Self {
        self.collocation_update = on;
        self
    }

    /// `1` for serial sweeps or `M` for node-parallel sweeps with a
    /// diagonal preconditioner.
    pub fn with_workers(mut self, workers: usize) -> Result<Self> {
        let m = self.m();
        if workers != 1 && workers != m {
            return Err(Error::InvalidInput(format!("workers must be 1 or M = {m}, got {workers}")));
        }
        if workers > 1 && !self.precond.is_diagonal() {
            return Err(Error::InvalidInput(format!(
                "{} sweeps are sequential across nodes and cannot use {workers} workers",
                self.precond.kind()
            )));
        }
        self.workers = workers;
        Ok(self)
    }

    pub fn m(&self) -> usize {
        self.scheme.tau.len()
    }

    pub fn scheme(&self) -> &NodeScheme {
        &self.scheme
    }

    pub fn precond(&self) -> &Preconditioner {
        &self.precond
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn newton_tol(&self) -> Option<f64> {
        self.newton_tol
    }

    pub fn newton_max(&self) -> usize {
        self.newton_max
    }

    pub fn collocation_update(&self) -> bool {
        self.collocation_update
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// `Q − Q_Δ` at sweep `k` (1-based).
    fn explicit_part(&self, k: usize) -> DenseMatrix {
        &self.scheme.q - self.precond.matrix(k)
    }
}

/// Node values of one time step during the iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct StepState<T: Scalar> {
    pub t0: f64,
    pub dt: f64,
    pub u0: Vec<T>,
    pub nodes: Vec<Vec<T>>,
    /// `f` at the current node values, where already evaluated.
    f_nodes: Vec<Option<Vec<T>>>,
    /// Sweeps performed so far.
    pub sweeps_done: usize,
    pub counters: Counters,
}

impl<T: Scalar> StepState<T> {
    /// Copies `u₀` to every node.
    pub fn new(t0: f64, dt: f64, u0: &[T], m: usize) -> Self {
        Self {
            t0,
            dt,
            u0: u0.to_vec(),
            nodes: vec![u0.to_vec(); m],
            f_nodes: vec![None; m],
            sweeps_done: 0,
            counters: Counters::default(),
        }
    }

    fn node_time(&self, scheme: &NodeScheme, j: usize) -> f64 {
        self.t0 + self.dt * scheme.tau[j]
    }

    fn ensure_f<P: Problem<Scalar = T>>(&mut self, problem: &P, scheme: &NodeScheme, j: usize) {
        if self.f_nodes[j].is_none() {
            let t = self.node_time(scheme, j);
            self.f_nodes[j] = Some(problem.rhs(t, &self.nodes[j]));
            self.counters.rhs_evals += 1;
        }
    }
}

/// Result of solving one node system.
struct NodeSolve<T> {
    u: Vec<T>,
    f: Option<Vec<T>>,
    counters: Counters,
}

fn column_is_zero(a: &DenseMatrix, j: usize) -> bool {
    (0..a.rows()).all(|i| a[(i, j)] == 0.0)
}

/// `f(u_j)` of the current iterate is needed after sweep `k` when the next
/// sweep's explicit part uses column `j`, or the step update needs it.
fn f_needed_after(config: &SweepConfig, k: usize, j: usize) -> bool {
    if k < config.sweeps {
        !column_is_zero(&config.explicit_part(k + 1), j)
    } else {
        config.collocation_update
    }
}

fn axpy<T: Scalar>(acc: &mut [T], a: f64, x: &[T]) {
    for (y, &v) in acc.iter_mut().zip(x) {
        *y += v.scale(a);
    }
}

/// Rounding level of the residual `u − a·f − r` itself.
fn residual_floor<T: Scalar>(u: &[T], a: f64, f: &[T], r: &[T]) -> f64 {
    16.0 * f64::EPSILON * (norm_inf(u) + a.abs() * norm_inf(f) + norm_inf(r))
}

/// Newton iteration for `u − a·f(t, u) = r`, started from `guess`.
///
/// Stops when the residual infinity norm falls below `tol` or to its own
/// rounding level, or when the last correction falls below `tol`. Residual evaluations of `f` are part of the Newton cost and are not
/// counted as right-hand-side evaluations.
fn newton_node<P: Problem>(
    problem: &P,
    t: f64,
    a: f64,
    r: &[P::Scalar],
    guess: &[P::Scalar],
    tol: f64,
    max_iter: usize,
    node: usize,
) -> Result<(Vec<P::Scalar>, Option<Vec<P::Scalar>>, u64)> {
    let mut u = guess.to_vec();
    let mut iters = 0u64;
    loop {
        let f = problem.rhs(t, &u);
        let res: Vec<P::Scalar> = u.iter().zip(&f).zip(r).map(|((&x, &fx), &rx)| x - fx.scale(a) - rx).collect();
        let rn = norm_inf(&res);
        if !rn.is_finite() {
            return Err(Error::NewtonFailed {
                node,
                residual: rn,
                iterations: iters as usize,
            });
        }
        if rn <= tol.max(residual_floor(&u, a, &f, r)) {
            return Ok((u, Some(f), iters));
        }
        if iters as usize == max_iter {
            return Err(Error::NewtonFailed {
                node,
                residual: rn,
                iterations: iters as usize,
            });
        }
        let delta = match problem.jacobian(t, &u) {
            Jacobian::Scalar(j) => vec![res[0] / (P::Scalar::one() - j.scale(a))],
            Jacobian::Dense(j) => {
                let n = j.rows();
                let mut m = DenseMatrix::identity(n);
                for i in 0..n {
                    for c in 0..n {
                        m[(i, c)] -= j[(i, c)].scale(a);
                    }
                }
                crate::linalg::solve_dense(&m, &res).map_err(|_| Error::NewtonFailed {
                    node,
                    residual: rn,
                    iterations: iters as usize,
                })?
            }
            Jacobian::Tridiagonal(j) => solve_tridiagonal(&j.shifted_identity(a), &res).map_err(|_| Error::NewtonFailed {
                node,
                residual: rn,
                iterations: iters as usize,
            })?,
        };
        for (x, d) in u.iter_mut().zip(&delta) {
            *x -= *d;
        }
        iters += 1;
        let dn = norm_inf(&delta);
        if !dn.is_finite() {
            return Err(Error::NewtonFailed {
                node,
                residual: dn,
                iterations: iters as usize,
            });
        }
        if dn <= tol {
            return Ok((u, None, iters));
        }
    }
}

struct SweepContext<'a, P: Problem> {
    problem: &'a P,
    config: &'a SweepConfig,
    tol: f64,
    pool: Option<&'a rayon::ThreadPool>,
}

impl<P: Problem> SweepContext<'_, P> {
    /// Solves node `m` given its right-hand side and evaluates `f` of the
    /// result when `want_f`.
    fn solve_node(&self, state: &StepState<P::Scalar>, k: usize, m: usize, rhs: &[P::Scalar], want_f: bool) -> Result<NodeSolve<P::Scalar>> {
        let scheme = &self.config.scheme;
        let t = state.node_time(scheme, m);
        let d = self.config.precond.matrix(k)[(m, m)];
        let mut counters = Counters::default();
        let (u, f) = if d == 0.0 {
            (rhs.to_vec(), None)
        } else {
            let (u, f, iters) = newton_node(
                self.problem,
                t,
                state.dt * d,
                rhs,
                &state.nodes[m],
                self.tol,
                self.config.newton_max,
                m,
            )?;
            counters.newton_iters += iters;
            (u, f)
        };
        let f = if want_f {
            counters.rhs_evals += 1;
            Some(f.unwrap_or_else(|| self.problem.rhs(t, &u)))
        } else {
            None
        };
        Ok(NodeSolve { u, f, counters })
    }

    /// `u₀ + Δt·Σ_j e_mj·f(u_j^k)` for the explicit part `e`.
    fn explicit_rhs(&self, state: &StepState<P::Scalar>, e: &DenseMatrix, m: usize) -> Vec<P::Scalar> {
        let mut r = state.u0.clone();
        for j in 0..e.cols() {
            let c = e[(m, j)];
            if c != 0.0 {
                axpy(&mut r, state.dt * c, state.f_nodes[j].as_ref().expect("f evaluated"));
            }
        }
        r
    }

    fn sweep(&self, state: &mut StepState<P::Scalar>) -> Result<()> {
        let k = state.sweeps_done + 1;
        let scheme = &self.config.scheme;
        let m_nodes = self.config.m();
        let e = self.config.explicit_part(k);
        let qd = self.config.precond.matrix(k).clone();
        for j in 0..m_nodes {
            if !column_is_zero(&e, j) {
                state.ensure_f(self.problem, scheme, j);
            }
        }
        let want_f: Vec<bool> = (0..m_nodes)
            .map(|j| f_needed_after(self.config, k, j) || (0..m_nodes).any(|i| i > j && qd[(i, j)] != 0.0))
            .collect();

        if qd.is_diagonal() {
            let task = |m: usize| {
                let r = self.explicit_rhs(state, &e, m);
                self.solve_node(state, k, m, &r, want_f[m])
            };
            let solved: Vec<Result<NodeSolve<P::Scalar>>> = match self.pool {
                Some(pool) => pool.install(|| (0..m_nodes).into_par_iter().map(task).collect()),
                None => (0..m_nodes).map(task).collect(),
            };
            let mut new_nodes = Vec::with_capacity(m_nodes);
            let mut new_f = Vec::with_capacity(m_nodes);
            for s in solved {
                let s = s?;
                state.counters += s.counters;
                new_nodes.push(s.u);
                new_f.push(s.f);
            }
            state.nodes = new_nodes;
            state.f_nodes = new_f;
        } else if qd.is_lower_triangular() {
            let mut new_f: Vec<Option<Vec<P::Scalar>>> = vec![None; m_nodes];
            for m in 0..m_nodes {
                let mut r = self.explicit_rhs(state, &e, m);
                for (j, fj) in new_f.iter().enumerate().take(m) {
                    let c = qd[(m, j)];
                    if c != 0.0 {
                        axpy(&mut r, state.dt * c, fj.as_ref().expect("f evaluated"));
                    }
                }
                let s = self.solve_node(state, k, m, &r, want_f[m])?;
                state.counters += s.counters;
                state.nodes[m] = s.u;
                new_f[m] = s.f;
            }
            state.f_nodes = new_f;
        } else {
            self.coupled_sweep(state, &e, &qd, &want_f)?;
        }
        state.sweeps_done = k;
        Ok(())
    }

    /// Newton on all nodes at once for a full `Q_Δ`.
    fn coupled_sweep(
        &self,
        state: &mut StepState<P::Scalar>,
        e: &DenseMatrix,
        qd: &DenseMatrix,
        want_f: &[bool],
    ) -> Result<()> {
        let m_nodes = self.config.m();
        let n = state.u0.len();
        let size = m_nodes * n;
        if size > MAX_COUPLED_UNKNOWNS {
            return Err(Error::Unsupported(format!(
                "coupled node solve with {size} unknowns exceeds the dense limit {MAX_COUPLED_UNKNOWNS}"
            )));
        }
        let scheme = &self.config.scheme;
        let rhs: Vec<Vec<P::Scalar>> = (0..m_nodes).map(|m| self.explicit_rhs(state, e, m)).collect();
        let times: Vec<f64> = (0..m_nodes).map(|m| state.node_time(scheme, m)).collect();
        let mut u = state.nodes.clone();
        let mut iters = 0usize;
        let mut final_f: Option<Vec<Vec<P::Scalar>>> = None;
        loop {
            let f: Vec<Vec<P::Scalar>> = (0..m_nodes).map(|m| self.problem.rhs(times[m], &u[m])).collect();
            let mut res = Vec::with_capacity(size);
            for m in 0..m_nodes {
                for c in 0..n {
                    let mut v = u[m][c] - rhs[m][c];
                    for j in 0..m_nodes {
                        v -= f[j][c].scale(state.dt * qd[(m, j)]);
                    }
                    res.push(v);
                }
            }
            let rn = norm_inf(&res);
            let fail = |residual: f64, iterations: usize| Error::NewtonFailed {
                node: m_nodes,
                residual,
                iterations,
            };
            if !rn.is_finite() {
                return Err(fail(rn, iters));
            }
            let scale = state.dt * qd.norm_inf();
            let floor = (0..m_nodes).map(|m| residual_floor(&u[m], scale, &f[m], &rhs[m])).fold(0.0, f64::max);
            if rn <= self.tol.max(floor) {
                final_f = Some(f);
                break;
            }
            if iters == self.config.newton_max {
                return Err(fail(rn, iters));
            }
            let jac: Vec<DenseMatrix<P::Scalar>> = (0..m_nodes).map(|j| dense_jacobian(self.problem.jacobian(times[j], &u[j]), n)).collect();
            let mut big = DenseMatrix::<P::Scalar>::identity(size);
            for m in 0..m_nodes {
                for j in 0..m_nodes {
                    let w = state.dt * qd[(m, j)];
                    if w == 0.0 {
                        continue;
                    }
                    for r in 0..n {
                        for c in 0..n {
                            big[(m * n + r, j * n + c)] -= jac[j][(r, c)].scale(w);
                        }
                    }
                }
            }
            let delta = crate::linalg::solve_dense(&big, &res).map_err(|_| fail(rn, iters))?;
            for m in 0..m_nodes {
                for c in 0..n {
                    u[m][c] -= delta[m * n + c];
                }
            }
            iters += 1;
            let dn = norm_inf(&delta);
            if !dn.is_finite() {
                return Err(fail(dn, iters));
            }
            if dn <= self.tol {
                break;
            }
        }
        state.counters.newton_iters += iters as u64;
        let mut new_f = vec![None; m_nodes];
        for m in 0..m_nodes {
            if want_f[m] {
                state.counters.rhs_evals += 1;
                new_f[m] = Some(match &final_f {
                    Some(f) => f[m].clone(),
                    None => self.problem.rhs(times[m], &u[m]),
                });
            }
        }
        state.nodes = u;
        state.f_nodes = new_f;
        Ok(())
    }
}

fn dense_jacobian<T: Scalar>(j: Jacobian<T>, n: usize) -> DenseMatrix<T> {
    match j {
        Jacobian::Scalar(v) => DenseMatrix::from_diagonal(&[v]),
        Jacobian::Dense(a) => a,
        Jacobian::Tridiagonal(t) => {
            debug_assert_eq!(t.dim(), n);
            t.to_dense()
        }
    }
}

fn build_pool(workers: usize) -> Result<Option<rayon::ThreadPool>> {
    if workers <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map(Some)
        .map_err(|e| Error::InvalidInput(format!("cannot start {workers} workers: {e}")))
}

fn context<'a, P: Problem>(problem: &'a P, config: &'a SweepConfig, pool: Option<&'a rayon::ThreadPool>) -> SweepContext<'a, P> {
    SweepContext {
        problem,
        config,
        tol: config.newton_tol.unwrap_or_else(|| problem.newton_tol()),
        pool,
    }
}

/// Performs one sweep on `state`, serially.
pub fn sweep<P: Problem>(state: &mut StepState<P::Scalar>, config: &SweepConfig, problem: &P) -> Result<()> {
    context(problem, config, None).sweep(state)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult<T: Scalar> {
    pub u_end: Vec<T>,
    pub nodes: Vec<Vec<T>>,
    pub counters: Counters,
}

fn run_step<P: Problem>(ctx: &SweepContext<'_, P>, t0: f64, dt: f64, u0: &[P::Scalar]) -> Result<StepResult<P::Scalar>> {
    let config = ctx.config;
    let m = config.m();
    let mut state = StepState::new(t0, dt, u0, m);
    for _ in 0..config.sweeps {
        ctx.sweep(&mut state)?;
    }
    let u_end = if config.sweeps == 0 {
        u0.to_vec()
    } else if config.collocation_update {
        let mut u = u0.to_vec();
        for j in 0..m {
            let bj = config.scheme.b[j];
            if bj != 0.0 {
                state.ensure_f(ctx.problem, &config.scheme, j);
                axpy(&mut u, dt * bj, state.f_nodes[j].as_ref().expect("f evaluated"));
            }
        }
        u
    } else {
        state.nodes[m - 1].clone()
    };
    Ok(StepResult {
        u_end,
        nodes: state.nodes,
        counters: state.counters,
    })
}

/// One time step from `t0` to `t0 + dt`.
pub fn step<P: Problem>(t0: f64, dt: f64, u0: &[P::Scalar], config: &SweepConfig, problem: &P) -> Result<StepResult<P::Scalar>> {
    let pool = build_pool(config.workers)?;
    run_step(&context(problem, config, pool.as_ref()), t0, dt, u0)
}

/// Step endpoints and accumulated counters of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Scalar> {
    pub times: Vec<f64>,
    pub states: Vec<Vec<T>>,
    pub counters: Counters,
    /// Work of each individual step.
    pub step_counters: Vec<Counters>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn final_state(&self) -> &[T] {
        self.states.last().expect("trajectory has the initial state")
    }
}

/// Integrates from `0` to `t_end` with `n_steps` uniform steps.
pub fn integrate<P: Problem>(problem: &P, t_end: f64, n_steps: usize, config: &SweepConfig) -> Result<Trajectory<P::Scalar>> {
    integrate_from(problem, 0.0, &problem.initial_value(), t_end, n_steps, config)
}

pub fn integrate_from<P: Problem>(
    problem: &P,
    t0: f64,
    u0: &[P::Scalar],
    t_end: f64,
    n_steps: usize,
    config: &SweepConfig,
) -> Result<Trajectory<P::Scalar>> {
    if n_steps == 0 {
        return Err(Error::InvalidInput("need at least one step".into()));
    }
    if !(t_end > t0 && t_end.is_finite()) {
        return Err(Error::InvalidInput(format!("final time {t_end} must exceed {t0}")));
    }
    if u0.len() != problem.dim() {
        return Err(Error::InvalidInput(format!(
            "initial value has length {}, problem has dimension {}",
            u0.len(),
            problem.dim()
        )));
    }
    let pool = build_pool(config.workers)?;
    let ctx = context(problem, config, pool.as_ref());
    let dt = (t_end - t0) / n_steps as f64;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut counters = Counters::default();
    let mut step_counters = Vec::with_capacity(n_steps);
    times.push(t0);
    states.push(u0.to_vec());
    let mut u = u0.to_vec();
    for n in 0..n_steps {
        let ts = t0 + n as f64 * dt;
        let r = run_step(&ctx, ts, dt, &u).map_err(|e| Error::StepFailed {
            step: n,
            source: Box::new(e),
        })?;
        counters += r.counters;
        step_counters.push(r.counters);
        u = r.u_end;
        times.push(if n + 1 == n_steps { t_end } else { t0 + (n + 1) as f64 * dt });
        states.push(u.clone());
    }
    Ok(Trajectory {
        times,
        states,
        counters,
        step_counters,
    })
}

/// Fully implicit collocation run (`Q_Δ = Q`, one sweep) for reference
/// solutions of non-stiff systems with small dimension.
pub fn collocation_config(coll: &CollocationSystem) -> Result<SweepConfig> {
    SweepConfig::new(coll, crate::precond::build(PrecondKind::Collocation, coll)?, 1)
}

/// Reference trajectory from five-node Radau-Right collocation with `n_steps` steps.
pub fn reference_solution<P: Problem>(problem: &P, t_end: f64, n_steps: usize) -> Result<Trajectory<P::Scalar>> {
    let coll = CollocationSystem::new(crate::quadrature::NodeFamily::RadauRight, 5)?;
    integrate(problem, t_end, n_steps, &collocation_config(&coll)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precond::build;
    use crate::problems::{dahlquist, lorenz};
    use crate::quadrature::NodeFamily;
    use num_complex::Complex64;

    fn radau(m: usize) -> CollocationSystem {
        CollocationSystem::new(NodeFamily::RadauRight, m).unwrap()
    }

    fn config(kind: PrecondKind, m: usize, k: usize) -> SweepConfig {
        let c = radau(m);
        SweepConfig::new(&c, build(kind, &c).unwrap(), k).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zero_sweeps_is_identity() {
        let p = dahlquist(c(-1.0, 2.0));
        let r = step(0.0, 0.5, &[c(1.0, 0.0)], &config(PrecondKind::MinSrS, 3, 0), &p).unwrap();
        assert_eq!(r.u_end, vec![c(1.0, 0.0)]);
        assert_eq!(r.counters, Counters::default());
        let traj = integrate(&p, 1.0, 1, &config(PrecondKind::Lu, 3, 0)).unwrap();
        assert_eq!(traj.states, vec![vec![c(1.0, 0.0)], vec![c(1.0, 0.0)]]);
    }

    #[test]
    fn picard_gives_truncated_exponential() {
        let z = c(-0.3, 0.7);
        let p = dahlquist(z);
        for k in 1..=5 {
            let r = step(0.0, 1.0, &[c(1.0, 0.0)], &config(PrecondKind::Pic, 4, k), &p).unwrap();
            let mut term = c(1.0, 0.0);
            let mut sum = term;
            for n in 1..=k {
                term = term * z / n as f64;
                sum += term;
            }
            assert!((r.u_end[0] - sum).norm() < 1e-14, "K={k}");
            assert_eq!(r.counters.newton_iters, 0);
            assert_eq!(r.counters.rhs_evals, (k * 4) as u64);
        }
    }

    #[test]
    fn picard_counter_formula() {
        let p = lorenz();
        for (k, steps, update) in [(3, 5, false), (2, 4, true), (4, 1, false)] {
            let cfg = config(PrecondKind::Pic, 4, k).with_collocation_update(update);
            let t = integrate(&p, 0.1, steps, &cfg).unwrap();
            let extra = if update { 4 * steps } else { 0 };
            assert_eq!(t.counters.rhs_evals as usize, steps * k * 4 + extra);
        }
    }

    #[test]
    fn linear_node_solve_takes_one_newton_step() {
        let p = dahlquist(c(-2.0, 1.0));
        let r = step(0.0, 0.1, &[c(1.0, 0.0)], &config(PrecondKind::MinSrNs, 4, 3), &p).unwrap();
        assert_eq!(r.counters.newton_iters, 12);
        assert_eq!(r.counters.rhs_evals, 12);
    }

    #[test]
    fn one_collocation_sweep_solves_collocation_problem() {
        let coll = radau(3);
        let z = c(-1.5, 2.0);
        let p = dahlquist(z);
        let cfg = collocation_config(&coll).unwrap();
        for start in [c(1.0, 0.0), c(-3.0, 5.0)] {
            let mut state = StepState::new(0.0, 1.0, &[c(1.0, 0.0)], 3);
            state.nodes = vec![vec![start]; 3];
            sweep(&mut state, &cfg, &p).unwrap();
            // (I − zQ)u = 𝟙
            for i in 0..3 {
                let mut v = state.nodes[i][0];
                for j in 0..3 {
                    v -= z * coll.q()[(i, j)] * state.nodes[j][0];
                }
                assert!((v - c(1.0, 0.0)).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn implicit_euler_as_tableau() {
        let t = ButcherTableau::new("ie", vec![vec![1.0]], vec![1.0], vec![1.0]).unwrap();
        let z = c(-3.0, 1.0);
        let p = dahlquist(z);
        let r = step(0.0, 1.0, &[c(1.0, 0.0)], &SweepConfig::from_tableau(&t).unwrap(), &p).unwrap();
        assert!((r.u_end[0] - c(1.0, 0.0) / (c(1.0, 0.0) - z)).norm() < 1e-14);
    }

    #[test]
    fn rk4_reproduces_its_stability_polynomial() {
        let z = c(-0.4, 0.9);
        let p = dahlquist(z);
        let r = step(0.0, 1.0, &[c(1.0, 0.0)], &SweepConfig::from_tableau(&ButcherTableau::rk4()).unwrap(), &p).unwrap();
        let want = c(1.0, 0.0) + z + z * z / 2.0 + z * z * z / 6.0 + z * z * z * z / 24.0;
        assert!((r.u_end[0] - want).norm() < 1e-14);
        assert_eq!(r.counters.newton_iters, 0);
    }

    #[test]
    fn sweeps_converge_to_collocation_solution() {
        let coll = radau(4);
        let z = c(-0.2, 0.3);
        let p = dahlquist(z);
        let r = step(0.0, 1.0, &[c(1.0, 0.0)], &config(PrecondKind::Lu, 4, 30), &p).unwrap();
        for i in 0..4 {
            let mut v = r.nodes[i][0];
            for j in 0..4 {
                v -= z * coll.q()[(i, j)] * r.nodes[j][0];
            }
            assert!((v - c(1.0, 0.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn lower_triangular_matches_stability_recursion() {
        let coll = radau(3);
        let z = c(-1.0, 0.5);
        let p = dahlquist(z);
        for kind in [PrecondKind::ImplicitEuler, PrecondKind::Lu, PrecondKind::ExplicitEuler] {
            let qd = build(kind, &coll).unwrap().matrix(1).to_complex();
            let q = coll.q().to_complex();
            let mut u = vec![c(1.0, 0.0); 3];
            let mut lhs = DenseMatrix::<Complex64>::identity(3);
            for i in 0..3 {
                for j in 0..3 {
                    lhs[(i, j)] -= z * qd[(i, j)];
                }
            }
            for _ in 0..3 {
                let mut rhs = vec![c(1.0, 0.0); 3];
                for i in 0..3 {
                    for j in 0..3 {
                        rhs[i] += z * (q[(i, j)] - qd[(i, j)]) * u[j];
                    }
                }
                u = crate::linalg::solve_dense(&lhs, &rhs).unwrap();
            }
            let r = step(0.0, 1.0, &[c(1.0, 0.0)], &config(kind, 3, 3), &p).unwrap();
            assert!((r.u_end[0] - u[2]).norm() < 1e-13, "{kind}");
        }
    }

    #[test]
    fn flex_uses_sweep_dependent_matrices() {
        let coll = radau(3);
        let z = c(-4.0, 0.0);
        let p = dahlquist(z);
        let pre = build(PrecondKind::MinSrFlex, &coll).unwrap();
        let mut u = vec![c(1.0, 0.0); 3];
        for k in 1..=4 {
            let qd = pre.matrix(k);
            u = (0..3)
                .map(|i| {
                    let mut r = c(1.0, 0.0);
                    for j in 0..3 {
                        r += z * (coll.q()[(i, j)] - qd[(i, j)]) * u[j];
                    }
                    r / (c(1.0, 0.0) - z * qd[(i, i)])
                })
                .collect();
        }
        let r = step(0.0, 1.0, &[c(1.0, 0.0)], &SweepConfig::new(&coll, pre, 4).unwrap(), &p).unwrap();
        assert!((r.u_end[0] - u[2]).norm() < 1e-14);
    }

    #[test]
    fn parallel_is_bit_identical() {
        let p = lorenz();
        for kind in [PrecondKind::MinSrNs, PrecondKind::MinSrS, PrecondKind::MinSrFlex] {
            let serial = integrate(&p, 1.24, 40, &config(kind, 4, 4)).unwrap();
            let par = integrate(&p, 1.24, 40, &config(kind, 4, 4).with_workers(4).unwrap()).unwrap();
            assert_eq!(serial, par);
        }
    }

    #[test]
    fn worker_count_validation() {
        assert!(config(PrecondKind::Lu, 4, 2).with_workers(4).is_err());
        assert!(config(PrecondKind::MinSrS, 4, 2).with_workers(3).is_err());
        assert!(config(PrecondKind::MinSrS, 4, 2).with_workers(4).is_ok());
    }

    #[test]
    fn newton_failure_is_reported_with_step() {
        let p = lorenz();
        let cfg = config(PrecondKind::MinSrS, 3, 2).with_newton_max(1).unwrap().with_newton_tol(1e-300).unwrap();
        match integrate(&p, 1.0, 2, &cfg) {
            Err(Error::StepFailed { step: 0, source }) => assert!(matches!(*source, Error::NewtonFailed { .. })),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lorenz_reference_is_converged() {
        let p = lorenz();
        let coarse = reference_solution(&p, 1.24, 4096).unwrap();
        let fine = reference_solution(&p, 1.24, 8192).unwrap();
        let diff: Vec<f64> = coarse.final_state().iter().zip(fine.final_state()).map(|(a, b)| a - b).collect();
        // Ninth-order method: the fine run is 2⁹ times more accurate.
        assert!(norm_inf(&diff) < 1e-10, "{diff:?}");
    }

    #[test]
    fn lorenz_sweeps_are_reproducible() {
        let p = lorenz();
        let a = integrate(&p, 0.5, 10, &config(PrecondKind::Lu, 4, 3)).unwrap();
        let b = integrate(&p, 0.5, 10, &config(PrecondKind::Lu, 4, 3)).unwrap();
        assert_eq!(a, b);
        assert!(a.counters.newton_iters > 0);
    }

    #[test]
    fn rejects_bad_arguments() {
        let p = lorenz();
        let cfg = config(PrecondKind::Pic, 2, 1);
        assert!(integrate(&p, 1.0, 0, &cfg).is_err());
        assert!(integrate(&p, -1.0, 2, &cfg).is_err());
        assert!(integrate_from(&p, 0.0, &[1.0], 1.0, 2, &cfg).is_err());
        let coll = radau(3);
        assert!(SweepConfig::new(&coll, build(PrecondKind::Pic, &radau(2)).unwrap(), 1).is_err());
    }
}
