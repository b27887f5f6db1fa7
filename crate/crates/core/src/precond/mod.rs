//! Preconditioner matrices `Q_Δ` for the SDC sweep.
//!
//! A [`Preconditioner`] holds one matrix, or for the sweep-dependent
//! `MIN-SR-FLEX` family one matrix per sweep; sweeps past the end of the
//! list reuse the last matrix.

mod butcher;
mod tables;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, LuDecomposition};
use crate::optimize;
use crate::quadrature::{CollocationSystem, NodeFamily};

pub use butcher::{butcher_preconditioner, ButcherTableau};
pub use tables::{literature_coefficients, LiteratureTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PrecondKind {
    /// Zero matrix: Picard iteration.
    Pic,
    /// Explicit Euler staircase.
    ExplicitEuler,
    /// Implicit Euler staircase.
    ImplicitEuler,
    /// `diag(τ)`: implicit Euler from `t₀` straight to each node.
    IePar,
    /// Transposed `U` factor of `LU(Qᵀ)`.
    Lu,
    /// Literature diagonal for M=4 Radau-Right nodes.
    Vdhs,
    /// Literature diagonal for M=4 Radau-Right nodes.
    Min,
    /// Literature diagonal for M=4 Radau-Right nodes.
    Min3,
    /// `diag(τ)/M`; nilpotent non-stiff iteration matrix.
    MinSrNs,
    /// Optimized diagonal with nilpotent stiff iteration matrix.
    MinSrS,
    /// `diag(τ)/k` at sweep `k ≤ M`, `MIN-SR-S` afterwards.
    MinSrFlex,
    /// Lower-triangular Butcher matrix, `Q_Δ = Q = A`.
    ButcherDirk,
    /// `Q_Δ = Q`: one sweep solves the full collocation problem.
    Collocation,
}

impl PrecondKind {
    pub const ALL: [PrecondKind; 13] = [
        PrecondKind::Pic,
        PrecondKind::ExplicitEuler,
        PrecondKind::ImplicitEuler,
        PrecondKind::IePar,
        PrecondKind::Lu,
        PrecondKind::Vdhs,
        PrecondKind::Min,
        PrecondKind::Min3,
        PrecondKind::MinSrNs,
        PrecondKind::MinSrS,
        PrecondKind::MinSrFlex,
        PrecondKind::ButcherDirk,
        PrecondKind::Collocation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PrecondKind::Pic => "pic",
            PrecondKind::ExplicitEuler => "ee",
            PrecondKind::ImplicitEuler => "ie",
            PrecondKind::IePar => "iepar",
            PrecondKind::Lu => "lu",
            PrecondKind::Vdhs => "vdhs",
            PrecondKind::Min => "min",
            PrecondKind::Min3 => "min3",
            PrecondKind::MinSrNs => "min-sr-ns",
            PrecondKind::MinSrS => "min-sr-s",
            PrecondKind::MinSrFlex => "min-sr-flex",
            PrecondKind::ButcherDirk => "butcher",
            PrecondKind::Collocation => "collocation",
        }
    }
}

impl fmt::Display for PrecondKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PrecondKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        PrecondKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| Error::InvalidInput(format!("unknown preconditioner '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preconditioner {
    kind: PrecondKind,
    sweeps: Vec<DenseMatrix>,
}

impl Preconditioner {
    pub(crate) fn from_parts(kind: PrecondKind, sweeps: Vec<DenseMatrix>) -> Self {
        assert!(!sweeps.is_empty());
        Self { kind, sweeps }
    }

    pub fn kind(&self) -> PrecondKind {
        self.kind
    }

    /// Matrix used at sweep `k` (1-based).
    pub fn matrix(&self, k: usize) -> &DenseMatrix {
        let idx = k.max(1) - 1;
        &self.sweeps[idx.min(self.sweeps.len() - 1)]
    }

    /// Distinct matrices in sweep order; the last one repeats.
    pub fn matrices(&self) -> &[DenseMatrix] {
        &self.sweeps
    }

    pub fn is_diagonal(&self) -> bool {
        self.sweeps.iter().all(DenseMatrix::is_diagonal)
    }

    pub fn is_lower_triangular(&self) -> bool {
        self.sweeps.iter().all(DenseMatrix::is_lower_triangular)
    }

    pub fn is_sweep_dependent(&self) -> bool {
        self.sweeps.len() > 1
    }

    pub fn size(&self) -> usize {
        self.sweeps[0].rows()
    }
}

/// Collocation system with the zero first node removed.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSystem {
    /// Nodes `τ₂, …, τ_M`.
    pub tau: Vec<f64>,
    /// Lower-right `(M−1)×(M−1)` block of `Q`.
    pub q: DenseMatrix,
}

impl ReducedSystem {
    /// Diagonal for the full node set: a zero coefficient for the first node.
    pub fn embed(&self, reduced_diag: &[f64]) -> Vec<f64> {
        assert_eq!(reduced_diag.len(), self.tau.len());
        std::iter::once(0.0).chain(reduced_diag.iter().copied()).collect()
    }
}

/// Drops the zero first node so that diagonal coefficients can be computed
/// on an invertible system.
pub fn reduce_zero_node(coll: &CollocationSystem) -> Result<ReducedSystem> {
    if coll.tau()[0] != 0.0 {
        return Err(Error::InvalidInput("first node is not zero".into()));
    }
    if coll.m() < 2 {
        return Err(Error::InvalidInput("need at least two nodes to reduce".into()));
    }
    Ok(ReducedSystem {
        tau: coll.tau()[1..].to_vec(),
        q: coll.q().trailing_block(1),
    })
}

fn increments(tau: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    tau.iter()
        .map(|&t| {
            let d = t - prev;
            prev = t;
            d
        })
        .collect()
}

fn explicit_euler(tau: &[f64]) -> DenseMatrix {
    let m = tau.len();
    let dt = increments(tau);
    let mut qd = DenseMatrix::zeros(m, m);
    for i in 1..m {
        for j in 0..i {
            qd[(i, j)] = dt[j + 1];
        }
    }
    qd
}

fn implicit_euler(tau: &[f64]) -> DenseMatrix {
    let m = tau.len();
    let dt = increments(tau);
    let mut qd = DenseMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            qd[(i, j)] = dt[j];
        }
    }
    qd
}

fn lu_transpose(q: &DenseMatrix) -> DenseMatrix {
    LuDecomposition::factor_unchecked(&q.transpose()).u().transpose()
}

fn scaled_nodes(tau: &[f64], k: usize) -> DenseMatrix {
    let d: Vec<f64> = tau.iter().map(|t| t / k as f64).collect();
    DenseMatrix::from_diagonal(&d)
}

/// Builds the preconditioner of the given kind for a collocation system.
///
/// `ButcherDirk` has no collocation meaning and is rejected here; use
/// [`butcher_preconditioner`].
pub fn build(kind: PrecondKind, coll: &CollocationSystem) -> Result<Preconditioner> {
    let tau = coll.tau();
    let m = coll.m();
    let single = |qd: DenseMatrix| Ok(Preconditioner::from_parts(kind, vec![qd]));
    match kind {
        PrecondKind::Pic => single(DenseMatrix::zeros(m, m)),
        PrecondKind::ExplicitEuler => single(explicit_euler(tau)),
        PrecondKind::ImplicitEuler => single(implicit_euler(tau)),
        PrecondKind::IePar => single(scaled_nodes(tau, 1)),
        PrecondKind::Lu => single(lu_transpose(coll.q())),
        PrecondKind::Vdhs | PrecondKind::Min | PrecondKind::Min3 => {
            let table = match kind {
                PrecondKind::Vdhs => LiteratureTable::Vdhs,
                PrecondKind::Min => LiteratureTable::Min,
                _ => LiteratureTable::Min3,
            };
            let d = literature_coefficients(table, coll.nodes().family(), m)?;
            single(DenseMatrix::from_diagonal(&d))
        }
        PrecondKind::MinSrNs => single(scaled_nodes(tau, m)),
        PrecondKind::MinSrS => single(DenseMatrix::from_diagonal(&optimize::min_sr_s_diagonal(coll)?)),
        PrecondKind::MinSrFlex => {
            let mut sweeps: Vec<DenseMatrix> = (1..=m).map(|k| scaled_nodes(tau, k)).collect();
            sweeps.push(DenseMatrix::from_diagonal(&optimize::min_sr_s_diagonal(coll)?));
            Ok(Preconditioner::from_parts(kind, sweeps))
        }
        PrecondKind::Collocation => single(coll.q().clone()),
        PrecondKind::ButcherDirk => Err(Error::Unsupported(
            "butcher preconditioners are built from a tableau, not a collocation system".into(),
        )),
    }
}

/// The single matrix of `kind` used at sweep `k`. `k` is required for the
/// sweep-dependent `MIN-SR-FLEX` family and ignored otherwise.
pub fn build_matrix(kind: PrecondKind, coll: &CollocationSystem, k: Option<usize>) -> Result<DenseMatrix> {
    if kind == PrecondKind::MinSrFlex {
        let k = k.ok_or_else(|| Error::InvalidInput("min-sr-flex needs a sweep index".into()))?;
        if k == 0 {
            return Err(Error::InvalidInput("sweep index is 1-based".into()));
        }
        if k <= coll.m() {
            return Ok(scaled_nodes(coll.tau(), k));
        }
        return Ok(DenseMatrix::from_diagonal(&optimize::min_sr_s_diagonal(coll)?));
    }
    Ok(build(kind, coll)?.matrix(1).clone())
}

/// True when the node set is the one the literature tables were computed for.
pub(crate) fn is_table_node_set(family: NodeFamily, m: usize) -> bool {
    family == NodeFamily::RadauRight && m == 4
}
