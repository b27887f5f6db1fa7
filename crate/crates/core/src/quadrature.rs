//! Collocation nodes of the Legendre family and the matrices built on them.
//!
//! Nodes live on `[0, 1]` and always include the right endpoint. The
//! collocation matrix holds `q[i][j] = ∫₀^{τᵢ} ℓⱼ(s) ds` for the Lagrange
//! basis `ℓⱼ` on the nodes, and the weights hold `b[j] = ∫₀¹ ℓⱼ(s) ds`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Largest supported node count.
pub const MAX_NODES: usize = 16;

/// Node family. Both include `τ = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeFamily {
    /// Radau IIA: right endpoint plus `M − 1` interior nodes.
    RadauRight,
    /// Both endpoints plus `M − 2` interior nodes.
    Lobatto,
}

impl NodeFamily {
    pub fn min_nodes(self) -> usize {
        match self {
            NodeFamily::RadauRight => 1,
            NodeFamily::Lobatto => 2,
        }
    }

    /// Classical order of the collocation method with `m` nodes.
    pub fn collocation_order(self, m: usize) -> usize {
        match self {
            NodeFamily::RadauRight => 2 * m - 1,
            NodeFamily::Lobatto => 2 * m - 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeFamily::RadauRight => "radau-right",
            NodeFamily::Lobatto => "lobatto",
        }
    }
}

impl fmt::Display for NodeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "radau-right" | "radau_right" | "radauright" | "radau-ii" => Ok(NodeFamily::RadauRight),
            "lobatto" => Ok(NodeFamily::Lobatto),
            other => Err(Error::InvalidInput(format!("unknown node family '{other}'"))),
        }
    }
}

/// Ordered collocation nodes in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSet {
    family: NodeFamily,
    tau: Vec<f64>,
}

impl NodeSet {
    pub fn new(family: NodeFamily, m: usize) -> Result<Self> {
        make_nodes(family, m)
    }

    pub fn family(&self) -> NodeFamily {
        self.family
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn has_zero_node(&self) -> bool {
        self.tau[0] == 0.0
    }
}

/// Nodes, collocation matrix and end-point weights of one collocation method.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSystem {
    nodes: NodeSet,
    q: DenseMatrix,
    b: Vec<f64>,
}

impl CollocationSystem {
    pub fn new(family: NodeFamily, m: usize) -> Result<Self> {
        Ok(make_collocation(&make_nodes(family, m)?))
    }

    pub fn nodes(&self) -> &NodeSet {
        &self.nodes
    }

    pub fn tau(&self) -> &[f64] {
        self.nodes.tau()
    }

    pub fn m(&self) -> usize {
        self.nodes.len()
    }

    pub fn q(&self) -> &DenseMatrix {
        &self.q
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }
}

/// Legendre polynomial `P_n(x)` and its derivative by the three-term recurrence.
pub(crate) fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    let (mut d0, mut d1) = (0.0, 1.0);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        let d2 = d0 + (2.0 * kf + 1.0) * p1;
        p0 = p1;
        p1 = p2;
        d0 = d1;
        d1 = d2;
    }
    (p1, d1)
}

/// Gauss–Legendre points and weights on `[-1, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        // Tricomi-type initial guess, then Newton on P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() <= 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, z);
        x[n - 1 - i] = z;
        w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Roots of `g` inside `[a, b]`, bracketed on a uniform grid and refined by
/// safeguarded Newton with bisection fallback.
fn bracketed_roots(g: impl Fn(f64) -> (f64, f64), a: f64, b: f64, cells: usize) -> Vec<f64> {
    let h = (b - a) / cells as f64;
    let mut roots = Vec::new();
    let mut xl = a;
    let mut gl = g(a).0;
    for i in 1..=cells {
        let xr = if i == cells { b } else { a + h * i as f64 };
        let gr = g(xr).0;
        if gl == 0.0 {
            roots.push(xl);
        } else if gl.signum() != gr.signum() && gr != 0.0 {
            roots.push(refine_root(&g, xl, xr, gl));
        }
        xl = xr;
        gl = gr;
    }
    roots
}

fn refine_root(g: &impl Fn(f64) -> (f64, f64), mut lo: f64, mut hi: f64, glo: f64) -> f64 {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (gx, dx) = g(x);
        if gx == 0.0 {
            return x;
        }
        if gx.signum() == glo.signum() {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - gx / dx;
        let next = if dx != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1e-300) || hi - lo <= 4.0 * f64::EPSILON {
            return next;
        }
        x = next;
    }
    x
}

/// Collocation nodes of the requested family mapped to `[0, 1]`.
pub fn make_nodes(family: NodeFamily, m: usize) -> Result<NodeSet> {
    if m < family.min_nodes() || m > MAX_NODES {
        return Err(Error::Unsupported(format!(
            "{family} nodes need {} <= M <= {MAX_NODES}, got M={m}",
            family.min_nodes()
        )));
    }
    let cells = 2000 * m;
    let mut x: Vec<f64> = match family {
        NodeFamily::RadauRight => {
            // Interior nodes are the roots of P_M − P_{M−1} other than x = 1.
            let g = |x: f64| {
                let (pm, dm) = legendre(m, x);
                let (pm1, dm1) = legendre(m - 1, x);
                (pm - pm1, dm - dm1)
            };
            let mut r = if m > 1 {
                bracketed_roots(g, -1.0, 1.0 - 1e-3, cells)
            } else {
                Vec::new()
            };
            r.push(1.0);
            r
        }
        NodeFamily::Lobatto => {
            // Interior nodes are the roots of P'_{M−1}.
            let g = |x: f64| {
                let (_, d) = legendre(m - 1, x);
                // Second derivative from the Legendre ODE.
                let (p, _) = legendre(m - 1, x);
                let n = (m - 1) as f64;
                let dd = (2.0 * x * d - n * (n + 1.0) * p) / (1.0 - x * x);
                (d, dd)
            };
            let mut r = vec![-1.0];
            if m > 2 {
                r.extend(bracketed_roots(g, -1.0 + 1e-3, 1.0 - 1e-3, cells));
            }
            r.push(1.0);
            r
        }
    };
    if x.len() != m {
        return Err(Error::NoConvergence {
            what: "collocation node search",
            iterations: x.len(),
        });
    }
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tau: Vec<f64> = x.iter().map(|&xi| 0.5 * (xi + 1.0)).collect();
    if tau.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::NoConvergence {
            what: "collocation node search",
            iterations: m,
        });
    }
    Ok(NodeSet { family, tau })
}

/// Barycentric weights for Lagrange interpolation on `tau`.
fn barycentric_weights(tau: &[f64]) -> Vec<f64> {
    (0..tau.len())
        .map(|j| {
            1.0 / tau
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &tk)| tau[j] - tk)
                .product::<f64>()
        })
        .collect()
}

/// Values of all Lagrange basis polynomials at `s`.
pub(crate) fn lagrange_basis(tau: &[f64], weights: &[f64], s: f64) -> Vec<f64> {
    if let Some(k) = tau.iter().position(|&t| t == s) {
        let mut e = vec![0.0; tau.len()];
        e[k] = 1.0;
        return e;
    }
    let terms: Vec<f64> = tau.iter().zip(weights).map(|(&t, &w)| w / (s - t)).collect();
    let denom: f64 = terms.iter().sum();
    terms.iter().map(|t| t / denom).collect()
}

/// Integrals `∫₀^{upper} ℓⱼ(s) ds` for every basis polynomial.
fn integrate_basis(tau: &[f64], weights: &[f64], gl: &(Vec<f64>, Vec<f64>), upper: f64) -> Vec<f64> {
    let mut out = vec![0.0; tau.len()];
    if upper == 0.0 {
        return out;
    }
    for (&x, &w) in gl.0.iter().zip(&gl.1) {
        let s = 0.5 * upper * (x + 1.0);
        let basis = lagrange_basis(tau, weights, s);
        for (o, l) in out.iter_mut().zip(basis) {
            *o += 0.5 * upper * w * l;
        }
    }
    out
}

/// Collocation matrix and weights for `nodes`, integrated exactly with a
/// Gauss–Legendre rule.
pub fn make_collocation(nodes: &NodeSet) -> CollocationSystem {
    let tau = nodes.tau();
    let m = tau.len();
    let gl = gauss_legendre((m + 1).div_ceil(2));
    let bw = barycentric_weights(tau);
    let mut q = DenseMatrix::zeros(m, m);
    for (i, &ti) in tau.iter().enumerate() {
        for (j, v) in integrate_basis(tau, &bw, &gl, ti).into_iter().enumerate() {
            q[(i, j)] = v;
        }
    }
    let b = integrate_basis(tau, &bw, &gl, 1.0);
    CollocationSystem {
        nodes: nodes.clone(),
        q,
        b,
    }
}

/// Highest degree `n` such that the weights integrate `1, t, …, tⁿ` over
/// `[0, 1]` exactly (within `1e-12`).
pub fn node_quadrature_exactness(coll: &CollocationSystem) -> usize {
    let tau = coll.tau();
    let b = coll.b();
    let mut degree = 0;
    for k in 0..=(4 * tau.len() + 4) {
        let s: f64 = tau.iter().zip(b).map(|(&t, &w)| w * t.powi(k as i32)).sum();
        if (s - 1.0 / (k as f64 + 1.0)).abs() > 1e-12 {
            break;
        }
        degree = k;
    }
    degree
}
