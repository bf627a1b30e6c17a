//! 1D nodal (Lagrange) and edge (histopolation) polynomial families on GLL nodes.
//!
//! The Lagrange polynomials l_i of degree N satisfy l_i(ξ_j) = δ_ij. The edge
//! polynomials ε_i (i = 1..N) have degree N-1 and unit integral over the i-th
//! node interval, zero over the others. They are built from the Lagrange
//! derivatives as ε_i = -Σ_{k<i} dl_k/dξ, which makes the identity
//! dl_i/dξ = ε_i - ε_{i+1} an emergent property rather than a construction.

use crate::error::{Error, Result};
use crate::quadrature::gll_rule;
use ndarray::Array2;

/// Distance below which an evaluation point is treated as a basis node.
const NODE_SNAP: f64 = 1e-13;

/// Barycentric weights 1 / Π_{k≠i} (ξ_i - ξ_k) for a node set.
pub fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![1.0; n];
    for i in 0..n {
        for k in 0..n {
            if k != i {
                w[i] /= nodes[i] - nodes[k];
            }
        }
    }
    w
}

fn check_index(i: usize, lo: usize, hi: usize, what: &'static str) -> Result<()> {
    if i < lo || i > hi {
        return Err(Error::IndexOutOfRange {
            what,
            index: i,
            range: format!("{lo}..={hi}"),
        });
    }
    Ok(())
}

fn nearest_node(nodes: &[f64], x: f64) -> (usize, f64) {
    let mut best = 0;
    let mut dist = f64::INFINITY;
    for (j, &n) in nodes.iter().enumerate() {
        let d = (x - n).abs();
        if d < dist {
            dist = d;
            best = j;
        }
    }
    (best, dist)
}

/// Value of the i-th Lagrange polynomial on `nodes` at ξ (barycentric form).
pub fn lagrange_eval(nodes: &[f64], i: usize, xi: f64) -> Result<f64> {
    check_index(i, 0, nodes.len() - 1, "Lagrange basis")?;
    let (j, d) = nearest_node(nodes, xi);
    if d < NODE_SNAP {
        return Ok(if i == j { 1.0 } else { 0.0 });
    }
    let w = barycentric_weights(nodes);
    lagrange_eval_with(nodes, &w, i, xi)
}

fn lagrange_eval_with(nodes: &[f64], bary: &[f64], i: usize, xi: f64) -> Result<f64> {
    let (j, d) = nearest_node(nodes, xi);
    if d < NODE_SNAP {
        return Ok(if i == j { 1.0 } else { 0.0 });
    }
    let mut denom = 0.0;
    for (&n, &w) in nodes.iter().zip(bary) {
        denom += w / (xi - n);
    }
    Ok((bary[i] / (xi - nodes[i])) / denom)
}

/// Derivative of the i-th Lagrange polynomial at ξ.
pub fn lagrange_deriv(nodes: &[f64], i: usize, xi: f64) -> Result<f64> {
    check_index(i, 0, nodes.len() - 1, "Lagrange basis")?;
    let w = barycentric_weights(nodes);
    lagrange_deriv_with(nodes, &w, i, xi)
}

fn lagrange_deriv_with(nodes: &[f64], bary: &[f64], i: usize, xi: f64) -> Result<f64> {
    let (j, d) = nearest_node(nodes, xi);
    if d < NODE_SNAP {
        // nodal derivative formulas
        if i != j {
            return Ok((bary[i] / bary[j]) / (nodes[j] - nodes[i]));
        }
        let mut s = 0.0;
        for k in 0..nodes.len() {
            if k != j {
                s += (bary[k] / bary[j]) / (nodes[j] - nodes[k]);
            }
        }
        return Ok(-s);
    }
    // l'_i(ξ) = l_i(ξ) Σ_{k≠i} 1/(ξ - ξ_k) away from nodes
    let li = lagrange_eval_with(nodes, bary, i, xi)?;
    let mut s = 0.0;
    for (k, &n) in nodes.iter().enumerate() {
        if k != i {
            s += 1.0 / (xi - n);
        }
    }
    Ok(li * s)
}

/// Value of the i-th edge polynomial ε_i (i = 1..N) at ξ.
pub fn edge_eval(nodes: &[f64], i: usize, xi: f64) -> Result<f64> {
    check_index(i, 1, nodes.len() - 1, "edge basis")?;
    let bary = barycentric_weights(nodes);
    edge_eval_with(nodes, &bary, i, xi)
}

fn edge_eval_with(nodes: &[f64], bary: &[f64], i: usize, xi: f64) -> Result<f64> {
    let mut s = 0.0;
    for k in 0..i {
        s += lagrange_deriv_with(nodes, bary, k, xi)?;
    }
    Ok(-s)
}

/// Tabulated values of a nodal/edge basis pair at a fixed point set.
#[derive(Debug, Clone)]
pub struct BasisSet {
    /// Degree N of the Lagrange family (edge family has degree N-1).
    pub degree: usize,
    /// The N+1 GLL nodes defining the basis.
    pub nodes: Vec<f64>,
    /// Tabulation points.
    pub points: Vec<f64>,
    /// (N+1) x Q table of l_i values.
    pub lagrange: Array2<f64>,
    /// (N+1) x Q table of dl_i/dξ values.
    pub lagrange_deriv: Array2<f64>,
    /// N x Q table of ε_i values; row i-1 holds ε_i.
    pub edge: Array2<f64>,
}

impl BasisSet {
    /// ε_i at tabulation point q (i = 1..N).
    pub fn edge_at(&self, i: usize, q: usize) -> f64 {
        self.edge[[i - 1, q]]
    }
}

/// Evaluate Lagrange, Lagrange-derivative, and edge tables at `points`.
pub fn tabulate(degree: usize, points: &[f64]) -> Result<BasisSet> {
    if degree < 1 {
        return Err(Error::InvalidParameter {
            name: "degree",
            reason: format!("basis degree must be >= 1, got {degree}"),
        });
    }
    let rule = gll_rule(degree)?;
    let nodes = rule.nodes;
    let bary = barycentric_weights(&nodes);
    let q = points.len();
    let mut lagrange = Array2::zeros((degree + 1, q));
    let mut lagrange_deriv = Array2::zeros((degree + 1, q));
    let mut edge = Array2::zeros((degree, q));
    for (c, &x) in points.iter().enumerate() {
        for i in 0..=degree {
            lagrange[[i, c]] = lagrange_eval_with(&nodes, &bary, i, x)?;
            lagrange_deriv[[i, c]] = lagrange_deriv_with(&nodes, &bary, i, x)?;
        }
        // ε_i = -Σ_{k<i} l'_k accumulated as a running sum
        let mut acc = 0.0;
        for i in 1..=degree {
            acc -= lagrange_deriv[[i - 1, c]];
            edge[[i - 1, c]] = acc;
        }
    }
    Ok(BasisSet {
        degree,
        nodes,
        points: points.to_vec(),
        lagrange,
        lagrange_deriv,
        edge,
    })
}
