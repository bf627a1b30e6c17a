//! Legendre polynomials and Gauss-Lobatto-Legendre (GLL) quadrature.
//!
//! The GLL nodes of degree N are the N+1 roots of (1-ξ²)L'_N(ξ); they include
//! both endpoints and carry weights w_i = 2 / (N(N+1) L_N(ξ_i)²). A rule of
//! degree N integrates polynomials up to degree 2N-1 exactly.

use crate::error::{Error, Result};

/// Nodes and weights of a GLL rule on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    /// Polynomial degree N of the associated basis (N+1 nodes).
    pub degree: usize,
    /// Strictly increasing nodes, nodes[0] = -1, nodes[N] = +1.
    pub nodes: Vec<f64>,
    /// Positive weights summing to 2.
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrate `f` over [-1, 1].
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Integrate `f` over the interval [a, b].
    pub fn integrate_on(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        half * self.integrate(|x| f(mid + half * x))
    }
}

/// Evaluate the Legendre polynomial L_n and its derivative at ξ.
///
/// Uses the three-term recurrence for the values and
/// L'_{k+1} = L'_{k-1} + (2k+1) L_k for the derivatives, which stays
/// well defined at ξ = ±1.
pub fn legendre_eval(n: usize, xi: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut l_prev = 1.0;
    let mut l = xi;
    let mut d_prev = 0.0;
    let mut d = 1.0;
    for k in 1..n {
        let kf = k as f64;
        let l_next = ((2.0 * kf + 1.0) * xi * l - kf * l_prev) / (kf + 1.0);
        let d_next = d_prev + (2.0 * kf + 1.0) * l;
        l_prev = l;
        l = l_next;
        d_prev = d;
        d = d_next;
    }
    (l, d)
}

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

/// Construct the GLL rule of degree N (N+1 nodes on [-1, 1]).
///
/// Interior nodes are found by Newton iteration on L'_N starting from the
/// Chebyshev-Gauss-Lobatto points. The iteration uses the identity
/// d/dξ[(1-ξ²)L'_N] = -N(N+1) L_N, so the update is
/// ξ += (1-ξ²) L'_N / (N(N+1) L_N).
pub fn gll_rule(degree: usize) -> Result<QuadratureRule> {
    if degree < 1 {
        return Err(Error::InvalidParameter {
            name: "degree",
            reason: format!("GLL rule requires degree >= 1, got {degree}"),
        });
    }
    let n = degree;
    let nf = n as f64;
    let mut nodes = vec![0.0; n + 1];
    nodes[0] = -1.0;
    nodes[n] = 1.0;
    for j in 1..n {
        // Chebyshev-Gauss-Lobatto initial guess
        let mut x = -(std::f64::consts::PI * j as f64 / nf).cos();
        let mut converged = false;
        for _ in 0..NEWTON_MAX_ITER {
            let (l, dl) = legendre_eval(n, x);
            let update = (1.0 - x * x) * dl / (nf * (nf + 1.0) * l);
            x += update;
            if update.abs() <= NEWTON_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::RootFinding { degree: n, node: j });
        }
        nodes[j] = x;
    }
    let denom = nf * (nf + 1.0);
    let weights = nodes
        .iter()
        .map(|&x| {
            let (l, _) = legendre_eval(n, x);
            2.0 / (denom * l * l)
        })
        .collect();
    Ok(QuadratureRule {
        degree: n,
        nodes,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn legendre_low_orders() {
        let (l0, d0) = legendre_eval(0, 0.7);
        assert_eq!((l0, d0), (1.0, 0.0));
        let (l1, d1) = legendre_eval(1, 0.3);
        assert_eq!((l1, d1), (0.3, 1.0));
        // L_2 = (3ξ²-1)/2, L'_2 = 3ξ
        let (l2, d2) = legendre_eval(2, 0.5);
        assert_abs_diff_eq!(l2, -0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(d2, 1.5, epsilon = 1e-15);
    }

    #[test]
    fn gll_degree_one_and_two() {
        let r1 = gll_rule(1).unwrap();
        assert_eq!(r1.nodes, vec![-1.0, 1.0]);
        assert_eq!(r1.weights, vec![1.0, 1.0]);

        let r2 = gll_rule(2).unwrap();
        assert_abs_diff_eq!(r2.nodes[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r2.weights[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r2.weights[1], 4.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r2.weights[2], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn gll_degree_three_closed_form() {
        // nodes {-1, -1/sqrt5, 1/sqrt5, 1}, weights {1/6, 5/6, 5/6, 1/6}
        let r = gll_rule(3).unwrap();
        let s5 = 1.0 / 5f64.sqrt();
        assert_abs_diff_eq!(r.nodes[1], -s5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.nodes[2], s5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.weights[0], 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.weights[1], 5.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn degree_zero_rejected() {
        assert!(gll_rule(0).is_err());
    }

    #[test]
    fn monomial_exactness() {
        for n in 1..=12 {
            let r = gll_rule(n).unwrap();
            for k in 0..=(2 * n - 1) {
                let exact = if k % 2 == 0 {
                    2.0 / (k as f64 + 1.0)
                } else {
                    0.0
                };
                let num = r.integrate(|x| x.powi(k as i32));
                assert!(
                    (num - exact).abs() <= 1e-12,
                    "N={n} k={k}: {num} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn node_and_weight_symmetry() {
        for n in 1..=12 {
            let r = gll_rule(n).unwrap();
            assert_eq!(r.nodes[0], -1.0);
            assert_eq!(r.nodes[n], 1.0);
            let wsum: f64 = r.weights.iter().sum();
            assert_abs_diff_eq!(wsum, 2.0, epsilon = 1e-14);
            for i in 0..=n {
                assert!(r.nodes[i] + r.nodes[n - i] <= 1e-14);
                assert!((r.weights[i] - r.weights[n - i]).abs() <= 1e-14);
                assert!(r.weights[i] > 0.0);
                if i > 0 {
                    assert!(r.nodes[i] > r.nodes[i - 1]);
                }
            }
        }
    }

    #[test]
    fn bitwise_reproducible() {
        for n in [1, 4, 9, 17] {
            let a = gll_rule(n).unwrap();
            let b = gll_rule(n).unwrap();
            assert_eq!(a.nodes, b.nodes);
            assert_eq!(a.weights, b.weights);
        }
    }

    #[test]
    fn interval_integration() {
        let r = gll_rule(4).unwrap();
        // integral of x^2 over [1, 3] = 26/3
        let v = r.integrate_on(1.0, 3.0, |x| x * x);
        assert_abs_diff_eq!(v, 26.0 / 3.0, epsilon = 1e-13);
    }
}
