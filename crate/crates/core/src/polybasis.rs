//! Gauss-Lobatto-Legendre nodes and the nodal (Lagrange) and edge polynomial
//! bases on the reference interval `[-1, 1]`.
//!
//! The nodal basis `h_i` interpolates point values at the GLL nodes; the edge
//! basis `e_i = -sum_{k<i} dh_k/dx` (for `i = 1..=p`) carries sub-interval
//! integrals as degrees of freedom: `int_{x_{j-1}}^{x_j} e_i dx = delta_ij`.
//! Together they form the 1D building blocks of the H1 / H(div) / L2 spaces.

use crate::{Error, Result};

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

/// Legendre polynomial `L_n(x)` and its derivative, by the three-term
/// recurrence.
pub fn legendre_and_deriv(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut pm, mut p) = (1.0, x);
    let (mut dpm, mut dp) = (0.0, 1.0);
    for k in 2..=n {
        let kf = k as f64;
        let pn = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * pm) / kf;
        let dpn = dpm + (2.0 * kf - 1.0) * p;
        pm = p;
        p = pn;
        dpm = dp;
        dp = dpn;
    }
    (p, dp)
}

/// The `p+1` Gauss-Lobatto-Legendre nodes for degree `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    degree: usize,
    nodes: Vec<f64>,
}

/// Computes the GLL node set of degree `p`: the roots of `(1-x^2) L'_p(x)`,
/// sorted ascending. Interior roots are found by Newton iteration from
/// Chebyshev-Lobatto initial guesses; the set is symmetrised about 0.
pub fn gll_nodes(p: usize) -> Result<NodeSet> {
    if p < 1 {
        return Err(Error::invalid("GLL node set needs degree p >= 1"));
    }
    let mut nodes = vec![0.0; p + 1];
    nodes[0] = -1.0;
    nodes[p] = 1.0;
    for j in 1..p {
        // Roots of L'_p. Newton on q = (1-x^2) L'_p with q' = -p(p+1) L_p.
        let mut x = -(std::f64::consts::PI * j as f64 / p as f64).cos();
        for _ in 0..NEWTON_MAX_ITER {
            let (lp, dlp) = legendre_and_deriv(p, x);
            let step = (1.0 - x * x) * dlp / (p as f64 * (p + 1) as f64 * lp);
            x += step;
            if step.abs() < NEWTON_TOL {
                break;
            }
        }
        nodes[j] = x;
    }
    // Enforce exact symmetry; Newton leaves ~1e-16 asymmetries.
    for j in 0..=p / 2 {
        let s = 0.5 * (nodes[j] - nodes[p - j]);
        nodes[j] = s;
        nodes[p - j] = -s;
    }
    Ok(NodeSet { degree: p, nodes })
}

impl NodeSet {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// GLL quadrature weights paired with these nodes:
    /// `w_i = 2 / (n(n-1) L_{n-1}(x_i)^2)` with `n = p+1` points.
    pub fn weights(&self) -> Vec<f64> {
        let p = self.degree;
        self.nodes
            .iter()
            .map(|&x| {
                let (lp, _) = legendre_and_deriv(p, x);
                2.0 / (p as f64 * (p + 1) as f64 * lp * lp)
            })
            .collect()
    }
}

/// Lagrange polynomials through a GLL node set.
#[derive(Debug, Clone)]
pub struct NodalBasis {
    node_set: NodeSet,
    /// Differentiation matrix `D[i][j] = dh_j/dx (x_i)`, cached at construction.
    diff: Vec<Vec<f64>>,
}

impl NodalBasis {
    pub fn new(node_set: NodeSet) -> Self {
        let p = node_set.degree;
        let mut diff = vec![vec![0.0; p + 1]; p + 1];
        for i in 0..=p {
            for j in 0..=p {
                diff[i][j] = lagrange_deriv(&node_set.nodes, j, node_set.nodes[i]);
            }
        }
        NodalBasis { node_set, diff }
    }

    pub fn degree(&self) -> usize {
        self.node_set.degree
    }

    pub fn node_set(&self) -> &NodeSet {
        &self.node_set
    }

    pub fn diff_matrix(&self) -> &[Vec<f64>] {
        &self.diff
    }

    /// Value of the `i`-th Lagrange polynomial at `x` (stable product form).
    pub fn eval(&self, i: usize, x: f64) -> Result<f64> {
        self.check_index(i)?;
        Ok(lagrange_value(&self.node_set.nodes, i, x))
    }

    /// Derivative of the `i`-th Lagrange polynomial at `x`.
    pub fn eval_deriv(&self, i: usize, x: f64) -> Result<f64> {
        self.check_index(i)?;
        Ok(lagrange_deriv(&self.node_set.nodes, i, x))
    }

    /// All `p+1` values at `x`.
    pub fn values(&self, x: f64) -> Vec<f64> {
        (0..=self.degree())
            .map(|i| lagrange_value(&self.node_set.nodes, i, x))
            .collect()
    }

    /// All `p+1` derivatives at `x`.
    pub fn derivs(&self, x: f64) -> Vec<f64> {
        (0..=self.degree())
            .map(|i| lagrange_deriv(&self.node_set.nodes, i, x))
            .collect()
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i > self.degree() {
            return Err(Error::invalid(format!(
                "nodal basis index {i} out of range 0..={}",
                self.degree()
            )));
        }
        Ok(())
    }
}

/// Edge polynomials `e_i`, `i = 1..=p`, over a GLL node set.
#[derive(Debug, Clone)]
pub struct EdgeBasis {
    nodal: NodalBasis,
}

impl EdgeBasis {
    pub fn new(node_set: NodeSet) -> Self {
        EdgeBasis {
            nodal: NodalBasis::new(node_set),
        }
    }

    pub fn degree(&self) -> usize {
        self.nodal.degree()
    }

    pub fn node_set(&self) -> &NodeSet {
        self.nodal.node_set()
    }

    /// `e_i(x) = -sum_{k=0}^{i-1} dh_k/dx (x)`, for `i` in `1..=p`.
    pub fn eval(&self, i: usize, x: f64) -> Result<f64> {
        if i < 1 || i > self.degree() {
            return Err(Error::invalid(format!(
                "edge basis index {i} out of range 1..={}",
                self.degree()
            )));
        }
        let nodes = self.nodal.node_set().nodes();
        Ok(-(0..i).map(|k| lagrange_deriv(nodes, k, x)).sum::<f64>())
    }

    /// All `p` values `e_1(x), ..., e_p(x)`.
    pub fn values(&self, x: f64) -> Vec<f64> {
        let nodes = self.nodal.node_set().nodes();
        let mut acc = 0.0;
        (0..self.degree())
            .map(|k| {
                acc -= lagrange_deriv(nodes, k, x);
                acc
            })
            .collect()
    }
}

fn lagrange_value(nodes: &[f64], i: usize, x: f64) -> f64 {
    let xi = nodes[i];
    let mut v = 1.0;
    for (j, &xj) in nodes.iter().enumerate() {
        if j != i {
            v *= (x - xj) / (xi - xj);
        }
    }
    v
}

fn lagrange_deriv(nodes: &[f64], i: usize, x: f64) -> f64 {
    let xi = nodes[i];
    let mut s = 0.0;
    for (k, &xk) in nodes.iter().enumerate() {
        if k == i {
            continue;
        }
        let mut prod = 1.0 / (xi - xk);
        for (j, &xj) in nodes.iter().enumerate() {
            if j != i && j != k {
                prod *= (x - xj) / (xi - xj);
            }
        }
        s += prod;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_degree_zero() {
        assert!(gll_nodes(0).is_err());
    }

    #[test]
    fn p1_is_endpoints() {
        let ns = gll_nodes(1).unwrap();
        assert_eq!(ns.nodes(), &[-1.0, 1.0]);
    }

    #[test]
    fn p2_interior_node_is_zero() {
        // Independent oracle: the interior root of L'_2(x) = 3x is 0; confirm
        // by bisection on L'_2 rather than trusting the Newton path.
        let mut lo = -0.9;
        let mut hi = 0.9;
        let dl2 = |x: f64| legendre_and_deriv(2, x).1;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if dl2(lo) * dl2(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let root = 0.5 * (lo + hi);
        let ns = gll_nodes(2).unwrap();
        assert_eq!(ns.nodes().len(), 3);
        assert!((ns.nodes()[1] - root).abs() < 1e-14);
        assert_eq!(ns.nodes()[1], 0.0);
    }

    #[test]
    fn p4_nodes_are_symmetric_roots() {
        let ns = gll_nodes(4).unwrap();
        let n = ns.nodes();
        assert_eq!(n.len(), 5);
        for i in 0..n.len() {
            assert!((n[i] + n[n.len() - 1 - i]).abs() < 1e-14);
        }
        // Interior nodes must bracket sign changes of L'_4 (bisection oracle).
        for &x in &n[1..4] {
            let d = 1e-6;
            let a = legendre_and_deriv(4, x - d).1;
            let b = legendre_and_deriv(4, x + d).1;
            assert!(a * b < 0.0, "node {x} is not a root of L'_4");
        }
    }

    #[test]
    fn nodes_sorted_with_unit_endpoints() {
        for p in 1..=10 {
            let ns = gll_nodes(p).unwrap();
            let n = ns.nodes();
            assert_eq!(n[0], -1.0);
            assert_eq!(n[p], 1.0);
            assert!(n.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn kronecker_property_at_nodes() {
        let basis = NodalBasis::new(gll_nodes(2).unwrap());
        assert_eq!(basis.eval(1, 0.0).unwrap(), 1.0);
        assert_eq!(basis.eval(0, 0.0).unwrap(), 0.0);
        for i in 0..=2 {
            for j in 0..=2 {
                let v = basis.eval(i, basis.node_set().nodes()[j]).unwrap();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_eq!(v, expect);
            }
        }
    }

    #[test]
    fn linear_hat_value() {
        // h_1(x) = (x+1)/2 on [-1,1]
        let basis = NodalBasis::new(gll_nodes(1).unwrap());
        assert!((basis.eval(1, 0.5).unwrap() - 0.75).abs() < 1e-15);
        assert!((basis.eval_deriv(1, -0.3).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn quadratic_has_flat_midpoint() {
        // h_1 = 1 - x^2 for p=2, zero slope at 0
        let basis = NodalBasis::new(gll_nodes(2).unwrap());
        assert!(basis.eval_deriv(1, 0.0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn index_out_of_range() {
        let basis = NodalBasis::new(gll_nodes(3).unwrap());
        assert!(basis.eval(4, 0.0).is_err());
        assert!(basis.eval_deriv(7, 0.0).is_err());
        let edge = EdgeBasis::new(gll_nodes(3).unwrap());
        assert!(edge.eval(0, 0.0).is_err());
        assert!(edge.eval(4, 0.0).is_err());
    }

    #[test]
    fn partition_of_unity_and_deriv_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for p in 1..=8 {
            let basis = NodalBasis::new(gll_nodes(p).unwrap());
            for _ in 0..100 {
                let x: f64 = rng.gen_range(-1.0..=1.0);
                let sum: f64 = basis.values(x).iter().sum();
                assert!((sum - 1.0).abs() < 1e-13, "p={p} x={x} sum={sum}");
                let dsum: f64 = basis.derivs(x).iter().sum();
                assert!(dsum.abs() < 1e-11, "p={p} x={x} dsum={dsum}");
            }
        }
    }

    #[test]
    fn derivative_matches_central_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in [1usize, 3, 5, 8] {
            let basis = NodalBasis::new(gll_nodes(p).unwrap());
            for _ in 0..50 {
                let x: f64 = rng.gen_range(-0.99..=0.99);
                for i in 0..=p {
                    let h = 1e-6;
                    let fd = (basis.eval(i, x + h).unwrap() - basis.eval(i, x - h).unwrap())
                        / (2.0 * h);
                    let d = basis.eval_deriv(i, x).unwrap();
                    assert!((d - fd).abs() < 1e-6, "p={p} i={i} x={x}");
                }
            }
        }
    }

    #[test]
    fn edge_constant_for_p1() {
        // e_1 = -dh_0/dx = 1/2 on [-1,1]
        let edge = EdgeBasis::new(gll_nodes(1).unwrap());
        for x in [-1.0, -0.2, 0.7, 1.0] {
            assert!((edge.eval(1, x).unwrap() - 0.5).abs() < 1e-15);
        }
    }

    /// Quadrature oracle for sub-interval integrals of the edge basis.
    fn edge_subinterval_integral(edge: &EdgeBasis, i: usize, j: usize) -> f64 {
        let nodes = edge.node_set().nodes().to_vec();
        let (a, b) = (nodes[j - 1], nodes[j]);
        let rule = crate::quadrature::gauss_lobatto_rule(edge.degree() + 2).unwrap();
        crate::quadrature::integrate(&rule, |x| edge.eval(i, x).unwrap(), a, b).unwrap()
    }

    #[test]
    fn edge_histopolation_kronecker() {
        for p in 1..=6 {
            let edge = EdgeBasis::new(gll_nodes(p).unwrap());
            for i in 1..=p {
                for j in 1..=p {
                    let v = edge_subinterval_integral(&edge, i, j);
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((v - expect).abs() < 1e-12, "p={p} i={i} j={j} v={v}");
                }
            }
        }
    }

    #[test]
    fn edge_total_integral_is_one() {
        // Telescoping: sub-interval integrals sum to the full integral.
        for p in [2usize, 4, 6] {
            let edge = EdgeBasis::new(gll_nodes(p).unwrap());
            for i in 1..=p {
                let total: f64 = (1..=p).map(|j| edge_subinterval_integral(&edge, i, j)).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn edge_p2_first_subinterval_of_e2_vanishes() {
        let edge = EdgeBasis::new(gll_nodes(2).unwrap());
        assert!(edge_subinterval_integral(&edge, 2, 1).abs() < 1e-12);
    }

    #[test]
    fn bulk_values_match_single_eval() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in [2usize, 5] {
            let nb = NodalBasis::new(gll_nodes(p).unwrap());
            let eb = EdgeBasis::new(gll_nodes(p).unwrap());
            for _ in 0..20 {
                let x: f64 = rng.gen_range(-1.0..=1.0);
                let vals = nb.values(x);
                for i in 0..=p {
                    assert_eq!(vals[i], nb.eval(i, x).unwrap());
                }
                let evals = eb.values(x);
                for i in 1..=p {
                    assert!((evals[i - 1] - eb.eval(i, x).unwrap()).abs() < 1e-13);
                }
            }
        }
    }
}
