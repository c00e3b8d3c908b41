//! Divided-difference coordinates for interval maps and the interpolation
//! map back to multijets.
//!
//! For `n` nodes and jet order `m` the Newton basis is built on the sequence
//! `z_j = x_{j mod n}`, `j = 0..(m+1)n`, so the basis products are
//! `∏_{j<i} (x − z_j)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::{monomial_dd, newton_coefficients, Differentiable, NewtonPolynomial};
use crate::poly::Poly;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DDPoint {
    pub nodes: Vec<f64>,
    pub u: Vec<f64>,
    pub jet_order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultijetPoint {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
}

/// Monomial coefficients `ε_0..ε_{2n−1}` of `φ_ε(x) = Σ ε_k x^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonVector(pub Vec<f64>);

impl DDPoint {
    pub fn new(nodes: Vec<f64>, u: Vec<f64>, jet_order: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidInput("at least one node required".into()));
        }
        if u.len() != (jet_order + 1) * nodes.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} Newton coefficients, got {}",
                (jet_order + 1) * nodes.len(),
                u.len()
            )));
        }
        Ok(DDPoint { nodes, u, jet_order })
    }

    pub fn newton_polynomial(&self) -> NewtonPolynomial<f64> {
        let seq = newton_node_sequence(&self.nodes, self.u.len());
        NewtonPolynomial::new(seq, self.u.clone())
    }
}

/// `x_{j mod n}` for `j < len`.
pub fn newton_node_sequence(nodes: &[f64], len: usize) -> Vec<f64> {
    (0..len).map(|j| nodes[j % nodes.len()]).collect()
}

/// Matrix of the linear map `ε ↦ u`: entry `(i, k)` is
/// `p_{k,i}(z_0..z_i)`, zero below the diagonal and one on it.
pub fn newton_map_matrix(nodes: &[f64], len: usize) -> Vec<Vec<f64>> {
    let seq = newton_node_sequence(nodes, len);
    (0..len)
        .map(|i| {
            (0..len)
                .map(|k| match k.cmp(&i) {
                    std::cmp::Ordering::Less => 0.0,
                    std::cmp::Ordering::Equal => 1.0,
                    std::cmp::Ordering::Greater => monomial_dd(k, i, &seq[..=i]),
                })
                .collect()
        })
        .collect()
}

fn check_len(nodes: &[f64], len: usize) -> Result<()> {
    if nodes.is_empty() || !len.is_multiple_of(nodes.len()) {
        return Err(Error::InvalidInput(format!(
            "coefficient count {len} is not a multiple of the node count {}",
            nodes.len()
        )));
    }
    Ok(())
}

pub fn epsilon_to_u(nodes: &[f64], eps: &EpsilonVector) -> Result<Vec<f64>> {
    let len = eps.0.len();
    check_len(nodes, len)?;
    let m = newton_map_matrix(nodes, len);
    Ok(m.iter()
        .enumerate()
        .map(|(i, row)| (i..len).map(|k| row[k] * eps.0[k]).sum())
        .collect())
}

/// Inverse of [`epsilon_to_u`] by back substitution on the unit upper
/// triangular matrix.
pub fn u_to_epsilon(nodes: &[f64], u: &[f64]) -> Result<EpsilonVector> {
    let len = u.len();
    check_len(nodes, len)?;
    let m = newton_map_matrix(nodes, len);
    let mut eps = vec![0.0; len];
    for i in (0..len).rev() {
        let s: f64 = (i + 1..len).map(|k| m[i][k] * eps[k]).sum();
        eps[i] = u[i] - s;
    }
    Ok(EpsilonVector(eps))
}

/// Values and first derivatives of the Newton-basis polynomial at the nodes.
pub fn pi_map(p: &DDPoint) -> MultijetPoint {
    let np = p.newton_polynomial();
    let (values, derivs) = p.nodes.iter().map(|x| np.eval_with_derivative(x)).unzip();
    MultijetPoint {
        nodes: p.nodes.clone(),
        values,
        derivs,
    }
}

/// `u_i = Δ^i f(z_0..z_i)` on the jet-extended node sequence.
pub fn dd_of_map<G: Differentiable<f64> + ?Sized>(
    f: &G,
    nodes: &[f64],
    jet_order: usize,
) -> Result<DDPoint> {
    let len = (jet_order + 1) * nodes.len();
    let seq = newton_node_sequence(nodes, len);
    let u = newton_coefficients(f, &seq)?;
    DDPoint::new(nodes.to_vec(), u, jet_order)
}

/// The n-tuple 1-jet of `f`, computed directly.
pub fn jet_of_map<G: Differentiable<f64> + ?Sized>(f: &G, nodes: &[f64]) -> Result<MultijetPoint> {
    let mut values = Vec::with_capacity(nodes.len());
    let mut derivs = Vec::with_capacity(nodes.len());
    for &x in nodes {
        let d = f
            .derivatives(&x, 1)
            .filter(|d| d.len() >= 2)
            .ok_or(Error::MissingDerivative {
                node: x,
                required_order: 1,
            })?;
        values.push(d[0]);
        derivs.push(d[1]);
    }
    Ok(MultijetPoint {
        nodes: nodes.to_vec(),
        values,
        derivs,
    })
}

/// `∏_{k=0}^{n−2} |x_{n−1} − x_k|`.
pub fn diagonal_distance(nodes: &[f64]) -> f64 {
    let n = nodes.len();
    assert!(n >= 2, "diagonal distance needs at least two nodes");
    let last = nodes[n - 1];
    nodes[..n - 1].iter().map(|x| (last - x).abs()).product()
}

/// Recover `u` from a prescribed 1-jet at pairwise-distinct nodes (Hermite
/// data in Newton form).
pub fn solve_u_from_jets(jet: &MultijetPoint) -> Result<DDPoint> {
    let nodes = &jet.nodes;
    let lookup = |x: &f64, order: usize| -> Option<Vec<f64>> {
        let i = nodes.iter().position(|z| z == x)?;
        match order {
            0 => Some(vec![jet.values[i]]),
            1 => Some(vec![jet.values[i], jet.derivs[i]]),
            _ => None,
        }
    };
    dd_of_map(&lookup, nodes, 1)
}

/// Components of `π` as polynomials in `(x_0..x_{k−1}, u_0..u_{L−1})` for
/// `n = N = 1`: first the `k` values, then (for `m ≥ 1`) the `k` derivatives.
pub fn pi_symbolic(k: usize, jet_order: usize) -> Vec<Poly> {
    let len = (jet_order + 1) * k;
    let nv = k + len;
    let x = |i: usize| Poly::var(nv, i);
    let u = |i: usize| Poly::var(nv, k + i);
    let z = |j: usize| x(j % k);
    let mut out = Vec::new();
    for i in 0..k {
        let mut acc = Poly::zero(nv);
        for m in 0..len {
            let mut prod = u(m);
            for j in 0..m {
                prod = &prod * &(&x(i) - &z(j));
            }
            acc = &acc + &prod;
        }
        out.push(acc);
    }
    if jet_order >= 1 {
        for i in 0..k {
            let mut acc = Poly::zero(nv);
            for m in 1..len {
                for l in 0..m {
                    let mut prod = u(m);
                    for j in (0..m).filter(|&j| j != l) {
                        prod = &prod * &(&x(i) - &z(j));
                    }
                    acc = &acc + &prod;
                }
            }
            out.push(acc);
        }
    }
    out
}
