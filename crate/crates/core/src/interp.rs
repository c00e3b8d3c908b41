//! Divided differences and Newton interpolation, univariate and on Cartesian
//! grids, with confluent (jet) nodes.
//!
//! A block of `p` equal nodes consumes `g, g', ..., g^(p-1)`; the confluent
//! entry of order `j` is `g^(j)/j!`. Tableaux are built only when equal nodes
//! are contiguous, which is what [`jet_expand`] produces.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use std::collections::BTreeMap;
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::poly::Poly;

/// Field of scalars the tableaux run over: `f64` by default, `BigRational`
/// for exact identity checks.
pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
{
    fn from_i64(v: i64) -> Self;
    fn to_f64(&self) -> f64;
}

impl Scalar for f64 {
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for BigRational {
    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// A function that can report its derivatives `g, g', ..., g^(order)` at a
/// point, or `None` when that order is unavailable.
pub trait Differentiable<T> {
    fn derivatives(&self, x: &T, order: usize) -> Option<Vec<T>>;
}

impl<T, F> Differentiable<T> for F
where
    F: Fn(&T, usize) -> Option<Vec<T>>,
{
    fn derivatives(&self, x: &T, order: usize) -> Option<Vec<T>> {
        self(x, order)
    }
}

/// Wrap a plain function that supplies values only.
pub fn values_only<T, G: Fn(&T) -> T>(g: G) -> impl Fn(&T, usize) -> Option<Vec<T>> {
    move |x, order| if order == 0 { Some(vec![g(x)]) } else { None }
}

/// Univariate polynomial in the monomial basis, ascending coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial<T> {
    pub coeffs: Vec<T>,
}

impl<T: Scalar> Polynomial<T> {
    pub fn new(coeffs: Vec<T>) -> Self {
        Polynomial { coeffs }
    }

    pub fn monomial(l: usize) -> Self {
        let mut c = vec![T::zero(); l + 1];
        c[l] = T::one();
        Polynomial { coeffs: c }
    }

    pub fn eval(&self, x: &T) -> T {
        self.coeffs
            .iter()
            .rev()
            .fold(T::zero(), |acc, c| acc * x.clone() + c.clone())
    }

    pub fn derivative(&self) -> Self {
        let c = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| c.clone() * T::from_i64(k as i64))
            .collect();
        Polynomial { coeffs: c }
    }
}

impl<T: Scalar> Differentiable<T> for Polynomial<T> {
    fn derivatives(&self, x: &T, order: usize) -> Option<Vec<T>> {
        let mut out = Vec::with_capacity(order + 1);
        let mut p = self.clone();
        for _ in 0..=order {
            out.push(p.eval(x));
            p = p.derivative();
        }
        Some(out)
    }
}

fn factorial<T: Scalar>(j: usize) -> T {
    (1..=j).fold(T::one(), |acc, k| acc * T::from_i64(k as i64))
}

/// Each node repeated `m + 1` times, contiguously, in the original order.
pub fn jet_expand<T: Clone>(nodes: &[T], m: usize) -> Vec<T> {
    nodes
        .iter()
        .flat_map(|x| std::iter::repeat_n(x.clone(), m + 1))
        .collect()
}

fn equal_nodes_contiguous<T: PartialEq>(nodes: &[T]) -> bool {
    for i in 0..nodes.len() {
        for j in i + 2..nodes.len() {
            if nodes[i] == nodes[j] && nodes[i + 1..j].iter().any(|z| *z != nodes[i]) {
                return false;
            }
        }
    }
    true
}

/// Split a node list into maximal runs of equal values: `(start, len)`.
fn blocks<T: PartialEq>(nodes: &[T]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < nodes.len() {
        let mut j = i + 1;
        while j < nodes.len() && nodes[j] == nodes[i] {
            j += 1;
        }
        out.push((i, j - i));
        i = j;
    }
    out
}

/// The full divided-difference triangle over a node list whose equal nodes
/// are contiguous. `entries[j][i]` is the order-`j` difference over nodes
/// `i..=i+j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tableau<T> {
    pub nodes: Vec<T>,
    pub entries: Vec<Vec<T>>,
}

impl<T: Scalar> Tableau<T> {
    pub fn build<G: Differentiable<T> + ?Sized>(g: &G, nodes: &[T]) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidInput("empty node list".into()));
        }
        if !equal_nodes_contiguous(nodes) {
            return Err(Error::InvalidInput(
                "equal nodes must form contiguous blocks".into(),
            ));
        }
        // Taylor data per position: taylor[i][j] = g^(j)(z_i)/j! within its block.
        let mut taylor: Vec<Vec<T>> = vec![Vec::new(); nodes.len()];
        for (start, len) in blocks(nodes) {
            let x = &nodes[start];
            let d = g
                .derivatives(x, len - 1)
                .filter(|d| d.len() >= len)
                .ok_or(Error::MissingDerivative {
                    node: x.to_f64(),
                    required_order: len - 1,
                })?;
            let tc: Vec<T> = d
                .into_iter()
                .take(len)
                .enumerate()
                .map(|(j, v)| v / factorial::<T>(j))
                .collect();
            for slot in taylor.iter_mut().skip(start).take(len) {
                *slot = tc.clone();
            }
        }
        let n = nodes.len();
        let mut entries: Vec<Vec<T>> = Vec::with_capacity(n);
        entries.push((0..n).map(|i| taylor[i][0].clone()).collect());
        for j in 1..n {
            let prev = &entries[j - 1];
            let row: Vec<T> = (0..n - j)
                .map(|i| {
                    if nodes[i] == nodes[i + j] {
                        taylor[i][j].clone()
                    } else {
                        (prev[i + 1].clone() - prev[i].clone())
                            / (nodes[i + j].clone() - nodes[i].clone())
                    }
                })
                .collect();
            entries.push(row);
        }
        Ok(Tableau {
            nodes: nodes.to_vec(),
            entries,
        })
    }

    /// Top edge of the triangle: the Newton coefficients for `nodes` in order.
    pub fn top_edge(&self) -> Vec<T> {
        self.entries.iter().map(|r| r[0].clone()).collect()
    }

    pub fn highest(&self) -> T {
        self.entries.last().unwrap()[0].clone()
    }
}

fn sorted<T: Scalar>(nodes: &[T]) -> Vec<T> {
    let mut s = nodes.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("nodes must be comparable"));
    s
}

/// `Δ^s g(x_0, ..., x_s)` over an arbitrary multiset of nodes.
pub fn divided_difference<T: Scalar, G: Differentiable<T> + ?Sized>(
    g: &G,
    nodes: &[T],
) -> Result<T> {
    Ok(Tableau::build(g, &sorted(nodes))?.highest())
}

/// Newton coefficients `c_j = Δ^j g(z_0..z_j)` for the node sequence as
/// given. Non-contiguous repeats are handled prefix by prefix.
pub fn newton_coefficients<T: Scalar, G: Differentiable<T> + ?Sized>(
    g: &G,
    seq: &[T],
) -> Result<Vec<T>> {
    if equal_nodes_contiguous(seq) {
        return Ok(Tableau::build(g, seq)?.top_edge());
    }
    (1..=seq.len())
        .map(|j| divided_difference(g, &seq[..j]))
        .collect()
}

/// `p_{l,s}(x_0..x_s)`: the sum of all degree `l − s` monomials in the
/// nodes, which equals `Δ^s x^l`.
pub fn monomial_dd<T: Scalar>(l: usize, s: usize, nodes: &[T]) -> T {
    assert_eq!(nodes.len(), s + 1, "monomial_dd needs s + 1 nodes");
    if l < s {
        return T::zero();
    }
    let d = l - s;
    // h[k] = complete homogeneous polynomial of degree k in the nodes seen so far.
    let mut h = vec![T::zero(); d + 1];
    h[0] = T::one();
    for x in nodes {
        for k in 1..=d {
            h[k] = h[k].clone() + x.clone() * h[k - 1].clone();
        }
    }
    h[d].clone()
}

/// A univariate Newton-form polynomial
/// `c_0 + c_1 (t − z_0) + c_2 (t − z_0)(t − z_1) + ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonPolynomial<T> {
    pub centers: Vec<T>,
    pub coeffs: Vec<T>,
}

impl<T: Scalar> NewtonPolynomial<T> {
    pub fn new(centers: Vec<T>, coeffs: Vec<T>) -> Self {
        assert_eq!(centers.len(), coeffs.len());
        NewtonPolynomial { centers, coeffs }
    }

    pub fn interpolate<G: Differentiable<T> + ?Sized>(g: &G, nodes: &[T]) -> Result<Self> {
        let c = newton_coefficients(g, nodes)?;
        Ok(NewtonPolynomial::new(nodes.to_vec(), c))
    }

    pub fn eval(&self, t: &T) -> T {
        self.eval_with_derivative(t).0
    }

    /// Value and first derivative by nested multiplication.
    pub fn eval_with_derivative(&self, t: &T) -> (T, T) {
        let n = self.coeffs.len();
        if n == 0 {
            return (T::zero(), T::zero());
        }
        let mut p = self.coeffs[n - 1].clone();
        let mut dp = T::zero();
        for k in (0..n - 1).rev() {
            let w = t.clone() - self.centers[k].clone();
            dp = dp * w.clone() + p.clone();
            p = p * w + self.coeffs[k].clone();
        }
        (p, dp)
    }

    /// Expand into monomial coefficients.
    pub fn to_monomial(&self) -> Polynomial<T> {
        let n = self.coeffs.len();
        let mut acc: Vec<T> = vec![T::zero(); n.max(1)];
        let mut basis: Vec<T> = vec![T::one()];
        for k in 0..n {
            for (i, b) in basis.iter().enumerate() {
                acc[i] = acc[i].clone() + self.coeffs[k].clone() * b.clone();
            }
            let mut next = vec![T::zero(); basis.len() + 1];
            for (i, b) in basis.iter().enumerate() {
                next[i + 1] = next[i + 1].clone() + b.clone();
                next[i] = next[i].clone() - self.centers[k].clone() * b.clone();
            }
            basis = next;
        }
        Polynomial::new(acc)
    }
}

/// Per-axis interpolation nodes with a uniform jet order.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeGrid {
    pub axes: Vec<Vec<f64>>,
    pub jet_order: usize,
}

impl NodeGrid {
    pub fn new(axes: Vec<Vec<f64>>, jet_order: usize) -> Result<Self> {
        let g = NodeGrid { axes, jet_order };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::InvalidInput("grid needs at least one axis".into()));
        }
        for (k, ax) in self.axes.iter().enumerate() {
            if ax.is_empty() {
                return Err(Error::InvalidInput(format!("axis {k} is empty")));
            }
            if ax.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!("axis {k} has a non-finite node")));
            }
            let s = sorted(ax);
            if s.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidInput(format!(
                    "axis {k} repeats a node; use jet_order for confluent nodes"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn expanded_axis(&self, k: usize) -> Vec<f64> {
        jet_expand(&self.axes[k], self.jet_order)
    }
}

/// A vector-valued field that reports scaled partials
/// `∂^β F(x) / β!` for a multi-order `β`.
pub trait JetField<T> {
    fn target_dim(&self) -> usize;
    fn taylor(&self, x: &[T], orders: &[usize]) -> Vec<T>;
}

impl JetField<f64> for Poly {
    fn target_dim(&self) -> usize {
        1
    }
    fn taylor(&self, x: &[f64], orders: &[usize]) -> Vec<f64> {
        let mut p = self.clone();
        let mut scale = 1.0;
        for (var, &o) in orders.iter().enumerate() {
            for _ in 0..o {
                p = p.partial(var);
            }
            scale *= factorial::<f64>(o);
        }
        vec![p.eval(x) / scale]
    }
}

impl JetField<f64> for Vec<Poly> {
    fn target_dim(&self) -> usize {
        self.len()
    }
    fn taylor(&self, x: &[f64], orders: &[usize]) -> Vec<f64> {
        self.iter().map(|p| p.taylor(x, orders)[0]).collect()
    }
}

/// Divided-difference coefficients of a field on a grid. Keys are
/// multi-indices `α` with `0 ≤ α_i < (m+1) k_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DDTable<T> {
    pub grid_nodes: Vec<Vec<T>>,
    pub jet_order: usize,
    pub target_dim: usize,
    pub coefficients: BTreeMap<Vec<usize>, Vec<T>>,
}

/// One-dimensional confluent tableau on vectors. `data(p, b)` is the scaled
/// derivative of order `b` at distinct node `p`.
fn vector_top_edge<T: Scalar>(
    expanded: &[T],
    m: usize,
    data: &dyn Fn(usize, usize) -> Vec<T>,
) -> Vec<Vec<T>> {
    let n = expanded.len();
    let pos = |i: usize| i / (m + 1);
    let sub = |a: &[T], b: &[T]| a.iter().zip(b).map(|(x, y)| x.clone() - y.clone()).collect::<Vec<T>>();
    let mut row: Vec<Vec<T>> = (0..n).map(|i| data(pos(i), 0)).collect();
    let mut top = vec![row[0].clone()];
    for j in 1..n {
        let next: Vec<Vec<T>> = (0..n - j)
            .map(|i| {
                if expanded[i] == expanded[i + j] {
                    data(pos(i), j)
                } else {
                    let h = expanded[i + j].clone() - expanded[i].clone();
                    sub(&row[i + 1], &row[i])
                        .into_iter()
                        .map(|v| v / h.clone())
                        .collect()
                }
            })
            .collect();
        top.push(next[0].clone());
        row = next;
    }
    top
}

impl<T: Scalar> DDTable<T> {
    /// Build the table, eliminating axes in `axis_order`. Differences along
    /// distinct axes commute, so every order yields the same table.
    pub fn build<F: JetField<T> + ?Sized>(
        f: &F,
        grid_nodes: &[Vec<T>],
        jet_order: usize,
        axis_order: &[usize],
    ) -> Result<Self> {
        let d = grid_nodes.len();
        let m = jet_order;
        let mut seen = vec![false; d];
        if axis_order.len() != d {
            return Err(Error::InvalidInput("axis order must list every axis".into()));
        }
        for &a in axis_order {
            if a >= d || seen[a] {
                return Err(Error::InvalidInput("axis order must be a permutation".into()));
            }
            seen[a] = true;
        }
        // Key component per axis: p*(m+1)+b before elimination, α after.
        let counts: Vec<usize> = grid_nodes.iter().map(|a| a.len() * (m + 1)).collect();
        let mut cur: BTreeMap<Vec<usize>, Vec<T>> = BTreeMap::new();
        let mut key = vec![0usize; d];
        loop {
            let point: Vec<T> = (0..d).map(|k| grid_nodes[k][key[k] / (m + 1)].clone()).collect();
            let orders: Vec<usize> = key.iter().map(|&c| c % (m + 1)).collect();
            cur.insert(key.clone(), f.taylor(&point, &orders));
            if !advance(&mut key, &counts) {
                break;
            }
        }
        for &axis in axis_order {
            let expanded = jet_expand(&grid_nodes[axis], m);
            let mut groups: BTreeMap<Vec<usize>, ()> = BTreeMap::new();
            for k in cur.keys() {
                let mut g = k.clone();
                g[axis] = 0;
                groups.insert(g, ());
            }
            let mut next = BTreeMap::new();
            for g in groups.keys() {
                let data = |p: usize, b: usize| {
                    let mut k = g.clone();
                    k[axis] = p * (m + 1) + b;
                    cur[&k].clone()
                };
                let top = vector_top_edge(&expanded, m, &data);
                for (alpha, v) in top.into_iter().enumerate() {
                    let mut k = g.clone();
                    k[axis] = alpha;
                    next.insert(k, v);
                }
            }
            cur = next;
        }
        Ok(DDTable {
            grid_nodes: grid_nodes.to_vec(),
            jet_order: m,
            target_dim: f.target_dim(),
            coefficients: cur,
        })
    }

    pub fn expanded_axis(&self, k: usize) -> Vec<T> {
        jet_expand(&self.grid_nodes[k], self.jet_order)
    }

    /// Evaluate the tensor Newton interpolant, nesting one axis at a time.
    pub fn eval(&self, t: &[T]) -> Vec<T> {
        let d = self.grid_nodes.len();
        assert_eq!(t.len(), d);
        let mut cur: BTreeMap<Vec<usize>, Vec<T>> = self.coefficients.clone();
        for axis in (0..d).rev() {
            let z = self.expanded_axis(axis);
            let mut groups: BTreeMap<Vec<usize>, Vec<(usize, Vec<T>)>> = BTreeMap::new();
            for (k, v) in cur {
                let prefix = k[..axis].to_vec();
                groups.entry(prefix).or_default().push((k[axis], v));
            }
            let mut next = BTreeMap::new();
            for (prefix, mut items) in groups {
                items.sort_by_key(|(a, _)| *a);
                let mut acc = vec![T::zero(); self.target_dim];
                for (a, v) in items.into_iter().rev() {
                    let w = t[axis].clone() - z[a].clone();
                    let scaled: Vec<T> = acc.into_iter().map(|x| x * w.clone()).collect();
                    acc = scaled.into_iter().zip(v).map(|(x, y)| x + y).collect();
                }
                next.insert(prefix, acc);
            }
            cur = next;
        }
        cur.into_values().next().unwrap_or_else(|| vec![T::zero(); self.target_dim])
    }
}

fn advance(key: &mut [usize], counts: &[usize]) -> bool {
    for k in (0..key.len()).rev() {
        key[k] += 1;
        if key[k] < counts[k] {
            return true;
        }
        key[k] = 0;
    }
    false
}

/// Build an `f64` table on a grid with the natural axis order.
pub fn build_table<F: JetField<f64> + ?Sized>(f: &F, grid: &NodeGrid) -> Result<DDTable<f64>> {
    grid.validate()?;
    let order: Vec<usize> = (0..grid.dim()).collect();
    DDTable::build(f, &grid.axes, grid.jet_order, &order)
}

/// Value of the Newton interpolant of a table at `t`.
pub fn newton_interpolate(table: &DDTable<f64>, t: &[f64]) -> Vec<f64> {
    table.eval(t)
}
