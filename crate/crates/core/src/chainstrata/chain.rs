//! Preimage counts of chain maps `P∘F` near the origin.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{eval_polys, jacobian_polys, newton_solve};
use crate::error::{Error, Result};
use crate::linalg::{dist, halton, matrix_from_rows, norm, rank};
use crate::poly::Poly;

/// Inner map `F: ℝ^n → ℝ^N` and outer polynomial `P: ℝ^N → ℝ^n`. The inner
/// map is polynomial so its linearization at the origin is exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainMapSpec {
    pub inner: Vec<Poly>,
    pub outer: Vec<Poly>,
}

impl ChainMapSpec {
    pub fn n(&self) -> usize {
        self.outer.len()
    }

    pub fn big_n(&self) -> usize {
        self.inner.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, big) = (self.n(), self.big_n());
        if n == 0 || big < n {
            return Err(Error::InvalidInput(format!("need N >= n >= 1, got N={big}, n={n}")));
        }
        if self.inner.iter().any(|p| p.nvars() != n) {
            return Err(Error::InvalidInput(format!("inner map must have {n} variables")));
        }
        if self.outer.iter().any(|p| p.nvars() != big) {
            return Err(Error::InvalidInput(format!("outer map must have {big} variables")));
        }
        // A nontrivial P has full-rank differential somewhere.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let full = (0..32).any(|_| {
            let y: Vec<f64> = (0..big).map(|_| rng.random_range(-1.0..1.0)).collect();
            rank(&matrix_from_rows(&jacobian_polys(&self.outer, &y)), 1e-10) == n
        });
        if !full {
            return Err(Error::Rank("outer map has no full-rank point; its image has empty interior".into()));
        }
        Ok(())
    }

    /// Value and Jacobian of `P∘F` at `x`.
    pub fn eval_with_jacobian(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let y = eval_polys(&self.inner, x);
        let jf = jacobian_polys(&self.inner, x);
        let jp = jacobian_polys(&self.outer, &y);
        let n = x.len();
        let jac = jp
            .iter()
            .map(|row| (0..n).map(|k| row.iter().zip(&jf).map(|(a, r)| a * r[k]).sum()).collect())
            .collect();
        (eval_polys(&self.outer, &y), jac)
    }

    /// The same chain with `F` replaced by its affine part at the origin.
    pub fn linearized(&self) -> ChainMapSpec {
        let n = self.n();
        let zero = vec![0.0; n];
        let inner = self
            .inner
            .iter()
            .map(|p| {
                let g = p.eval_gradient(&zero);
                let mut l = Poly::constant(n, p.eval(&zero));
                for (i, gi) in g.iter().enumerate() {
                    l = &l + &Poly::var(n, i).scale(*gi);
                }
                l
            })
            .collect();
        ChainMapSpec { inner, outer: self.outer.clone() }
    }

    /// `F_t = t F + (1 − t) L_F`.
    pub fn homotopy(&self, t: f64) -> ChainMapSpec {
        let lin = self.linearized();
        let inner = self
            .inner
            .iter()
            .zip(&lin.inner)
            .map(|(f, l)| &f.scale(t) + &l.scale(1.0 - t))
            .collect();
        ChainMapSpec { inner, outer: self.outer.clone() }
    }

    pub fn bezout_bound(&self) -> u64 {
        self.outer.iter().map(|p| p.degree() as u64).product()
    }
}

/// Isolated solutions of `P∘F(x) = b` in the ball of radius `r`, found by
/// multistart Newton from a shifted Halton set and deduplicated. Solutions
/// with a singular Jacobian are dropped as non-isolated.
pub fn preimages(spec: &ChainMapSpec, b: &[f64], r: f64, starts: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = spec.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let pts: Vec<Vec<f64>> = (0..(starts as u64 * 4))
        .map(|i| halton(i, n, &shift).iter().map(|u| r * (2.0 * u - 1.0)).collect::<Vec<f64>>())
        .filter(|p| norm(p) < r)
        .take(starts)
        .collect();
    let scale = vec![1.0; n];
    let tol = 1e-13 * (1.0 + norm(b));
    let g = |x: &[f64]| {
        let (v, j) = spec.eval_with_jacobian(x);
        (v.iter().zip(b).map(|(a, c)| a - c).collect(), j)
    };
    let found: Vec<Option<Vec<f64>>> = pts
        .par_iter()
        .map(|p| {
            let x = newton_solve(&g, p, &scale, tol, 60, true)?;
            if norm(&x) >= r {
                return None;
            }
            let jac = matrix_from_rows(&spec.eval_with_jacobian(&x).1);
            (rank(&jac, 1e-9) == n).then_some(x)
        })
        .collect();
    let mut roots: Vec<Vec<f64>> = Vec::new();
    let dedup = 1e-7 * r;
    for x in found.into_iter().flatten() {
        if roots.iter().all(|q| dist(q, &x) > dedup) {
            roots.push(x);
        }
    }
    roots
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Multiplicity {
    /// Largest preimage count over the target cloud. It is a lower bound
    /// for the geometric multiplicity, since multistart can miss roots.
    pub lower_bound: usize,
    pub per_target: Vec<usize>,
}

pub fn geometric_multiplicity(spec: &ChainMapSpec, r: f64, targets: &[Vec<f64>]) -> Result<Multiplicity> {
    spec.validate()?;
    if !(r > 0.0) {
        return Err(Error::InvalidInput("radius must be positive".into()));
    }
    if targets.iter().any(|b| b.len() != spec.n()) {
        return Err(Error::InvalidInput("target dimension mismatch".into()));
    }
    let per_target: Vec<usize> = targets
        .iter()
        .map(|b| preimages(spec, b, r, 128 * spec.n(), 11).len())
        .collect();
    Ok(Multiplicity { lower_bound: per_target.iter().copied().max().unwrap_or(0), per_target })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearizeOptions {
    /// Basis of the tangent space at `F(0)` of the stratum of `P⁻¹(0)`
    /// through `F(0)`. Empty means the stratum is the point `F(0)`.
    pub stratum_tangent: Vec<Vec<f64>>,
    pub homotopy_times: Vec<f64>,
    pub starts: usize,
    pub seed: u64,
}

impl Default for LinearizeOptions {
    fn default() -> Self {
        LinearizeOptions {
            stratum_tangent: Vec::new(),
            homotopy_times: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            starts: 256,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearizeReport {
    pub count_f: usize,
    pub count_l: usize,
    pub equal: bool,
    pub bezout: u64,
    pub within_bezout: bool,
    /// `(t, count)` along `F_t = t F + (1 − t) L_F`.
    pub homotopy: Vec<(f64, usize)>,
    pub homotopy_constant: bool,
    /// False when a rank check failed; `rank_note` names it.
    pub transversal: bool,
    pub rank_note: Option<String>,
}

/// Counts preimages of `target` under `P∘F` and `P∘L_F` in the ball, and
/// along the straight homotopy between them.
///
/// Transversality is checked in two places: `dF(0)` together with the
/// stratum tangent must span `ℝ^N`, and `P∘F_t` must have full rank at
/// every root it finds.
pub fn linearize_compare(
    spec: &ChainMapSpec,
    target: &[f64],
    r: f64,
    opts: &LinearizeOptions,
) -> Result<LinearizeReport> {
    spec.validate()?;
    let (n, big) = (spec.n(), spec.big_n());
    if target.len() != n {
        return Err(Error::InvalidInput("target dimension mismatch".into()));
    }
    if opts.stratum_tangent.iter().any(|v| v.len() != big) {
        return Err(Error::InvalidInput("stratum tangent vectors must live in R^N".into()));
    }
    let mut rank_note = None;
    let zero = vec![0.0; n];
    let jf = jacobian_polys(&spec.inner, &zero);
    let mut cols: Vec<Vec<f64>> = (0..n).map(|k| jf.iter().map(|row| row[k]).collect()).collect();
    cols.extend(opts.stratum_tangent.iter().cloned());
    let span = rank(&matrix_from_rows(&cols), 1e-10);
    if span < big {
        rank_note = Some(format!("dF(0) with the stratum tangent spans rank {span} < {big}"));
    }

    let mut homotopy = Vec::with_capacity(opts.homotopy_times.len());
    for &t in &opts.homotopy_times {
        let ft = spec.homotopy(t);
        let roots = preimages(&ft, target, r, opts.starts, opts.seed);
        for x in &roots {
            let jac = matrix_from_rows(&ft.eval_with_jacobian(x).1);
            let k = rank(&jac, 1e-8);
            if k < n && rank_note.is_none() {
                rank_note = Some(format!("rank {k} < {n} at a root for t = {t}"));
            }
        }
        homotopy.push((t, roots.len()));
    }
    let count_at = |t: f64, h: &[(f64, usize)]| h.iter().find(|(s, _)| *s == t).map(|(_, c)| *c);
    let count_f = match count_at(1.0, &homotopy) {
        Some(c) => c,
        None => preimages(spec, target, r, opts.starts, opts.seed).len(),
    };
    let count_l = match count_at(0.0, &homotopy) {
        Some(c) => c,
        None => preimages(&spec.linearized(), target, r, opts.starts, opts.seed).len(),
    };
    let bezout = spec.bezout_bound();
    let homotopy_constant = homotopy.windows(2).all(|w| w[0].1 == w[1].1);
    Ok(LinearizeReport {
        count_f,
        count_l,
        equal: count_f == count_l,
        bezout,
        within_bezout: count_l as u64 <= bezout,
        homotopy,
        homotopy_constant,
        transversal: rank_note.is_none(),
        rank_note,
    })
}
