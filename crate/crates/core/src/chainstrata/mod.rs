//! Chain maps `P∘F`, linearization counts, `(m,δ)`-cones and sampled
//! Whitney a- and a_P-regularity diagnostics.

pub mod chain;
pub mod cone;
pub mod regularity;

use nalgebra::DVector;

use crate::linalg::{matrix_from_rows, min_norm_solve, norm};
use crate::poly::Poly;

pub use chain::{
    geometric_multiplicity, linearize_compare, ChainMapSpec, LinearizeOptions, LinearizeReport,
    Multiplicity,
};
pub use cone::{cone_membership, limiting_set_sample, ConeKind, ConeSpec, LimitOptions, LimitingSet};
pub use regularity::{
    a_regularity_test, ap_regularity_test, RankPrecheck, RegularityReport, SequenceGenerator,
    Stratum, StratumSample, Verdict,
};

pub(crate) fn eval_polys(ps: &[Poly], x: &[f64]) -> Vec<f64> {
    ps.iter().map(|p| p.eval(x)).collect()
}

pub(crate) fn jacobian_polys(ps: &[Poly], x: &[f64]) -> Vec<Vec<f64>> {
    ps.iter().map(|p| p.eval_gradient(x)).collect()
}

/// Value and Jacobian rows of a map at a point.
pub(crate) type ValueJacobian = (Vec<f64>, Vec<Vec<f64>>);

/// Newton for `g(x) = 0`. Square systems take exact steps, others take
/// min-norm steps so they land on a nearby point of the solution set.
/// Convergence is judged on the residual divided componentwise by `scale`;
/// with `damped`, steps are halved until that residual decreases.
pub(crate) fn newton_solve(
    g: &dyn Fn(&[f64]) -> ValueJacobian,
    start: &[f64],
    scale: &[f64],
    tol: f64,
    max_iter: usize,
    damped: bool,
) -> Option<Vec<f64>> {
    let weighted = |r: &[f64]| -> f64 { norm(&r.iter().zip(scale).map(|(a, s)| a / s).collect::<Vec<_>>()) };
    let mut x = start.to_vec();
    let (mut r, mut jac) = g(&x);
    let mut rn = weighted(&r);
    for _ in 0..max_iter {
        if !rn.is_finite() {
            return None;
        }
        if rn <= tol {
            return Some(x);
        }
        let j = matrix_from_rows(&jac);
        let rv = DVector::from_vec(r.clone());
        let step = if j.is_square() {
            j.lu().solve(&rv)?
        } else {
            min_norm_solve(&j, &rv)?
        };
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a - alpha * s).collect();
            let (rt, jt) = g(&trial);
            let rtn = weighted(&rt);
            if !damped || (rtn.is_finite() && rtn < rn) {
                x = trial;
                r = rt;
                rn = rtn;
                jac = jt;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-8 {
                return None;
            }
        }
    }
    (rn <= tol).then_some(x)
}
