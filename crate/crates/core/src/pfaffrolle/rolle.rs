//! Rolle inequality along a traced component: the zeros of `f − a` are
//! bounded by the zeros of `f′ − δ`, plus one on open arcs.

use serde::{Deserialize, Serialize};

use super::continuation::CurveComponent;
use super::ScalarField;
use crate::error::{Error, Result};
use crate::linalg::dot;

/// What plays the role of `f′` along the curve.
#[derive(Clone, Copy)]
pub enum RolleDerivative<'a> {
    /// `∇f · t` with the unit tangent of the component.
    Tangent,
    /// Any field vanishing exactly where `f` is critical on the curve,
    /// such as a chain Jacobian.
    Field(&'a dyn ScalarField),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolleReport {
    /// Zeros of `f − a`.
    pub lhs: usize,
    /// Zeros of `f′ − δ`.
    pub derivative_zeros: usize,
    /// `derivative_zeros`, plus one when the component is not closed.
    pub rhs: usize,
    pub holds: bool,
    /// Linearly interpolated positions of the zeros of `f − a`.
    pub locations: Vec<Vec<f64>>,
}

/// Indices `i` such that `v` changes sign on the segment `i → i+1`.
pub(crate) fn sign_changes(v: &[f64]) -> Vec<usize> {
    v.windows(2)
        .enumerate()
        .filter(|(_, w)| (w[0] >= 0.0) != (w[1] >= 0.0))
        .map(|(i, _)| i)
        .collect()
}

pub(crate) fn count_level(values: &[f64], level: f64) -> usize {
    let shifted: Vec<f64> = values.iter().map(|v| v - level).collect();
    sign_changes(&shifted).len()
}

fn derivative_values(f: &dyn ScalarField, comp: &CurveComponent, deriv: RolleDerivative) -> Vec<f64> {
    match deriv {
        RolleDerivative::Tangent => comp
            .points
            .iter()
            .zip(&comp.tangents)
            .map(|(p, t)| dot(&f.gradient(p), t))
            .collect(),
        RolleDerivative::Field(g) => comp.points.iter().map(|p| g.value(p)).collect(),
    }
}

/// Counts both sides of the Rolle inequality on one component.
///
/// The count at `δ` is repeated at `δ/2`; a change means `δ` is not small
/// enough and is reported as [`Error::DeltaTooLarge`]. A critical point of
/// `f` on the curve where `f′` crosses zero with negligible slope is
/// reported as [`Error::DegenerateCritical`]. When `f − a` has no zeros the
/// inequality holds trivially and `f′` is not examined.
pub fn rolle_count(
    f: &dyn ScalarField,
    comp: &CurveComponent,
    a: f64,
    delta: f64,
    deriv: RolleDerivative,
) -> Result<RolleReport> {
    if !(delta.is_finite() && delta != 0.0) {
        return Err(Error::InvalidInput("delta must be finite and nonzero".into()));
    }
    let fv: Vec<f64> = comp.points.iter().map(|p| f.value(p) - a).collect();
    let hits = sign_changes(&fv);
    let locations: Vec<Vec<f64>> = hits
        .iter()
        .map(|&i| {
            let s = fv[i] / (fv[i] - fv[i + 1]);
            comp.points[i]
                .iter()
                .zip(&comp.points[i + 1])
                .map(|(p, q)| p + s * (q - p))
                .collect()
        })
        .collect();
    let lhs = hits.len();
    let open = usize::from(!comp.is_closed());
    if lhs == 0 {
        return Ok(RolleReport { lhs, derivative_zeros: 0, rhs: open, holds: true, locations });
    }
    let dv = derivative_values(f, comp, deriv);
    let s = comp.arclengths();
    let scale = dv.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let length = s.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    for i in sign_changes(&dv) {
        let ds = (s[i + 1] - s[i]).max(f64::MIN_POSITIVE);
        let slope = (dv[i + 1] - dv[i]).abs() / ds;
        if slope <= 1e-7 * scale / length {
            return Err(Error::DegenerateCritical { arclength: s[i], slope });
        }
    }
    let count = count_level(&dv, delta);
    let count_half = count_level(&dv, delta / 2.0);
    if count != count_half {
        return Err(Error::DeltaTooLarge { delta, count, count_half });
    }
    let rhs = count + open;
    Ok(RolleReport { lhs, derivative_zeros: count, rhs, holds: lhs <= rhs, locations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pfaffrolle::continuation::{trace_level_curve, TraceOptions};
    use crate::pfaffrolle::{FieldMap, FnField, RegularSystem};
    use crate::poly::Poly;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn unit_circle() -> CurveComponent {
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let g = &(&x * &x) + &(&y * &y);
        let map = FieldMap::new(vec![Arc::new(g) as Arc<dyn ScalarField>]).unwrap();
        let sys = RegularSystem::new(Arc::new(map), None, 2.0).unwrap();
        let mut comps = trace_level_curve(&sys, &[1.0], &TraceOptions::default()).unwrap();
        assert_eq!(comps.len(), 1);
        comps.remove(0)
    }

    #[test]
    fn height_on_circle() {
        let c = unit_circle();
        let f = Poly::var(2, 1);
        let r = rolle_count(&f, &c, 0.3, 1e-4, RolleDerivative::Tangent).unwrap();
        assert_eq!((r.lhs, r.rhs), (2, 2));
        assert!(r.holds);
        for p in &r.locations {
            assert!((p[1] - 0.3).abs() < 1e-5);
        }
    }

    #[test]
    fn no_zeros_holds_trivially() {
        let c = unit_circle();
        let f = Poly::constant(2, 1.0);
        let r = rolle_count(&f, &c, 0.0, 1e-4, RolleDerivative::Tangent).unwrap();
        assert_eq!(r.lhs, 0);
        assert!(r.holds);
    }

    #[test]
    fn large_delta_is_flagged() {
        let c = unit_circle();
        let f = Poly::var(2, 1);
        // f′ = ±x on the circle: 0.9 and 0.45 are each hit twice, 1.5 is
        // never hit while 0.75 is.
        assert!(rolle_count(&f, &c, 0.3, 0.9, RolleDerivative::Tangent).is_ok());
        let err = rolle_count(&f, &c, 0.3, 1.5, RolleDerivative::Tangent).unwrap_err();
        assert!(matches!(err, Error::DeltaTooLarge { count: 0, count_half: 2, .. }));
    }

    fn trig_field(coef: Vec<(f64, f64)>) -> impl ScalarField {
        let c2 = coef.clone();
        FnField {
            dim: 2,
            value: move |p: &[f64]| {
                let th = p[1].atan2(p[0]);
                coef.iter()
                    .enumerate()
                    .map(|(k, (a, b))| {
                        let k = (k + 1) as f64;
                        a * (k * th).cos() + b * (k * th).sin()
                    })
                    .sum()
            },
            gradient: move |p: &[f64]| {
                let th = p[1].atan2(p[0]);
                let r2 = p[0] * p[0] + p[1] * p[1];
                let dth: f64 = c2
                    .iter()
                    .enumerate()
                    .map(|(k, (a, b))| {
                        let k = (k + 1) as f64;
                        k * (-a * (k * th).sin() + b * (k * th).cos())
                    })
                    .sum();
                vec![-p[1] / r2 * dth, p[0] / r2 * dth]
            },
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn rolle_holds_for_trig_polynomials(
            coef in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..5),
            a in -0.5f64..0.5,
        ) {
            let c = unit_circle();
            let f = trig_field(coef);
            match rolle_count(&f, &c, a, 1e-6, RolleDerivative::Tangent) {
                Ok(r) => prop_assert!(r.holds, "{:?}", r),
                Err(Error::DegenerateCritical { .. }) | Err(Error::DeltaTooLarge { .. }) => {}
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
