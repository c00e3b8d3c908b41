//! Predictor–corrector tracing of one-dimensional level sets inside a ball.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RegularSystem;
use crate::error::{Error, Result};
use crate::linalg::{cofactor_vector, dist, dot, halton, matrix_from_rows, min_norm_solve, norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    Closed,
    /// Both ends lie on the sphere bounding the ball.
    Boundary,
    /// Tracing stopped early; `diagnostic` on the component says why.
    Truncated,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveComponent {
    /// Vertices on the curve. A closed component repeats its first vertex
    /// at the end.
    pub points: Vec<Vec<f64>>,
    /// Unit tangents at the vertices, oriented along the traversal.
    pub tangents: Vec<Vec<f64>>,
    pub kind: ComponentKind,
    /// Smallest singular value of the Jacobian seen along the component.
    pub min_singular: f64,
    pub diagnostic: Option<String>,
}

impl CurveComponent {
    pub fn is_closed(&self) -> bool {
        self.kind == ComponentKind::Closed
    }

    pub fn arclengths(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.points.len());
        let mut acc = 0.0;
        for (i, p) in self.points.iter().enumerate() {
            if i > 0 {
                acc += dist(&self.points[i - 1], p);
            }
            s.push(acc);
        }
        s
    }

    pub fn length(&self) -> f64 {
        self.arclengths().last().copied().unwrap_or(0.0)
    }

    /// Distance from `x` to the polyline.
    pub fn distance_to(&self, x: &[f64]) -> f64 {
        if self.points.len() == 1 {
            return dist(x, &self.points[0]);
        }
        self.points
            .windows(2)
            .map(|w| segment_distance(x, &w[0], &w[1]))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceOptions {
    /// Number of quasi-random seeds drawn in the ball.
    pub seeds: usize,
    /// Initial and maximal step as a fraction of the radius.
    pub step_fraction: f64,
    /// Largest tangent turn per accepted step, in radians.
    pub max_angle: f64,
    pub corrector_iterations: usize,
    pub max_steps: usize,
    /// Seed for the random shift of the Halton sequence.
    pub rng_seed: u64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            seeds: 256,
            step_fraction: 1e-3,
            max_angle: 0.1,
            corrector_iterations: 8,
            max_steps: 200_000,
            rng_seed: 0x5eed,
        }
    }
}

fn segment_distance(x: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab: Vec<f64> = b.iter().zip(a).map(|(p, q)| p - q).collect();
    let ax: Vec<f64> = x.iter().zip(a).map(|(p, q)| p - q).collect();
    let l2 = dot(&ab, &ab);
    let t = if l2 > 0.0 { (dot(&ax, &ab) / l2).clamp(0.0, 1.0) } else { 0.0 };
    let proj: Vec<f64> = a.iter().zip(&ab).map(|(p, q)| p + t * q).collect();
    dist(x, &proj)
}

fn residual(sys: &RegularSystem, value: &[f64], x: &[f64]) -> Vec<f64> {
    sys.map.eval(x).iter().zip(value).map(|(g, v)| g - v).collect()
}

/// Min-norm Newton correction `Jᵀ (J Jᵀ)⁻¹ r`.
fn newton_step(jac: &[Vec<f64>], r: &[f64]) -> Option<Vec<f64>> {
    let j = matrix_from_rows(jac);
    let rv = DVector::from_column_slice(r);
    let gram = &j * j.transpose();
    let step = match gram.clone().cholesky() {
        Some(ch) => j.transpose() * ch.solve(&rv),
        None => min_norm_solve(&j, &rv)?,
    };
    step.iter().all(|v| v.is_finite()).then(|| step.iter().copied().collect())
}

fn smallest_singular(jac: &[Vec<f64>]) -> f64 {
    matrix_from_rows(jac).singular_values().min()
}

fn unit_tangent(sys: &RegularSystem, x: &[f64]) -> Option<Vec<f64>> {
    let c = cofactor_vector(&sys.map.jacobian(x));
    let n = norm(&c);
    (n > 0.0 && n.is_finite()).then(|| c.iter().map(|v| v / n).collect())
}

fn tol_for(value: &[f64]) -> f64 {
    1e-11 * (1.0 + norm(value))
}

/// Damped Newton from an arbitrary point onto the level set.
fn project_seed(sys: &RegularSystem, value: &[f64], x0: &[f64]) -> Option<Vec<f64>> {
    let tol = tol_for(value);
    let mut x = x0.to_vec();
    let mut r = residual(sys, value, &x);
    let mut rn = norm(&r);
    for _ in 0..60 {
        if !rn.is_finite() {
            return None;
        }
        if rn <= tol {
            return Some(x);
        }
        let step = newton_step(&sys.map.jacobian(&x), &r)?;
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a - alpha * s).collect();
            let rt = residual(sys, value, &trial);
            let rtn = norm(&rt);
            if rtn.is_finite() && rtn < rn {
                x = trial;
                r = rt;
                rn = rtn;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-6 {
                return None;
            }
        }
    }
    (rn <= tol).then_some(x)
}

/// Plain Newton corrector with a fixed iteration budget.
fn correct(sys: &RegularSystem, value: &[f64], x0: &[f64], iters: usize) -> Option<Vec<f64>> {
    let tol = tol_for(value);
    let mut x = x0.to_vec();
    for _ in 0..=iters {
        let r = residual(sys, value, &x);
        let rn = norm(&r);
        if !rn.is_finite() {
            return None;
        }
        if rn <= tol {
            return Some(x);
        }
        let step = newton_step(&sys.map.jacobian(&x), &r)?;
        for (a, s) in x.iter_mut().zip(&step) {
            *a -= s;
        }
    }
    None
}

/// Solves `G = value, ρ = 0` starting from a point near the sphere.
fn boundary_point(sys: &RegularSystem, value: &[f64], inside: &[f64], outside: &[f64]) -> Vec<f64> {
    let (ri, ro) = (sys.rho(inside), sys.rho(outside));
    let s = ri / (ri - ro);
    let mut x: Vec<f64> = inside.iter().zip(outside).map(|(a, b)| a + s * (b - a)).collect();
    let guess = x.clone();
    let tol = tol_for(value);
    for _ in 0..30 {
        let mut r = residual(sys, value, &x);
        r.push(sys.rho(&x));
        if norm(&r) <= tol {
            return x;
        }
        let mut rows = sys.map.jacobian(&x);
        rows.push(sys.rho_gradient(&x));
        let m = matrix_from_rows(&rows);
        let Some(step) = m.lu().solve(&DVector::from_vec(r)) else {
            return guess;
        };
        for (a, s) in x.iter_mut().zip(step.iter()) {
            *a -= s;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return guess;
        }
    }
    guess
}

enum End {
    Closed,
    Boundary,
    Stalled(String),
}

struct March {
    points: Vec<Vec<f64>>,
    tangents: Vec<Vec<f64>>,
    end: End,
    min_singular: f64,
}

fn march(
    sys: &RegularSystem,
    value: &[f64],
    start: &[f64],
    direction: f64,
    detect_closure: bool,
    opts: &TraceOptions,
) -> March {
    let h0 = opts.step_fraction * sys.radius;
    let h_min = 1e-9 * sys.radius;
    let t_start: Vec<f64> = match unit_tangent(sys, start) {
        Some(t) => t.iter().map(|v| v * direction).collect(),
        None => {
            return March {
                points: vec![start.to_vec()],
                tangents: vec![vec![0.0; start.len()]],
                end: End::Stalled("singular Jacobian at seed".into()),
                min_singular: 0.0,
            }
        }
    };
    let mut out = March {
        points: vec![start.to_vec()],
        tangents: vec![t_start.clone()],
        end: End::Stalled("step limit reached".into()),
        min_singular: smallest_singular(&sys.map.jacobian(start)),
    };
    let mut x = start.to_vec();
    let mut t = t_start.clone();
    let mut h = h0;
    let mut travelled = 0.0;
    let mut steps = 0;
    while steps < opts.max_steps {
        let predicted: Vec<f64> = x.iter().zip(&t).map(|(a, b)| a + h * b).collect();
        let accepted = correct(sys, value, &predicted, opts.corrector_iterations).and_then(|xc| {
            let mut tn = unit_tangent(sys, &xc)?;
            if dot(&tn, &t) < 0.0 {
                tn.iter_mut().for_each(|v| *v = -*v);
            }
            let angle = dot(&tn, &t).clamp(-1.0, 1.0).acos();
            let len = dist(&xc, &x);
            (angle <= opts.max_angle && len <= 2.0 * h && len > 0.0).then_some((xc, tn, angle))
        });
        let Some((xc, tn, angle)) = accepted else {
            h *= 0.5;
            if h < h_min {
                out.end = End::Stalled(format!("step size underflow at {:?}", x));
                return out;
            }
            continue;
        };
        steps += 1;
        if sys.rho(&xc) < 0.0 {
            let xb = boundary_point(sys, value, &x, &xc);
            let tb = unit_tangent(sys, &xb).map(|mut v| {
                if dot(&v, &t) < 0.0 {
                    v.iter_mut().for_each(|a| *a = -*a);
                }
                v
            });
            out.points.push(xb);
            out.tangents.push(tb.unwrap_or_else(|| t.clone()));
            out.end = End::Boundary;
            return out;
        }
        if detect_closure
            && travelled > 4.0 * h0
            && segment_distance(start, &x, &xc) <= 0.25 * h.max(h0) + 1e-12
            && dot(&t, &t_start) > 0.0
        {
            out.points.push(start.to_vec());
            out.tangents.push(t_start.clone());
            out.end = End::Closed;
            return out;
        }
        out.min_singular = out.min_singular.min(smallest_singular(&sys.map.jacobian(&xc)));
        travelled += dist(&x, &xc);
        out.points.push(xc.clone());
        out.tangents.push(tn.clone());
        x = xc;
        t = tn;
        if angle < opts.max_angle / 3.0 {
            h = (1.5 * h).min(h0);
        }
    }
    out
}

/// Traces the component of `{G = value}` through `seed`, which must
/// already lie on the level set inside the ball.
pub fn trace_from_seed(
    sys: &RegularSystem,
    value: &[f64],
    seed: &[f64],
    opts: &TraceOptions,
) -> CurveComponent {
    let fwd = march(sys, value, seed, 1.0, true, opts);
    if let End::Closed = fwd.end {
        return CurveComponent {
            points: fwd.points,
            tangents: fwd.tangents,
            kind: ComponentKind::Closed,
            min_singular: fwd.min_singular,
            diagnostic: None,
        };
    }
    let bwd = march(sys, value, seed, -1.0, false, opts);
    let mut points: Vec<Vec<f64>> = bwd.points.iter().skip(1).rev().cloned().collect();
    let mut tangents: Vec<Vec<f64>> = bwd
        .tangents
        .iter()
        .skip(1)
        .rev()
        .map(|t| t.iter().map(|v| -v).collect())
        .collect();
    points.extend(fwd.points);
    tangents.extend(fwd.tangents);
    let diagnostic = [&bwd.end, &fwd.end].iter().find_map(|e| match e {
        End::Stalled(msg) => Some(msg.clone()),
        _ => None,
    });
    CurveComponent {
        points,
        tangents,
        kind: if diagnostic.is_some() { ComponentKind::Truncated } else { ComponentKind::Boundary },
        min_singular: fwd.min_singular.min(bwd.min_singular),
        diagnostic,
    }
}

/// Finds and traces every component of `{G = value}` inside the ball that
/// some seed reaches. Seeds are Halton points with a seeded random shift,
/// pushed onto the level set by damped Newton; seeds that land within ten
/// initial steps of an already traced component are dropped.
pub fn trace_level_curve(
    sys: &RegularSystem,
    value: &[f64],
    opts: &TraceOptions,
) -> Result<Vec<CurveComponent>> {
    let d = sys.dim();
    if value.len() + 1 != d {
        return Err(Error::InvalidInput(format!(
            "level value has length {}, expected {}",
            value.len(),
            d - 1
        )));
    }
    if value.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("level value must be finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
    let shift: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
    let dedup = 10.0 * opts.step_fraction * sys.radius;
    let mut comps: Vec<CurveComponent> = Vec::new();
    let mut drawn = 0u64;
    let mut used = 0usize;
    while used < opts.seeds && drawn < 64 * opts.seeds as u64 {
        let u = halton(drawn, d, &shift);
        drawn += 1;
        let p: Vec<f64> = u
            .iter()
            .zip(&sys.center)
            .map(|(ui, c)| c + sys.radius * (2.0 * ui - 1.0))
            .collect();
        if sys.rho(&p) <= 0.0 {
            continue;
        }
        used += 1;
        let Some(x) = project_seed(sys, value, &p) else { continue };
        if sys.rho(&x) <= 0.0 {
            continue;
        }
        let jac = sys.map.jacobian(&x);
        let smax = matrix_from_rows(&jac).singular_values().max();
        if smallest_singular(&jac) <= 1e-8 * smax.max(1e-300) {
            continue;
        }
        if comps.iter().any(|c| c.distance_to(&x) < dedup) {
            continue;
        }
        comps.push(trace_from_seed(sys, value, &x, opts));
    }
    Ok(comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pfaffrolle::{FieldMap, ScalarField};
    use crate::poly::Poly;
    use std::sync::Arc;

    fn circle_system(radius: f64) -> RegularSystem {
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let g = &(&x * &x) + &(&y * &y);
        let map = FieldMap::new(vec![Arc::new(g) as Arc<dyn ScalarField>]).unwrap();
        RegularSystem::new(Arc::new(map), None, radius).unwrap()
    }

    #[test]
    fn circle_is_one_closed_component() {
        let sys = circle_system(1.0);
        let comps = trace_level_curve(&sys, &[0.25], &TraceOptions::default()).unwrap();
        assert_eq!(comps.len(), 1);
        let c = &comps[0];
        assert_eq!(c.kind, ComponentKind::Closed);
        let to_circle = c.points.iter().map(|p| (norm(p) - 0.5).abs()).fold(0.0, f64::max);
        assert!(to_circle < 1e-9, "{to_circle}");
        let from_circle = (0..2000)
            .map(|k| {
                let th = k as f64 * std::f64::consts::TAU / 2000.0;
                c.distance_to(&[0.5 * th.cos(), 0.5 * th.sin()])
            })
            .fold(0.0, f64::max);
        assert!(from_circle < 1e-6, "{from_circle}");
        assert!((c.length() - std::f64::consts::PI).abs() < 1e-5);
    }

    #[test]
    fn level_outside_range_is_empty() {
        let sys = circle_system(1.0);
        let comps = trace_level_curve(&sys, &[-1.0], &TraceOptions::default()).unwrap();
        assert!(comps.is_empty());
    }

    #[test]
    fn big_circle_gives_boundary_arcs() {
        // x² + y² = 1 seen through the ball of radius 1 centred at (1, 0):
        // one arc with both ends on the sphere.
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let g = &(&x * &x) + &(&y * &y);
        let map = FieldMap::new(vec![Arc::new(g) as Arc<dyn ScalarField>]).unwrap();
        let sys = RegularSystem::new(Arc::new(map), Some(vec![1.0, 0.0]), 1.0).unwrap();
        let comps = trace_level_curve(&sys, &[1.0], &TraceOptions::default()).unwrap();
        assert_eq!(comps.len(), 1);
        let c = &comps[0];
        assert_eq!(c.kind, ComponentKind::Boundary);
        for end in [&c.points[0], c.points.last().unwrap()] {
            assert!(sys.rho(end).abs() < 1e-9);
            assert!((norm(end) - 1.0).abs() < 1e-9);
        }
        // The arc spans angles in (−π/3, π/3).
        assert!((c.length() - 2.0 * std::f64::consts::PI / 3.0).abs() < 1e-5);
    }

    #[test]
    fn coordinate_level_is_a_diameter() {
        let map = FieldMap::new(vec![Arc::new(Poly::var(2, 1)) as Arc<dyn ScalarField>]).unwrap();
        let sys = RegularSystem::new(Arc::new(map), None, 1.0).unwrap();
        let comps = trace_level_curve(&sys, &[0.0], &TraceOptions::default()).unwrap();
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].kind, ComponentKind::Boundary);
        assert!((comps[0].length() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn two_lines_are_two_components() {
        // y² = 0.09 gives the lines y = ±0.3 in the unit ball.
        let y = Poly::var(2, 1);
        let map = FieldMap::new(vec![Arc::new(&y * &y) as Arc<dyn ScalarField>]).unwrap();
        let sys = RegularSystem::new(Arc::new(map), None, 1.0).unwrap();
        let comps = trace_level_curve(&sys, &[0.09], &TraceOptions::default()).unwrap();
        assert_eq!(comps.len(), 2);
        assert!(comps.iter().all(|c| c.kind == ComponentKind::Boundary));
    }

    #[test]
    fn wrong_value_length_is_rejected() {
        let sys = circle_system(1.0);
        assert!(trace_level_curve(&sys, &[0.1, 0.2], &TraceOptions::default()).is_err());
    }
}
