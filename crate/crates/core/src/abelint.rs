//! Complete Abelian integrals `I(h) = ∮_{H=h} P dx + Q dy` over ovals of a
//! polynomial Hamiltonian, and their zeros in `h`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::Poly;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianProblem {
    pub hamiltonian: Poly,
    pub p: Poly,
    pub q: Poly,
    pub h_range: (f64, f64),
    /// Largest allowed degree of `H`, `P` and `Q`.
    #[serde(default = "default_degree")]
    pub max_degree: u32,
    /// Working box `[xmin, xmax, ymin, ymax]`.
    #[serde(default = "default_box")]
    pub bbox: [f64; 4],
    /// Target spacing of oval vertices.
    #[serde(default = "default_step")]
    pub step: f64,
}

fn default_degree() -> u32 {
    8
}

fn default_box() -> [f64; 4] {
    [-10.0, 10.0, -10.0, 10.0]
}

fn default_step() -> f64 {
    1e-3
}

impl HamiltonianProblem {
    pub fn new(hamiltonian: Poly, p: Poly, q: Poly, h_range: (f64, f64)) -> Result<Self> {
        let prob = HamiltonianProblem {
            hamiltonian,
            p,
            q,
            h_range,
            max_degree: default_degree(),
            bbox: default_box(),
            step: default_step(),
        };
        prob.validate()?;
        Ok(prob)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, f) in [("H", &self.hamiltonian), ("P", &self.p), ("Q", &self.q)] {
            if f.nvars() != 2 {
                return Err(Error::InvalidInput(format!("{name} must be a polynomial in (x, y)")));
            }
            if f.degree() > self.max_degree {
                return Err(Error::InvalidInput(format!(
                    "{name} has degree {} above the limit {}",
                    f.degree(),
                    self.max_degree
                )));
            }
        }
        let [x0, x1, y0, y1] = self.bbox;
        if !(x0 < x1 && y0 < y1) || !(self.step > 0.0) || !(self.h_range.0 <= self.h_range.1) {
            return Err(Error::InvalidInput("bad box, step or h range".into()));
        }
        Ok(())
    }

    fn in_box(&self, p: [f64; 2]) -> bool {
        let [x0, x1, y0, y1] = self.bbox;
        (x0..=x1).contains(&p[0]) && (y0..=y1).contains(&p[1])
    }

    fn grad(&self, p: [f64; 2]) -> [f64; 2] {
        let g = self.hamiltonian.eval_gradient(&p);
        [g[0], g[1]]
    }

    fn h_at(&self, p: [f64; 2]) -> f64 {
        self.hamiltonian.eval(&p)
    }

    /// Newton along the gradient onto `H = h`.
    fn project(&self, p: [f64; 2], h: f64, iters: usize) -> Result<[f64; 2]> {
        let mut x = p;
        for _ in 0..iters {
            let r = self.h_at(x) - h;
            let g = self.grad(x);
            let g2 = g[0] * g[0] + g[1] * g[1];
            if g2.sqrt() < 1e-10 {
                return Err(Error::CriticalPoint { point: x.to_vec(), gradient_norm: g2.sqrt() });
            }
            if r.abs() <= 1e-14 * (1.0 + h.abs()) {
                break;
            }
            x = [x[0] - r * g[0] / g2, x[1] - r * g[1] / g2];
        }
        Ok(x)
    }
}

/// A closed level curve, counterclockwise, with vertices equally spaced in
/// arc length. The closing segment runs from the last vertex to the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oval {
    pub h: f64,
    pub points: Vec<[f64; 2]>,
}

impl Oval {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn segments(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.points.len();
        (0..n).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| (b[0] - a[0]).hypot(b[1] - a[1])).sum()
    }

    /// Signed shoelace area, positive for counterclockwise orientation.
    pub fn signed_area(&self) -> f64 {
        0.5 * fsum(self.segments().map(|(a, b)| a[0] * b[1] - b[0] * a[1]))
    }

    /// Same curve with the opposite orientation, starting at the same vertex.
    pub fn reversed(&self) -> Oval {
        let mut points = Vec::with_capacity(self.points.len());
        if let Some(&first) = self.points.first() {
            points.push(first);
            points.extend(self.points[1..].iter().rev());
        }
        Oval { h: self.h, points }
    }

    pub fn max_residual(&self, prob: &HamiltonianProblem) -> f64 {
        self.points.iter().map(|&p| (prob.h_at(p) - self.h).abs()).fold(0.0, f64::max)
    }
}

/// Exactly rounded sum of floats (Shewchuk's partials), independent of
/// summation order.
fn fsum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    // Round the expansion correctly from the top down.
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        n -= 1;
        let x = hi;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

fn unit_tangent(prob: &HamiltonianProblem, p: [f64; 2]) -> Result<[f64; 2]> {
    let g = prob.grad(p);
    let n = g[0].hypot(g[1]);
    if n < 1e-8 {
        return Err(Error::CriticalPoint { point: p.to_vec(), gradient_norm: n });
    }
    Ok([-g[1] / n, g[0] / n])
}

fn seg_dist(x: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let l2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if l2 > 0.0 { (((x[0] - a[0]) * ab[0] + (x[1] - a[1]) * ab[1]) / l2).clamp(0.0, 1.0) } else { 0.0 };
    (x[0] - a[0] - t * ab[0]).hypot(x[1] - a[1] - t * ab[1])
}

/// Traces the level curve `H = h` through (the projection of) `seed` until
/// it closes, then resamples it uniformly and orients it counterclockwise.
pub fn trace_oval(prob: &HamiltonianProblem, h: f64, seed: [f64; 2]) -> Result<Oval> {
    prob.validate()?;
    let start = prob.project(seed, h, 60)?;
    let step = prob.step;
    let mut pts = vec![start];
    let mut x = start;
    let mut travelled = 0.0;
    let max_steps = 50_000_000usize.min((1e3 / step) as usize * 100);
    for _ in 0..max_steps {
        let t1 = unit_tangent(prob, x)?;
        let mid = [x[0] + 0.5 * step * t1[0], x[1] + 0.5 * step * t1[1]];
        let t2 = unit_tangent(prob, mid)?;
        let next = prob.project([x[0] + step * t2[0], x[1] + step * t2[1]], h, 8)?;
        if !prob.in_box(next) {
            return Err(Error::OpenCurve { reason: format!("level curve leaves the box near {next:?}") });
        }
        if travelled > 3.0 * step && seg_dist(start, x, next) <= 0.5 * step {
            return finish(prob, h, pts);
        }
        travelled += (next[0] - x[0]).hypot(next[1] - x[1]);
        pts.push(next);
        x = next;
    }
    Err(Error::OpenCurve { reason: "no closure within the step budget".into() })
}

fn finish(prob: &HamiltonianProblem, h: f64, traced: Vec<[f64; 2]>) -> Result<Oval> {
    // Cumulative arclength around the closed polyline.
    let n = traced.len();
    let mut s = Vec::with_capacity(n + 1);
    s.push(0.0);
    for i in 0..n {
        let (a, b) = (traced[i], traced[(i + 1) % n]);
        s.push(s[i] + (b[0] - a[0]).hypot(b[1] - a[1]));
    }
    let total = s[n];
    let mut m = ((total / prob.step).ceil() as usize).max(16);
    m += m % 2;
    let mut points = Vec::with_capacity(m);
    let mut seg = 0;
    for k in 0..m {
        let target = total * k as f64 / m as f64;
        while seg + 1 < n && s[seg + 1] <= target {
            seg += 1;
        }
        let (a, b) = (traced[seg], traced[(seg + 1) % n]);
        let len = s[seg + 1] - s[seg];
        let u = if len > 0.0 { (target - s[seg]) / len } else { 0.0 };
        let p = [a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])];
        points.push(prob.project(p, h, 8)?);
    }
    let oval = Oval { h, points };
    let oval = if oval.signed_area() < 0.0 { oval.reversed() } else { oval };
    let res = oval.max_residual(prob);
    if res > 1e-9 {
        return Err(Error::NoConvergence(format!("oval residual {res:e} exceeds 1e-9")));
    }
    Ok(oval)
}

fn midpoint_sum(prob: &HamiltonianProblem, pts: &[[f64; 2]]) -> f64 {
    let n = pts.len();
    fsum((0..n).map(|i| {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        let m = [(a[0] + b[0]) * 0.5, (a[1] + b[1]) * 0.5];
        prob.p.eval(&m) * (b[0] - a[0]) + prob.q.eval(&m) * (b[1] - a[1])
    }))
}

/// `∮ P dx + Q dy` along the oval in its stored orientation: midpoint rule
/// on the polyline and on every other vertex, combined by one Richardson
/// step.
pub fn abelian_integral(prob: &HamiltonianProblem, oval: &Oval) -> f64 {
    let fine = midpoint_sum(prob, &oval.points);
    if oval.len() < 4 || oval.len() % 2 == 1 {
        return fine;
    }
    let coarse_pts: Vec<[f64; 2]> = oval.points.iter().step_by(2).copied().collect();
    let coarse = midpoint_sum(prob, &coarse_pts);
    (4.0 * fine - coarse) / 3.0
}

/// A family of ovals, one per energy, met by the ray `center + s·direction`
/// for `s > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub center: [f64; 2],
    pub direction: [f64; 2],
}

impl Branch {
    /// First point on the ray where `H = h`.
    pub fn seed(&self, prob: &HamiltonianProblem, h: f64) -> Result<[f64; 2]> {
        let d = self.direction;
        let dn = d[0].hypot(d[1]);
        if dn == 0.0 {
            return Err(Error::InvalidInput("branch direction must be nonzero".into()));
        }
        let [x0, x1, y0, y1] = prob.bbox;
        let reach = (x1 - x0).hypot(y1 - y0);
        let ds = 1e-3 * prob.step.max(1e-3) * reach / dn;
        let at = |s: f64| [self.center[0] + s * d[0], self.center[1] + s * d[1]];
        let f = |s: f64| prob.h_at(at(s)) - h;
        let mut a = 0.0;
        let mut fa = f(a);
        let mut s = ds;
        while prob.in_box(at(s)) {
            let fs = f(s);
            if fa == 0.0 || (fa < 0.0) != (fs < 0.0) {
                let (mut lo, mut hi) = (a, s);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if (f(lo) < 0.0) == (f(mid) < 0.0) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Ok(at(0.5 * (lo + hi)));
            }
            a = s;
            fa = fs;
            s += ds;
        }
        Err(Error::OpenCurve { reason: format!("no point with H = {h} on the branch ray") })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZeroReport {
    /// `(h, I(h))` on the grid.
    pub samples: Vec<(f64, f64)>,
    pub zeros: Vec<f64>,
    /// `|I| < 1e-12` at every grid point; no zeros are reported then.
    pub identically_zero: bool,
}

pub fn integral_at(prob: &HamiltonianProblem, branch: &Branch, h: f64) -> Result<f64> {
    let seed = branch.seed(prob, h)?;
    Ok(abelian_integral(prob, &trace_oval(prob, h, seed)?))
}

/// Sign changes of `I(h)` on the grid, refined by bisection in `h`.
pub fn count_zeros(prob: &HamiltonianProblem, branch: &Branch, grid: &[f64]) -> Result<ZeroReport> {
    prob.validate()?;
    let (lo, hi) = prob.h_range;
    if grid.iter().any(|h| !(lo..=hi).contains(h)) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("grid must be increasing and inside the h range".into()));
    }
    let values: Vec<f64> = grid
        .par_iter()
        .map(|&h| integral_at(prob, branch, h))
        .collect::<Result<_>>()?;
    let samples: Vec<(f64, f64)> = grid.iter().copied().zip(values.iter().copied()).collect();
    let identically_zero = values.iter().all(|v| v.abs() < 1e-12);
    let mut zeros = Vec::new();
    if !identically_zero {
        for w in samples.windows(2) {
            let ((mut a, mut fa), (mut b, fb)) = (w[0], w[1]);
            if fa == 0.0 {
                zeros.push(a);
                continue;
            }
            if (fa < 0.0) == (fb < 0.0) {
                continue;
            }
            while b - a > 1e-10 * (1.0 + a.abs()) {
                let m = 0.5 * (a + b);
                let fm = integral_at(prob, branch, m)?;
                if (fm < 0.0) == (fa < 0.0) {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            zeros.push(0.5 * (a + b));
        }
        if let Some(&(h, v)) = samples.last() {
            if v == 0.0 {
                zeros.push(h);
            }
        }
    }
    Ok(ZeroReport { samples, zeros, identically_zero })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn x() -> Poly {
        Poly::var(2, 0)
    }
    fn y() -> Poly {
        Poly::var(2, 1)
    }

    fn circle_problem(p: Poly, q: Poly) -> HamiltonianProblem {
        let h = (&x().pow(2) + &y().pow(2)).scale(0.5);
        HamiltonianProblem::new(h, p, q, (0.0, 4.0)).unwrap()
    }

    fn van_der_pol_like() -> HamiltonianProblem {
        let p = &(&Poly::constant(2, 1.0) - &x().pow(2)) * &y();
        circle_problem(p, Poly::zero(2))
    }

    #[test]
    fn unit_circle_oval() {
        let prob = circle_problem(Poly::zero(2), Poly::zero(2));
        let o = trace_oval(&prob, 0.5, [0.9, 0.1]).unwrap();
        assert!((o.length() - 2.0 * PI).abs() < 1e-5);
        assert!(o.signed_area() > 0.0);
        assert!(o.max_residual(&prob) < 1e-9);
    }

    #[test]
    fn critical_seed_is_an_error() {
        let prob = circle_problem(Poly::zero(2), Poly::zero(2));
        let err = trace_oval(&prob, 0.0, [0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::CriticalPoint { .. }));
    }

    #[test]
    fn open_level_curve_is_an_error() {
        let prob = HamiltonianProblem::new(&x().pow(2) - &y().pow(2), Poly::zero(2), Poly::zero(2), (0.0, 1.0))
            .unwrap();
        let err = trace_oval(&prob, 0.5, [1.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::OpenCurve { .. }));
    }

    #[test]
    fn two_wells_give_two_ovals() {
        // y²/2 + (x² − 1)²/4 below the saddle value 1/4.
        let w = (&x().pow(2) - &Poly::constant(2, 1.0)).pow(2).scale(0.25);
        let prob = HamiltonianProblem::new(&y().pow(2).scale(0.5) + &w, y(), Poly::zero(2), (0.0, 0.25)).unwrap();
        let left = trace_oval(&prob, 0.1, [-1.0, 0.3]).unwrap();
        let right = trace_oval(&prob, 0.1, [1.0, 0.3]).unwrap();
        assert!(left.points.iter().all(|p| p[0] < 0.0));
        assert!(right.points.iter().all(|p| p[0] > 0.0));
        let (il, ir) = (abelian_integral(&prob, &left), abelian_integral(&prob, &right));
        // ∮ y dx is minus the enclosed area; the wells are mirror images.
        assert!((il - ir).abs() < 1e-8);
        assert!((il + left.signed_area()).abs() < 1e-6);
    }

    #[test]
    fn closed_form_integral() {
        let prob = van_der_pol_like();
        for h in [0.3, 1.0, 1.7] {
            let r2 = 2.0 * h;
            let o = trace_oval(&prob, h, [r2.sqrt(), 0.0]).unwrap();
            let exact = -PI * r2 * (1.0 - r2 / 4.0);
            assert!((abelian_integral(&prob, &o) - exact).abs() < 1e-8, "h={h}");
        }
    }

    #[test]
    fn area_oracle() {
        let prob = circle_problem(y(), Poly::zero(2));
        let o = trace_oval(&prob, 0.5, [1.0, 0.0]).unwrap();
        let i = abelian_integral(&prob, &o);
        assert!((i + PI).abs() < 1e-8);
        assert!((i + o.signed_area()).abs() < 1e-6);
    }

    #[test]
    fn zero_form_integrates_to_zero() {
        let prob = circle_problem(Poly::zero(2), Poly::zero(2));
        let o = trace_oval(&prob, 1.0, [1.0, 1.0]).unwrap();
        assert_eq!(abelian_integral(&prob, &o), 0.0);
    }

    #[test]
    fn reversal_negates_exactly() {
        let prob = van_der_pol_like();
        let o = trace_oval(&prob, 0.8, [1.0, 0.2]).unwrap();
        assert_eq!(abelian_integral(&prob, &o.reversed()), -abelian_integral(&prob, &o));
    }

    #[test]
    fn halving_the_step_barely_moves_the_integral() {
        let mut prob = van_der_pol_like();
        let a = integral_at(&prob, &ray(), 0.9).unwrap();
        prob.step /= 2.0;
        let b = integral_at(&prob, &ray(), 0.9).unwrap();
        assert!((a - b).abs() <= 1e-6 * a.abs());
    }

    fn ray() -> Branch {
        Branch { center: [0.0, 0.0], direction: [1.0, 0.0] }
    }

    #[test]
    fn single_zero_at_two() {
        let prob = van_der_pol_like();
        let grid: Vec<f64> = (1..=14).map(|k| 0.25 * k as f64).collect();
        let r = count_zeros(&prob, &ray(), &grid).unwrap();
        assert!(!r.identically_zero);
        assert_eq!(r.zeros.len(), 1);
        assert!((r.zeros[0] - 2.0).abs() < 1e-6, "{:?}", r.zeros);
    }

    #[test]
    fn exact_form_is_flagged() {
        // P dx + Q dy = dH.
        let prob = circle_problem(x(), y());
        let grid = [0.5, 1.0, 1.5, 2.0];
        let r = count_zeros(&prob, &ray(), &grid).unwrap();
        assert!(r.identically_zero);
        assert!(r.zeros.is_empty());
    }

    #[test]
    fn constant_sign_has_no_zeros() {
        let prob = van_der_pol_like();
        let r = count_zeros(&prob, &ray(), &[0.25, 0.5, 1.0, 1.5]).unwrap();
        assert!(r.zeros.is_empty());
        assert!(r.samples.iter().all(|(_, v)| *v < 0.0));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(12))]
        #[test]
        fn green_and_reversal_on_ellipses(a in 0.3f64..3.0, b in 0.3f64..3.0, h in 0.1f64..2.0) {
            let ham = &x().pow(2).scale(a) + &y().pow(2).scale(b);
            let prob = HamiltonianProblem::new(ham, y(), Poly::zero(2), (0.0, 2.0)).unwrap();
            let o = trace_oval(&prob, h, [(h / a).sqrt(), 0.0]).unwrap();
            let i = abelian_integral(&prob, &o);
            let exact = -PI * h / (a * b).sqrt();
            proptest::prop_assert!((i - exact).abs() < 1e-6 * (1.0 + exact.abs()));
            proptest::prop_assert!((i + o.signed_area()).abs() < 1e-6 * (1.0 + exact.abs()));
            proptest::prop_assert_eq!(abelian_integral(&prob, &o.reversed()), -i);
        }
    }
}
