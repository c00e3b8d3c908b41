//! Interval maps and their trajectory perturbations: orbit closing,
//! hyperbolicity pushing, exclusion radii and periodic-point counts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::multijet::diagonal_distance;

/// Slack allowed when testing `f(x) ∈ I` against rounding.
const DOMAIN_SLACK: f64 = 1e-12;
/// Below this distance product `close_orbit` refuses.
pub const DIAGONAL_FLOOR: f64 = 1e-12;
/// Orbit-closure tolerance for periodicity tests.
pub const PERIODIC_TOL: f64 = 1e-10;

pub trait Map1D: Send + Sync {
    fn eval(&self, x: f64) -> f64;
    fn deriv(&self, x: f64) -> f64;
    fn domain(&self) -> (f64, f64);
    fn c1_norm(&self) -> f64;

    fn contains(&self, x: f64) -> bool {
        let (lo, hi) = self.domain();
        x >= lo - DOMAIN_SLACK && x <= hi + DOMAIN_SLACK
    }

    /// `f^n(x)` without domain checks.
    fn iterate_raw(&self, x: f64, n: usize) -> f64 {
        (0..n).fold(x, |y, _| self.eval(y))
    }

    /// `(f^n)'(x)` by the chain rule.
    fn iterate_deriv(&self, x: f64, n: usize) -> f64 {
        let mut y = x;
        let mut d = 1.0;
        for _ in 0..n {
            d *= self.deriv(y);
            y = self.eval(y);
        }
        d
    }
}

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct IntervalMap {
    pub name: String,
    f: RealFn,
    df: RealFn,
    domain: (f64, f64),
    c1_norm: f64,
}

impl fmt::Debug for IntervalMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IntervalMap")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("c1_norm", &self.c1_norm)
            .finish()
    }
}

impl IntervalMap {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        domain: (f64, f64),
        c1_norm: f64,
    ) -> Self {
        IntervalMap {
            name: name.into(),
            f: Arc::new(f),
            df: Arc::new(df),
            domain,
            c1_norm,
        }
    }

    /// `4x(1 − x)` on `[0, 1]`.
    pub fn logistic() -> Self {
        IntervalMap::new(
            "logistic",
            |x| 4.0 * x * (1.0 - x),
            |x| 4.0 - 8.0 * x,
            (0.0, 1.0),
            4.0,
        )
    }

    /// `a·x` on `[−1, 1]`, `|a| ≤ 1`.
    pub fn linear(a: f64) -> Self {
        IntervalMap::new("linear", move |x| a * x, move |_| a, (-1.0, 1.0), a.abs())
    }

    /// `x²` on `[−1, 1]`.
    pub fn square() -> Self {
        IntervalMap::new("square", |x| x * x, |x| 2.0 * x, (-1.0, 1.0), 2.0)
    }

    /// `r·sin(ωx + φ)` on `[−1, 1]`, `|r| ≤ 1`.
    pub fn sine(r: f64, omega: f64, phase: f64) -> Self {
        IntervalMap::new(
            "sine",
            move |x| r * (omega * x + phase).sin(),
            move |x| r * omega * (omega * x + phase).cos(),
            (-1.0, 1.0),
            r.abs().max((r * omega).abs()),
        )
    }

    /// Check `f(I) ⊆ I` and the `C¹` bound on a uniform sample.
    pub fn validate(&self, resolution: usize) -> Result<()> {
        validate_map(self, resolution)
    }
}

pub fn validate_map(f: &dyn Map1D, resolution: usize) -> Result<()> {
    let (lo, hi) = f.domain();
    if !(lo < hi) {
        return Err(Error::InvalidInput(format!("empty domain [{lo}, {hi}]")));
    }
    let res = resolution.max(2);
    let c1 = f.c1_norm();
    for i in 0..res {
        let x = lo + (hi - lo) * i as f64 / (res - 1) as f64;
        let y = f.eval(x);
        if !f.contains(y) {
            return Err(Error::OutOfDomain {
                what: "map image".into(),
                value: y,
            });
        }
        let d = f.deriv(x);
        if y.abs() > c1 * (1.0 + 1e-12) || d.abs() > c1 * (1.0 + 1e-12) {
            return Err(Error::InvalidInput(format!(
                "c1 norm {c1} is below the sampled value {} at x = {x}",
                y.abs().max(d.abs())
            )));
        }
    }
    Ok(())
}

impl Map1D for IntervalMap {
    fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }
    fn deriv(&self, x: f64) -> f64 {
        (self.df)(x)
    }
    fn domain(&self) -> (f64, f64) {
        self.domain
    }
    fn c1_norm(&self) -> f64 {
        self.c1_norm
    }
}

/// Named maps for configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    Logistic,
    Linear { a: f64 },
    Square,
    Sine { r: f64, omega: f64, phase: f64 },
}

impl MapSpec {
    pub fn build(&self) -> IntervalMap {
        match *self {
            MapSpec::Logistic => IntervalMap::logistic(),
            MapSpec::Linear { a } => IntervalMap::linear(a),
            MapSpec::Square => IntervalMap::square(),
            MapSpec::Sine { r, omega, phase } => IntervalMap::sine(r, omega, phase),
        }
    }
}

/// `coeff · ∏ (x − r)` over the root multiset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonTerm {
    pub coeff: f64,
    pub roots: Vec<f64>,
}

impl NewtonTerm {
    pub fn eval(&self, x: f64) -> f64 {
        self.coeff * self.roots.iter().map(|r| x - r).product::<f64>()
    }

    /// Product rule: `Σ_l ∏_{j≠l} (x − r_j)`.
    pub fn deriv(&self, x: f64) -> f64 {
        let f: Vec<f64> = self.roots.iter().map(|r| x - r).collect();
        let mut s = 0.0;
        for l in 0..f.len() {
            s += f
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != l)
                .map(|(_, v)| v)
                .product::<f64>();
        }
        self.coeff * s
    }
}

#[derive(Clone)]
pub struct PerturbedMap {
    pub base: Arc<dyn Map1D>,
    pub newton_terms: Vec<NewtonTerm>,
    c1_norm: f64,
}

impl fmt::Debug for PerturbedMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PerturbedMap")
            .field("newton_terms", &self.newton_terms)
            .field("c1_norm", &self.c1_norm)
            .finish()
    }
}

impl PerturbedMap {
    /// The `C¹` bound is the base bound plus a sampled bound on the
    /// perturbation (1001 points, 10% safety factor).
    pub fn new(base: Arc<dyn Map1D>, newton_terms: Vec<NewtonTerm>) -> Self {
        let (lo, hi) = base.domain();
        let mut pert = 0.0f64;
        for i in 0..=1000 {
            let x = lo + (hi - lo) * i as f64 / 1000.0;
            let v: f64 = newton_terms.iter().map(|t| t.eval(x)).sum();
            let d: f64 = newton_terms.iter().map(|t| t.deriv(x)).sum();
            pert = pert.max(v.abs()).max(d.abs());
        }
        let c1_norm = base.c1_norm() + 1.1 * pert;
        PerturbedMap {
            base,
            newton_terms,
            c1_norm,
        }
    }

    pub fn perturbation(&self, x: f64) -> f64 {
        self.newton_terms.iter().map(|t| t.eval(x)).sum()
    }

    pub fn perturbation_deriv(&self, x: f64) -> f64 {
        self.newton_terms.iter().map(|t| t.deriv(x)).sum()
    }
}

impl Map1D for PerturbedMap {
    fn eval(&self, x: f64) -> f64 {
        self.base.eval(x) + self.perturbation(x)
    }
    fn deriv(&self, x: f64) -> f64 {
        self.base.deriv(x) + self.perturbation_deriv(x)
    }
    fn domain(&self) -> (f64, f64) {
        self.base.domain()
    }
    fn c1_norm(&self) -> f64 {
        self.c1_norm
    }
}

/// `(x_0, ..., x_n)` with `x_{k+1} = f(x_k)`.
pub fn iterate(f: &dyn Map1D, x0: f64, n: usize) -> Result<Vec<f64>> {
    if !f.contains(x0) {
        return Err(Error::OrbitEscape { index: 0, value: x0 });
    }
    let mut pts = Vec::with_capacity(n + 1);
    pts.push(x0);
    let mut x = x0;
    for k in 1..=n {
        x = f.eval(x);
        if !f.contains(x) || !x.is_finite() {
            return Err(Error::OrbitEscape { index: k, value: x });
        }
        pts.push(x);
    }
    Ok(pts)
}

/// Close a trajectory `x_0..x_n` into a period-`n` orbit with the single
/// Newton term `u ∏_{k≤n−2} (x − x_k)`, `u = (x_0 − x_n)/∏ (x_{n−1} − x_k)`.
pub fn close_orbit(f: Arc<dyn Map1D>, traj: &[f64]) -> Result<(PerturbedMap, f64)> {
    if traj.len() < 2 {
        return Err(Error::InvalidInput(
            "closing needs a trajectory with at least two points".into(),
        ));
    }
    let n = traj.len() - 1;
    let head = &traj[..n];
    let dist = if n >= 2 { diagonal_distance(head) } else { 1.0 };
    if dist < DIAGONAL_FLOOR {
        return Err(Error::NearDiagonal { product: dist });
    }
    let last = traj[n - 1];
    let denom: f64 = traj[..n - 1].iter().map(|x| last - x).product();
    let u = (traj[0] - traj[n]) / denom;
    let terms = if u == 0.0 {
        Vec::new()
    } else {
        vec![NewtonTerm {
            coeff: u,
            roots: traj[..n - 1].to_vec(),
        }]
    };
    Ok((PerturbedMap::new(f, terms), u))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HyperbolicityPush {
    pub v: f64,
    pub derivative_before: f64,
    pub derivative_after: f64,
}

/// Perturb by `v (x − x_{n−1}) ∏_{k≤n−2} (x − x_k)²` with the smallest `|v|`
/// making `||(f_v^n)'(x_0)| − 1| > γ`.
pub fn push_hyperbolicity(
    f: Arc<dyn Map1D>,
    traj: &[f64],
    gamma: f64,
) -> Result<(PerturbedMap, HyperbolicityPush)> {
    let n = traj.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty trajectory".into()));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidInput(format!("gamma must be positive, got {gamma}")));
    }
    let last = traj[n - 1];
    let d0: f64 = traj.iter().map(|&x| f.deriv(x)).product();
    let head_deriv: f64 = traj[..n - 1].iter().map(|&x| f.deriv(x)).product();
    let sq_dist: f64 = traj[..n - 1].iter().map(|x| (last - x).powi(2)).product();
    if !d0.is_finite() || !sq_dist.is_finite() || !head_deriv.is_finite() {
        return Err(Error::InvalidInput("non-finite derivative or distance product".into()));
    }
    let roots = || {
        let mut r = vec![last];
        for &x in &traj[..n - 1] {
            r.push(x);
            r.push(x);
        }
        r
    };
    if (d0.abs() - 1.0).abs() > gamma {
        let report = HyperbolicityPush {
            v: 0.0,
            derivative_before: d0,
            derivative_after: d0,
        };
        return Ok((PerturbedMap::new(f, Vec::new()), report));
    }
    let slope = sq_dist * head_deriv;
    if slope == 0.0 {
        return Err(Error::UnreachableHyperbolicity {
            derivative_product: head_deriv,
        });
    }
    let margin = 1e-6 * gamma + 1e-12;
    let mut targets = vec![1.0 + gamma + margin, -(1.0 + gamma + margin)];
    if 1.0 - gamma - margin > 0.0 {
        targets.push(1.0 - gamma - margin);
        targets.push(-(1.0 - gamma - margin));
    }
    let v = targets
        .iter()
        .map(|t| (t - d0) / slope)
        .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap();
    let pm = PerturbedMap::new(
        f,
        vec![NewtonTerm {
            coeff: v,
            roots: roots(),
        }],
    );
    let after: f64 = traj.iter().map(|&x| pm.deriv(x)).product();
    Ok((
        pm,
        HyperbolicityPush {
            v,
            derivative_before: d0,
            derivative_after: after,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hyperbolicity {
    pub value: f64,
    pub periodic: bool,
    pub certified: bool,
    pub exclusion_radius: Option<f64>,
}

/// `||(f^n)'(x)| − 1|`, and the exclusion radius `γ‖f‖_{C¹}^{−n}` when `x`
/// is an `(n, γ)`-hyperbolic periodic point.
pub fn hyperbolicity(f: &dyn Map1D, x: f64, n: usize, gamma: f64) -> Hyperbolicity {
    let value = (f.iterate_deriv(x, n).abs() - 1.0).abs();
    let periodic = (f.iterate_raw(x, n) - x).abs() <= PERIODIC_TOL;
    let certified = periodic && value > gamma;
    let exclusion_radius = certified.then(|| gamma * f.c1_norm().powi(-(n as i32)));
    Hyperbolicity {
        value,
        periodic,
        certified,
        exclusion_radius,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountOptions {
    pub resolution: usize,
    pub minimal_period: bool,
    /// Restrict the scan to a sub-interval of the domain.
    pub window: Option<(f64, f64)>,
}

impl Default for CountOptions {
    fn default() -> Self {
        CountOptions {
            resolution: 1_000_000,
            minimal_period: false,
            window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Confidence {
    /// Smallest cells where neither a sign change nor a Lipschitz exclusion
    /// settled the cell; a tangential root could hide in each.
    pub unresolved_cells: usize,
    pub lipschitz_bound: f64,
    pub grid_step: f64,
    pub high: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicCount {
    pub n: usize,
    pub count: usize,
    pub locations: Vec<f64>,
    pub confidence: Confidence,
}

#[derive(Default)]
struct CellResult {
    roots: Vec<f64>,
    /// Floor cells with equal nonzero endpoint signs.
    unresolved: Vec<(f64, f64)>,
}

/// Evaluations allowed per grid cell before it is reported as unresolved.
const CELL_BUDGET: usize = 1 << 16;

/// Split `[a, b]` until each piece either carries a sign change at the
/// resolution floor or is excluded by `|g(a)| + |g(b)| > L (b − a)`.
/// Non-finite values and exhausted budgets leave the piece unresolved.
fn resolve_cell(
    g: &dyn Fn(f64) -> f64,
    (a, ga): (f64, f64),
    (b, gb): (f64, f64),
    lip: f64,
    floor: f64,
    budget: &mut usize,
    out: &mut CellResult,
) {
    if !(ga.is_finite() && gb.is_finite()) {
        out.unresolved.push((a, b));
        return;
    }
    if ga.abs() + gb.abs() > lip * (b - a) {
        return;
    }
    if b - a <= floor {
        if ga * gb < 0.0 {
            out.roots.push(bisect(g, a, ga, b));
        } else if ga != 0.0 && gb != 0.0 {
            out.unresolved.push((a, b));
        }
        return;
    }
    // g vanishing at both ends and the middle: not an isolated root.
    let m = 0.5 * (a + b);
    let gm = g(m);
    if *budget == 0 || (ga == 0.0 && gm == 0.0 && gb == 0.0) {
        out.unresolved.push((a, b));
        return;
    }
    *budget -= 1;
    resolve_cell(g, (a, ga), (m, gm), lip, floor, budget, out);
    if gm == 0.0 {
        out.roots.push(m);
    }
    resolve_cell(g, (m, gm), (b, gb), lip, floor, budget, out);
}

fn bisect(g: &dyn Fn(f64) -> f64, mut a: f64, mut ga: f64, mut b: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let gm = g(m);
        if gm == 0.0 {
            return m;
        }
        if (gm < 0.0) == (ga < 0.0) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn proper_divisors(n: usize) -> Vec<usize> {
    (1..n).filter(|d| n.is_multiple_of(*d)).collect()
}

/// Solutions of `f^n(x) = x`: a uniform scan of `resolution` points, each
/// cell refined by Lipschitz exclusion and bisection. Chunks run in
/// parallel and are merged in grid order.
pub fn count_periodic(f: &dyn Map1D, n: usize, opts: &CountOptions) -> PeriodicCount {
    let (lo, hi) = opts.window.unwrap_or_else(|| f.domain());
    let res = opts.resolution.max(2);
    let step = (hi - lo) / (res - 1) as f64;
    let lip = f.c1_norm().powi(n as i32) + 1.0;
    let floor = (hi - lo).abs() * 1e-12;
    let g = |x: f64| f.iterate_raw(x, n) - x;
    let xs = |i: usize| lo + (hi - lo) * i as f64 / (res - 1) as f64;

    const CHUNK: usize = 4096;
    let nchunks = (res - 1).div_ceil(CHUNK);
    let parts: Vec<CellResult> = (0..nchunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = ((c + 1) * CHUNK).min(res - 1);
            let mut out = CellResult::default();
            let mut xa = xs(start);
            let mut ga = g(xa);
            if start == 0 && ga == 0.0 {
                out.roots.push(xa);
            }
            for i in start..end {
                let xb = xs(i + 1);
                let gb = g(xb);
                let mut budget = CELL_BUDGET;
                resolve_cell(&g, (xa, ga), (xb, gb), lip, floor, &mut budget, &mut out);
                if gb == 0.0 {
                    out.roots.push(xb);
                }
                xa = xb;
                ga = gb;
            }
            out
        })
        .collect();

    let mut roots = Vec::new();
    let mut cells = Vec::new();
    for p in parts {
        roots.extend(p.roots);
        cells.extend(p.unresolved);
    }
    // Next to a simple root `r` the Lipschitz test cannot exclude a cell
    // of width `w` closer than `w L / (2 |g'(r)|)`; such cells belong to `r`.
    let slopes: Vec<f64> = roots.iter().map(|&r| (f.iterate_deriv(r, n) - 1.0).abs()).collect();
    let unresolved = cells
        .iter()
        .filter(|&&(a, b)| {
            let i = roots.partition_point(|&r| r < a);
            let near = |j: usize| {
                let r = roots[j];
                let gap = if r < a { a - r } else if r > b { r - b } else { 0.0 };
                slopes[j] > 0.0 && gap <= (b - a) * lip / slopes[j]
            };
            !((i > 0 && near(i - 1)) || (i < roots.len() && near(i)))
        })
        .count();
    if opts.minimal_period {
        let divs = proper_divisors(n);
        roots.retain(|&x| {
            divs.iter()
                .all(|&d| (f.iterate_raw(x, d) - x).abs() > 1e-8)
        });
    }
    PeriodicCount {
        n,
        count: roots.len(),
        locations: roots,
        confidence: Confidence {
            unresolved_cells: unresolved,
            lipschitz_bound: lip,
            grid_step: step,
            high: unresolved == 0,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthRow {
    pub map_index: usize,
    pub n: usize,
    pub p_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    pub rows: Vec<GrowthRow>,
    /// Least `C` with `P_n ≤ exp(C n^{1+δ})` over the emitted rows, per map.
    pub fitted_c: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Periodic-point counts `P_n`, `n = 1..n_max`, for each map in a family.
pub fn growth_experiment(
    family: &[&dyn Map1D],
    n_max: usize,
    delta: f64,
    opts: &CountOptions,
) -> GrowthReport {
    let mut rows = Vec::new();
    let mut fitted_c = Vec::new();
    let mut warnings = Vec::new();
    for (idx, f) in family.iter().enumerate() {
        let mut c = 0.0f64;
        for n in 1..=n_max {
            let growth = n as f64 * f.c1_norm().max(1.0).ln();
            if !growth.is_finite() || growth > 700.0 {
                warnings.push(format!(
                    "map {idx}: truncated at n = {n}, derivative bound overflows"
                ));
                break;
            }
            let p = count_periodic(*f, n, opts);
            if !p.confidence.high {
                warnings.push(format!(
                    "map {idx}, n = {n}: {} unresolved cells",
                    p.confidence.unresolved_cells
                ));
            }
            if p.count > 0 {
                c = c.max((p.count as f64).ln() / (n as f64).powf(1.0 + delta));
            }
            rows.push(GrowthRow {
                map_index: idx,
                n,
                p_n: p.count,
            });
        }
        fitted_c.push(c);
    }
    GrowthReport {
        rows,
        fitted_c,
        warnings,
    }
}
