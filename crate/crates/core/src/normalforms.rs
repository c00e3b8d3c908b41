//! Correspondence maps of the elementary-equilibrium normal forms, their
//! Pfaffian forms, and polycycle return maps with displaced fixed-point
//! counting.
//!
//! Parameter lists hold `λ_0..λ_μ`: the Weierstrass part `λ_0..λ_{μ−1}`
//! followed by the top coefficient `λ_μ`, so
//! `P_μ(u) = ±u^μ(1 + λ_μ u^μ) + Σ_{i<μ} λ_i u^i` and `Q_μ` is the same with
//! `±x^{μ+1}(1 + λ_μ x^μ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::Poly;
use crate::quad::integrate;

const QUAD_TOL: f64 = 1e-13;
const POLE_SAMPLES: usize = 512;
const MAX_EXPANSIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum NormalFormSpec {
    S0 {
        lambda: f64,
    },
    Smu {
        m: u32,
        n: u32,
        mu: u32,
        sign: i8,
        lambda: Vec<f64>,
    },
    Dc {
        mu: u32,
        sign: i8,
        lambda: Vec<f64>,
    },
    Dh {
        mu: u32,
        sign: i8,
        lambda: Vec<f64>,
    },
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Ascending coefficients of `±z^{lead}(1 + λ_μ z^μ) + Σ_{i<μ} λ_i z^i`.
fn weierstrass_coeffs(lead: usize, mu: usize, sign: i8, lambda: &[f64]) -> Vec<f64> {
    let s = sign as f64;
    let mut c = vec![0.0; lead + mu + 1];
    c[lead] += s;
    c[lead + mu] += s * lambda[mu];
    for (i, &l) in lambda.iter().take(mu).enumerate() {
        c[i] += l;
    }
    c
}

fn horner(c: &[f64], z: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * z + a)
}

impl NormalFormSpec {
    pub fn validate(&self) -> Result<()> {
        let check_list = |mu: u32, sign: i8, lambda: &[f64]| -> Result<()> {
            if mu < 1 {
                return Err(Error::InvalidInput("mu must be at least 1".into()));
            }
            if sign != 1 && sign != -1 {
                return Err(Error::InvalidInput(format!("sign must be +1 or -1, got {sign}")));
            }
            if lambda.len() != mu as usize + 1 {
                return Err(Error::InvalidInput(format!(
                    "lambda must list lambda_0..lambda_mu ({} values), got {}",
                    mu + 1,
                    lambda.len()
                )));
            }
            if lambda.iter().any(|l| !l.is_finite()) {
                return Err(Error::InvalidInput("non-finite lambda".into()));
            }
            Ok(())
        };
        match self {
            NormalFormSpec::S0 { lambda } => {
                if !(*lambda > 0.0) || !lambda.is_finite() {
                    return Err(Error::InvalidInput(format!("S0 needs lambda > 0, got {lambda}")));
                }
                Ok(())
            }
            NormalFormSpec::Smu {
                m,
                n,
                mu,
                sign,
                lambda,
            } => {
                if *m == 0 || *n == 0 || gcd(*m, *n) != 1 {
                    return Err(Error::InvalidInput(format!(
                        "resonance m = {m}, n = {n} must be coprime positive integers"
                    )));
                }
                check_list(*mu, *sign, lambda)
            }
            NormalFormSpec::Dc { mu, sign, lambda } | NormalFormSpec::Dh { mu, sign, lambda } => {
                check_list(*mu, *sign, lambda)
            }
        }
    }

    /// Coefficients of `P_μ` (resonant saddle) or `Q_μ` (saddle-nodes).
    fn profile(&self) -> Vec<f64> {
        match self {
            NormalFormSpec::S0 { .. } => vec![],
            NormalFormSpec::Smu { mu, sign, lambda, .. } => {
                weierstrass_coeffs(*mu as usize, *mu as usize, *sign, lambda)
            }
            NormalFormSpec::Dc { mu, sign, lambda } | NormalFormSpec::Dh { mu, sign, lambda } => {
                weierstrass_coeffs(*mu as usize + 1, *mu as usize, *sign, lambda)
            }
        }
    }

    fn in_domain(&self, x: f64) -> bool {
        match self {
            NormalFormSpec::S0 { .. } | NormalFormSpec::Smu { .. } => x > 0.0 && x.is_finite(),
            _ => x.is_finite(),
        }
    }
}

/// `ω = P dx + Q dy` with polynomial coefficients in `(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfaffianForm {
    pub p: Poly,
    pub q: Poly,
}

impl PfaffianForm {
    pub fn eval(&self, x: f64, y: f64) -> (f64, f64) {
        (self.p.eval(&[x, y]), self.q.eval(&[x, y]))
    }
}

/// Substitute `z = v^k` for a univariate profile, as a polynomial in `(x, y)`.
fn profile_in(coeffs: &[f64], var: usize, k: u32) -> Poly {
    let mut p = Poly::zero(2);
    for (i, &c) in coeffs.iter().enumerate() {
        let mut e = vec![0, 0];
        e[var] = i as u32 * k;
        p.add_term(e, c);
    }
    p
}

pub fn pfaffian_form(spec: &NormalFormSpec) -> PfaffianForm {
    let x = Poly::var(2, 0);
    let y = Poly::var(2, 1);
    match spec {
        NormalFormSpec::S0 { lambda } => PfaffianForm {
            p: y.scale(-lambda),
            q: x,
        },
        NormalFormSpec::Smu { m, n, .. } => {
            let c = spec.profile();
            let py = profile_in(&c, 1, *n);
            let px = profile_in(&c, 0, *m);
            let ratio = Poly::constant(2, *n as f64 / *m as f64);
            PfaffianForm {
                p: &y * &py,
                q: -&(&(&ratio + &py) * &(&x * &px)),
            }
        }
        NormalFormSpec::Dc { .. } => PfaffianForm { p: -&y, q: x },
        NormalFormSpec::Dh { .. } => PfaffianForm {
            p: -&y,
            q: profile_in(&spec.profile(), 0, 1),
        },
    }
}

/// Refuse integration ranges on which `g` changes sign or vanishes.
fn check_pole_free(g: &dyn Fn(f64) -> f64, lo: f64, hi: f64, report: &dyn Fn(f64) -> f64) -> Result<()> {
    let (a, b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut prev_t = a;
    let mut prev = g(a);
    if prev == 0.0 {
        return Err(Error::Pole { pole: report(a), lo: report(a), hi: report(b) });
    }
    for i in 1..=POLE_SAMPLES {
        let t = a + (b - a) * i as f64 / POLE_SAMPLES as f64;
        let v = g(t);
        if v == 0.0 || !v.is_finite() || (v < 0.0) != (prev < 0.0) {
            let mut l = prev_t;
            let mut r = t;
            for _ in 0..100 {
                let mid = 0.5 * (l + r);
                let gm = g(mid);
                if (gm < 0.0) == (prev < 0.0) && gm != 0.0 {
                    l = mid;
                } else {
                    r = mid;
                }
            }
            return Err(Error::Pole {
                pole: report(0.5 * (l + r)),
                lo: report(a),
                hi: report(b),
            });
        }
        prev_t = t;
        prev = v;
    }
    Ok(())
}

/// `∫_a^b du/(u P(u))` via `u = e^s`, for `a, b > 0`.
fn log_integral(p: &[f64], a: f64, b: f64) -> Result<f64> {
    let (la, lb) = (a.ln(), b.ln());
    let g = |s: f64| horner(p, s.exp());
    check_pole_free(&g, la, lb, &|s: f64| s.exp())?;
    Ok(integrate(|s| 1.0 / g(s), la, lb, QUAD_TOL).0)
}

/// `∫_a^b du/Q(u)` over any finite range.
fn plain_integral(q: &[f64], a: f64, b: f64) -> Result<f64> {
    let g = |u: f64| horner(q, u);
    check_pole_free(&g, a, b, &|u| u)?;
    Ok(integrate(|u| 1.0 / g(u), a, b, QUAD_TOL).0)
}

/// Defining equation `Φ(x, y) = m log y + ∫_{x^m}^{y^n} du/(u P(u))`
/// and its `y`-derivative `(m + n/P(y^n))/y`.
struct SmuEquation<'a> {
    m: f64,
    n: f64,
    p: &'a [f64],
    xm: f64,
}

impl SmuEquation<'_> {
    fn phi(&self, y: f64) -> Result<f64> {
        Ok(self.m * y.ln() + log_integral(self.p, self.xm, y.powf(self.n))?)
    }
    fn phi_y(&self, y: f64) -> f64 {
        (self.m + self.n / horner(self.p, y.powf(self.n))) / y
    }
}

fn solve_smu(spec: &NormalFormSpec, x: f64) -> Result<f64> {
    let NormalFormSpec::Smu { m, n, .. } = spec else {
        unreachable!()
    };
    let p = spec.profile();
    let eq = SmuEquation {
        m: *m as f64,
        n: *n as f64,
        p: &p,
        xm: x.powi(*m as i32),
    };
    let f0 = eq.phi(x)?;
    if f0 == 0.0 {
        return Ok(x);
    }
    // Expand geometrically away from y = x in the direction that can flip
    // the sign, guided by the local slope.
    let up = (f0 < 0.0) == (eq.phi_y(x) > 0.0);
    let (mut a, mut fa) = (x, f0);
    let mut found = None;
    for k in 0..MAX_EXPANSIONS {
        let b = if up { a * 2.0 } else { a * 0.5 };
        let fb = eq.phi(b)?;
        if fb == 0.0 {
            return Ok(b);
        }
        if (fb < 0.0) != (fa < 0.0) {
            found = Some(if up { (a, fa, b) } else { (b, fb, a) });
            break;
        }
        if k + 1 == MAX_EXPANSIONS {
            return Err(Error::NoBracket {
                start: x,
                expansions: MAX_EXPANSIONS,
            });
        }
        a = b;
        fa = fb;
    }
    let (mut lo, mut flo, mut hi) = found.unwrap();
    // Strict monotonicity on the bracket.
    let s0 = eq.phi_y(lo).signum();
    for i in 0..=16 {
        let t = lo + (hi - lo) * i as f64 / 16.0;
        let d = eq.phi_y(t);
        if d.signum() != s0 || d == 0.0 || !d.is_finite() {
            return Err(Error::NotMonotone { lo, hi });
        }
    }
    // Safeguarded Newton inside the bracket.
    let mut y = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fy = eq.phi(y)?;
        if fy == 0.0 {
            return Ok(y);
        }
        if (fy < 0.0) == (flo < 0.0) {
            lo = y;
            flo = fy;
        } else {
            hi = y;
        }
        let newton = y - fy / eq.phi_y(y);
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - y).abs() <= 4.0 * f64::EPSILON * y || hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(next);
        }
        y = next;
    }
    Ok(y)
}

/// `y = Δ(x)` for the given normal form.
pub fn correspondence(spec: &NormalFormSpec, x: f64) -> Result<f64> {
    spec.validate()?;
    if !spec.in_domain(x) {
        return Err(Error::OutOfDomain {
            what: "correspondence".into(),
            value: x,
        });
    }
    match spec {
        NormalFormSpec::S0 { lambda } => Ok(x.powf(*lambda)),
        NormalFormSpec::Smu { .. } => solve_smu(spec, x),
        NormalFormSpec::Dc { .. } => Ok(dc_constant(spec)? * x),
        NormalFormSpec::Dh { .. } => {
            let i = plain_integral(&spec.profile(), x, 1.0)?;
            Ok((-i).exp())
        }
    }
}

/// `C = ∫_{−1}^{1} du/Q_μ(u)`.
pub fn dc_constant(spec: &NormalFormSpec) -> Result<f64> {
    match spec {
        NormalFormSpec::Dc { .. } => plain_integral(&spec.profile(), -1.0, 1.0),
        _ => Err(Error::InvalidInput("dc_constant needs a Dc spec".into())),
    }
}

/// `dy/dx` at `(x, y = Δ(x))`: closed form for S0 and Dc, implicit
/// differentiation of the defining equation for Sμ and Dh.
pub fn correspondence_derivative(spec: &NormalFormSpec, x: f64, y: f64) -> Result<f64> {
    match spec {
        NormalFormSpec::S0 { lambda } => Ok(lambda * x.powf(lambda - 1.0)),
        NormalFormSpec::Smu { m, n, .. } => {
            let p = spec.profile();
            let (m, nn) = (*m as f64, *n as f64);
            let px = horner(&p, x.powf(m));
            let py = horner(&p, y.powf(nn));
            Ok(m * y / (x * px * (m + nn / py)))
        }
        NormalFormSpec::Dc { .. } => dc_constant(spec),
        NormalFormSpec::Dh { .. } => Ok(y / horner(&spec.profile(), x)),
    }
}

/// `ω` evaluated on the secant of a graph over `[x, x + h]`, at the secant
/// midpoint, divided by `h`.
pub fn pfaffian_residual_on_graph(
    form: &PfaffianForm,
    graph: &dyn Fn(f64) -> Result<f64>,
    x: f64,
    h: f64,
) -> Result<f64> {
    let y0 = graph(x)?;
    let y1 = graph(x + h)?;
    let (p, q) = form.eval(x + 0.5 * h, 0.5 * (y0 + y1));
    Ok(p + q * (y1 - y0) / h)
}

pub fn pfaffian_residual(spec: &NormalFormSpec, x: f64, h: f64) -> Result<f64> {
    let form = pfaffian_form(spec);
    pfaffian_residual_on_graph(&form, &|t| correspondence(spec, t), x, h)
}

/// A regular transition map between sections, as a polynomial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Connector {
    pub coeffs: Vec<f64>,
}

impl Connector {
    pub fn identity() -> Self {
        Connector {
            coeffs: vec![0.0, 1.0],
        }
    }
    pub fn eval(&self, y: f64) -> f64 {
        horner(&self.coeffs, y)
    }
    pub fn deriv(&self, y: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * y + k as f64 * c)
    }
}

fn default_domain() -> (f64, f64) {
    (0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolycycleModel {
    pub vertices: Vec<NormalFormSpec>,
    pub connectors: Vec<Connector>,
    #[serde(default = "default_domain")]
    pub domain: (f64, f64),
}

impl PolycycleModel {
    pub fn validate(&self) -> Result<()> {
        if self.vertices.is_empty() {
            return Err(Error::InvalidInput("a polycycle needs at least one vertex".into()));
        }
        if self.vertices.len() != self.connectors.len() {
            return Err(Error::InvalidInput(format!(
                "{} vertices but {} connectors",
                self.vertices.len(),
                self.connectors.len()
            )));
        }
        if !(self.domain.0 < self.domain.1) {
            return Err(Error::InvalidInput("empty section domain".into()));
        }
        for v in &self.vertices {
            v.validate()?;
        }
        Ok(())
    }
}

/// `Δ(x)` and `Δ'(x)` for `x_{j+1} = f_j(Δ_j(x_j))`. Stages are numbered
/// along the chain: `2j` is vertex `j`, `2j + 1` its connector.
pub fn compose_polycycle(model: &PolycycleModel, x: f64) -> Result<(f64, f64)> {
    compose_with(model, &model.connectors, x)
}

fn compose_with(model: &PolycycleModel, connectors: &[Connector], x: f64) -> Result<(f64, f64)> {
    let mut v = x;
    let mut d = 1.0;
    for (j, (spec, conn)) in model.vertices.iter().zip(connectors).enumerate() {
        if !spec.in_domain(v) {
            return Err(Error::DomainEscape { stage: 2 * j, value: v });
        }
        let y = correspondence(spec, v).map_err(|e| match e {
            Error::OutOfDomain { value, .. } => Error::DomainEscape { stage: 2 * j, value },
            other => other,
        })?;
        d *= correspondence_derivative(spec, v, y)?;
        d *= conn.deriv(y);
        v = conn.eval(y);
        if !v.is_finite() {
            return Err(Error::DomainEscape {
                stage: 2 * j + 1,
                value: v,
            });
        }
    }
    Ok((v, d))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleOptions {
    pub resolution: usize,
    /// `|Δ' − 1|` at or below this marks a solution degenerate.
    pub regular_tol: f64,
}

impl Default for CycleOptions {
    fn default() -> Self {
        CycleOptions {
            resolution: 20_000,
            regular_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleSolution {
    pub x: f64,
    pub derivative: f64,
    pub regular: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleCount {
    pub delta1: f64,
    pub count: usize,
    pub solutions: Vec<CycleSolution>,
    pub count_at_delta1_over_10: usize,
    pub stable: bool,
    /// Per-member counts when a connector family was supplied.
    pub family_counts: Vec<usize>,
    pub family_max: usize,
    pub skipped_points: usize,
}

fn displaced_roots(
    model: &PolycycleModel,
    connectors: &[Connector],
    delta1: f64,
    opts: &CycleOptions,
) -> (Vec<CycleSolution>, usize) {
    let (lo, hi) = model.domain;
    let res = opts.resolution.max(4);
    let g = |x: f64| compose_with(model, connectors, x).map(|(v, _)| v - x - delta1);
    let mut sols = Vec::new();
    let mut skipped = 0;
    let mut prev: Option<(f64, f64)> = None;
    for i in 1..res {
        let x = lo + (hi - lo) * i as f64 / res as f64;
        match g(x) {
            Ok(v) => {
                if v == 0.0 {
                    sols.push(x);
                } else if let Some((xp, vp)) = prev {
                    if vp != 0.0 && (vp < 0.0) != (v < 0.0) {
                        let (mut a, mut ga, mut b) = (xp, vp, x);
                        for _ in 0..200 {
                            let mid = 0.5 * (a + b);
                            if mid <= a || mid >= b {
                                break;
                            }
                            match g(mid) {
                                Ok(0.0) => {
                                    a = mid;
                                    b = mid;
                                    break;
                                }
                                Ok(gm) if (gm < 0.0) == (ga < 0.0) => {
                                    a = mid;
                                    ga = gm;
                                }
                                Ok(_) => b = mid,
                                Err(_) => break,
                            }
                        }
                        sols.push(0.5 * (a + b));
                    }
                }
                prev = Some((x, v));
            }
            Err(_) => {
                skipped += 1;
                prev = None;
            }
        }
    }
    let out = sols
        .into_iter()
        .map(|x| {
            let d = compose_with(model, connectors, x).map(|r| r.1).unwrap_or(f64::NAN);
            CycleSolution {
                x,
                derivative: d,
                regular: (d - 1.0).abs() > opts.regular_tol,
            }
        })
        .collect();
    (out, skipped)
}

/// Solutions of `Δ(x) = x + δ_1` on the section domain, with a stability
/// rerun at `δ_1/10` and an optional family of alternative connectors.
pub fn count_limit_cycles(
    model: &PolycycleModel,
    family: &[Vec<Connector>],
    delta1: f64,
    opts: &CycleOptions,
) -> Result<CycleCount> {
    model.validate()?;
    for (i, c) in family.iter().enumerate() {
        if c.len() != model.vertices.len() {
            return Err(Error::InvalidInput(format!(
                "family member {i} has {} connectors, expected {}",
                c.len(),
                model.vertices.len()
            )));
        }
    }
    let (solutions, skipped) = displaced_roots(model, &model.connectors, delta1, opts);
    let (finer, _) = displaced_roots(model, &model.connectors, delta1 / 10.0, opts);
    let family_counts: Vec<usize> = family
        .iter()
        .map(|c| displaced_roots(model, c, delta1, opts).0.len())
        .collect();
    let family_max = family_counts.iter().copied().max().unwrap_or(0).max(solutions.len());
    Ok(CycleCount {
        delta1,
        count: solutions.len(),
        count_at_delta1_over_10: finer.len(),
        stable: finer.len() == solutions.len(),
        solutions,
        family_counts,
        family_max,
        skipped_points: skipped,
    })
}
