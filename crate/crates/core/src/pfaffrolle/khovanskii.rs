//! Two-step Khovanskii reduction for two Pfaffian and two regular
//! equations in `ℝ^4`.
//!
//! With `X = (x1, y1, x2, y2)` the system is
//! `𝓕1 = a1, 𝓕2 = a2, F1 = δ1, F2 = δ2`. Each step traces the curve cut
//! out by all equations but one singular equation `𝓕 = a`, and bounds the
//! zeros of `𝓕 − a` on it by the zeros of a chain Jacobian `J = δ` plus
//! half the points where the curve meets the sphere `ρ = δ`. The second
//! step repeats this once for each of the two equations produced by the
//! first.

use serde::{Deserialize, Serialize};
use std::sync::Arc;

use super::continuation::{trace_level_curve, ComponentKind, TraceOptions};
use super::jacobian::{chain_jacobian, JacobianRow};
use super::rolle::count_level;
use super::{rho_poly, FieldMap, RegularSystem, ScalarField};
use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::poly::Poly;

/// A Pfaffian equation in two of the four coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PfaffianEquation {
    /// `𝓕 = log y − λ log x` on `x, y > 0`, whose zero set is `y = x^λ`.
    /// Its polynomial form is `ω = x dy − λ y dx = x y · d𝓕`.
    Power { lambda: f64, x: usize, y: usize },
}

impl PfaffianEquation {
    fn vars(&self) -> (usize, usize) {
        match self {
            PfaffianEquation::Power { x, y, .. } => (*x, *y),
        }
    }

    /// Coefficients of the polynomial 1-form, one per variable.
    pub fn form(&self) -> Vec<Poly> {
        let PfaffianEquation::Power { lambda, x, y } = *self;
        let mut row = vec![Poly::zero(4); 4];
        row[x] = Poly::var(4, y).scale(-lambda);
        row[y] = Poly::var(4, x);
        row
    }

    fn validate(&self) -> Result<()> {
        let (x, y) = self.vars();
        let PfaffianEquation::Power { lambda, .. } = self;
        if x >= 4 || y >= 4 || x == y || !lambda.is_finite() {
            return Err(Error::InvalidInput(format!("bad Pfaffian equation {self:?}")));
        }
        Ok(())
    }
}

impl ScalarField for PfaffianEquation {
    fn dim(&self) -> usize {
        4
    }
    fn value(&self, p: &[f64]) -> f64 {
        let PfaffianEquation::Power { lambda, x, y } = *self;
        if p[x] <= 0.0 || p[y] <= 0.0 {
            return f64::NAN;
        }
        p[y].ln() - lambda * p[x].ln()
    }
    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let PfaffianEquation::Power { lambda, x, y } = *self;
        let mut g = vec![0.0; 4];
        g[x] = -lambda / p[x];
        g[y] = 1.0 / p[y];
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixedSystem {
    pub pfaffian: [PfaffianEquation; 2],
    /// Regular equations, polynomials in four variables.
    pub regular: [Poly; 2],
    /// Right-hand sides of the Pfaffian equations.
    #[serde(default)]
    pub a: [f64; 2],
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    pub radius: f64,
}

impl MixedSystem {
    fn validate(&self) -> Result<()> {
        for p in &self.pfaffian {
            p.validate()?;
        }
        if self.regular.iter().any(|p| p.nvars() != 4) {
            return Err(Error::InvalidInput("regular equations must have 4 variables".into()));
        }
        if let Some(c) = &self.center {
            if c.len() != 4 {
                return Err(Error::InvalidInput("center must have 4 coordinates".into()));
            }
        }
        if !(self.radius > 0.0) {
            return Err(Error::InvalidInput("radius must be positive".into()));
        }
        Ok(())
    }

    fn center(&self) -> Vec<f64> {
        self.center.clone().unwrap_or_else(|| vec![0.0; 4])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentLedger {
    pub kind: ComponentKind,
    pub vertices: usize,
    /// Zeros of the singular equation on the component.
    pub lhs: usize,
    pub jacobian_zeros: usize,
    pub boundary_zeros: usize,
    /// `lhs ≤ jacobian_zeros` (+1 for open components).
    pub rolle_holds: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepLedger {
    pub name: String,
    pub level_value: Vec<f64>,
    pub components: Vec<ComponentLedger>,
    pub lhs: usize,
    pub jacobian_zeros: usize,
    pub boundary_zeros: usize,
    /// `jacobian_zeros + boundary_zeros / 2`.
    pub rhs: f64,
    pub holds: bool,
    pub jacobian_degree: u32,
    pub jacobian_degree_bound: u32,
    /// Smallest gradient norm of each level function along the curve.
    pub min_gradient_norms: Vec<f64>,
    pub truncated: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Violated,
    /// Counts moved when the cascade was refined.
    Inconclusive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReductionCounts {
    pub cascade: [f64; 4],
    /// Solutions of the full system in the ball.
    pub lhs: usize,
    pub step1: StepLedger,
    /// Branch 0 eliminates against the first Jacobian, branch 1 against
    /// the sphere.
    pub step2: [StepLedger; 2],
    /// Step-2 zero counts agree with the matching step-1 terms.
    pub consistent: bool,
    /// `step2[0].rhs + step2[1].rhs / 2`.
    pub final_bound: f64,
}

impl ReductionCounts {
    fn signature(&self) -> Vec<usize> {
        let mut s = vec![self.lhs, self.step1.jacobian_zeros, self.step1.boundary_zeros];
        for b in &self.step2 {
            s.extend([b.lhs, b.jacobian_zeros, b.boundary_zeros]);
        }
        s
    }

    fn holds(&self) -> bool {
        self.step1.holds
            && self.step2.iter().all(|b| b.holds)
            && self.lhs as f64 <= self.final_bound
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KhovanskiiReport {
    pub verdict: Verdict,
    pub base: ReductionCounts,
    /// Same run with only `δ4` divided by ten.
    pub refined_last: ReductionCounts,
    /// Same run with every `δ` divided by ten.
    pub refined_all: ReductionCounts,
    pub warnings: Vec<String>,
}

#[allow(clippy::too_many_arguments)]
fn run_step(
    name: &str,
    level: Vec<Arc<dyn ScalarField>>,
    value: Vec<f64>,
    singular: &dyn ScalarField,
    a: f64,
    jac: &Poly,
    degree: (u32, u32),
    rho: &Poly,
    delta: f64,
    center: &[f64],
    radius: f64,
    opts: &TraceOptions,
) -> Result<StepLedger> {
    let map = FieldMap::new(level.clone())?;
    let sys = RegularSystem::new(Arc::new(map), Some(center.to_vec()), radius)?;
    let comps = trace_level_curve(&sys, &value, opts)?;
    let mut min_gradient_norms = vec![f64::INFINITY; level.len()];
    let mut ledger = Vec::with_capacity(comps.len());
    for c in &comps {
        let sv: Vec<f64> = c.points.iter().map(|p| singular.value(p)).collect();
        let jv: Vec<f64> = c.points.iter().map(|p| jac.eval(p)).collect();
        let rv: Vec<f64> = c.points.iter().map(|p| rho.eval(p)).collect();
        for p in &c.points {
            for (m, g) in min_gradient_norms.iter_mut().zip(&level) {
                *m = m.min(norm(&g.gradient(p)));
            }
        }
        let lhs = count_level(&sv, a);
        let jacobian_zeros = count_level(&jv, delta);
        let boundary_zeros = count_level(&rv, delta);
        let open = usize::from(!c.is_closed());
        ledger.push(ComponentLedger {
            kind: c.kind,
            vertices: c.points.len(),
            lhs,
            jacobian_zeros,
            boundary_zeros,
            rolle_holds: lhs <= jacobian_zeros + open,
        });
    }
    let lhs = ledger.iter().map(|c| c.lhs).sum();
    let jacobian_zeros = ledger.iter().map(|c| c.jacobian_zeros).sum();
    let boundary_zeros: usize = ledger.iter().map(|c| c.boundary_zeros).sum();
    let rhs = jacobian_zeros as f64 + 0.5 * boundary_zeros as f64;
    Ok(StepLedger {
        name: name.to_string(),
        level_value: value,
        truncated: ledger.iter().filter(|c| c.kind == ComponentKind::Truncated).count(),
        holds: lhs as f64 <= rhs,
        components: ledger,
        lhs,
        jacobian_zeros,
        boundary_zeros,
        rhs,
        jacobian_degree: degree.0,
        jacobian_degree_bound: degree.1,
        min_gradient_norms,
    })
}

fn reduce_once(sys: &MixedSystem, cascade: [f64; 4], opts: &TraceOptions) -> Result<ReductionCounts> {
    let [d1, d2, d3, d4] = cascade;
    let center = sys.center();
    let rho = rho_poly(&center, sys.radius);
    let [p1, p2] = sys.pfaffian.clone();
    let [f1, f2] = sys.regular.clone();
    let f1a: Arc<dyn ScalarField> = Arc::new(f1.clone());
    let f2a: Arc<dyn ScalarField> = Arc::new(f2.clone());

    let j1 = chain_jacobian(
        &[
            JacobianRow::Form(p1.form()),
            JacobianRow::Form(p2.form()),
            JacobianRow::Gradient(f1.clone()),
            JacobianRow::Gradient(f2.clone()),
        ],
        1,
    )?;
    let step1 = run_step(
        "step1",
        vec![Arc::new(p2.clone()), f1a.clone(), f2a.clone()],
        vec![sys.a[1], d1, d2],
        &p1,
        sys.a[0],
        &j1.det,
        (j1.degree, j1.degree_bound),
        &rho,
        d3,
        &center,
        sys.radius,
        opts,
    )?;

    let mut branches = Vec::with_capacity(2);
    for (i, p) in [j1.det.clone(), rho.clone()].into_iter().enumerate() {
        let j2 = chain_jacobian(
            &[
                JacobianRow::Form(p2.form()),
                JacobianRow::Gradient(f1.clone()),
                JacobianRow::Gradient(f2.clone()),
                JacobianRow::Gradient(p.clone()),
            ],
            2,
        )?;
        branches.push(run_step(
            &format!("step2.{i}"),
            vec![f1a.clone(), f2a.clone(), Arc::new(p)],
            vec![d1, d2, d3],
            &p2,
            sys.a[1],
            &j2.det,
            (j2.degree, j2.degree_bound),
            &rho,
            d4,
            &center,
            sys.radius,
            opts,
        )?);
    }
    let [b0, b1]: [StepLedger; 2] = branches.try_into().expect("two branches");
    let consistent = b0.lhs == step1.jacobian_zeros && b1.lhs == step1.boundary_zeros;
    let final_bound = b0.rhs + 0.5 * b1.rhs;
    Ok(ReductionCounts {
        cascade,
        lhs: step1.lhs,
        step1,
        step2: [b0, b1],
        consistent,
        final_bound,
    })
}

/// Runs both elimination steps at `cascade = [δ1, δ2, δ3, δ4]`, then again
/// with `δ4/10` and with every `δ/10`. Any change in the counts makes the
/// verdict inconclusive.
pub fn khovanskii_reduce(
    sys: &MixedSystem,
    cascade: [f64; 4],
    opts: &TraceOptions,
) -> Result<KhovanskiiReport> {
    sys.validate()?;
    if cascade.iter().any(|d| !d.is_finite() || *d == 0.0)
        || cascade.windows(2).any(|w| w[1].abs() >= w[0].abs())
    {
        return Err(Error::InvalidInput(
            "delta cascade must be nonzero and strictly decreasing in magnitude".into(),
        ));
    }
    let base = reduce_once(sys, cascade, opts)?;
    let mut last = cascade;
    last[3] /= 10.0;
    let refined_last = reduce_once(sys, last, opts)?;
    let refined_all = reduce_once(sys, cascade.map(|d| d / 10.0), opts)?;

    let mut warnings = Vec::new();
    for run in [&base, &refined_last, &refined_all] {
        for step in std::iter::once(&run.step1).chain(&run.step2) {
            if step.truncated > 0 {
                warnings.push(format!("{}: {} truncated components", step.name, step.truncated));
            }
            if step.jacobian_degree > step.jacobian_degree_bound {
                warnings.push(format!(
                    "{}: Jacobian degree {} exceeds bound {}",
                    step.name, step.jacobian_degree, step.jacobian_degree_bound
                ));
            }
        }
        if !run.consistent {
            warnings.push(format!("cascade {:?}: step-2 counts disagree with step 1", run.cascade));
        }
    }
    // A level δ far above the smallest gradient seen on the curve may hide
    // intersections; flag it rather than silently trusting the count.
    for step in std::iter::once(&base.step1).chain(&base.step2) {
        let g = step.min_gradient_norms.iter().copied().fold(f64::INFINITY, f64::min);
        let next = if step.name == "step1" { cascade[2] } else { cascade[3] };
        if g.is_finite() && next.abs() > g {
            warnings.push(format!("{}: delta {next:e} exceeds minimum gradient norm {g:e}", step.name));
        }
    }
    let stable = base.signature() == refined_last.signature()
        && base.signature() == refined_all.signature();
    let verdict = if !stable {
        Verdict::Inconclusive
    } else if base.holds() {
        Verdict::Holds
    } else {
        Verdict::Violated
    };
    Ok(KhovanskiiReport { verdict, base, refined_last, refined_all, warnings })
}

/// `y_j = λ`-power curves against regular equations `y_j + s·x_j + c_j`,
/// used by tests and shipped configurations.
pub fn decoupled_instance(lambda: f64, slope: f64, offsets: [f64; 2], radius: f64) -> MixedSystem {
    let v = |i| Poly::var(4, i);
    let reg = |x: usize, y: usize, c: f64| &(&v(y) + &v(x).scale(slope)) + &Poly::constant(4, c);
    MixedSystem {
        pfaffian: [
            PfaffianEquation::Power { lambda, x: 0, y: 1 },
            PfaffianEquation::Power { lambda, x: 2, y: 3 },
        ],
        regular: [reg(0, 1, offsets[0]), reg(2, 3, offsets[1])],
        a: [0.0, 0.0],
        center: Some(vec![1.0; 4]),
        radius,
    }
}
