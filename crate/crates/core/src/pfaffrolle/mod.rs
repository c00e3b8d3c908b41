//! Rolle-type zero counting along level curves, with chain-Jacobian
//! elimination of Pfaffian equations.
//!
//! The pieces are layered: [`continuation`] traces level curves of a map
//! `ℝ^d → ℝ^{d−1}` inside a ball, [`rolle`] counts zeros along traced
//! components, [`jacobian`] builds the polynomial determinants that replace
//! singular equations, and [`khovanskii`] runs the two-step reduction for
//! two Pfaffian and two regular equations in `ℝ^4`.

pub mod continuation;
pub mod jacobian;
pub mod khovanskii;
pub mod rolle;

use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::poly::Poly;

pub use continuation::{trace_from_seed, trace_level_curve, ComponentKind, CurveComponent, TraceOptions};
pub use jacobian::{chain_jacobian, ChainJacobian, JacobianRow};
pub use khovanskii::{khovanskii_reduce, KhovanskiiReport, MixedSystem, PfaffianEquation, Verdict};
pub use rolle::{rolle_count, RolleDerivative, RolleReport};

/// A real function on `ℝ^d` with an exact gradient.
pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

impl ScalarField for Poly {
    fn dim(&self) -> usize {
        self.nvars()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.eval_gradient(x)
    }
}

/// A scalar field from a pair of closures.
pub struct FnField<V, G> {
    pub dim: usize,
    pub value: V,
    pub gradient: G,
}

impl<V, G> ScalarField for FnField<V, G>
where
    V: Fn(&[f64]) -> f64 + Send + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (self.gradient)(x)
    }
}

/// A smooth map `ℝ^d → ℝ^{d−1}` with its Jacobian.
pub trait LevelMap: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Vec<f64>;
    fn jacobian(&self, x: &[f64]) -> Vec<Vec<f64>>;
}

/// Coordinate functions stacked into a map.
#[derive(Clone)]
pub struct FieldMap {
    pub fields: Vec<Arc<dyn ScalarField>>,
}

impl FieldMap {
    pub fn new(fields: Vec<Arc<dyn ScalarField>>) -> Result<Self> {
        let d = fields.first().map(|f| f.dim()).unwrap_or(0);
        if fields.is_empty() || fields.iter().any(|f| f.dim() != d) {
            return Err(Error::InvalidInput("fields must share one ambient dimension".into()));
        }
        if fields.len() + 1 != d {
            return Err(Error::InvalidInput(format!(
                "a level map on R^{d} needs {} coordinate functions, got {}",
                d - 1,
                fields.len()
            )));
        }
        Ok(FieldMap { fields })
    }
}

impl LevelMap for FieldMap {
    fn dim(&self) -> usize {
        self.fields[0].dim()
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.fields.iter().map(|f| f.value(x)).collect()
    }
    fn jacobian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.fields.iter().map(|f| f.gradient(x)).collect()
    }
}

/// A level map together with the ball `|x − c| ≤ r` it is studied in.
#[derive(Clone)]
pub struct RegularSystem {
    pub map: Arc<dyn LevelMap>,
    pub center: Vec<f64>,
    pub radius: f64,
}

impl RegularSystem {
    pub fn new(map: Arc<dyn LevelMap>, center: Option<Vec<f64>>, radius: f64) -> Result<Self> {
        let d = map.dim();
        if !(2..=4).contains(&d) {
            return Err(Error::InvalidInput(format!("ambient dimension {d} not in 2..=4")));
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidInput("ball radius must be positive".into()));
        }
        let center = center.unwrap_or_else(|| vec![0.0; d]);
        if center.len() != d {
            return Err(Error::InvalidInput("ball center has the wrong dimension".into()));
        }
        Ok(RegularSystem { map, center, radius })
    }

    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    /// `ρ(x) = r² − |x − c|²`, positive inside the ball.
    pub fn rho(&self, x: &[f64]) -> f64 {
        self.radius * self.radius
            - x.iter()
                .zip(&self.center)
                .map(|(a, c)| (a - c) * (a - c))
                .sum::<f64>()
    }

    pub fn rho_gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.center).map(|(a, c)| -2.0 * (a - c)).collect()
    }

    pub fn rho_poly(&self) -> Poly {
        rho_poly(&self.center, self.radius)
    }
}

pub fn rho_poly(center: &[f64], radius: f64) -> Poly {
    let d = center.len();
    let mut p = Poly::constant(d, radius * radius);
    for (i, &c) in center.iter().enumerate() {
        let lin = &Poly::var(d, i) - &Poly::constant(d, c);
        p = &p - &lin.pow(2);
    }
    p
}

/// Serializable description of a polynomial level map for configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolySystemSpec {
    pub equations: Vec<Poly>,
    pub value: Vec<f64>,
    pub radius: f64,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
}

impl PolySystemSpec {
    pub fn build(&self) -> Result<RegularSystem> {
        let fields: Vec<Arc<dyn ScalarField>> = self
            .equations
            .iter()
            .map(|p| Arc::new(p.clone()) as Arc<dyn ScalarField>)
            .collect();
        if self.value.len() != fields.len() {
            return Err(Error::InvalidInput("value length must match equation count".into()));
        }
        RegularSystem::new(Arc::new(FieldMap::new(fields)?), self.center.clone(), self.radius)
    }
}
