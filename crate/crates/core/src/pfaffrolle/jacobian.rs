//! Polynomial chain Jacobians for eliminating singular equations.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::poly::{det, Poly};

/// One row of a chain Jacobian.
#[derive(Debug, Clone)]
pub enum JacobianRow {
    /// Polynomial coefficients of a Pfaffian 1-form, one per variable.
    Form(Vec<Poly>),
    /// The gradient of a polynomial.
    Gradient(Poly),
}

impl JacobianRow {
    fn entries(&self) -> Vec<Poly> {
        match self {
            JacobianRow::Form(c) => c.clone(),
            JacobianRow::Gradient(p) => p.gradient(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainJacobian {
    pub det: Poly,
    pub degree: u32,
    /// `2^step · (d_form + 1)`, where `d_form` is the largest coefficient
    /// degree among the form rows.
    pub degree_bound: u32,
    pub within_bound: bool,
}

/// The determinant of the stacked rows, with degree bookkeeping for the
/// `step`-th elimination (`step ≥ 1`).
pub fn chain_jacobian(rows: &[JacobianRow], step: u32) -> Result<ChainJacobian> {
    if step == 0 {
        return Err(Error::InvalidInput("elimination steps are numbered from 1".into()));
    }
    let n = rows.len();
    let entries: Vec<Vec<Poly>> = rows.iter().map(JacobianRow::entries).collect();
    if entries.iter().any(|r| r.len() != n) || entries.iter().flatten().any(|p| p.nvars() != n) {
        return Err(Error::InvalidInput(format!("chain Jacobian needs {n} rows of length {n}")));
    }
    let d_form = rows
        .iter()
        .filter_map(|r| match r {
            JacobianRow::Form(c) => c.iter().map(Poly::degree).max(),
            JacobianRow::Gradient(_) => None,
        })
        .max()
        .unwrap_or(0);
    let det = det(&entries).prune(0.0);
    let degree = det.degree();
    let degree_bound = (1u32 << step) * (d_form + 1);
    Ok(ChainJacobian { det, degree, degree_bound, within_bound: degree <= degree_bound })
}
