//! `(m,δ)`-cones of target values and the limiting sets of their
//! preimages.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{eval_polys, jacobian_polys, newton_solve};
use crate::error::{Error, Result};
use crate::poly::Poly;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConeKind {
    /// `|a_{j+1}| < |a_1 ⋯ a_j|^m`.
    #[default]
    Full,
    /// `|a_{j+1}| < |a_1|^m` for every `j`.
    Defective,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeSpec {
    pub n: usize,
    pub m: u32,
    pub delta: f64,
    #[serde(default)]
    pub kind: ConeKind,
}

impl ConeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || !(self.delta > 0.0) {
            return Err(Error::InvalidInput(format!("cone needs n >= 1, m >= 1, delta > 0: {self:?}")));
        }
        Ok(())
    }

    /// Upper bound on `|a_{j+1}|` given `a_1..a_j`.
    fn bound(&self, prefix: &[f64]) -> f64 {
        let base = match self.kind {
            ConeKind::Full => prefix.iter().map(|v| v.abs()).product::<f64>(),
            ConeKind::Defective => prefix[0].abs(),
        };
        base.powi(self.m as i32)
    }

    /// A random point of the cone with uniform magnitudes and signs.
    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mut a = Vec::with_capacity(self.n);
        for j in 0..self.n {
            let b = if j == 0 { self.delta } else { self.bound(&a) };
            let mag = b * rng.random_range(1e-3..1.0);
            a.push(if rng.random::<bool>() { mag } else { -mag });
        }
        a
    }
}

pub fn cone_membership(cone: &ConeSpec, a: &[f64]) -> bool {
    if a.len() != cone.n || a.is_empty() {
        return false;
    }
    if !(a[0] != 0.0 && a[0].abs() < cone.delta) {
        return false;
    }
    (1..a.len()).all(|j| a[j] != 0.0 && a[j].abs() < cone.bound(&a[..j]))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitOptions {
    pub samples_per_rung: usize,
    /// Only preimages with every coordinate in `[−window, window]` are kept;
    /// `window` is also the reference length for collapsed directions.
    pub window: f64,
    pub starts_per_sample: usize,
    pub seed: u64,
}

impl Default for LimitOptions {
    fn default() -> Self {
        LimitOptions { samples_per_rung: 200, window: 1.0, starts_per_sample: 8, seed: 3 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rung {
    pub delta: f64,
    pub points: usize,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitingSet {
    pub rungs: Vec<Rung>,
    /// Preimages at the smallest rung that produced any.
    pub points: Vec<Vec<f64>>,
    /// Standard deviations along the principal axes of `points`.
    pub principal_values: Vec<f64>,
    pub dimension: usize,
}

/// Principal standard deviations of a point cloud, largest first.
pub fn principal_values(points: &[Vec<f64>]) -> Vec<f64> {
    let k = points.len();
    if k == 0 {
        return Vec::new();
    }
    let d = points[0].len();
    let mean: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / k as f64).collect();
    let m = DMatrix::from_fn(k, d, |i, j| points[i][j] - mean[j]);
    let mut sv: Vec<f64> = m.singular_values().iter().map(|s| s / (k as f64).sqrt()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Samples preimages of cone points for each `δ` in `ladder` and estimates
/// the dimension of the limiting set from the cloud at the smallest rung:
/// a principal direction counts when its spread exceeds `1e-3` of the
/// larger of the window and the largest spread.
pub fn limiting_set_sample(
    p: &[Poly],
    cone: &ConeSpec,
    ladder: &[f64],
    opts: &LimitOptions,
) -> Result<LimitingSet> {
    cone.validate()?;
    if p.len() != cone.n {
        return Err(Error::InvalidInput(format!("P has {} components, cone has n = {}", p.len(), cone.n)));
    }
    let big = p.first().map(|q| q.nvars()).unwrap_or(0);
    if big < cone.n || p.iter().any(|q| q.nvars() != big) {
        return Err(Error::InvalidInput("P must map R^N to R^n with N >= n".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut rungs = Vec::with_capacity(ladder.len());
    let mut last: Vec<Vec<f64>> = Vec::new();
    for &delta in ladder {
        let c = ConeSpec { delta, ..*cone };
        let mut pts = Vec::new();
        for _ in 0..opts.samples_per_rung {
            let a = c.sample(&mut rng);
            let scale: Vec<f64> = a.iter().map(|v| v.abs()).collect();
            let g = |x: &[f64]| {
                let v = eval_polys(p, x);
                (v.iter().zip(&a).map(|(y, t)| y - t).collect(), jacobian_polys(p, x))
            };
            for _ in 0..opts.starts_per_sample {
                let start: Vec<f64> =
                    (0..big).map(|_| rng.random_range(-opts.window..opts.window)).collect();
                if let Some(x) = newton_solve(&g, &start, &scale, 1e-10, 100, false) {
                    if x.iter().all(|v| v.abs() <= opts.window) {
                        pts.push(x);
                    }
                    break;
                }
            }
        }
        rungs.push(Rung {
            delta,
            points: pts.len(),
            note: pts.is_empty().then(|| "no preimages in the window; rung skipped".to_string()),
        });
        if !pts.is_empty() {
            last = pts;
        }
    }
    let pv = principal_values(&last);
    let reference = pv.first().copied().unwrap_or(0.0).max(opts.window);
    let dimension = pv.iter().filter(|&&s| s > 1e-3 * reference).count();
    Ok(LimitingSet { rungs, points: last, principal_values: pv, dimension })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cone(m: u32, delta: f64, kind: ConeKind) -> ConeSpec {
        ConeSpec { n: 2, m, delta, kind }
    }

    #[test]
    fn membership_examples() {
        assert!(cone_membership(&cone(2, 0.1, ConeKind::Full), &[0.05, 0.001]));
        assert!(!cone_membership(&cone(2, 0.1, ConeKind::Full), &[0.05, 0.003]));
        assert!(!cone_membership(&cone(2, 0.1, ConeKind::Full), &[0.05, 0.0]));
        assert!(!cone_membership(&cone(2, 0.1, ConeKind::Full), &[0.0, 0.0]));
        assert!(!cone_membership(&cone(2, 0.1, ConeKind::Full), &[0.2, 1e-9]));
    }

    proptest! {
        #[test]
        fn refinement_is_monotone(
            a in prop::collection::vec(-0.2f64..0.2, 3),
            m in 1u32..4, dm in 0u32..3,
            delta in 1e-3f64..0.3, shrink in 0.1f64..1.0,
        ) {
            let coarse = ConeSpec { n: 3, m, delta, kind: ConeKind::Full };
            let fine = ConeSpec { n: 3, m: m + dm, delta: delta * shrink, kind: ConeKind::Full };
            if cone_membership(&fine, &a) {
                prop_assert!(cone_membership(&coarse, &a));
            }
        }

        #[test]
        fn samples_are_members(seed in 0u64..1000, m in 1u32..4) {
            let c = ConeSpec { n: 3, m, delta: 0.1, kind: ConeKind::Full };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = c.sample(&mut rng);
            prop_assert!(cone_membership(&c, &a), "{:?}", a);
        }
    }

    fn triangular() -> Vec<Poly> {
        let x: Vec<Poly> = (0..3).map(|i| Poly::var(3, i)).collect();
        vec![x[0].clone(), &x[0] * &x[1], &(&x[0] * &x[1]) * &x[2]]
    }

    #[test]
    fn full_cone_limit_is_a_point() {
        let c = ConeSpec { n: 3, m: 2, delta: 0.1, kind: ConeKind::Full };
        let r = limiting_set_sample(&triangular(), &c, &[1e-2, 1e-3, 1e-4], &LimitOptions::default())
            .unwrap();
        assert_eq!(r.dimension, 0, "{:?}", r.principal_values);
        assert!(r.rungs.iter().all(|g| g.points > 100));
        // The triangular system is solved exactly.
        for x in &r.points {
            assert!(x.iter().all(|v| v.abs() < 1e-4));
        }
    }

    #[test]
    fn defective_cone_limit_is_a_curve() {
        let c = ConeSpec { n: 3, m: 2, delta: 0.1, kind: ConeKind::Defective };
        let r = limiting_set_sample(&triangular(), &c, &[1e-2, 1e-3, 1e-4], &LimitOptions::default())
            .unwrap();
        assert_eq!(r.dimension, 1, "{:?}", r.principal_values);
    }

    #[test]
    fn linear_bijection_limit_is_origin() {
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let p = vec![&x + &y, &x - &y.scale(2.0)];
        let c = ConeSpec { n: 2, m: 1, delta: 0.1, kind: ConeKind::Full };
        let r = limiting_set_sample(&p, &c, &[1e-2, 1e-4], &LimitOptions::default()).unwrap();
        assert_eq!(r.dimension, 0);
    }
}
