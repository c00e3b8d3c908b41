//! Sampled Whitney a-regularity and a_P-regularity checks.
//!
//! Universally quantified conditions cannot be certified by sampling, so
//! verdicts are three-valued. A failure comes with the sequence that shows
//! it.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{eval_polys, jacobian_polys, newton_solve};
use crate::error::{Error, Result};
use crate::linalg::{containment_angle, dist, matrix_from_rows, max_principal_angle, norm, null_space};
use crate::poly::Poly;

/// Frames of the last this-many terms must agree to count as converged.
const TAIL: usize = 5;
const CONVERGED_ANGLE: f64 = 1e-4;
const FAIL_ANGLE: f64 = 1e-2;
const PASS_ANGLE: f64 = 1e-4;
const ON_SET_TOL: f64 = 1e-8;

/// A smooth stratum `{equations = 0, inequalities > 0}` of known dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stratum {
    pub equations: Vec<Poly>,
    #[serde(default)]
    pub inequalities: Vec<Poly>,
    pub dim: usize,
    /// Ambient dimension, needed when there are no equations.
    pub ambient: usize,
}

impl Stratum {
    pub fn new(equations: Vec<Poly>, inequalities: Vec<Poly>, dim: usize, ambient: usize) -> Result<Self> {
        let s = Stratum { equations, inequalities, dim, ambient };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim > self.ambient {
            return Err(Error::InvalidInput("stratum dimension exceeds ambient dimension".into()));
        }
        if self.equations.iter().chain(&self.inequalities).any(|p| p.nvars() != self.ambient) {
            return Err(Error::InvalidInput("stratum polynomials must use the ambient variables".into()));
        }
        Ok(())
    }

    pub fn equation_residual(&self, y: &[f64]) -> f64 {
        eval_polys(&self.equations, y).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn satisfies_inequalities(&self, y: &[f64]) -> bool {
        self.inequalities.iter().all(|p| p.eval(y) > 0.0)
    }

    fn equation_rows(&self, y: &[f64]) -> Vec<Vec<f64>> {
        jacobian_polys(&self.equations, y)
            .into_iter()
            .filter_map(|r| {
                let n = norm(&r);
                (n > f64::MIN_POSITIVE).then(|| r.iter().map(|v| v / n).collect())
            })
            .collect()
    }

    /// Orthonormal frame of the tangent space at `y`, or `None` when the
    /// equations drop rank there.
    pub fn tangent_frame(&self, y: &[f64]) -> Option<DMatrix<f64>> {
        let rows = self.equation_rows(y);
        let ns = if rows.is_empty() {
            DMatrix::identity(self.ambient, self.ambient)
        } else {
            null_space(&matrix_from_rows(&rows), 1e-8)
        };
        (ns.ncols() == self.dim).then_some(ns)
    }

    /// Orthonormal frame of `ker dP|_V` at `y`.
    pub fn kernel_frame(&self, y: &[f64], p: &[Poly]) -> Option<DMatrix<f64>> {
        self.tangent_frame(y)?;
        let mut rows = self.equation_rows(y);
        let dp = jacobian_polys(p, y);
        let big = dp.iter().map(|r| norm(r)).fold(0.0, f64::max);
        for r in dp {
            let n = norm(&r);
            if n > 1e-12 * big && n > 0.0 {
                rows.push(r.iter().map(|v| v / n).collect());
            }
        }
        // Level sets can pinch quadratically near the small stratum, so the
        // rank cutoff here is tighter than for tangent frames.
        Some(if rows.is_empty() {
            DMatrix::identity(self.ambient, self.ambient)
        } else {
            null_space(&matrix_from_rows(&rows), 1e-12)
        })
    }

    /// Pushes `y` onto the equations by min-norm Newton.
    fn project(&self, y: &[f64]) -> Option<Vec<f64>> {
        if self.equations.is_empty() {
            return Some(y.to_vec());
        }
        let g = |x: &[f64]| (eval_polys(&self.equations, x), jacobian_polys(&self.equations, x));
        let scale = vec![1.0; self.equations.len()];
        newton_solve(&g, y, &scale, 1e-14, 50, true)
    }
}

/// Families of sequences tending to a base point `x`. Every family uses
/// parameters `t_k = t0 · ratio^k`, `k < terms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceGenerator {
    /// `x + t v` for each direction `v`.
    Radial { directions: Vec<Vec<f64>>, t0: f64, ratio: f64, terms: usize },
    /// `x + t u + t² w`.
    Parabolic { linear: Vec<f64>, quadratic: Vec<f64>, t0: f64, ratio: f64, terms: usize },
    /// `x + t v` for random unit directions `v`.
    RandomOnStratum { count: usize, t0: f64, ratio: f64, terms: usize, seed: u64 },
}

impl SequenceGenerator {
    pub fn radial(directions: Vec<Vec<f64>>) -> Self {
        SequenceGenerator::Radial { directions, t0: 0.1, ratio: 0.5, terms: 16 }
    }

    pub fn parabolic(linear: Vec<f64>, quadratic: Vec<f64>) -> Self {
        SequenceGenerator::Parabolic { linear, quadratic, t0: 0.1, ratio: 0.5, terms: 16 }
    }

    /// Raw (unprojected) sequences.
    pub fn sequences(&self, x: &[f64]) -> Vec<Vec<Vec<f64>>> {
        let ts = |t0: f64, ratio: f64, terms: usize| -> Vec<f64> {
            (0..terms).map(|k| t0 * ratio.powi(k as i32)).collect()
        };
        let along = |v: &[f64], w: Option<&[f64]>, t: f64| -> Vec<f64> {
            x.iter()
                .enumerate()
                .map(|(i, xi)| xi + t * v[i] + w.map_or(0.0, |w| t * t * w[i]))
                .collect()
        };
        match self {
            SequenceGenerator::Radial { directions, t0, ratio, terms } => directions
                .iter()
                .map(|v| ts(*t0, *ratio, *terms).into_iter().map(|t| along(v, None, t)).collect())
                .collect(),
            SequenceGenerator::Parabolic { linear, quadratic, t0, ratio, terms } => {
                vec![ts(*t0, *ratio, *terms)
                    .into_iter()
                    .map(|t| along(linear, Some(quadratic), t))
                    .collect()]
            }
            SequenceGenerator::RandomOnStratum { count, t0, ratio, terms, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                (0..*count)
                    .map(|_| {
                        let v: Vec<f64> = x.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
                        let n = norm(&v).max(f64::MIN_POSITIVE);
                        let v: Vec<f64> = v.iter().map(|a| a / n).collect();
                        ts(*t0, *ratio, *terms).into_iter().map(|t| along(&v, None, t)).collect()
                    })
                    .collect()
            }
        }
    }

    fn dimension(&self) -> Option<usize> {
        match self {
            SequenceGenerator::Radial { directions, .. } => directions.first().map(Vec::len),
            SequenceGenerator::Parabolic { linear, .. } => Some(linear.len()),
            SequenceGenerator::RandomOnStratum { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// A sequence on a stratum with the frames computed along it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StratumSample {
    pub points: Vec<Vec<f64>>,
    /// Orthonormal frames, one list of basis vectors per point.
    pub frames: Vec<Vec<Vec<f64>>>,
    /// Containment angle of the small-stratum space in the limit frame.
    pub angle: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankPrecheck {
    pub d_small: usize,
    pub d_big: usize,
    pub compatible: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegularityReport {
    pub verdict: Verdict,
    /// Largest containment angle among converged sequences.
    pub max_angle: f64,
    pub witness: Option<StratumSample>,
    pub sequences: Vec<StratumSample>,
    pub precheck: Option<RankPrecheck>,
    pub discarded_points: usize,
}

fn frame_vectors(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

fn check_base_point(big: &Stratum, small: &Stratum, x: &[f64]) -> Result<()> {
    if x.len() != big.ambient || x.len() != small.ambient {
        return Err(Error::InvalidInput("base point has the wrong dimension".into()));
    }
    let d = small.equation_residual(x).max(big.equation_residual(x));
    if d > ON_SET_TOL || !small.satisfies_inequalities(x) {
        return Err(Error::NotOnClosure { distance: d });
    }
    Ok(())
}

/// Points of one sequence with the tangent frame at each.
type FramedSequence = (Vec<Vec<f64>>, Vec<DMatrix<f64>>);

/// Projects generated sequences onto `big` and evaluates `frame` along
/// them, dropping points where the stratum or the frame degenerates.
fn sample_sequences(
    big: &Stratum,
    x: &[f64],
    generator: &SequenceGenerator,
    frame: &(dyn Fn(&[f64]) -> Option<DMatrix<f64>> + Sync),
) -> (Vec<FramedSequence>, usize) {
    let raw = generator.sequences(x);
    let out: Vec<(FramedSequence, usize)> = raw
        .par_iter()
        .map(|seq| {
            let mut pts = Vec::new();
            let mut frames = Vec::new();
            let mut dropped = 0;
            for y in seq {
                let kept = big.project(y).and_then(|p| {
                    let ok = big.satisfies_inequalities(&p) && dist(&p, y) <= dist(y, x);
                    ok.then_some(p)
                });
                match kept.as_deref().and_then(|p| frame(p).map(|f| (p.to_vec(), f))) {
                    Some((p, f)) => {
                        pts.push(p);
                        frames.push(f);
                    }
                    None => dropped += 1,
                }
            }
            ((pts, frames), dropped)
        })
        .collect();
    let dropped = out.iter().map(|o| o.1).sum();
    (out.into_iter().map(|(seq, _)| seq).collect(), dropped)
}

fn judge(
    sampled: Vec<FramedSequence>,
    small_space: &DMatrix<f64>,
) -> (Verdict, f64, Option<StratumSample>, Vec<StratumSample>) {
    let mut samples = Vec::new();
    let mut witness = None;
    let mut all_pass = !sampled.is_empty();
    let mut max_angle: f64 = 0.0;
    for (points, frames) in sampled {
        let converged = frames.len() > TAIL
            && frames[frames.len() - TAIL - 1..]
                .windows(2)
                .all(|w| max_principal_angle(&w[0], &w[1]) < CONVERGED_ANGLE);
        let angle = converged.then(|| containment_angle(small_space, frames.last().unwrap()));
        let sample = StratumSample {
            points,
            frames: frames.iter().map(frame_vectors).collect(),
            angle,
            converged,
        };
        match angle {
            Some(a) => {
                max_angle = max_angle.max(a);
                if a > FAIL_ANGLE && witness.is_none() {
                    witness = Some(sample.clone());
                }
                if a >= PASS_ANGLE {
                    all_pass = false;
                }
            }
            None => all_pass = false,
        }
        samples.push(sample);
    }
    let verdict = if witness.is_some() {
        Verdict::Fail
    } else if all_pass {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    };
    (verdict, max_angle, witness, samples)
}

fn check_generator(g: &SequenceGenerator, ambient: usize) -> Result<()> {
    match g.dimension() {
        Some(d) if d != ambient => Err(Error::InvalidInput("generator vectors have the wrong dimension".into())),
        _ => Ok(()),
    }
}

/// Whitney condition (a) for `big` over `small` at `x`: limits of tangent
/// planes of `big` along sequences tending to `x` must contain `T_x small`.
pub fn a_regularity_test(
    big: &Stratum,
    small: &Stratum,
    x: &[f64],
    generator: &SequenceGenerator,
) -> Result<RegularityReport> {
    big.validate()?;
    small.validate()?;
    check_generator(generator, big.ambient)?;
    check_base_point(big, small, x)?;
    let tx = small
        .tangent_frame(x)
        .ok_or_else(|| Error::Rank("small stratum is singular at the base point".into()))?;
    let (sampled, discarded_points) = sample_sequences(big, x, generator, &|y| big.tangent_frame(y));
    let (verdict, max_angle, witness, sequences) = judge(sampled, &tx);
    Ok(RegularityReport { verdict, max_angle, witness, sequences, precheck: None, discarded_points })
}

/// The a_P condition for `big` over `small` at `x`: limits of
/// `ker dP|_big` must contain `ker dP|_small(x)`. A rank precheck first
/// compares the level-set dimensions `d(P)` of the two strata; if the small
/// stratum has the larger one the condition cannot hold and the verdict is
/// FAIL.
pub fn ap_regularity_test(
    big: &Stratum,
    small: &Stratum,
    p: &[Poly],
    x: &[f64],
    generator: &SequenceGenerator,
) -> Result<RegularityReport> {
    big.validate()?;
    small.validate()?;
    check_generator(generator, big.ambient)?;
    if p.iter().any(|q| q.nvars() != big.ambient) {
        return Err(Error::InvalidInput("P must use the ambient variables".into()));
    }
    check_base_point(big, small, x)?;
    let kx = small
        .kernel_frame(x, p)
        .ok_or_else(|| Error::Rank("small stratum is singular at the base point".into()))?;
    let (sampled, discarded_points) = sample_sequences(big, x, generator, &|y| big.kernel_frame(y, p));
    let dims: Vec<usize> = sampled.iter().flat_map(|(_, f)| f.iter().map(|m| m.ncols())).collect();
    let d_big = match dims.first() {
        None => {
            return Ok(RegularityReport {
                verdict: Verdict::Inconclusive,
                max_angle: 0.0,
                witness: None,
                sequences: Vec::new(),
                precheck: None,
                discarded_points,
            })
        }
        Some(&d) => d,
    };
    if dims.iter().any(|&d| d != d_big) {
        return Err(Error::Rank(format!("P does not have constant rank on the big stratum: {dims:?}")));
    }
    let precheck = RankPrecheck { d_small: kx.ncols(), d_big, compatible: kx.ncols() <= d_big };
    if !precheck.compatible {
        let sequences: Vec<StratumSample> = sampled
            .into_iter()
            .map(|(points, frames)| StratumSample {
                points,
                frames: frames.iter().map(frame_vectors).collect(),
                angle: None,
                converged: false,
            })
            .collect();
        return Ok(RegularityReport {
            verdict: Verdict::Fail,
            max_angle: std::f64::consts::FRAC_PI_2,
            witness: sequences.first().cloned(),
            sequences,
            precheck: Some(precheck),
            discarded_points,
        });
    }
    let (verdict, max_angle, witness, sequences) = judge(sampled, &kx);
    Ok(RegularityReport { verdict, max_angle, witness, sequences, precheck: Some(precheck), discarded_points })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v3(i: usize) -> Poly {
        Poly::var(3, i)
    }

    fn umbrella() -> Poly {
        // y² − z x²
        &v3(1).pow(2) - &(&v3(2) * &v3(0).pow(2))
    }

    fn sheet() -> Stratum {
        let r2 = &v3(0).pow(2) + &v3(1).pow(2);
        Stratum::new(vec![umbrella()], vec![r2], 2, 3).unwrap()
    }

    fn z_axis(punctured: bool) -> Stratum {
        let ineq = if punctured { vec![v3(2).pow(2)] } else { vec![] };
        Stratum::new(vec![v3(0), v3(1)], ineq, 1, 3).unwrap()
    }

    #[test]
    fn umbrella_fails_at_origin() {
        let g = SequenceGenerator::radial(vec![vec![1.0, 0.0, 0.0]]);
        let r = a_regularity_test(&sheet(), &z_axis(false), &[0.0; 3], &g).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        let w = r.witness.unwrap();
        // Tangent planes tend to {z = 0}, which misses the z-axis.
        assert!((w.angle.unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
        for p in &w.points {
            assert_eq!((p[1], p[2]), (0.0, 0.0));
        }
    }

    #[test]
    fn refined_umbrella_passes_on_punctured_axis() {
        for z0 in [0.25f64, 1.0] {
            let s = z0.sqrt();
            let g = SequenceGenerator::radial(vec![vec![1.0, s, 0.0], vec![1.0, -s, 0.0], vec![-1.0, s, 0.0]]);
            let r = a_regularity_test(&sheet(), &z_axis(true), &[0.0, 0.0, z0], &g).unwrap();
            assert_eq!(r.verdict, Verdict::Pass, "z0={z0} angle={}", r.max_angle);
        }
    }

    #[test]
    fn plane_over_line_passes() {
        let plane = Stratum::new(vec![v3(2)], vec![v3(1).pow(2)], 2, 3).unwrap();
        let line = Stratum::new(vec![v3(1), v3(2)], vec![], 1, 3).unwrap();
        let g = SequenceGenerator::RandomOnStratum { count: 6, t0: 0.1, ratio: 0.5, terms: 20, seed: 1 };
        let r = a_regularity_test(&plane, &line, &[0.3, 0.0, 0.0], &g).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(r.max_angle < 1e-12);
    }

    #[test]
    fn off_closure_base_point_is_rejected() {
        let g = SequenceGenerator::radial(vec![vec![1.0, 0.0, 0.0]]);
        let err = a_regularity_test(&sheet(), &z_axis(false), &[0.1, 0.0, 0.0], &g).unwrap_err();
        assert!(matches!(err, Error::NotOnClosure { .. }));
    }

    #[test]
    fn thom_map_fails_rank_precheck() {
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let p = vec![x.clone(), &x * &y];
        let big = Stratum::new(vec![], vec![x.pow(2)], 2, 2).unwrap();
        let small = Stratum::new(vec![x.clone()], vec![], 1, 2).unwrap();
        let g = SequenceGenerator::radial(vec![vec![1.0, 0.0], vec![-1.0, 0.3]]);
        let r = ap_regularity_test(&big, &small, &p, &[0.0, 0.5], &g).unwrap();
        let pc = r.precheck.unwrap();
        assert_eq!((pc.d_small, pc.d_big, pc.compatible), (1, 0, false));
        assert_eq!(r.verdict, Verdict::Fail);
    }

    fn v4(i: usize) -> Poly {
        Poly::var(4, i)
    }

    #[test]
    fn grinberg_fails_along_parabolas() {
        // V = {x² = t² y + z} in (x, y, z, t), P = (z, t).
        let a = 0.5;
        let g = &(&v4(0).pow(2) - &(&v4(3).pow(2) * &v4(1))) - &v4(2);
        let big = Stratum::new(vec![g], vec![v4(3).pow(2)], 3, 4).unwrap();
        let small = Stratum::new(vec![v4(0), v4(2), v4(3)], vec![], 1, 4).unwrap();
        let p = vec![v4(2), v4(3)];
        let gen = SequenceGenerator::parabolic(vec![0.0, 0.0, 0.0, 1.0], vec![0.0, 0.0, -a, 0.0]);
        let r = ap_regularity_test(&big, &small, &p, &[0.0, a, 0.0, 0.0], &gen).unwrap();
        let pc = r.precheck.unwrap();
        assert!(pc.compatible);
        assert_eq!((pc.d_small, pc.d_big), (1, 1));
        assert_eq!(r.verdict, Verdict::Fail);
        let w = r.witness.unwrap();
        for q in &w.points {
            assert!((q[2] + a * q[3] * q[3]).abs() < 1e-15);
        }
    }

    #[test]
    fn umbrella_height_function_passes() {
        let z0: f64 = 0.25;
        let s = z0.sqrt();
        let g = SequenceGenerator::radial(vec![vec![1.0, s, 0.0], vec![-1.0, s, 0.0]]);
        let r = ap_regularity_test(&sheet(), &z_axis(true), &[v3(2)], &[0.0, 0.0, z0], &g).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(r.precheck.unwrap().compatible);
    }

    #[test]
    fn umbrella_planar_projection_fails_precheck() {
        let z0: f64 = 0.25;
        let s = z0.sqrt();
        let g = SequenceGenerator::radial(vec![vec![1.0, s, 0.0]]);
        let p = vec![v3(0), v3(1)];
        let r = ap_regularity_test(&sheet(), &z_axis(true), &p, &[0.0, 0.0, z0], &g).unwrap();
        let pc = r.precheck.unwrap();
        assert_eq!((pc.d_small, pc.d_big), (1, 0));
        assert_eq!(r.verdict, Verdict::Fail);
    }
}
