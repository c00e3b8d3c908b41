//! Thin helpers over `nalgebra`: rank, null spaces, minimum-norm solves,
//! principal angles and low-discrepancy points.

use nalgebra::{DMatrix, DVector};

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(nr, nc, |i, j| rows[i][j])
}

fn relative_cutoff(sv: &DVector<f64>, rtol: f64) -> f64 {
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    rtol * smax.max(f64::MIN_POSITIVE)
}

/// Numerical rank with singular values below `rtol * s_max` treated as zero.
pub fn rank(m: &DMatrix<f64>, rtol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.singular_values();
    let cut = relative_cutoff(&sv, rtol);
    if sv.iter().cloned().fold(0.0, f64::max) == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > cut).count()
}

/// Orthonormal basis (as columns) of the null space of `m`.
pub fn null_space(m: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let n = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // Pad to at least n rows so the SVD returns a full right basis.
    let padded = if m.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let sv = &svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let cut = if smax == 0.0 { 0.0 } else { relative_cutoff(sv, rtol) };
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&i| sv[i] <= cut)
        .map(|i| vt.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Orthonormal basis of the column span of `m`.
pub fn column_span(m: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    if m.ncols() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("u requested");
    let sv = &svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let cut = relative_cutoff(sv, rtol);
    let cols: Vec<DVector<f64>> = (0..sv.len())
        .filter(|&i| sv[i] > cut)
        .map(|i| u.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(m.nrows(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Minimum-norm least-squares solution of `a x = b`.
pub fn min_norm_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    svd.solve(b, 1e-13 * svd.singular_values.max().max(f64::MIN_POSITIVE))
        .ok()
}

/// Largest principal angle between span(a) and span(b), both given by
/// orthonormal columns of equal count. Returns `pi/2` on dimension mismatch.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols() != b.ncols() {
        return std::f64::consts::FRAC_PI_2;
    }
    containment_angle(a, b)
}

/// Angle measuring how far span(a) is from lying inside span(b):
/// `asin ‖(I − P_b) a‖₂` for orthonormal columns `a`, `b`.
pub fn containment_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols() == 0 {
        return 0.0;
    }
    let resid = if b.ncols() == 0 {
        a.clone()
    } else {
        a - b * (b.transpose() * a)
    };
    let s = resid.singular_values().max();
    s.clamp(0.0, 1.0).asin()
}

/// Determinant of a small dense matrix given as rows.
pub fn det_rows(rows: &[Vec<f64>]) -> f64 {
    matrix_from_rows(rows).determinant()
}

/// The vector of signed maximal minors of a `(d−1) × d` matrix: the
/// generalized cross product, orthogonal to every row.
pub fn cofactor_vector(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows.len() + 1;
    (0..d)
        .map(|j| {
            let minor: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| {
                    r.iter()
                        .enumerate()
                        .filter(|(c, _)| *c != j)
                        .map(|(_, &v)| v)
                        .collect()
                })
                .collect();
            let m = if minor.is_empty() { 1.0 } else { det_rows(&minor) };
            if (j + d - 1).is_multiple_of(2) {
                m
            } else {
                -m
            }
        })
        .collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Radical inverse of `i` in base `b`.
fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let inv = 1.0 / b as f64;
    while i > 0 {
        f *= inv;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Halton point `i` in `[0,1)^d` with a Cranley–Patterson shift.
pub fn halton(i: u64, d: usize, shift: &[f64]) -> Vec<f64> {
    assert!(d <= PRIMES.len());
    (0..d)
        .map(|k| {
            let s = shift.get(k).copied().unwrap_or(0.0);
            (radical_inverse(i + 1, PRIMES[k]) + s).fract()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_of_row() {
        let m = matrix_from_rows(&[vec![1.0, 1.0, 0.0]]);
        let ns = null_space(&m, 1e-12);
        assert_eq!(ns.ncols(), 2);
        assert!((&m * &ns).norm() < 1e-14);
        assert!((ns.transpose() * &ns - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn cofactor_is_orthogonal() {
        let rows = vec![vec![1.0, 2.0, 0.5], vec![-1.0, 0.3, 2.0]];
        let c = cofactor_vector(&rows);
        for r in &rows {
            assert!(dot(r, &c).abs() < 1e-14);
        }
        let c2 = cofactor_vector(&[vec![0.0, 1.0]]);
        assert!(dot(&c2, &[0.0, 1.0]).abs() < 1e-15 && norm(&c2) == 1.0);
    }

    #[test]
    fn angles() {
        let e1 = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let e2 = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]);
        let plane = DMatrix::from_columns(&[e1.column(0).into_owned(), e2.column(0).into_owned()]);
        assert!(containment_angle(&e1, &plane) < 1e-15);
        assert!((max_principal_angle(&e1, &e2) - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn halton_in_unit_cube() {
        for i in 0..100 {
            let p = halton(i, 3, &[0.3, 0.7, 0.1]);
            assert!(p.iter().all(|&v| (0.0..1.0).contains(&v)));
        }
        assert_eq!(halton(0, 1, &[]), vec![0.5]);
    }
}
