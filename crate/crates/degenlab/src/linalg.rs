//! Small dense symmetric linear algebra used by the matrix checkers:
//! generalized eigenvalues of a pencil (A, B) restricted to the numerical
//! range of B, and rank-one dominance constants. Matrices here are tiny
//! (operator dimensions), so everything goes through nalgebra's dense
//! symmetric eigendecomposition.

use nalgebra::{DMatrix, DVector};

/// Relative eigenvalue floor; eigenvalues of B below `floor_rel * trace`
/// count as null directions.
pub const RANGE_FLOOR_REL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub enum PencilOutcome {
    /// Extremal generalized eigenvalues of (A, B) on range(B).
    Eigs { min: f64, max: f64 },
    /// B has a null direction along which the A-form does not vanish.
    NullMismatch { direction: Vec<f64>, a_form: f64 },
    /// B is not positive semidefinite.
    NotPsd { min_eig: f64 },
    /// B vanishes entirely (and so must A for the pencil to mean anything).
    ZeroRange,
}

fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let se = m.clone().symmetric_eigen();
    (se.eigenvalues, se.eigenvectors)
}

/// Extremal eigenvalues of `ξᵀAξ / ξᵀBξ` over range(B), by whitening B on
/// its numerically detected range. Null directions of B where the A-form
/// exceeds its own floor are reported instead of being silently dropped.
pub fn pencil_extremes(a: &DMatrix<f64>, b: &DMatrix<f64>) -> PencilOutcome {
    let n = b.nrows();
    let (vals, vecs) = sym_eigen(b);
    let trace_b: f64 = b.diagonal().iter().sum();
    let floor_b = RANGE_FLOOR_REL * trace_b.abs().max(f64::MIN_POSITIVE);
    if let Some(min_eig) = vals.iter().cloned().reduce(f64::min) {
        if min_eig < -1e-10 {
            return PencilOutcome::NotPsd { min_eig };
        }
    }
    let trace_a: f64 = a.diagonal().iter().sum();
    let floor_a = RANGE_FLOOR_REL * trace_a.abs().max(f64::MIN_POSITIVE);

    let mut range_cols: Vec<usize> = Vec::new();
    for i in 0..n {
        if vals[i] > floor_b {
            range_cols.push(i);
        } else {
            let u = vecs.column(i);
            let a_form = (u.transpose() * a * u)[(0, 0)];
            if a_form.abs() > floor_a {
                return PencilOutcome::NullMismatch {
                    direction: u.iter().cloned().collect(),
                    a_form,
                };
            }
        }
    }
    if range_cols.is_empty() {
        return PencilOutcome::ZeroRange;
    }

    // whiten: W = U_r D_r^{-1/2}, S = Wᵀ A W has the pencil spectrum
    let r = range_cols.len();
    let mut w = DMatrix::zeros(n, r);
    for (j, &i) in range_cols.iter().enumerate() {
        let scale = 1.0 / vals[i].sqrt();
        for k in 0..n {
            w[(k, j)] = vecs[(k, i)] * scale;
        }
    }
    let s = w.transpose() * a * &w;
    let (svals, _) = sym_eigen(&s);
    let min = svals.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = svals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    PencilOutcome::Eigs { min, max }
}

/// Largest `c` such that `c * d * e_k e_kᵀ ≼ M` for PSD `M` and `d > 0`:
/// the Schur complement of the (k,k) slot, `M_kk - m_kᵀ M_rest⁺ m_k`,
/// divided by `d`.
pub fn rank_one_dominance(m: &DMatrix<f64>, k: usize, d: f64) -> f64 {
    let n = m.nrows();
    assert!(k < n && d > 0.0);
    let rest: Vec<usize> = (0..n).filter(|&i| i != k).collect();
    if rest.is_empty() {
        return m[(0, 0)] / d;
    }
    let mut m_rest = DMatrix::zeros(n - 1, n - 1);
    let mut v = DVector::zeros(n - 1);
    for (i, &ri) in rest.iter().enumerate() {
        v[i] = m[(ri, k)];
        for (j, &rj) in rest.iter().enumerate() {
            m_rest[(i, j)] = m[(ri, rj)];
        }
    }
    // pseudo-inverse on the numerical range of the minor
    let (vals, vecs) = sym_eigen(&m_rest);
    let trace: f64 = m_rest.diagonal().iter().sum();
    let floor = RANGE_FLOOR_REL * trace.abs().max(f64::MIN_POSITIVE);
    let mut quad = 0.0;
    for i in 0..(n - 1) {
        if vals[i] > floor {
            let proj = vecs.column(i).dot(&v);
            quad += proj * proj / vals[i];
        } else {
            // v must lie in the range for the Schur formula to hold
            let proj = vecs.column(i).dot(&v);
            if proj.abs() > floor.sqrt() {
                return 0.0;
            }
        }
    }
    (m[(k, k)] - quad) / d
}

/// Symmetry defect `max |M - Mᵀ|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Max absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}
