//! Row-space bases by modified Gram–Schmidt with re-orthogonalization.

use super::{row_orthonormality_error, Matrix};
use crate::error::{Error, Result};
use nalgebra::RowDVector;

/// Relative rank tolerance: a row is dropped when its residual falls below
/// `RANK_TOL * (largest row norm)`.
pub const RANK_TOL: f64 = 1e-10;

fn sub_scaled(v: &mut RowDVector<f64>, coef: f64, q: &RowDVector<f64>) {
    for (vi, qi) in v.iter_mut().zip(q.iter()) {
        *vi -= coef * qi;
    }
}

fn orthogonalize(v: &mut RowDVector<f64>, basis: &[RowDVector<f64>]) {
    // Two passes ("twice is enough").
    for _ in 0..2 {
        for q in basis {
            let coef = q.dot(v);
            sub_scaled(v, coef, q);
        }
    }
}

fn rows_to_matrix(rows: &[RowDVector<f64>], ncols: usize) -> Matrix {
    let mut out = Matrix::zeros(rows.len(), ncols);
    for (i, r) in rows.iter().enumerate() {
        out.row_mut(i).copy_from(r);
    }
    out
}

/// Orthonormal basis for the row space of `m`, one basis vector per row.
///
/// `tol` is relative to the largest row norm of `m`. The number of returned
/// rows is the numerical rank; a zero matrix yields a `0 x cols` matrix.
pub fn orthonormal_basis(m: &Matrix, tol: f64) -> Matrix {
    let max_norm = m.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
    let mut basis: Vec<RowDVector<f64>> = Vec::new();
    if max_norm == 0.0 {
        return Matrix::zeros(0, m.ncols());
    }
    let threshold = tol * max_norm;
    for row in m.row_iter() {
        let mut v = row.clone_owned();
        orthogonalize(&mut v, &basis);
        let norm = v.norm();
        if norm > threshold {
            v /= norm;
            // One more pass after normalization keeps G G^T = I to ~1e-15.
            orthogonalize(&mut v, &basis);
            let norm = v.norm();
            basis.push(v / norm);
        }
    }
    rows_to_matrix(&basis, m.ncols())
}

/// Orthonormal rows spanning the orthogonal complement of the row space of `g`.
///
/// `g` must already have orthonormal rows. Complement directions are taken
/// from the canonical basis with column pivoting on residual norm.
pub fn orthonormal_complement(g: &Matrix, n: usize) -> Result<Matrix> {
    if g.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "basis has {} columns, expected {n}",
            g.ncols()
        )));
    }
    if g.nrows() > n {
        return Err(Error::DimensionMismatch(format!("{} basis rows exceed n = {n}", g.nrows())));
    }
    let dev = row_orthonormality_error(g);
    if dev > 1e-10 {
        return Err(Error::ToleranceViolation { what: "complement input rows are not orthonormal", deviation: dev });
    }
    let mut basis: Vec<RowDVector<f64>> = g.row_iter().map(|r| r.clone_owned()).collect();
    let mut residuals: Vec<RowDVector<f64>> = (0..n)
        .map(|i| {
            let mut e = RowDVector::zeros(n);
            e[i] = 1.0;
            orthogonalize(&mut e, &basis);
            e
        })
        .collect();
    let mut used = vec![false; n];
    let mut complement = Vec::with_capacity(n - g.nrows());
    for _ in 0..n - g.nrows() {
        let (best, _) = residuals
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, r)| (i, r.norm()))
            .fold((usize::MAX, -1.0), |acc, (i, nrm)| if nrm > acc.1 { (i, nrm) } else { acc });
        used[best] = true;
        let mut v = residuals[best].clone();
        orthogonalize(&mut v, &basis);
        let norm = v.norm();
        v /= norm;
        orthogonalize(&mut v, &basis);
        let v = &v / v.norm();
        for (i, r) in residuals.iter_mut().enumerate() {
            if !used[i] {
                let coef = v.dot(r);
                sub_scaled(r, coef, &v);
            }
        }
        basis.push(v.clone());
        complement.push(v);
    }
    Ok(rows_to_matrix(&complement, n))
}
