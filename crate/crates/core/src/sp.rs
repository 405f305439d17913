//! Singular-perturbation reduction for a given retained/eliminated split.
//!
//! With an orthogonal `U = [P; Q]`, the states `Qx` are replaced by their
//! quasi-steady-state value, which yields
//!
//! ```text
//! Â = PAPᵀ - PAΠAPᵀ     B̂ = (P - PAΠ)B
//! Ĉ = C(Pᵀ - ΠAPᵀ)      D̂ = -CΠB        Π = Qᵀ(QAQᵀ)⁻¹Q
//! ```

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::linalg::{condition_number, orthonormal_complement, row_orthonormality_error, vstack, Matrix};
use crate::model::{ReducedModel, StateSpaceModel};

/// Tolerance on the orthonormality conditions of a projection pair.
pub const PROJECTION_TOL: f64 = 1e-10;

/// Fast blocks `QAQᵀ` above this condition number are treated as singular.
pub const FAST_BLOCK_MAX_CONDITION: f64 = 1e12;

/// Retained (`p`, r×n) and eliminated (`q`, (n-r)×n) subspace bases.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionPair {
    p: Matrix,
    q: Matrix,
}

impl ProjectionPair {
    /// Checks `PPᵀ = I`, `QQᵀ = I`, `PQᵀ = 0` and that the rows add up to `n`.
    pub fn new(p: Matrix, q: Matrix) -> Result<Self> {
        let n = p.ncols();
        if q.ncols() != n || p.nrows() + q.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "P is {}x{}, Q is {}x{}; rows must add up to n",
                p.nrows(),
                p.ncols(),
                q.nrows(),
                q.ncols()
            )));
        }
        let stacked = vstack(&p, &q);
        let dev = row_orthonormality_error(&stacked);
        if dev > PROJECTION_TOL {
            return Err(Error::ToleranceViolation { what: "[P; Q] is not orthogonal", deviation: dev });
        }
        Ok(Self { p, q })
    }

    /// Completes an orthonormal `P` with some orthonormal basis `Q` of its complement.
    pub fn from_retained(p: Matrix) -> Result<Self> {
        let q = orthonormal_complement(&p, p.ncols())?;
        Self::new(p, q)
    }

    pub fn identity(n: usize) -> Self {
        Self { p: Matrix::identity(n, n), q: Matrix::zeros(0, n) }
    }

    pub fn p(&self) -> &Matrix {
        &self.p
    }
    pub fn q(&self) -> &Matrix {
        &self.q
    }
    pub fn order(&self) -> usize {
        self.p.nrows()
    }
    pub fn n(&self) -> usize {
        self.p.ncols()
    }
}

/// Selection matrices: `P` rows are `e_i` for `retained` (in the given order),
/// `Q` rows are the remaining canonical vectors in ascending order.
pub fn selection_pair(retained: &[usize], n: usize) -> Result<ProjectionPair> {
    if retained.is_empty() {
        return Err(Error::EmptyRetainedSet);
    }
    let mut seen = HashSet::with_capacity(retained.len());
    for &i in retained {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        if !seen.insert(i) {
            return Err(Error::DuplicateIndex(i));
        }
    }
    let mut p = Matrix::zeros(retained.len(), n);
    for (row, &i) in retained.iter().enumerate() {
        p[(row, i)] = 1.0;
    }
    let eliminated: Vec<usize> = (0..n).filter(|i| !seen.contains(i)).collect();
    let mut q = Matrix::zeros(eliminated.len(), n);
    for (row, &i) in eliminated.iter().enumerate() {
        q[(row, i)] = 1.0;
    }
    Ok(ProjectionPair { p, q })
}

/// `Π = Qᵀ(QAQᵀ)⁻¹Q`; the zero matrix when `Q` has no rows.
pub fn compute_pi(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    if q.ncols() != n {
        return Err(Error::DimensionMismatch(format!("Q has {} columns, A is {n}x{n}", q.ncols())));
    }
    if q.nrows() == 0 {
        return Ok(Matrix::zeros(n, n));
    }
    let fast = q * a * q.transpose();
    let condition = condition_number(&fast);
    if !(condition <= FAST_BLOCK_MAX_CONDITION) {
        return Err(Error::SingularFastBlock { condition });
    }
    let inv = fast.try_inverse().ok_or(Error::SingularFastBlock { condition: f64::INFINITY })?;
    Ok(q.transpose() * inv * q)
}

/// Singular-perturbation reduced model for the split `proj`.
pub fn reduce(model: &StateSpaceModel, proj: &ProjectionPair) -> Result<ReducedModel> {
    if proj.n() != model.n() {
        return Err(Error::DimensionMismatch(format!(
            "projection acts on {} states, model has {}",
            proj.n(),
            model.n()
        )));
    }
    let (a, b, c) = (model.a(), model.b(), model.c());
    let p = proj.p();
    let pi = compute_pi(a, proj.q())?;
    let pa = p * a;
    let ap_t = a * p.transpose();
    let pa_pi = &pa * &pi;
    let ahat = &pa * p.transpose() - &pa_pi * &ap_t;
    let bhat = (p - &pa_pi) * b;
    let chat = c * (p.transpose() - &pi * &ap_t);
    let dhat = -(c * &pi * b);
    Ok(ReducedModel { a: ahat, b: bhat, c: chat, d: dhat, projection: Some(proj.clone()) })
}

/// `range(Cᵀ) ⊆ range(Pᵀ)`, tested as `‖Cᵀ - PᵀPCᵀ‖_F ≤ 1e-10 ‖C‖_F`.
pub fn check_range_condition(c: &Matrix, p: &Matrix) -> bool {
    let ct = c.transpose();
    let resid = &ct - p.transpose() * (p * &ct);
    resid.norm() <= 1e-10 * c.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, orthonormal_basis, RANK_TOL};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(v: &[f64]) -> Matrix {
        Matrix::from_diagonal(&nalgebra::DVector::from_row_slice(v))
    }

    #[test]
    fn selection_pair_examples() {
        let pair = selection_pair(&[0], 2).unwrap();
        assert_eq!(pair.p(), &Matrix::from_row_slice(1, 2, &[1.0, 0.0]));
        assert_eq!(pair.q(), &Matrix::from_row_slice(1, 2, &[0.0, 1.0]));

        assert_eq!(selection_pair(&[], 2), Err(Error::EmptyRetainedSet));

        let pair = selection_pair(&[2, 0], 3).unwrap();
        assert_eq!(pair.p(), &Matrix::from_row_slice(2, 3, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]));
        assert_eq!(pair.q(), &Matrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0]));
    }

    #[test]
    fn selection_pair_errors() {
        assert_eq!(selection_pair(&[3], 3), Err(Error::IndexOutOfRange { index: 3, n: 3 }));
        assert_eq!(selection_pair(&[1, 1], 3), Err(Error::DuplicateIndex(1)));
    }

    #[test]
    fn projection_pair_validation() {
        let p = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let q = Matrix::from_row_slice(1, 2, &[0.0, 1.0]);
        assert!(matches!(ProjectionPair::new(p, q), Err(Error::ToleranceViolation { .. })));
        let p = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert!(matches!(ProjectionPair::new(p, Matrix::zeros(0, 2)), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn pi_examples() {
        let a = diag(&[-1.0, -100.0]);
        let pi = compute_pi(&a, &Matrix::from_row_slice(1, 2, &[0.0, 1.0])).unwrap();
        assert_eq!(pi, Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -0.01]));
        let pi = compute_pi(&a, &Matrix::zeros(0, 2)).unwrap();
        assert_eq!(pi, Matrix::zeros(2, 2));
    }

    #[test]
    fn pi_rejects_singular_fast_block() {
        let a = diag(&[-1.0, 0.0]);
        let q = Matrix::from_row_slice(1, 2, &[0.0, 1.0]);
        assert!(matches!(compute_pi(&a, &q), Err(Error::SingularFastBlock { .. })));
    }

    #[test]
    fn pi_is_basis_invariant_and_idempotent_like() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = Matrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let a = &m - Matrix::identity(5, 5) * 4.0;
        let q = orthonormal_basis(&Matrix::from_fn(2, 5, |_, _| rng.random_range(-1.0..1.0)), RANK_TOL);
        let g = orthonormal_basis(&Matrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0)), RANK_TOL);
        let pi = compute_pi(&a, &q).unwrap();
        let pi_mixed = compute_pi(&a, &(&g * &q)).unwrap();
        assert!((&pi - &pi_mixed).amax() < 1e-9);
        let pap = &pi * &a * &pi;
        assert!((&pap - &pi).norm() <= 1e-8 * pi.norm());
    }

    #[test]
    fn decoupled_fast_state_reduction() {
        let model = StateSpaceModel::new(
            diag(&[-1.0, -100.0]),
            Matrix::from_row_slice(2, 1, &[1.0, 1.0]),
            Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
        )
        .unwrap();
        let red = reduce(&model, &selection_pair(&[0], 2).unwrap()).unwrap();
        assert_eq!(red.a, Matrix::from_element(1, 1, -1.0));
        assert_eq!(red.b, Matrix::from_element(1, 1, 1.0));
        assert_eq!(red.c, Matrix::from_element(1, 1, 1.0));
        assert_eq!(red.d, Matrix::from_element(1, 1, 0.0));
    }

    #[test]
    fn coupled_fast_state_reduction() {
        let a = Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -100.0]);
        let model =
            StateSpaceModel::new(a.clone(), Matrix::identity(2, 2), Matrix::from_row_slice(1, 2, &[1.0, 0.0])).unwrap();
        let red = reduce(&model, &selection_pair(&[0], 2).unwrap()).unwrap();
        assert!((red.a[(0, 0)] + 0.99).abs() < 1e-12);
        assert!((red.b[(0, 0)] - 1.0).abs() < 1e-12 && (red.b[(0, 1)] - 0.01).abs() < 1e-12);
        assert!((red.c[(0, 0)] - 1.0).abs() < 1e-12);
        // C observes the retained state, so the range condition holds and D̂ vanishes.
        assert!(check_range_condition(model.c(), red.projection.as_ref().unwrap().p()));
        assert!(max_abs(&red.d) <= 1e-12);

        // Observing the eliminated state instead violates the range condition.
        let model = StateSpaceModel::new(a, Matrix::identity(2, 2), Matrix::from_row_slice(1, 2, &[0.0, 1.0])).unwrap();
        let proj = selection_pair(&[0], 2).unwrap();
        assert!(!check_range_condition(model.c(), proj.p()));
        let red = reduce(&model, &proj).unwrap();
        assert!(red.d[(0, 0)].abs() < 1e-15);
        assert!((red.d[(0, 1)] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn full_retention_is_identity() {
        let a = Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -100.0]);
        let model =
            StateSpaceModel::new(a.clone(), Matrix::identity(2, 2), Matrix::from_row_slice(1, 2, &[1.0, 2.0])).unwrap();
        let red = reduce(&model, &ProjectionPair::identity(2)).unwrap();
        assert_eq!(red.a, a);
        assert_eq!(&red.b, model.b());
        assert_eq!(&red.c, model.c());
        assert_eq!(red.d, Matrix::zeros(1, 2));
    }

    #[test]
    fn range_condition_examples() {
        let c = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert!(check_range_condition(&c, &Matrix::from_row_slice(1, 2, &[1.0, 0.0])));
        assert!(!check_range_condition(&c, &Matrix::from_row_slice(1, 2, &[0.0, 1.0])));

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c = Matrix::from_fn(2, 6, |_, _| rng.random_range(-1.0..1.0));
        let basis = orthonormal_basis(&c, RANK_TOL);
        let comp = orthonormal_complement(&basis, 6).unwrap();
        let mix = orthonormal_basis(&Matrix::from_fn(2, 4, |_, _| rng.random_range(-1.0..1.0)), RANK_TOL);
        let p = vstack(&basis, &(&mix * &comp));
        assert!(check_range_condition(&c, &p));
    }
}
