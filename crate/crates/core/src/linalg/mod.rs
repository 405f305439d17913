//! Dense real linear-algebra kernels shared by the rest of the crate.
//!
//! Everything here is a pure function of its inputs. The heavy lifting for
//! eigenvalues is done by nalgebra's real Schur decomposition; the Sylvester
//! and Lyapunov solvers operate on that quasi-triangular form.

mod gram_schmidt;
mod sylvester;

pub use gram_schmidt::{orthonormal_basis, orthonormal_complement, RANK_TOL};
pub use sylvester::{solve_lyapunov, solve_lyapunov_schur, solve_sylvester_schur, Op};

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Eigenvalues of a real square matrix; complex ones come in conjugate pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex<f64>>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Largest real part, or `-inf` for an empty spectrum.
    pub fn max_real_part(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Hurwitz test with the default relative margin `1e-9 * max(1, rho)`.
    pub fn is_hurwitz(&self) -> bool {
        self.max_real_part() < -default_hurwitz_margin(self.spectral_radius())
    }
}

/// Default stability margin: `1e-9 * max(1, spectral radius)`.
pub fn default_hurwitz_margin(spectral_radius: f64) -> f64 {
    1e-9 * spectral_radius.max(1.0)
}

/// Real Schur form `M = U T U^T` with `T` upper quasi-triangular.
///
/// `blocks` lists the diagonal blocks of `T` as `(start, size)` with sizes 1 or 2.
#[derive(Debug, Clone)]
pub struct RealSchur {
    pub u: Matrix,
    pub t: Matrix,
    pub blocks: Vec<(usize, usize)>,
}

impl RealSchur {
    pub fn new(m: &Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("M"));
        }
        let n = m.nrows();
        if n == 0 {
            return Ok(Self { u: Matrix::zeros(0, 0), t: Matrix::zeros(0, 0), blocks: vec![] });
        }
        let schur = nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 10_000 + 200 * n)
            .ok_or(Error::NonConvergence)?;
        let (u, mut t) = schur.unpack();

        let mut blocks = Vec::with_capacity(n);
        let mut i = 0;
        while i < n {
            if i + 1 < n && t[(i + 1, i)] != 0.0 {
                if i + 2 < n && t[(i + 2, i + 1)] != 0.0 {
                    // Two consecutive nonzero subdiagonals: not a valid quasi-triangular form.
                    return Err(Error::NonConvergence);
                }
                blocks.push((i, 2));
                i += 2;
            } else {
                blocks.push((i, 1));
                i += 1;
            }
        }
        // Clear anything below the block diagonal so T is exactly quasi-triangular.
        for &(start, size) in &blocks {
            for c in start..start + size {
                for r in start + size..n {
                    t[(r, c)] = 0.0;
                }
            }
        }
        Ok(Self { u, t, blocks })
    }

    pub fn dim(&self) -> usize {
        self.t.nrows()
    }

    pub fn spectrum(&self) -> Spectrum {
        let mut eigenvalues = Vec::with_capacity(self.dim());
        for &(s, size) in &self.blocks {
            if size == 1 {
                eigenvalues.push(Complex::new(self.t[(s, s)], 0.0));
            } else {
                let (a, b) = (self.t[(s, s)], self.t[(s, s + 1)]);
                let (c, d) = (self.t[(s + 1, s)], self.t[(s + 1, s + 1)]);
                let half_trace = 0.5 * (a + d);
                let half_diff = 0.5 * (a - d);
                let disc = half_diff * half_diff + b * c;
                if disc >= 0.0 {
                    let root = disc.sqrt();
                    eigenvalues.push(Complex::new(half_trace + root, 0.0));
                    eigenvalues.push(Complex::new(half_trace - root, 0.0));
                } else {
                    let root = (-disc).sqrt();
                    eigenvalues.push(Complex::new(half_trace, root));
                    eigenvalues.push(Complex::new(half_trace, -root));
                }
            }
        }
        Spectrum { eigenvalues }
    }
}

/// All eigenvalues of a square matrix via the real Schur form.
pub fn eigenvalues(m: &Matrix) -> Result<Spectrum> {
    Ok(RealSchur::new(m)?.spectrum())
}

/// True iff every eigenvalue has real part below `-margin`.
pub fn is_hurwitz(m: &Matrix, margin: f64) -> Result<bool> {
    Ok(eigenvalues(m)?.max_real_part() < -margin)
}

/// [`is_hurwitz`] with the default relative margin.
pub fn is_hurwitz_default(m: &Matrix) -> Result<bool> {
    Ok(eigenvalues(m)?.is_hurwitz())
}

/// Lower-triangular Cholesky factor `L` with `L L^T = X`.
pub fn cholesky(x: &Matrix) -> Result<Matrix> {
    if !x.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "cholesky needs a square matrix, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    let asym = (x - x.transpose()).norm();
    if asym > 1e-10 * x.norm() {
        return Err(Error::ToleranceViolation { what: "cholesky input is not symmetric", deviation: asym });
    }
    let sym = (x + x.transpose()) * 0.5;
    nalgebra::Cholesky::new(sym).map(|c| c.l()).ok_or(Error::NotPositiveDefinite)
}

/// Largest absolute entry (0 for an empty matrix).
pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// `||G G^T - I||_max` for a matrix expected to have orthonormal rows.
pub fn row_orthonormality_error(g: &Matrix) -> f64 {
    let k = g.nrows();
    max_abs(&(g * g.transpose() - Matrix::identity(k, k)))
}

/// Condition number in the 2-norm; `inf` for singular input, 1 for an empty matrix.
pub fn condition_number(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Symmetric part `(M + M^T) / 2`.
pub fn symmetric_part(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Largest eigenvalue of the symmetric part of `M`.
pub fn max_symmetric_eigenvalue(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    symmetric_part(m).symmetric_eigenvalues().max()
}

/// Stack two matrices vertically.
pub fn vstack(top: &Matrix, bottom: &Matrix) -> Matrix {
    assert_eq!(top.ncols(), bottom.ncols(), "vstack column mismatch");
    let mut out = Matrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}

/// Block-diagonal matrix `diag(a, b)`.
pub fn block_diag(a: &Matrix, b: &Matrix) -> Matrix {
    let (na, nb) = (a.nrows(), b.nrows());
    let mut out = Matrix::zeros(na + nb, a.ncols() + b.ncols());
    out.view_mut((0, 0), (na, a.ncols())).copy_from(a);
    out.view_mut((na, a.ncols()), (nb, b.ncols())).copy_from(b);
    out
}
