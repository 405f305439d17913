//! State-space models, the reduction error system and its H2 measure.
//!
//! The H2 value reported everywhere is `trace(B̄ᵀ Φ B̄)` with `Φ` the
//! observability gramian of the error system, i.e. the squared H2 norm.

use crate::error::{Error, Result};
use crate::linalg::{
    block_diag, max_abs, solve_lyapunov_schur, solve_sylvester_schur, vstack, Matrix, Op, RealSchur, Spectrum,
};
use crate::sp::ProjectionPair;

/// Stable continuous-time model `ẋ = Ax + Bu, y = Cx` without feedthrough.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    labels: Vec<String>,
}

fn check_finite(m: &Matrix, name: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(name))
    }
}

impl StateSpaceModel {
    /// Validates dimensions, finiteness and that `A` is Hurwitz.
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let model = Self::new_unchecked_stability(a, b, c)?;
        let spectrum = crate::linalg::eigenvalues(&model.a)?;
        if !spectrum.is_hurwitz() {
            return Err(Error::NotStable { max_real_part: spectrum.max_real_part() });
        }
        Ok(model)
    }

    /// Like [`StateSpaceModel::new`] but skips the Hurwitz check.
    pub fn new_unchecked_stability(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch(format!("A is {}x{}, must be square", n, a.ncols())));
        }
        if b.nrows() != n {
            return Err(Error::DimensionMismatch(format!("B has {} rows, expected {n}", b.nrows())));
        }
        if c.ncols() != n {
            return Err(Error::DimensionMismatch(format!("C has {} columns, expected {n}", c.ncols())));
        }
        if n == 0 {
            return Err(Error::DimensionMismatch("model must have at least one state".into()));
        }
        check_finite(&a, "A")?;
        check_finite(&b, "B")?;
        check_finite(&c, "C")?;
        Ok(Self { a, b, c, labels: Vec::new() })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if !labels.is_empty() && labels.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} states",
                labels.len(),
                self.n()
            )));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn b(&self) -> &Matrix {
        &self.b
    }
    pub fn c(&self) -> &Matrix {
        &self.c
    }
    pub fn labels(&self) -> &[String] {
        &self.labels
    }
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// Same model viewed as a trivial (r = n) reduction of itself.
    pub fn as_reduced(&self) -> ReducedModel {
        let n = self.n();
        ReducedModel {
            a: self.a.clone(),
            b: self.b.clone(),
            c: self.c.clone(),
            d: Matrix::zeros(self.p(), self.m()),
            projection: Some(ProjectionPair::identity(n)),
        }
    }

    /// Apply the similarity `x' = T x` (T invertible): `(T A T⁻¹, T B, C T⁻¹)`.
    pub fn similarity(&self, t: &Matrix) -> Result<Self> {
        let t_inv = t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::DimensionMismatch("similarity transform is singular".into()))?;
        Self::new_unchecked_stability(t * &self.a * &t_inv, t * &self.b, &self.c * &t_inv)
    }
}

/// Reduced model `(Â, B̂, Ĉ, D̂)` of order `r`.
///
/// `projection` is the pair that produced it; models read back from disk
/// without projection data carry `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
    pub projection: Option<ProjectionPair>,
}

impl ReducedModel {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn feedthrough_max(&self) -> f64 {
        max_abs(&self.d)
    }
}

/// Feedthrough entries at or below this magnitude count as zero.
pub const FEEDTHROUGH_TOL: f64 = 1e-10;

/// Error dynamics `[ẋ; ẑ] = diag(A, Â)[x; ẑ] + [B; B̂]u, δ = [C, -Ĉ][x; ẑ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSystem {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
}

impl ErrorSystem {
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
}

pub fn build_error_system(full: &StateSpaceModel, reduced: &ReducedModel) -> Result<ErrorSystem> {
    let r = reduced.a.nrows();
    if reduced.a.ncols() != r
        || reduced.b.shape() != (r, full.m())
        || reduced.c.shape() != (full.p(), r)
        || reduced.d.shape() != (full.p(), full.m())
    {
        return Err(Error::DimensionMismatch(format!(
            "reduced model (A {:?}, B {:?}, C {:?}, D {:?}) incompatible with full model n={}, m={}, p={}",
            reduced.a.shape(),
            reduced.b.shape(),
            reduced.c.shape(),
            reduced.d.shape(),
            full.n(),
            full.m(),
            full.p()
        )));
    }
    let max_d = reduced.feedthrough_max();
    if max_d > FEEDTHROUGH_TOL {
        return Err(Error::NonzeroFeedthrough { max_abs: max_d });
    }
    let mut c = Matrix::zeros(full.p(), full.n() + r);
    c.columns_mut(0, full.n()).copy_from(full.c());
    c.columns_mut(full.n(), r).copy_from(&(-&reduced.c));
    Ok(ErrorSystem { a: block_diag(full.a(), &reduced.a), b: vstack(full.b(), &reduced.b), c })
}

fn clamp_trace(value: f64, scale: f64) -> f64 {
    if value < 0.0 && value >= -1e-12 * scale.max(1.0) {
        0.0
    } else {
        value
    }
}

/// `trace(B̄ᵀ Φ B̄)` where `Āᵀ Φ + Φ Ā + C̄ᵀ C̄ = 0`.
pub fn h2_error(err: &ErrorSystem) -> Result<f64> {
    let schur = RealSchur::new(&err.a)?;
    let spectrum = schur.spectrum();
    if !spectrum.is_hurwitz() {
        return Err(Error::UnstableErrorSystem { max_real_part: spectrum.max_real_part() });
    }
    let phi = solve_lyapunov_schur(&schur, &(err.c.transpose() * &err.c))?;
    let value = (err.b.transpose() * &phi * &err.b).trace();
    let scale = phi.amax() * err.b.norm_squared();
    Ok(clamp_trace(value, scale))
}

/// Convenience: H2 error between a full model and a reduced model.
pub fn h2_error_between(full: &StateSpaceModel, reduced: &ReducedModel) -> Result<f64> {
    h2_error(&build_error_system(full, reduced)?)
}

/// Gramian blocks of the error system that involve the reduced model.
///
/// With `Φ` the observability and `G` the controllability gramian of the error
/// system, partitioned conformally with `diag(A, Â)`.
#[derive(Debug, Clone)]
pub struct ErrorGramians {
    pub value: f64,
    pub phi12: Matrix,
    pub phi22: Matrix,
    pub g12: Matrix,
    pub g22: Matrix,
}

/// H2 error evaluator against a fixed full model.
///
/// The Schur form of `A` and the `A`-only gramian blocks are computed once, so
/// each evaluation only decomposes the reduced `Â` and solves the coupling
/// Sylvester equations.
#[derive(Debug, Clone)]
pub struct H2Evaluator {
    schur: RealSchur,
    b: Matrix,
    c: Matrix,
    full_value: f64,
}

/// Result of evaluating a candidate reduced model.
#[derive(Debug, Clone, PartialEq)]
pub enum Evaluation {
    Stable(f64),
    Unstable { max_real_part: f64 },
}

impl H2Evaluator {
    pub fn new(full: &StateSpaceModel) -> Result<Self> {
        let schur = RealSchur::new(full.a())?;
        let phi11 = solve_lyapunov_schur(&schur, &(full.c().transpose() * full.c()))?;
        let full_value = (full.b().transpose() * &phi11 * full.b()).trace();
        Ok(Self { schur, b: full.b().clone(), c: full.c().clone(), full_value })
    }

    /// `trace(Bᵀ Φ₁₁ B)`: the squared H2 norm of the full model itself.
    pub fn full_value(&self) -> f64 {
        self.full_value
    }

    fn reduced_schur(&self, ahat: &Matrix) -> Result<std::result::Result<RealSchur, f64>> {
        let schur = RealSchur::new(ahat)?;
        let spectrum: Spectrum = schur.spectrum();
        if spectrum.is_hurwitz() {
            Ok(Ok(schur))
        } else {
            Ok(Err(spectrum.max_real_part()))
        }
    }

    /// H2 error of `(Â, B̂, Ĉ)`, or `Unstable` when `Â` is not Hurwitz.
    pub fn evaluate(&self, ahat: &Matrix, bhat: &Matrix, chat: &Matrix) -> Result<Evaluation> {
        let rs = match self.reduced_schur(ahat)? {
            Ok(s) => s,
            Err(max_real_part) => return Ok(Evaluation::Unstable { max_real_part }),
        };
        // Aᵀ Φ₁₂ + Φ₁₂ Â = Cᵀ Ĉ ;  Âᵀ Φ₂₂ + Φ₂₂ Â = -Ĉᵀ Ĉ
        let phi12 = solve_sylvester_schur(&self.schur, Op::Trans, &rs, Op::NoTrans, &(self.c.transpose() * chat))?;
        let phi22 = solve_lyapunov_schur(&rs, &(chat.transpose() * chat))?;
        Ok(Evaluation::Stable(self.combine(&phi12, &phi22, bhat)))
    }

    fn combine(&self, phi12: &Matrix, phi22: &Matrix, bhat: &Matrix) -> f64 {
        let cross = (self.b.transpose() * phi12 * bhat).trace();
        let reduced = (bhat.transpose() * phi22 * bhat).trace();
        clamp_trace(self.full_value + 2.0 * cross + reduced, self.full_value)
    }

    /// Value plus the gramian blocks needed for gradients.
    pub fn evaluate_with_gramians(&self, ahat: &Matrix, bhat: &Matrix, chat: &Matrix) -> Result<ErrorGramians> {
        let rs = match self.reduced_schur(ahat)? {
            Ok(s) => s,
            Err(max_real_part) => return Err(Error::UnstableErrorSystem { max_real_part }),
        };
        let phi12 = solve_sylvester_schur(&self.schur, Op::Trans, &rs, Op::NoTrans, &(self.c.transpose() * chat))?;
        let phi22 = solve_lyapunov_schur(&rs, &(chat.transpose() * chat))?;
        // A G₁₂ + G₁₂ Âᵀ = -B B̂ᵀ ;  Â G₂₂ + G₂₂ Âᵀ = -B̂ B̂ᵀ
        let g12 = solve_sylvester_schur(&self.schur, Op::NoTrans, &rs, Op::Trans, &(-(&self.b * bhat.transpose())))?;
        let g22 = solve_sylvester_schur(&rs, Op::NoTrans, &rs, Op::Trans, &(-(bhat * bhat.transpose())))?;
        let g22 = (&g22 + g22.transpose()) * 0.5;
        let value = self.combine(&phi12, &phi22, bhat);
        Ok(ErrorGramians { value, phi12, phi22, g12, g22 })
    }
}
