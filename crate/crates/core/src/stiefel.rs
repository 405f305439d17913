//! Reduction over general orthonormal retained subspaces.
//!
//! The model is first brought to coordinates `x̃ = Lᵀx`, where `LLᵀ = X`
//! solves `AᵀX + XA = -I`. There `Ã` is negative definite and every
//! singular-perturbation reduction of it is stable. The retained basis is
//! `P = [P_fix; W V]`: `P_fix` spans `range(C̃ᵀ)` (so `D̂ = 0`), `V` spans its
//! orthogonal complement, and `W` ranges over matrices with orthonormal rows.
//!
//! The objective is minimized by Riemannian gradient descent with a QR
//! retraction and Armijo backtracking. Gradients come from the adjoint of the
//! two error-system gramians and the identities `Â = (PÃ⁻¹Pᵀ)⁻¹`,
//! `B̂ = ÂPÃ⁻¹B̃`, `Ĉ = C̃Ã⁻¹PᵀÂ`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::greedy::GreedyTrace;
use crate::linalg::{
    cholesky, condition_number, orthonormal_basis, orthonormal_complement, row_orthonormality_error, solve_lyapunov,
    vstack, Matrix, RANK_TOL,
};
use crate::model::{h2_error_between, Evaluation, H2Evaluator, ReducedModel, StateSpaceModel};
use crate::sp::{reduce, selection_pair, ProjectionPair, FAST_BLOCK_MAX_CONDITION};

/// Armijo sufficient-decrease constant.
pub const ARMIJO_C: f64 = 1e-4;
/// Backtracking shrink factor.
pub const STEP_SHRINK: f64 = 0.5;
/// First trial step of the first line search.
pub const INITIAL_STEP: f64 = 1.0;
/// Bounds on later trial steps.
pub const MIN_TRIAL_STEP: f64 = 1e-8;
pub const MAX_TRIAL_STEP: f64 = 1e8;
/// Riemannian gradient norm below which the iteration has converged, scaled
/// by `min(1, objective)` so small objectives are not declared stationary early.
pub const GRADIENT_TOL: f64 = 1e-6;
/// The gradient scale stops shrinking at this fraction of the full model's
/// squared H2 norm. Gradient rounding noise is about 1e-14 of that norm.
pub const OBJECTIVE_NOISE_FLOOR: f64 = 1e-7;

/// Convergence threshold on the Riemannian gradient norm at objective `value`.
pub fn gradient_threshold(value: f64, full_value: f64) -> f64 {
    GRADIENT_TOL * value.max(OBJECTIVE_NOISE_FLOOR * full_value).min(1.0)
}
/// Default iteration budget.
pub const DEFAULT_BUDGET: usize = 500;
const MAX_BACKTRACKS: usize = 60;

/// Model in stabilizing coordinates together with the transform factor.
#[derive(Debug, Clone)]
pub struct TransformedModel {
    model: StateSpaceModel,
    l: Matrix,
    l_inv_t: Matrix,
}

impl TransformedModel {
    /// `(Ã, B̃, C̃)` as a state-space model.
    pub fn model(&self) -> &StateSpaceModel {
        &self.model
    }
    pub fn a(&self) -> &Matrix {
        self.model.a()
    }
    pub fn b(&self) -> &Matrix {
        self.model.b()
    }
    pub fn c(&self) -> &Matrix {
        self.model.c()
    }
    /// Lower-triangular Cholesky factor of the Lyapunov solution.
    pub fn l(&self) -> &Matrix {
        &self.l
    }
    /// `L⁻ᵀ`.
    pub fn l_inv_t(&self) -> &Matrix {
        &self.l_inv_t
    }
}

/// Solve `AᵀX + XA = -I`, factor `X = LLᵀ`, return `(LᵀAL⁻ᵀ, LᵀB, CL⁻ᵀ)`.
pub fn stabilizing_transform(model: &StateSpaceModel) -> Result<TransformedModel> {
    let n = model.n();
    let x = solve_lyapunov(model.a(), &Matrix::identity(n, n))?;
    let l = cholesky(&x)?;
    let l_t = l.transpose();
    let l_inv_t = l_t.solve_upper_triangular(&Matrix::identity(n, n)).ok_or(Error::NotPositiveDefinite)?;
    let a = &l_t * model.a() * &l_inv_t;
    let b = &l_t * model.b();
    let c = model.c() * &l_inv_t;
    let transformed = StateSpaceModel::new_unchecked_stability(a, b, c)?.with_labels(model.labels().to_vec())?;
    Ok(TransformedModel { model: transformed, l, l_inv_t })
}

/// A matrix with orthonormal rows, `(r - p) x (n - p)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StiefelPoint {
    #[serde(serialize_with = "crate::io::serialize_matrix")]
    w: Matrix,
}

/// Orthonormality tolerance for a point on the manifold.
pub const STIEFEL_TOL: f64 = 1e-10;

impl StiefelPoint {
    pub fn new(w: Matrix) -> Result<Self> {
        if w.nrows() > w.ncols() {
            return Err(Error::DimensionMismatch(format!("W is {}x{}; needs rows <= cols", w.nrows(), w.ncols())));
        }
        let dev = row_orthonormality_error(&w);
        if dev > STIEFEL_TOL {
            return Err(Error::ToleranceViolation { what: "W W^T != I", deviation: dev });
        }
        Ok(Self { w })
    }

    /// The point with no rows (reduced order equal to the output count).
    pub fn empty(cols: usize) -> Self {
        Self { w: Matrix::zeros(0, cols) }
    }

    /// Seeded random point: orthonormalized Gaussian rows.
    pub fn random(rows: usize, cols: usize, seed: u64) -> Result<Self> {
        if rows > cols {
            return Err(Error::DimensionMismatch(format!("cannot fit {rows} orthonormal rows in {cols} columns")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let g = Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng));
            let q = orthonormal_basis(&g, RANK_TOL);
            if q.nrows() == rows {
                return Self::new(q);
            }
        }
    }

    pub fn w(&self) -> &Matrix {
        &self.w
    }
}

/// `P_fix` (orthonormal basis of `range(C̃ᵀ)`) and its complement `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameterization {
    pub pfix: Matrix,
    pub v: Matrix,
}

pub fn build_parameterization(tmodel: &TransformedModel, r: usize) -> Result<Parameterization> {
    let (n, p) = (tmodel.model.n(), tmodel.model.p());
    if r < p || r > n {
        return Err(Error::InvalidOrder { order: r, n, reason: "stiefel reduction needs p <= r <= n" });
    }
    let pfix = orthonormal_basis(tmodel.c(), RANK_TOL);
    if pfix.nrows() < p {
        return Err(Error::RankDeficientOutput { rank: pfix.nrows(), p });
    }
    let v = orthonormal_complement(&pfix, n)?;
    Ok(Parameterization { pfix, v })
}

/// `P = [P_fix; W V]`.
pub fn assemble_p(pfix: &Matrix, v: &Matrix, w: &StiefelPoint) -> Result<Matrix> {
    if w.w.ncols() != v.nrows() {
        return Err(Error::DimensionMismatch(format!("W has {} columns, V has {} rows", w.w.ncols(), v.nrows())));
    }
    let dev = row_orthonormality_error(&w.w);
    if dev > 1e-9 {
        return Err(Error::ToleranceViolation { what: "W W^T != I", deviation: dev });
    }
    Ok(vstack(pfix, &(&w.w * v)))
}

/// Everything needed to evaluate the reduction objective at a fixed order.
#[derive(Debug, Clone)]
pub struct StiefelProblem {
    tmodel: TransformedModel,
    r: usize,
    param: Parameterization,
    evaluator: H2Evaluator,
    a_inv: Matrix,
}

impl StiefelProblem {
    pub fn new(tmodel: &TransformedModel, r: usize) -> Result<Self> {
        let param = build_parameterization(tmodel, r)?;
        let evaluator = H2Evaluator::new(&tmodel.model)?;
        let a_inv = tmodel.a().clone().try_inverse().ok_or(Error::NotPositiveDefinite)?;
        Ok(Self { tmodel: tmodel.clone(), r, param, evaluator, a_inv })
    }

    pub fn order(&self) -> usize {
        self.r
    }
    pub fn parameterization(&self) -> &Parameterization {
        &self.param
    }
    pub fn transformed(&self) -> &TransformedModel {
        &self.tmodel
    }
    /// Shape `(r - p, n - p)` of the decision variable.
    pub fn point_shape(&self) -> (usize, usize) {
        (self.r - self.param.pfix.nrows(), self.param.v.nrows())
    }

    fn check_point(&self, w: &StiefelPoint) -> Result<()> {
        let expected = self.point_shape();
        if w.w.shape() != expected {
            return Err(Error::DimensionMismatch(format!("W is {:?}, expected {:?}", w.w.shape(), expected)));
        }
        Ok(())
    }

    pub fn assemble(&self, w: &StiefelPoint) -> Result<Matrix> {
        self.check_point(w)?;
        assemble_p(&self.param.pfix, &self.param.v, w)
    }

    /// Reduced model of the transformed system via the projection-pair route.
    pub fn reduced_model(&self, w: &StiefelPoint) -> Result<ReducedModel> {
        let p = self.assemble(w)?;
        let pair = ProjectionPair::from_retained(p)?;
        reduce(&self.tmodel.model, &pair)
    }

    /// H2 error of the reduction selected by `w`, computed through the
    /// projection pair and the generic error-system route.
    pub fn objective(&self, w: &StiefelPoint) -> Result<f64> {
        let reduced = self.reduced_model(w)?;
        h2_error_between(&self.tmodel.model, &reduced)
    }

    /// `(Â, B̂, Ĉ)` from `P` alone via `Â = (PÃ⁻¹Pᵀ)⁻¹`.
    fn reduced_from_p(&self, p: &Matrix) -> Result<ReducedParts> {
        let pk = p * &self.a_inv;
        let n_mat = &pk * p.transpose();
        // Same singular set as the fast block QÃQᵀ, without forming Q.
        let condition = condition_number(&n_mat);
        if !(condition <= FAST_BLOCK_MAX_CONDITION) {
            return Err(Error::SingularFastBlock { condition });
        }
        let ahat = n_mat.try_inverse().ok_or(Error::SingularFastBlock { condition: f64::INFINITY })?;
        let pkb = &pk * self.tmodel.b();
        let ck = self.tmodel.c() * &self.a_inv;
        let ckp = &ck * p.transpose();
        let bhat = &ahat * &pkb;
        let chat = &ckp * &ahat;
        Ok(ReducedParts { ahat, bhat, chat, pkb, ck, ckp })
    }

    /// Objective through the cached-Schur evaluator; used by the line search.
    pub fn fast_objective(&self, w: &StiefelPoint) -> Result<f64> {
        let p = self.assemble(w)?;
        let parts = self.reduced_from_p(&p)?;
        match self.evaluator.evaluate(&parts.ahat, &parts.bhat, &parts.chat)? {
            Evaluation::Stable(v) => Ok(v),
            Evaluation::Unstable { max_real_part } => Err(Error::UnstableErrorSystem { max_real_part }),
        }
    }

    /// Objective value and Euclidean gradient with respect to `W`.
    pub fn value_and_gradient(&self, w: &StiefelPoint) -> Result<(f64, Matrix)> {
        let p = self.assemble(w)?;
        let parts = self.reduced_from_p(&p)?;
        let ReducedParts { ahat, bhat, chat, pkb, ck, ckp } = parts;
        let gram = self.evaluator.evaluate_with_gramians(&ahat, &bhat, &chat)?;
        let (b, c) = (self.tmodel.b(), self.tmodel.c());

        // Sensitivities of trace(B̄ᵀΦB̄) with respect to Â, B̂, Ĉ.
        let g_a = (gram.phi12.transpose() * &gram.g12 + &gram.phi22 * &gram.g22) * 2.0;
        let g_b = (gram.phi12.transpose() * b + &gram.phi22 * &bhat) * 2.0;
        let g_c = (&chat * &gram.g22 - c * &gram.g12) * 2.0;

        // Chain through B̂ = Â P K B and Ĉ = C K Pᵀ Â, then Â = (P K Pᵀ)⁻¹.
        let g_a_total = g_a + &g_b * pkb.transpose() + ckp.transpose() * &g_c;
        let h = &ahat * g_a_total.transpose() * &ahat;
        let k = &self.a_inv;
        let kb = k * b;
        let mut g_p = -(h.transpose() * &p * k.transpose() + &h * &p * k);
        g_p += ahat.transpose() * &g_b * kb.transpose();
        g_p += &ahat * g_c.transpose() * &ck;

        let pf = self.param.pfix.nrows();
        let g_w = g_p.rows(pf, self.r - pf) * self.param.v.transpose();
        Ok((gram.value, g_w))
    }

    /// Euclidean gradient with respect to `W`.
    pub fn gradient(&self, w: &StiefelPoint) -> Result<Matrix> {
        Ok(self.value_and_gradient(w)?.1)
    }
}

struct ReducedParts {
    ahat: Matrix,
    bhat: Matrix,
    chat: Matrix,
    pkb: Matrix,
    ck: Matrix,
    ckp: Matrix,
}

/// Spec-level convenience wrappers around [`StiefelProblem`].
pub fn objective(tmodel: &TransformedModel, w: &StiefelPoint, r: usize) -> Result<f64> {
    StiefelProblem::new(tmodel, r)?.objective(w)
}

pub fn gradient(tmodel: &TransformedModel, w: &StiefelPoint, r: usize) -> Result<Matrix> {
    StiefelProblem::new(tmodel, r)?.gradient(w)
}

/// Project a Euclidean gradient onto the tangent space at `w`:
/// `ξ = G - sym(G Wᵀ) W`.
pub fn tangent_projection(w: &Matrix, g: &Matrix) -> Matrix {
    let gw = g * w.transpose();
    let sym = (&gw + gw.transpose()) * 0.5;
    g - sym * w
}

/// QR retraction: the row-orthonormal factor of `W + ξ` with positive `R` diagonal.
pub fn qr_retract(w: &Matrix, step: &Matrix) -> Matrix {
    let y = (w + step).transpose();
    if y.ncols() == 0 {
        return Matrix::zeros(0, w.ncols());
    }
    let qr = y.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q.transpose()
}

/// Starting point whose retained subspace matches a greedy solution.
///
/// The greedy retained span `range(P_gᵀ)` maps to `range(L⁻¹P_gᵀ)` in the
/// transformed coordinates; `R` spans its part orthogonal to `P_fix`, and the
/// point is `W = R Vᵀ`.
pub fn align_from_greedy(problem: &StiefelProblem, greedy: &GreedyTrace) -> Result<StiefelPoint> {
    let r = problem.r;
    let n = problem.tmodel.model.n();
    let param = &problem.param;
    let pf = param.pfix.nrows();
    let retained = greedy.retained_at_order(r).ok_or(Error::InvalidOrder {
        order: r,
        n,
        reason: "greedy trace does not reach this order",
    })?;
    if r == pf {
        return Ok(StiefelPoint::empty(param.v.nrows()));
    }
    let pg = selection_pair(&retained, n)?.p().clone();
    // Rows of P_g L⁻ᵀ span range(L⁻¹P_gᵀ).
    let span = orthonormal_basis(&(&pg * problem.tmodel.l_inv_t()), RANK_TOL);
    let outside = &param.pfix - &param.pfix * span.transpose() * &span;
    let residual = outside.amax();
    if residual > 1e-8 || span.nrows() != r {
        return Err(Error::AlignmentInfeasible { residual });
    }
    let r_raw = &span - &span * param.pfix.transpose() * &param.pfix;
    let rmat = orthonormal_basis(&r_raw, 1e-8);
    if rmat.nrows() != r - pf {
        return Err(Error::AlignmentInfeasible { residual: (rmat.nrows() as f64 - (r - pf) as f64).abs() });
    }
    let w = &rmat * param.v.transpose();
    // R ⟂ P_fix, so W Wᵀ = R Rᵀ; one more orthonormalization removes rounding.
    StiefelPoint::new(orthonormal_basis(&w, RANK_TOL))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationReport {
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective_history: Vec<f64>,
    pub final_gradient_norm: f64,
    pub final_point: StiefelPoint,
}

/// Trial step `|⟨s,s⟩ / ⟨s,y⟩|` clamped to `[MIN_TRIAL_STEP, MAX_TRIAL_STEP]`.
fn bb_step(s: &Matrix, y: &Matrix) -> f64 {
    let sy = s.dot(y).abs();
    let ss = s.dot(s);
    if sy > 0.0 && ss > 0.0 {
        (ss / sy).clamp(MIN_TRIAL_STEP, MAX_TRIAL_STEP)
    } else {
        INITIAL_STEP
    }
}

/// Riemannian gradient descent from `init` for at most `budget` iterations.
///
/// The first line search starts at [`INITIAL_STEP`]; later ones start at a
/// Barzilai-Borwein step, and all use Armijo backtracking, so the recorded
/// objective never increases.
pub fn optimize(problem: &StiefelProblem, init: &StiefelPoint, budget: usize) -> Result<OptimizationReport> {
    problem.check_point(init)?;
    let mut w = init.clone();
    let (mut value, mut grad) = problem.value_and_gradient(&w)?;
    let initial_objective = value;
    let mut history = vec![value];
    let mut xi = tangent_projection(&w.w, &grad);
    let mut gnorm = xi.norm();
    let mut iterations = 0;
    // Previous iterate and tangent gradient, for the Barzilai-Borwein trial step.
    let mut previous: Option<(Matrix, Matrix)> = None;

    let full_value = problem.evaluator.full_value();
    while gnorm >= gradient_threshold(value, full_value) && iterations < budget {
        let decrease = gnorm * gnorm;
        let mut t = match &previous {
            None => INITIAL_STEP,
            Some((w_prev, xi_prev)) => bb_step(&(&w.w - w_prev), &(&xi - xi_prev)),
        };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let candidate = qr_retract(&w.w, &(&xi * -t));
            if let Ok(point) = StiefelPoint::new(candidate) {
                // Infeasible or ill-posed trial points count as +inf.
                if let Ok(v) = problem.fast_objective(&point) {
                    if v <= value - ARMIJO_C * t * decrease {
                        accepted = Some((point, v));
                        break;
                    }
                }
            }
            t *= STEP_SHRINK;
        }
        let Some((point, v)) = accepted else {
            break;
        };
        previous = Some((std::mem::replace(&mut w, point).w, xi));
        iterations += 1;
        value = v;
        history.push(value);
        grad = problem.value_and_gradient(&w)?.1;
        xi = tangent_projection(&w.w, &grad);
        gnorm = xi.norm();
    }

    Ok(OptimizationReport {
        initial_objective,
        final_objective: value,
        iterations,
        converged: gnorm < gradient_threshold(value, full_value),
        objective_history: history,
        final_gradient_norm: gnorm,
        final_point: w,
    })
}
