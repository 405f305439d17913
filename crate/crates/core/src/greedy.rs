//! Greedy selection of original states to eliminate.
//!
//! At every step each remaining candidate state is tentatively added to the
//! eliminated set; candidates that leave `Â` non-Hurwitz (or make the fast
//! block singular) are skipped, and the one with the smallest H2 error is
//! kept. Only states that the output does not observe are candidates, which
//! keeps `D̂ = 0`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{Evaluation, H2Evaluator, StateSpaceModel};
use crate::sp::{reduce, selection_pair, ProjectionPair};

/// Entries of `C` at or below this magnitude count as structural zeros.
pub const CANDIDATE_ZERO_TOL: f64 = 1e-12;

/// Relative tolerance under which two candidate errors are considered tied.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Termination {
    ReachedTargetOrder,
    CandidatesExhausted,
    AllRemainingUnstable,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Termination::ReachedTargetOrder => "reached_target_order",
            Termination::CandidatesExhausted => "candidates_exhausted",
            Termination::AllRemainingUnstable => "all_remaining_unstable",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreedyStep {
    pub eliminated_index: usize,
    pub h2_error_after: f64,
    pub candidates_evaluated: usize,
    pub candidates_unstable: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyTrace {
    pub n: usize,
    pub steps: Vec<GreedyStep>,
    pub termination: Termination,
    pub final_projection: ProjectionPair,
}

impl GreedyTrace {
    /// Eliminated state indices in elimination order.
    pub fn eliminated(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.eliminated_index).collect()
    }

    /// Smallest order the trace reached.
    pub fn final_order(&self) -> usize {
        self.n - self.steps.len()
    }

    /// Retained states (ascending) once the model has been reduced to order `r`.
    pub fn retained_at_order(&self, r: usize) -> Option<Vec<usize>> {
        if r > self.n || r < self.final_order() {
            return None;
        }
        let k = self.n - r;
        let eliminated: Vec<usize> = self.steps[..k].iter().map(|s| s.eliminated_index).collect();
        Some((0..self.n).filter(|i| !eliminated.contains(i)).collect())
    }

    /// Selection pair for order `r`; `Q` rows follow the elimination order.
    pub fn projection_at_order(&self, r: usize) -> Option<ProjectionPair> {
        let retained = self.retained_at_order(r)?;
        let k = self.n - r;
        let mut p = Matrix::zeros(r, self.n);
        for (row, &i) in retained.iter().enumerate() {
            p[(row, i)] = 1.0;
        }
        let mut q = Matrix::zeros(k, self.n);
        for (row, step) in self.steps[..k].iter().enumerate() {
            q[(row, step.eliminated_index)] = 1.0;
        }
        ProjectionPair::new(p, q).ok()
    }

    /// H2 error recorded when the trace passed order `r` (0 at `r = n`).
    pub fn error_at_order(&self, r: usize) -> Option<f64> {
        if r == self.n {
            return Some(0.0);
        }
        if r > self.n || r < self.final_order() {
            return None;
        }
        Some(self.steps[self.n - r - 1].h2_error_after)
    }
}

/// States whose column in `C` is entirely zero.
pub fn candidate_set(c: &Matrix) -> Vec<usize> {
    (0..c.ncols())
        .filter(|&j| c.column(j).iter().all(|v| v.abs() <= CANDIDATE_ZERO_TOL))
        .collect()
}

fn evaluate_candidate(
    model: &StateSpaceModel,
    evaluator: &H2Evaluator,
    eliminated: &[usize],
    candidate: usize,
) -> Result<Option<f64>> {
    let n = model.n();
    let retained: Vec<usize> = (0..n).filter(|i| *i != candidate && !eliminated.contains(i)).collect();
    let pair = selection_pair(&retained, n)?;
    let reduced = match reduce(model, &pair) {
        Ok(r) => r,
        Err(Error::SingularFastBlock { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    match evaluator.evaluate(&reduced.a, &reduced.b, &reduced.c) {
        Ok(Evaluation::Stable(v)) => Ok(Some(v)),
        Ok(Evaluation::Unstable { .. }) | Err(Error::NonConvergence) | Err(Error::SingularSylvester) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Greedy elimination down to `r_target` states (or as far as feasible).
pub fn greedy_reduce(model: &StateSpaceModel, r_target: usize) -> Result<GreedyTrace> {
    let n = model.n();
    if r_target == 0 || r_target >= n {
        return Err(Error::InvalidOrder { order: r_target, n, reason: "greedy needs 1 <= r < n" });
    }
    let evaluator = H2Evaluator::new(model)?;
    let tie_scale = evaluator.full_value().abs();

    let mut candidates = candidate_set(model.c());
    let mut eliminated: Vec<usize> = Vec::new();
    let mut steps = Vec::new();
    let termination = loop {
        if eliminated.len() == n - r_target {
            break Termination::ReachedTargetOrder;
        }
        if candidates.is_empty() {
            break Termination::CandidatesExhausted;
        }
        let results: Vec<Option<f64>> = candidates
            .par_iter()
            .map(|&j| evaluate_candidate(model, &evaluator, &eliminated, j))
            .collect::<Result<_>>()?;

        // Candidates are ascending, so keeping the first of tied values picks the lower index.
        let mut best: Option<(usize, f64)> = None;
        for (&j, res) in candidates.iter().zip(&results) {
            if let Some(v) = *res {
                let better = match best {
                    None => true,
                    Some((_, b)) => v < b - TIE_TOL * v.abs().max(b.abs()).max(tie_scale),
                };
                if better {
                    best = Some((j, v));
                }
            }
        }
        let unstable = results.iter().filter(|r| r.is_none()).count();
        match best {
            None => break Termination::AllRemainingUnstable,
            Some((j, v)) => {
                steps.push(GreedyStep {
                    eliminated_index: j,
                    h2_error_after: v,
                    candidates_evaluated: candidates.len(),
                    candidates_unstable: unstable,
                });
                eliminated.push(j);
                candidates.retain(|&c| c != j);
            }
        }
    };
    if steps.is_empty() {
        return Err(Error::NoReductionPossible(match termination {
            Termination::CandidatesExhausted => "every state is observed by the output",
            _ => "every single-state elimination is unstable",
        }));
    }
    let mut trace = GreedyTrace { n, steps, termination, final_projection: ProjectionPair::identity(n) };
    trace.final_projection = trace
        .projection_at_order(trace.final_order())
        .expect("selection matrices from a greedy trace are orthonormal");
    Ok(trace)
}
