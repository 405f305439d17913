mod common;

use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spreduce::gen::{fast_states, generate, GeneratorConfig};
use spreduce::greedy::{greedy_reduce, Termination};
use spreduce::stiefel::{align_from_greedy, optimize, stabilizing_transform, StiefelPoint, StiefelProblem};
use spreduce::{h2_error_between, Matrix, StateSpaceModel};

/// Row-space projector of `m`.
fn row_projector(m: &Matrix) -> Matrix {
    let q = qr_rows(m);
    q.transpose() * q
}

#[test]
fn greedy_reaches_target_keeping_observed_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (model, observed) = random_model(&mut rng, 6, 2, 2);
    let trace = greedy_reduce(&model, 2).unwrap();
    assert_eq!(trace.termination, Termination::ReachedTargetOrder);
    let mut kept = trace.retained_at_order(2).unwrap();
    let mut expected = observed;
    kept.sort_unstable();
    expected.sort_unstable();
    assert_eq!(kept, expected);
    let oracle = greedy_oracle(&model, 2);
    assert_eq!(trace.eliminated(), oracle.eliminated);
}

#[test]
fn greedy_errors_match_library_reduction_at_each_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (model, _) = random_model(&mut rng, 7, 2, 1);
    let trace = greedy_reduce(&model, 1).unwrap();
    let full = h2_squared(model.a(), model.b(), model.c());
    for r in trace.final_order()..7 {
        let retained = trace.retained_at_order(r).unwrap();
        let sel = selection(&retained, 7);
        let gone: Vec<usize> = (0..7).filter(|i| !retained.contains(i)).collect();
        let sp = sp_reduce(model.a(), model.b(), model.c(), &sel, &selection(&gone, 7));
        let oracle = error_h2(model.a(), model.b(), model.c(), &sp.a, &sp.b, &sp.c);
        assert!((trace.error_at_order(r).unwrap() - oracle).abs() <= 1e-12 * full, "r = {r}");
    }
}

/// A hidden state that is neither excited nor observed, mixed in by a rotation.
fn model_with_hidden_state(seed: u64) -> (StateSpaceModel, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Matrix::from_row_slice(4, 4, &[
        -1.0, 0.5, 0.0, 0.0, //
        -0.5, -3.0, 0.2, 0.0, //
        0.1, 0.0, -8.0, 0.0, //
        0.0, 0.0, 0.0, -2.0,
    ]);
    let b = Matrix::from_row_slice(4, 2, &[1.0, 0.0, 0.3, 1.0, 0.0, 0.5, 0.0, 0.0]);
    let c = Matrix::from_row_slice(1, 4, &[1.0, 0.0, 0.0, 0.0]);
    // Rotate only the unobserved coordinates so C keeps its form.
    let rot3 = random_orthonormal_rows(&mut rng, 3, 3);
    let mut t = Matrix::identity(4, 4);
    t.view_mut((1, 1), (3, 3)).copy_from(&rot3);
    let model = StateSpaceModel::new(a, b, c).unwrap().similarity(&t).unwrap();
    let full = h2_squared(model.a(), model.b(), model.c());
    (model, full)
}

#[test]
fn optimizer_finds_exact_reduction_of_hidden_state() {
    for seed in [1, 2, 3] {
        let (model, full) = model_with_hidden_state(seed);
        let t = stabilizing_transform(&model).unwrap();
        let problem = StiefelProblem::new(&t, 3).unwrap();
        let (rows, cols) = problem.point_shape();
        let init = StiefelPoint::random(rows, cols, seed + 100).unwrap();
        let report = optimize(&problem, &init, 2000).unwrap();
        assert!(report.final_objective <= 1e-6 * full, "seed {seed}: {:e}", report.final_objective);
    }
}

#[test]
fn alignment_spans_greedy_subspace() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (model, _) = random_model(&mut rng, 8, 2, 2);
    let trace = greedy_reduce(&model, 2).unwrap();
    let t = stabilizing_transform(&model).unwrap();
    for r in 3..8 {
        let problem = StiefelProblem::new(&t, r).unwrap();
        let w = align_from_greedy(&problem, &trace).unwrap();
        let p = problem.assemble(&w).unwrap();
        let retained = trace.retained_at_order(r).unwrap();
        let target = selection(&retained, 8) * t.l_inv_t();
        let dev = (row_projector(&p) - row_projector(&target)).amax();
        assert!(dev <= 1e-9, "r = {r}: projector deviation {dev:e}");
    }
}

#[test]
fn alignment_reproduces_greedy_when_gramian_is_scalar() {
    // A + Aᵀ = -2I makes the unit-input gramian a multiple of I.
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let s = gaussian(&mut rng, 6, 6);
    let a = (&s - s.transpose()) * 0.5 - Matrix::identity(6, 6);
    let b = gaussian(&mut rng, 6, 2);
    let (c, _) = unit_rows(&mut rng, 1, 6);
    let model = StateSpaceModel::new(a, b, c).unwrap();
    let trace = greedy_reduce(&model, 1).unwrap();
    let t = stabilizing_transform(&model).unwrap();
    let full = h2_squared(model.a(), model.b(), model.c());
    for r in trace.final_order() + 1..6 {
        let problem = StiefelProblem::new(&t, r).unwrap();
        let w = align_from_greedy(&problem, &trace).unwrap();
        let aligned = problem.objective(&w).unwrap();
        let greedy = trace.error_at_order(r).unwrap();
        assert!((aligned - greedy).abs() <= 1e-8 * full, "r = {r}: {aligned:e} vs {greedy:e}");
        let report = optimize(&problem, &w, 200).unwrap();
        assert!(report.final_objective <= greedy + 1e-12 * full);
    }
}

#[test]
fn reduced_model_in_original_coordinates_has_same_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let (model, _) = random_model(&mut rng, 6, 2, 1);
    let t = stabilizing_transform(&model).unwrap();
    let problem = StiefelProblem::new(&t, 3).unwrap();
    let (rows, cols) = problem.point_shape();
    let w = StiefelPoint::random(rows, cols, 5).unwrap();
    let red = problem.reduced_model(&w).unwrap();
    // The transform is a similarity, so the error against either realization agrees.
    let e_t = h2_error_between(t.model(), &red).unwrap();
    let e_o = h2_error_between(&model, &red).unwrap();
    let full = h2_squared(model.a(), model.b(), model.c());
    assert!((e_t - e_o).abs() <= 1e-9 * full);
    assert!((problem.objective(&w).unwrap() - e_t).abs() <= 1e-9 * full);
}

#[test]
fn separated_timescales_eliminate_fast_states_first() {
    let cfg = GeneratorConfig { seed: 4, ..GeneratorConfig::preset("medium").unwrap() };
    let model = generate(&cfg).unwrap();
    let fast = fast_states(&model);
    assert_eq!(fast.len(), cfg.n_fast);
    let trace = greedy_reduce(&model, cfg.n_outputs).unwrap();
    let first_fast = trace.eliminated().iter().take(8).filter(|i| fast.contains(i)).count();
    assert!(first_fast >= 8, "only {first_fast} of the first 8 eliminations are fast");
}
