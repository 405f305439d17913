//! Independent reference computations for integration tests.
//!
//! Nothing here calls the library's solvers: Lyapunov equations are solved
//! as dense Kronecker systems, reductions use the explicit formulas with
//! explicit inverses, and the greedy search is a plain re-implementation.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use spreduce::StateSpaceModel;

pub type M = DMatrix<f64>;

pub fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> M {
    M::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

/// Stable `A` with decay rates spread over two decades plus dense coupling.
pub fn random_stable_a(rng: &mut ChaCha8Rng, n: usize) -> M {
    loop {
        let mut a = gaussian(rng, n, n) * (0.6 / (n as f64).sqrt());
        for i in 0..n {
            a[(i, i)] -= 10f64.powf(rng.random_range(0.0..2.0));
        }
        if max_real_eig(&a) < -1e-3 {
            return a;
        }
    }
}

/// Output rows are distinct unit vectors.
pub fn unit_rows(rng: &mut ChaCha8Rng, p: usize, n: usize) -> (M, Vec<usize>) {
    let mut observed: Vec<usize> = Vec::new();
    while observed.len() < p {
        let j = rng.random_range(0..n);
        if !observed.contains(&j) {
            observed.push(j);
        }
    }
    let mut c = M::zeros(p, n);
    for (k, &j) in observed.iter().enumerate() {
        c[(k, j)] = 1.0;
    }
    (c, observed)
}

pub fn random_model(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize) -> (StateSpaceModel, Vec<usize>) {
    let a = random_stable_a(rng, n);
    let b = gaussian(rng, n, m);
    let (c, observed) = unit_rows(rng, p, n);
    (StateSpaceModel::new(a, b, c).unwrap(), observed)
}

pub fn max_real_eig(a: &M) -> f64 {
    a.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// `AᵀX + XA + S = 0` as `(I ⊗ Aᵀ + Aᵀ ⊗ I) vec(X) = -vec(S)`.
pub fn lyapunov_kron(a: &M, s: &M) -> M {
    let n = a.nrows();
    let at = a.transpose();
    let mut k = M::zeros(n * n, n * n);
    for j in 0..n {
        for i in 0..n {
            let row = i + j * n;
            // (AᵀX)_{ij} = Σ_l Aᵀ_{il} X_{lj}
            for l in 0..n {
                k[(row, l + j * n)] += at[(i, l)];
            }
            // (XA)_{ij} = Σ_l X_{il} A_{lj}
            for l in 0..n {
                k[(row, i + l * n)] += a[(l, j)];
            }
        }
    }
    let rhs = -M::from_column_slice(n * n, 1, s.as_slice());
    let x = k.lu().solve(&rhs).expect("Kronecker Lyapunov system is singular");
    let x = M::from_column_slice(n, n, x.as_slice());
    (&x + x.transpose()) * 0.5
}

/// Squared H2 norm of `(A, B, C)` via the observability gramian.
pub fn h2_squared(a: &M, b: &M, c: &M) -> f64 {
    let phi = lyapunov_kron(a, &(c.transpose() * c));
    (b.transpose() * phi * b).trace()
}

pub fn error_h2(full_a: &M, full_b: &M, full_c: &M, ahat: &M, bhat: &M, chat: &M) -> f64 {
    let (n, r) = (full_a.nrows(), ahat.nrows());
    let mut a = M::zeros(n + r, n + r);
    a.view_mut((0, 0), (n, n)).copy_from(full_a);
    a.view_mut((n, n), (r, r)).copy_from(ahat);
    let mut b = M::zeros(n + r, full_b.ncols());
    b.view_mut((0, 0), (n, full_b.ncols())).copy_from(full_b);
    b.view_mut((n, 0), (r, full_b.ncols())).copy_from(bhat);
    let mut c = M::zeros(full_c.nrows(), n + r);
    c.view_mut((0, 0), (full_c.nrows(), n)).copy_from(full_c);
    c.view_mut((0, n), (full_c.nrows(), r)).copy_from(&(-chat));
    h2_squared(&a, &b, &c)
}

pub struct Sp {
    pub a: M,
    pub b: M,
    pub c: M,
    pub d: M,
    pub fast_condition: f64,
}

/// Singular-perturbation reduction for orthonormal `[P; Q]`.
pub fn sp_reduce(a: &M, b: &M, c: &M, p: &M, q: &M) -> Sp {
    let n = a.nrows();
    let (pi, fast_condition) = if q.nrows() == 0 {
        (M::zeros(n, n), 1.0)
    } else {
        let fast = q * a * q.transpose();
        let sv = fast.clone().singular_values();
        let cond = sv.max() / sv.min();
        let inv = fast.try_inverse().unwrap_or_else(|| M::from_element(q.nrows(), q.nrows(), f64::NAN));
        (q.transpose() * inv * q, cond)
    };
    Sp {
        a: p * a * p.transpose() - p * a * &pi * a * p.transpose(),
        b: (p - p * a * &pi) * b,
        c: c * (p.transpose() - &pi * a * p.transpose()),
        d: -(c * &pi * b),
        fast_condition,
    }
}

pub fn selection(rows: &[usize], n: usize) -> M {
    let mut s = M::zeros(rows.len(), n);
    for (k, &i) in rows.iter().enumerate() {
        s[(k, i)] = 1.0;
    }
    s
}

pub struct OracleGreedy {
    pub eliminated: Vec<usize>,
    pub errors: Vec<f64>,
}

/// Plain greedy elimination: candidates are states with a zero output
/// column; each step keeps the feasible candidate with the smallest error,
/// the lower index winning ties within `1e-12 · max(|a|, |b|, ‖G‖²)`.
pub fn greedy_oracle(model: &StateSpaceModel, r_target: usize) -> OracleGreedy {
    let (a, b, c) = (model.a(), model.b(), model.c());
    let n = a.nrows();
    let full = h2_squared(a, b, c);
    let mut candidates: Vec<usize> =
        (0..n).filter(|&j| c.column(j).iter().all(|v| v.abs() <= 1e-12)).collect();
    let mut eliminated: Vec<usize> = Vec::new();
    let mut errors = Vec::new();
    while eliminated.len() < n - r_target && !candidates.is_empty() {
        let mut best: Option<(usize, f64)> = None;
        for &j in &candidates {
            let mut gone = eliminated.clone();
            gone.push(j);
            gone.sort_unstable();
            let kept: Vec<usize> = (0..n).filter(|i| !gone.contains(i)).collect();
            let red = sp_reduce(a, b, c, &selection(&kept, n), &selection(&gone, n));
            if red.fast_condition.is_nan() || red.fast_condition > 1e12 {
                continue;
            }
            let rho = red.a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
            if max_real_eig(&red.a) >= -1e-9 * rho.max(1.0) {
                continue;
            }
            let v = error_h2(a, b, c, &red.a, &red.b, &red.c);
            let take = match best {
                None => true,
                Some((_, bv)) => v < bv - 1e-12 * v.abs().max(bv.abs()).max(full),
            };
            if take {
                best = Some((j, v));
            }
        }
        match best {
            None => break,
            Some((j, v)) => {
                eliminated.push(j);
                errors.push(v);
                candidates.retain(|&x| x != j);
            }
        }
    }
    OracleGreedy { eliminated, errors }
}

/// Orthonormal basis of the row space of `m` (full row rank assumed) via QR.
pub fn qr_rows(m: &M) -> M {
    m.transpose().qr().q().transpose()
}

/// Random matrix with orthonormal rows.
pub fn random_orthonormal_rows(rng: &mut ChaCha8Rng, r: usize, c: usize) -> M {
    qr_rows(&gaussian(rng, r, c))
}
