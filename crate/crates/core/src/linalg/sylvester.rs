//! Bartels–Stewart solvers for Sylvester and Lyapunov equations.
//!
//! With `A = U T U^T` and `B = V S V^T` in real Schur form, the equation
//! `op(A) X + X op(B) = F` becomes `op(T) Y + Y op(S) = U^T F V` with
//! `X = U Y V^T`. The quasi-triangular system is solved block by block; each
//! diagonal block pair is at most a 4x4 dense system.

use super::{Matrix, RealSchur};
use crate::error::{Error, Result};

/// Whether an operand enters the equation as itself or transposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    NoTrans,
    Trans,
}

/// Solve `op(A) X + X op(B) = F` given Schur forms of `A` and `B`.
pub fn solve_sylvester_schur(
    a: &RealSchur,
    op_a: Op,
    b: &RealSchur,
    op_b: Op,
    f: &Matrix,
) -> Result<Matrix> {
    let (na, nb) = (a.dim(), b.dim());
    if f.nrows() != na || f.ncols() != nb {
        return Err(Error::DimensionMismatch(format!(
            "sylvester right-hand side is {}x{}, expected {}x{}",
            f.nrows(),
            f.ncols(),
            na,
            nb
        )));
    }
    if na == 0 || nb == 0 {
        return Ok(Matrix::zeros(na, nb));
    }
    let g = a.u.transpose() * f * &b.u;
    let y = solve_quasi_triangular(&a.t, &a.blocks, op_a, &b.t, &b.blocks, op_b, &g)?;
    Ok(&a.u * y * b.u.transpose())
}

/// Solve `A^T X + X A + S = 0` for symmetric `X`.
pub fn solve_lyapunov(a: &Matrix, s: &Matrix) -> Result<Matrix> {
    let schur = RealSchur::new(a)?;
    solve_lyapunov_schur(&schur, s)
}

/// [`solve_lyapunov`] reusing a precomputed Schur form of `A`.
pub fn solve_lyapunov_schur(schur: &RealSchur, s: &Matrix) -> Result<Matrix> {
    let x = solve_sylvester_schur(schur, Op::Trans, schur, Op::NoTrans, &(-s))?;
    Ok((&x + x.transpose()) * 0.5)
}

fn solve_quasi_triangular(
    t: &Matrix,
    t_blocks: &[(usize, usize)],
    op_t: Op,
    s: &Matrix,
    s_blocks: &[(usize, usize)],
    op_s: Op,
    g: &Matrix,
) -> Result<Matrix> {
    let lt = match op_t {
        Op::NoTrans => t.clone(),
        Op::Trans => t.transpose(),
    };
    let ls = match op_s {
        Op::NoTrans => s.clone(),
        Op::Trans => s.transpose(),
    };

    // op(T) is lower quasi-triangular when transposed, so its rows are solved
    // top-down; otherwise bottom-up. Symmetrically for op(S) and columns.
    let row_order: Vec<(usize, usize)> = match op_t {
        Op::Trans => t_blocks.to_vec(),
        Op::NoTrans => t_blocks.iter().rev().copied().collect(),
    };
    let col_order: Vec<(usize, usize)> = match op_s {
        Op::NoTrans => s_blocks.to_vec(),
        Op::Trans => s_blocks.iter().rev().copied().collect(),
    };

    let mut y = Matrix::zeros(g.nrows(), g.ncols());
    for &(ri, a) in &row_order {
        for &(cj, b) in &col_order {
            // Unsolved blocks of Y are still zero, and their coefficients in
            // op(T) / op(S) vanish, so the full row/column products are exact.
            let mut rhs = g.view((ri, cj), (a, b)).clone_owned();
            rhs -= lt.rows(ri, a) * y.columns(cj, b);
            rhs -= y.rows(ri, a) * ls.columns(cj, b);

            let tii = lt.view((ri, ri), (a, a));
            let sjj = ls.view((cj, cj), (b, b));
            let block = solve_small_block(&tii.clone_owned(), &sjj.clone_owned(), &rhs)?;
            y.view_mut((ri, cj), (a, b)).copy_from(&block);
        }
    }
    Ok(y)
}

/// Solve `T Y + Y S = R` for blocks of size at most 2x2 each.
fn solve_small_block(t: &Matrix, s: &Matrix, r: &Matrix) -> Result<Matrix> {
    let (a, b) = (t.nrows(), s.nrows());
    let scale = t.amax() + s.amax();
    if a == 1 && b == 1 {
        let d = t[(0, 0)] + s[(0, 0)];
        if d.abs() <= 1e-14 * scale || d == 0.0 {
            return Err(Error::SingularSylvester);
        }
        return Ok(Matrix::from_element(1, 1, r[(0, 0)] / d));
    }
    // Column-major vec: (I_b ⊗ T + S^T ⊗ I_a) vec(Y) = vec(R).
    let dim = a * b;
    let mut k = [[0.0_f64; 4]; 4];
    let mut rhs = [0.0_f64; 4];
    for c in 0..b {
        for row in 0..a {
            let eq = c * a + row;
            rhs[eq] = r[(row, c)];
            for rr in 0..a {
                k[eq][c * a + rr] += t[(row, rr)];
            }
            for cc in 0..b {
                k[eq][cc * a + row] += s[(cc, c)];
            }
        }
    }
    let sol = gauss_full_pivot(&mut k, &mut rhs, dim, scale)?;
    let mut out = Matrix::zeros(a, b);
    for c in 0..b {
        for row in 0..a {
            out[(row, c)] = sol[c * a + row];
        }
    }
    Ok(out)
}

fn gauss_full_pivot(k: &mut [[f64; 4]; 4], rhs: &mut [f64; 4], dim: usize, scale: f64) -> Result<[f64; 4]> {
    let mut col_perm = [0usize, 1, 2, 3];
    for p in 0..dim {
        let (mut pr, mut pc, mut best) = (p, p, 0.0);
        for (i, row) in k.iter().enumerate().take(dim).skip(p) {
            for (j, v) in row.iter().enumerate().take(dim).skip(p) {
                if v.abs() > best {
                    best = v.abs();
                    pr = i;
                    pc = j;
                }
            }
        }
        if best <= 1e-14 * scale || best == 0.0 {
            return Err(Error::SingularSylvester);
        }
        k.swap(p, pr);
        rhs.swap(p, pr);
        if pc != p {
            for row in k.iter_mut() {
                row.swap(p, pc);
            }
            col_perm.swap(p, pc);
        }
        for i in p + 1..dim {
            let factor = k[i][p] / k[p][p];
            if factor != 0.0 {
                #[allow(clippy::needless_range_loop)] // rows p and i of the same array
                for j in p..dim {
                    k[i][j] -= factor * k[p][j];
                }
                rhs[i] -= factor * rhs[p];
            }
        }
    }
    let mut x = [0.0; 4];
    for i in (0..dim).rev() {
        let mut acc = rhs[i];
        for j in i + 1..dim {
            acc -= k[i][j] * x[j];
        }
        x[i] = acc / k[i][i];
    }
    let mut out = [0.0; 4];
    for i in 0..dim {
        out[col_perm[i]] = x[i];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Shift a random matrix so every eigenvalue sits left of -0.1.
    fn random_stable(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        let m = random_matrix(rng, n, n);
        let ev = super::super::eigenvalues(&m).unwrap();
        let shift = ev.max_real_part() + 0.1 + rng.random_range(0.0..1.0);
        m - Matrix::identity(n, n) * shift
    }

    fn kronecker_sylvester(a: &Matrix, b: &Matrix, f: &Matrix) -> Matrix {
        // a X + X b = f, column-major vec.
        let (m, n) = (a.nrows(), b.nrows());
        let mut k = Matrix::zeros(m * n, m * n);
        for c in 0..n {
            for r in 0..m {
                for rr in 0..m {
                    k[(c * m + r, c * m + rr)] += a[(r, rr)];
                }
                for cc in 0..n {
                    k[(c * m + r, cc * m + r)] += b[(cc, c)];
                }
            }
        }
        let v = nalgebra::DVector::from_column_slice(f.as_slice());
        let x = k.lu().solve(&v).unwrap();
        Matrix::from_column_slice(m, n, x.as_slice())
    }

    #[test]
    fn scalar_lyapunov() {
        let x = solve_lyapunov(&Matrix::from_element(1, 1, -1.0), &Matrix::from_element(1, 1, 1.0)).unwrap();
        assert!((x[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn decoupled_lyapunov() {
        let a = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, -2.0]));
        let x = solve_lyapunov(&a, &Matrix::identity(2, 2)).unwrap();
        assert!((x[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((x[(1, 1)] - 0.25).abs() < 1e-15);
        assert!(x[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn all_four_operand_orientations_match_kronecker() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let na = 1 + trial % 7;
            let nb = 1 + (trial * 3) % 5;
            let a = random_stable(&mut rng, na);
            let b = random_stable(&mut rng, nb);
            let f = random_matrix(&mut rng, na, nb);
            let sa = RealSchur::new(&a).unwrap();
            let sb = RealSchur::new(&b).unwrap();
            for (op_a, op_b) in [
                (Op::NoTrans, Op::NoTrans),
                (Op::Trans, Op::NoTrans),
                (Op::NoTrans, Op::Trans),
                (Op::Trans, Op::Trans),
            ] {
                let am = if op_a == Op::Trans { a.transpose() } else { a.clone() };
                let bm = if op_b == Op::Trans { b.transpose() } else { b.clone() };
                let x = solve_sylvester_schur(&sa, op_a, &sb, op_b, &f).unwrap();
                let oracle = kronecker_sylvester(&am, &bm, &f);
                assert!((&x - &oracle).norm() <= 1e-10 * oracle.norm().max(1.0), "trial {trial}");
            }
        }
    }

    #[test]
    fn singular_operator_detected() {
        // Eigenvalues 1 and -1 sum to zero.
        let a = Matrix::from_element(1, 1, 1.0);
        let b = Matrix::from_element(1, 1, -1.0);
        let sa = RealSchur::new(&a).unwrap();
        let sb = RealSchur::new(&b).unwrap();
        let f = Matrix::from_element(1, 1, 1.0);
        assert_eq!(
            solve_sylvester_schur(&sa, Op::NoTrans, &sb, Op::NoTrans, &f),
            Err(Error::SingularSylvester)
        );
        let rot = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert_eq!(solve_lyapunov(&rot, &Matrix::identity(2, 2)), Err(Error::SingularSylvester));
    }
}
