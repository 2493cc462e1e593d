//! Sparse direct solves through faer's LU and LDL^T factorizations.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::prelude::*;
use faer::sparse::linalg::cholesky::{factorize_symbolic_cholesky, SymmetricOrdering};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Par, Side};

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Relative residual above which one refinement step is taken.
const REFINE_THRESHOLD: f64 = 1e-10;

/// Solves `K x = b` with a fill-reducing sparse LU factorization, followed by
/// one step of iterative refinement if the relative residual exceeds 1e-10.
pub fn linear_solve(k: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if k.nrows != k.ncols || b.len() != k.nrows {
        return Err(Error::InvalidInput(format!(
            "linear solve with a {}x{} matrix and a right-hand side of length {}",
            k.nrows,
            k.ncols,
            b.len()
        )));
    }
    let n = k.nrows;
    if n == 0 {
        return Ok(Vec::new());
    }
    if let Some(row) = (0..n).find(|&i| k.row(i).all(|(_, v)| v == 0.0)) {
        return Err(Error::SingularMatrix { pivot: row, hint: None });
    }
    let triplets: Vec<Triplet<usize, usize, f64>> = k
        .triplets()
        .into_iter()
        .map(|(i, j, v)| Triplet::new(i, j, v))
        .collect();
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| Error::InvalidInput(format!("sparse matrix construction failed: {e:?}")))?;
    let lu = mat
        .sp_lu()
        .map_err(|_| Error::SingularMatrix { pivot: 0, hint: None })?;

    let solve = |rhs: &[f64]| -> Result<Vec<f64>> {
        let mut x = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
        lu.solve_in_place(x.as_mut());
        let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
        match out.iter().position(|v| !v.is_finite()) {
            Some(pivot) => Err(Error::SingularMatrix { pivot, hint: None }),
            None => Ok(out),
        }
    };

    let mut x = solve(b)?;
    let b_norm = norm(b).max(f64::MIN_POSITIVE);
    let r = residual(k, &x, b);
    if norm(&r) / b_norm > REFINE_THRESHOLD {
        let dx = solve(&r)?;
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
        let r = residual(k, &x, b);
        let rel = norm(&r) / b_norm;
        // A near-singular factorization leaves a large residual behind.
        if rel > 1e-6 {
            let pivot = r
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map_or(0, |(i, _)| i);
            return Err(Error::SingularMatrix { pivot, hint: None });
        }
    }
    Ok(x)
}

/// Refinement sweeps allowed after a regularized LDL^T factorization.
const LDLT_REFINE_STEPS: usize = 4;

/// Solves a symmetric saddle-point system `K x = b` with a fill-reducing
/// sparse LDL^T factorization.
///
/// `signs[i]` is the expected sign of the `i`-th pivot (`+1` for primal
/// unknowns, `-1` for multipliers); pivots with the wrong sign or tiny
/// magnitude are regularized and the error is removed by iterative
/// refinement. Falls back to [`linear_solve`] if refinement stalls. Only the
/// upper triangle of `k` is read by the factorization.
pub fn linear_solve_symmetric(k: &SparseMatrix, b: &[f64], signs: &[i8]) -> Result<Vec<f64>> {
    let n = k.nrows;
    if k.ncols != n || b.len() != n || signs.len() != n {
        return Err(Error::InvalidInput(format!(
            "symmetric solve with a {}x{} matrix, {} right-hand side entries and {} signs",
            k.nrows,
            k.ncols,
            b.len(),
            signs.len()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    match ldlt_refined(k, b, signs) {
        Some(x) => Ok(x),
        None => linear_solve(k, b),
    }
}

fn ldlt_refined(k: &SparseMatrix, b: &[f64], signs: &[i8]) -> Option<Vec<f64>> {
    let n = k.nrows;
    let upper: Vec<Triplet<usize, usize, f64>> = k
        .triplets()
        .into_iter()
        .filter(|&(i, j, _)| i <= j)
        .map(|(i, j, v)| Triplet::new(i, j, v))
        .collect();
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &upper).ok()?;
    let symbolic =
        factorize_symbolic_cholesky(a.symbolic(), Side::Upper, SymmetricOrdering::Amd, Default::default()).ok()?;
    let scale = k.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let regularization = LdltRegularization {
        dynamic_regularization_signs: Some(signs),
        dynamic_regularization_delta: 1e-10 * scale,
        dynamic_regularization_epsilon: 1e-14 * scale,
    };
    let mut values = vec![0.0; symbolic.len_val()];
    let mut mem = MemBuffer::new(
        symbolic
            .factorize_numeric_ldlt_scratch::<f64>(Par::Seq, Default::default())
            .or(symbolic.solve_in_place_scratch::<f64>(1, Par::Seq)),
    );
    let ldlt = symbolic
        .factorize_numeric_ldlt(
            &mut values,
            a.as_ref(),
            Side::Upper,
            regularization,
            Par::Seq,
            MemStack::new(&mut mem),
            Default::default(),
        )
        .ok()?;

    let mut solve = |rhs: &[f64]| -> Option<Vec<f64>> {
        let mut x = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
        ldlt.solve_in_place_with_conj(faer::Conj::No, x.as_mut(), Par::Seq, MemStack::new(&mut mem));
        let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
        out.iter().all(|v| v.is_finite()).then_some(out)
    };

    let b_norm = norm(b).max(f64::MIN_POSITIVE);
    let mut x = solve(b)?;
    for _ in 0..LDLT_REFINE_STEPS {
        let r = residual(k, &x, b);
        if norm(&r) / b_norm <= REFINE_THRESHOLD {
            return Some(x);
        }
        let dx = solve(&r)?;
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
    }
    (norm(&residual(k, &x, b)) / b_norm <= REFINE_THRESHOLD).then_some(x)
}

fn residual(k: &SparseMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let kx = k.mul_vec(x);
    b.iter().zip(&kx).map(|(bi, ki)| bi - ki).collect()
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity() {
        let b = [1.0, -2.0, 3.5];
        assert_eq!(linear_solve(&SparseMatrix::identity(3), &b).unwrap(), b);
    }

    #[test]
    fn saddle_two_by_two() {
        let k = SparseMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0)]);
        let x = linear_solve(&k, &[3.0, 1.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 50;
        let m: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let mut trip = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let mut v: f64 = (0..n).map(|k| m[k][i] * m[k][j]).sum();
                if i == j {
                    v += 1.0;
                }
                trip.push((i, j, v));
            }
        }
        let k = SparseMatrix::from_triplets(n, n, &trip);
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = linear_solve(&k, &b).unwrap();
        assert!(norm(&residual(&k, &x, &b)) <= 1e-12 * norm(&b));
    }

    #[test]
    fn symmetric_saddle_matches_lu() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (nu, nq) = (30, 8);
        let n = nu + nq;
        let mut trip = Vec::new();
        for i in 0..nu {
            trip.push((i, i, 4.0 + rng.random_range(0.0..1.0)));
            if i + 1 < nu {
                trip.push((i, i + 1, -1.0));
                trip.push((i + 1, i, -1.0));
            }
        }
        for q in 0..nq {
            for _ in 0..3 {
                let i = rng.random_range(0..nu);
                let v = rng.random_range(-1.0..1.0);
                trip.push((i, nu + q, v));
                trip.push((nu + q, i, v));
            }
        }
        let k = SparseMatrix::from_triplets(n, n, &trip);
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let signs: Vec<i8> = (0..n).map(|i| if i < nu { 1 } else { -1 }).collect();
        let x = linear_solve_symmetric(&k, &b, &signs).unwrap();
        let y = linear_solve(&k, &b).unwrap();
        assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-10));
        assert!(norm(&residual(&k, &x, &b)) <= 1e-10 * norm(&b));
    }

    #[test]
    fn symmetric_singular_falls_back_to_error() {
        let k = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(linear_solve_symmetric(&k, &[1.0, 2.0], &[1, 1]).is_err());
    }

    #[test]
    fn singular_detected() {
        let k = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(matches!(
            linear_solve(&k, &[1.0, 2.0]),
            Err(Error::SingularMatrix { .. })
        ));
        let z = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0)]);
        assert!(matches!(
            linear_solve(&z, &[1.0, 0.0]),
            Err(Error::SingularMatrix { pivot: 1, .. })
        ));
    }
}
