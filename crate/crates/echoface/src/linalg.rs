//! Dense symmetric linear algebra for the ridge solver.
//!
//! The normal equations here are about 5000x5000, so the Cholesky
//! factorization is blocked: small diagonal blocks factor naively, panels
//! solve by substitution, and the trailing update runs as column-chunked
//! matrix products in parallel. Every output element is produced by exactly
//! one chunk with a fixed operand order, so results are bit-reproducible
//! regardless of thread scheduling.

use ndarray::{linalg::general_mat_mul, s, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::Error;

const BLOCK: usize = 256;

/// `g += x^T x`, writing the upper triangle (including the diagonal) only.
/// The lower triangle is left untouched; mirror it when a full matrix is
/// needed.
pub fn accumulate_gram_upper(g: &mut Array2<f64>, x: &ArrayView2<f64>) {
    let d = g.nrows();
    assert_eq!(g.ncols(), d);
    assert_eq!(x.ncols(), d);

    let chunks: Vec<_> = g.axis_chunks_iter_mut(Axis(1), BLOCK).collect();
    chunks.into_par_iter().enumerate().for_each(|(ci, mut chunk)| {
        let c0 = ci * BLOCK;
        let c1 = c0 + chunk.ncols();
        // Upper triangle: rows 0..c1 of this column block.
        let xt = x.slice(s![.., 0..c1]);
        let xb = x.slice(s![.., c0..c1]);
        let mut target = chunk.slice_mut(s![0..c1, ..]);
        general_mat_mul(1.0, &xt.t(), &xb, 1.0, &mut target);
    });
}

/// Copy the upper triangle onto the lower to make the matrix fully symmetric.
pub fn mirror_upper_to_lower(a: &mut Array2<f64>) {
    let d = a.nrows();
    for i in 1..d {
        for j in 0..i {
            a[[i, j]] = a[[j, i]];
        }
    }
}

/// In-place blocked Cholesky factorization `A = L L^T`, storing `L` in the
/// lower triangle. The strict upper triangle is left stale. Fails if a pivot
/// is not strictly positive (matrix not positive definite).
pub fn cholesky_in_place(a: &mut Array2<f64>) -> Result<(), Error> {
    let d = a.nrows();
    assert_eq!(a.ncols(), d);

    let mut k0 = 0;
    while k0 < d {
        let nb = BLOCK.min(d - k0);
        let k1 = k0 + nb;

        // 1. Factor the diagonal block in place.
        for j in k0..k1 {
            let mut pivot = a[[j, j]];
            for m in k0..j {
                pivot -= a[[j, m]] * a[[j, m]];
            }
            if pivot <= 0.0 || !pivot.is_finite() {
                return Err(Error::data(format!(
                    "matrix is not positive definite at pivot {j} ({pivot:.3e})"
                )));
            }
            let ljj = pivot.sqrt();
            a[[j, j]] = ljj;
            for i in j + 1..k1 {
                let mut v = a[[i, j]];
                for m in k0..j {
                    v -= a[[i, m]] * a[[j, m]];
                }
                a[[i, j]] = v / ljj;
            }
        }

        if k1 == d {
            break;
        }

        // 2. Panel solve: X * L_kk^T = A[k1.., k0..k1], in place. Each row
        // solves independently, which keeps the sweeps on contiguous memory.
        let diag: Array2<f64> = a.slice(s![k0..k1, k0..k1]).to_owned();
        let mut panel = a.slice_mut(s![k1..d, k0..k1]);
        let chunks: Vec<_> = panel.axis_chunks_iter_mut(Axis(0), 512).collect();
        chunks.into_par_iter().for_each(|mut chunk| {
            for mut row in chunk.rows_mut() {
                let r = row.as_slice_mut().expect("contiguous panel row");
                for j in 0..nb {
                    let mut v = r[j];
                    for m in 0..j {
                        v -= r[m] * diag[[j, m]];
                    }
                    r[j] = v / diag[[j, j]];
                }
            }
        });

        // 3. Trailing update: A[k1.., k1..] -= X X^T on the lower triangle,
        // column chunks in parallel.
        let panel = a.slice(s![k1..d, k0..k1]).to_owned();
        let mut trailing = a.slice_mut(s![k1..d, k1..d]);
        let chunks: Vec<_> = trailing.axis_chunks_iter_mut(Axis(1), BLOCK).collect();
        chunks.into_par_iter().enumerate().for_each(|(ci, mut chunk)| {
            let c0 = ci * BLOCK;
            let c1 = c0 + chunk.ncols();
            let rows = panel.slice(s![c0.., ..]);
            let cols = panel.slice(s![c0..c1, ..]);
            let mut target = chunk.slice_mut(s![c0.., ..]);
            general_mat_mul(-1.0, &rows, &cols.t(), 1.0, &mut target);
        });

        k0 = k1;
    }
    Ok(())
}

/// Solve `A x = b` for multiple right-hand sides given the Cholesky factor
/// `L` (lower triangle of `l`): forward then backward substitution.
pub fn solve_cholesky(l: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let d = l.nrows();
    let k = b.ncols();
    assert_eq!(b.nrows(), d);
    let mut x = b.clone();

    // L y = b
    for i in 0..d {
        for m in 0..i {
            let lim = l[[i, m]];
            if lim != 0.0 {
                for c in 0..k {
                    x[[i, c]] = x[[i, c]] - lim * x[[m, c]];
                }
            }
        }
        let lii = l[[i, i]];
        for c in 0..k {
            x[[i, c]] /= lii;
        }
    }
    // L^T x = y, right-looking so only contiguous rows of L are read: once
    // x_m is final, its contribution L[m, j] * x_m leaves every earlier
    // equation j.
    for m in (0..d).rev() {
        let lmm = l[[m, m]];
        for c in 0..k {
            x[[m, c]] /= lmm;
        }
        let (head, tail) = x.view_mut().split_at(Axis(0), m);
        let xm = tail.row(0);
        let lrow = l.row(m);
        let mut head = head;
        for j in 0..m {
            let lmj = lrow[j];
            if lmj != 0.0 {
                let mut row = head.row_mut(j);
                for c in 0..k {
                    row[c] -= lmj * xm[c];
                }
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((d + 8, d), |_| rng.gen_range(-1.0..1.0));
        let mut a = Array2::zeros((d, d));
        general_mat_mul(1.0, &x.t(), &x.view(), 0.0, &mut a);
        for i in 0..d {
            a[[i, i]] += 0.5;
        }
        a
    }

    /// Textbook unblocked Cholesky for cross-checking the blocked one.
    fn cholesky_naive(a: &Array2<f64>) -> Array2<f64> {
        let d = a.nrows();
        let mut l = Array2::zeros((d, d));
        for i in 0..d {
            for j in 0..=i {
                let mut s = a[[i, j]];
                for m in 0..j {
                    s -= l[[i, m]] * l[[j, m]];
                }
                if i == j {
                    l[[i, j]] = s.sqrt();
                } else {
                    l[[i, j]] = s / l[[j, j]];
                }
            }
        }
        l
    }

    #[test]
    fn blocked_cholesky_matches_naive_across_block_boundaries() {
        // 700 spans two 256-blocks plus a ragged tail.
        for (d, seed) in [(64usize, 0u64), (300, 1), (700, 2)] {
            let a = random_spd(d, seed);
            let mut blocked = a.clone();
            cholesky_in_place(&mut blocked).unwrap();
            let naive = cholesky_naive(&a);
            let mut max_err = 0.0f64;
            for i in 0..d {
                for j in 0..=i {
                    max_err = max_err.max((blocked[[i, j]] - naive[[i, j]]).abs());
                }
            }
            assert!(max_err < 1e-8, "d={d}: max err {max_err}");
        }
    }

    #[test]
    fn solve_recovers_known_solution() {
        let d = 500;
        let a = random_spd(d, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x_true = Array2::from_shape_fn((d, 3), |_| rng.gen_range(-2.0..2.0));
        let mut b = Array2::zeros((d, 3));
        general_mat_mul(1.0, &a.view(), &x_true.view(), 0.0, &mut b);

        let mut l = a.clone();
        cholesky_in_place(&mut l).unwrap();
        let x = solve_cholesky(&l, &b);
        let max_err = x
            .iter()
            .zip(x_true.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-8, "max err {max_err}");
    }

    #[test]
    fn non_positive_definite_is_detected() {
        let mut a = Array2::zeros((4, 4));
        for i in 0..4 {
            a[[i, i]] = 1.0;
        }
        a[[3, 3]] = -1.0;
        assert!(cholesky_in_place(&mut a).is_err());

        // Singular (rank deficient) also fails.
        let ones = Array1::<f64>::ones(6);
        let mut g = Array2::zeros((6, 6));
        for i in 0..6 {
            for j in 0..6 {
                g[[i, j]] = ones[i] * ones[j];
            }
        }
        assert!(cholesky_in_place(&mut g).is_err());
    }

    #[test]
    fn gram_accumulation_matches_direct_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (m, d) = (97, 530);
        let x = Array2::from_shape_fn((m, d), |_| rng.gen_range(-1.0..1.0));
        let mut g = Array2::zeros((d, d));
        accumulate_gram_upper(&mut g, &x.view());
        accumulate_gram_upper(&mut g, &x.view());
        mirror_upper_to_lower(&mut g);

        let mut want = Array2::zeros((d, d));
        general_mat_mul(2.0, &x.t(), &x.view(), 0.0, &mut want);
        let max_err = g
            .iter()
            .zip(want.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-9, "max err {max_err}");
    }
}
