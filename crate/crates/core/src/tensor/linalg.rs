//! One-sided Jacobi SVD, numerical rank, and Gram-system solves.

use super::{gemm, Tensor};
use crate::error::{Error, Result};

/// Off-diagonal ratio below which a column pair counts as orthogonal.
const JACOBI_TOL: f64 = 1e-14;
/// Sweep cap; Jacobi converges in well under ten sweeps on the matrix sizes
/// used here, so hitting this means something is numerically wrong.
const MAX_SWEEPS: usize = 100;
/// Gram systems with a larger condition estimate are reported rank-deficient.
const GRAM_COND_LIMIT: f64 = 1e12;

/// Thin singular value decomposition `a = U · diag(S) · Vᵀ`.
///
/// `U` is `m×r`, `V` is `n×r` with `r = min(m, n)`; `S` is non-negative and
/// descending.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Tensor,
    pub s: Vec<f64>,
    pub v: Tensor,
}

pub fn svd(a: &Tensor) -> Result<Svd> {
    let (m, n) = a.as2d()?;
    if !a.is_finite() {
        return Err(Error::invalid("svd", "non-finite input"));
    }
    if m >= n {
        svd_tall(a, m, n)
    } else {
        let t = a.transpose()?;
        let Svd { u, s, v } = svd_tall(&t, n, m)?;
        Ok(Svd { u: v, s, v: u })
    }
}

/// One-sided Jacobi on columns; requires `m >= n`.
fn svd_tall(a: &Tensor, m: usize, n: usize) -> Result<Svd> {
    // Column-major working copies: column ops stay contiguous.
    let mut b = vec![0.0f64; m * n];
    gemm::transpose_into(a.data(), &mut b, m, n);
    let mut v = vec![0.0f64; n * n];
    for j in 0..n {
        v[j * n + j] = 1.0;
    }

    let mut converged = false;
    for _sweep in 0..MAX_SWEEPS {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                let (bp, bq) = pair_mut(&mut b, p, q, m);
                let app = gemm::dot(bp, bp);
                let aqq = gemm::dot(bq, bq);
                let apq = gemm::dot(bp, bq);
                if app == 0.0 || aqq == 0.0 {
                    continue;
                }
                let ratio = apq.abs() / (app * aqq).sqrt();
                off = off.max(ratio);
                if ratio <= JACOBI_TOL {
                    continue;
                }
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(bp, bq, c, s);
                let (vp, vq) = pair_mut(&mut v, p, q, n);
                rotate(vp, vq, c, s);
            }
        }
        if off <= JACOBI_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            op: "svd",
            iterations: MAX_SWEEPS,
        });
    }

    let mut sigma: Vec<f64> = (0..n)
        .map(|j| gemm::dot(&b[j * m..(j + 1) * m], &b[j * m..(j + 1) * m]).sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap());
    sigma = order.iter().map(|&j| sigma[j]).collect();

    // Columns with a nonzero singular value are normalized; the rest get an
    // orthonormal completion so U always has orthonormal columns.
    let smax = sigma[0];
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (rank_pos, &j) in order.iter().enumerate() {
        let col = &b[j * m..(j + 1) * m];
        let s = sigma[rank_pos];
        if s > smax * f64::EPSILON && s > 0.0 {
            u_cols.push(col.iter().map(|&x| x / s).collect());
        } else {
            u_cols.push(vec![0.0; m]);
        }
    }
    complete_orthonormal(&mut u_cols, m);

    let mut u = Tensor::zeros(&[m, n]);
    for (jj, col) in u_cols.iter().enumerate() {
        for i in 0..m {
            u.data_mut()[i * n + jj] = col[i];
        }
    }
    let mut vt = Tensor::zeros(&[n, n]);
    for (jj, &j) in order.iter().enumerate() {
        for i in 0..n {
            vt.data_mut()[i * n + jj] = v[j * n + i];
        }
    }
    Ok(Svd { u, s: sigma, v: vt })
}

fn pair_mut(data: &mut [f64], p: usize, q: usize, len: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(p < q);
    let (head, tail) = data.split_at_mut(q * len);
    (&mut head[p * len..(p + 1) * len], &mut tail[..len])
}

fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        let xv = *xi;
        let yv = *yi;
        *xi = c * xv - s * yv;
        *yi = s * xv + c * yv;
    }
}

/// Replaces zero columns with vectors orthonormal to every other column.
fn complete_orthonormal(cols: &mut [Vec<f64>], m: usize) {
    for j in 0..cols.len() {
        if cols[j].iter().any(|&x| x != 0.0) {
            continue;
        }
        'candidates: for e in 0..m {
            let mut cand = vec![0.0; m];
            cand[e] = 1.0;
            for _ in 0..2 {
                for (k, other) in cols.iter().enumerate() {
                    if k == j {
                        continue;
                    }
                    let proj = gemm::dot(&cand, other);
                    for (cv, &ov) in cand.iter_mut().zip(other) {
                        *cv -= proj * ov;
                    }
                }
            }
            let norm = gemm::dot(&cand, &cand).sqrt();
            if norm > 0.5 {
                for c in cand.iter_mut() {
                    *c /= norm;
                }
                cols[j] = cand;
                break 'candidates;
            }
        }
    }
}

/// Number of singular values above `rel_tol · σ_max`; 0 for the zero matrix.
pub fn rank_with_tol(a: &Tensor, rel_tol: f64) -> Result<usize> {
    if !(rel_tol > 0.0) {
        return Err(Error::invalid("rank_with_tol", format!("rel_tol = {rel_tol}")));
    }
    let s = svd(a)?.s;
    let smax = s.first().copied().unwrap_or(0.0);
    Ok(s.iter().filter(|&&x| x > rel_tol * smax).count())
}

pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Solves `(X Xᵀ) U = B` for `X (N×D)`, `B (N×d)`.
///
/// Errors when the Gram matrix looks numerically singular (condition estimate
/// above `1e12`), reporting how many rows are dependent.
pub fn solve_gram(x: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (nx, _) = x.as2d()?;
    let (nb, _) = b.as2d()?;
    if nx != nb {
        return Err(Error::shape(
            "solve_gram",
            format!("X has {nx} rows, B has {nb}"),
        ));
    }
    let xt = x.transpose()?;
    let gram = x.matmul(&xt)?;
    spd_solve("solve_gram", &gram, b)
}

/// Solves `G U = B` for symmetric positive semi-definite `G` via its SVD.
pub(crate) fn spd_solve(op: &'static str, g: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, n2) = g.as2d()?;
    debug_assert_eq!(n, n2);
    let Svd { u, s, v } = svd(g)?;
    let smax = s[0];
    let deficient = s
        .iter()
        .filter(|&&x| !(x > smax / GRAM_COND_LIMIT))
        .count();
    if deficient > 0 || smax == 0.0 {
        return Err(Error::RankDeficient {
            op,
            deficient: deficient.max(n.min(1)),
            total: n,
        });
    }
    let mut utb = u.transpose()?.matmul(b)?;
    let d = utb.shape()[1];
    for (i, &si) in s.iter().enumerate() {
        for j in 0..d {
            let v = utb.get2(i, j) / si;
            utb.set2(i, j, v);
        }
    }
    v.matmul(&utb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::rng::{sample, Dist, RngState};

    fn reconstruct(svd: &Svd) -> Tensor {
        let r = svd.s.len();
        let mut us = svd.u.clone();
        let (m, _) = us.as2d().unwrap();
        for i in 0..m {
            for j in 0..r {
                let v = us.get2(i, j) * svd.s[j];
                us.set2(i, j, v);
            }
        }
        us.matmul(&svd.v.transpose().unwrap()).unwrap()
    }

    fn orthonormality_err(t: &Tensor) -> f64 {
        let (_, r) = t.as2d().unwrap();
        let g = t.transpose().unwrap().matmul(t).unwrap();
        g.sub(&Tensor::identity(r)).unwrap().max_abs()
    }

    #[test]
    fn svd_diagonal() {
        let a = Tensor::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let d = svd(&a).unwrap();
        assert!((d.s[0] - 3.0).abs() < 1e-12);
        assert!((d.s[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn svd_rank_one_outer_product() {
        let u = [1.0, -2.0, 0.5, 3.0];
        let v = [2.0, 1.0, -1.0];
        let rows: Vec<Vec<f64>> = u.iter().map(|&a| v.iter().map(|&b| a * b).collect()).collect();
        let a = Tensor::from_rows(&rows).unwrap();
        let d = svd(&a).unwrap();
        let above = d.s.iter().filter(|&&x| x > 1e-10 * d.s[0]).count();
        assert_eq!(above, 1);
    }

    #[test]
    fn svd_random_reconstruction() {
        let mut st = RngState::new(5);
        for &(m, n) in &[(6usize, 4usize), (4, 6), (30, 30)] {
            let a = sample(Dist::gaussian(0.0, 1.0), &[m, n], &mut st).unwrap();
            let d = svd(&a).unwrap();
            let resid = reconstruct(&d).sub(&a).unwrap().frob_norm() / a.frob_norm();
            assert!(resid < 1e-10, "residual {resid} for {m}x{n}");
            assert!(orthonormality_err(&d.u) < 1e-10);
            assert!(orthonormality_err(&d.v) < 1e-10);
            for w in d.s.windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
    }

    #[test]
    fn svd_zero_matrix_has_orthonormal_factors() {
        let a = Tensor::zeros(&[4, 3]);
        let d = svd(&a).unwrap();
        assert!(d.s.iter().all(|&x| x == 0.0));
        assert!(orthonormality_err(&d.u) < 1e-12);
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank_with_tol(&Tensor::zeros(&[4, 4]), 1e-8).unwrap(), 0);
        assert_eq!(rank_with_tol(&Tensor::identity(5), 1e-8).unwrap(), 5);
        let a = Tensor::from_rows(&[vec![1.0, 0.0], vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(rank_with_tol(&a, 1e-8).unwrap(), 2);
    }

    #[test]
    fn rank_matches_transpose() {
        let mut st = RngState::new(11);
        for _ in 0..5 {
            let a = sample(Dist::gaussian(0.0, 1.0), &[7, 4], &mut st).unwrap();
            let r = rank_with_tol(&a, 1e-8).unwrap();
            let rt = rank_with_tol(&a.transpose().unwrap(), 1e-8).unwrap();
            assert_eq!(r, rt);
        }
    }

    #[test]
    fn solve_gram_identity() {
        let x = Tensor::identity(3);
        let b = Tensor::identity(3);
        let u = solve_gram(&x, &b).unwrap();
        assert!(u.sub(&Tensor::identity(3)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn solve_gram_scalar() {
        let x = Tensor::from_rows(&[vec![2.0, 0.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![8.0]]).unwrap();
        let u = solve_gram(&x, &b).unwrap();
        assert!((u.get2(0, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn solve_gram_matches_gaussian_elimination_oracle() {
        let mut st = RngState::new(17);
        let x = sample(Dist::gaussian(0.0, 1.0), &[3, 8], &mut st).unwrap();
        let b = sample(Dist::gaussian(0.0, 1.0), &[3, 2], &mut st).unwrap();
        let u = solve_gram(&x, &b).unwrap();

        // Independent oracle: dense Gaussian elimination with partial pivots.
        let g = x.matmul(&x.transpose().unwrap()).unwrap();
        let n = 3;
        let d = 2;
        let mut aug: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row: Vec<f64> = g.row(i).to_vec();
                row.extend_from_slice(b.row(i));
                row
            })
            .collect();
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| aug[i][col].abs().partial_cmp(&aug[j][col].abs()).unwrap()).unwrap();
            aug.swap(col, piv);
            let pv = aug[col][col];
            for r in 0..n {
                if r != col {
                    let f = aug[r][col] / pv;
                    for c in col..n + d {
                        aug[r][c] -= f * aug[col][c];
                    }
                }
            }
        }
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..d {
                let oracle = aug[i][n + j] / aug[i][i];
                worst = worst.max((oracle - u.get2(i, j)).abs());
            }
        }
        assert!(worst < 1e-9, "max diff vs elimination oracle: {worst}");
    }

    #[test]
    fn solve_gram_reports_deficient_rows() {
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        match solve_gram(&x, &b) {
            Err(Error::RankDeficient { deficient, total, .. }) => {
                assert_eq!(total, 2);
                assert!(deficient >= 1);
            }
            other => panic!("expected rank error, got {other:?}"),
        }
    }
}
