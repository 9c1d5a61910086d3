//! Flat-slice matrix kernels.
//!
//! The microkernels hold a 4×16 accumulator tile in registers and stream
//! rows of `B` through it; large `B` matrices are processed in k-panels so
//! each panel stays cache-resident. Accumulation order per output element is
//! always ascending over the inner dimension and never depends on how row
//! blocks are distributed over threads, so repeated runs produce bit-identical
//! results.

use std::cell::RefCell;

use rayon::prelude::*;

/// Below this many multiply-adds the rayon dispatch overhead dominates.
const PAR_THRESHOLD: usize = 1 << 16;

thread_local! {
    /// Scratch for the transposed-product route in [`gemm_tn`].
    static TN_SCRATCH: RefCell<(Vec<f64>, Vec<f64>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

/// Rows per register tile.
const MR: usize = 4;
/// Columns per register strip (two AVX-512 lanes of f64).
const NR: usize = 16;
/// k-panel size: keeps a `B` panel around 1 MB.
const KP: usize = 128;

/// Fixed 4-way unrolled dot product. The manual accumulator split defines the
/// reassociation once, instead of leaving it to the autovectorizer.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let chunks = a.len() / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..chunks {
        let j = i * 4;
        s0 = a[j].mul_add(b[j], s0);
        s1 = a[j + 1].mul_add(b[j + 1], s1);
        s2 = a[j + 2].mul_add(b[j + 2], s2);
        s3 = a[j + 3].mul_add(b[j + 3], s3);
    }
    let mut tail = 0.0;
    for j in chunks * 4..a.len() {
        tail = a[j].mul_add(b[j], tail);
    }
    (s0 + s1) + (s2 + s3) + tail
}

/// `C[i0..i0+MR, j0..j0+NR] += A[i0..i0+MR, k0..k1] · B[k0..k1, j0..j0+NR]`,
/// accumulators kept in registers across the whole k window.
#[inline]
fn tile_full(
    c: &mut [f64],
    a: &[f64],
    b: &[f64],
    k: usize,
    (k0, k1): (usize, usize),
    n: usize,
    i0: usize,
    j0: usize,
) {
    let a0 = &a[i0 * k..(i0 + 1) * k];
    let a1 = &a[(i0 + 1) * k..(i0 + 2) * k];
    let a2 = &a[(i0 + 2) * k..(i0 + 3) * k];
    let a3 = &a[(i0 + 3) * k..(i0 + 4) * k];
    let mut acc = [[0.0f64; NR]; MR];
    for (r, row) in acc.iter_mut().enumerate() {
        row.copy_from_slice(&c[(i0 + r) * n + j0..(i0 + r) * n + j0 + NR]);
    }
    for kk in k0..k1 {
        let bs: &[f64] = &b[kk * n + j0..kk * n + j0 + NR];
        let (av0, av1, av2, av3) = (a0[kk], a1[kk], a2[kk], a3[kk]);
        for t in 0..NR {
            let bv = bs[t];
            acc[0][t] = av0.mul_add(bv, acc[0][t]);
            acc[1][t] = av1.mul_add(bv, acc[1][t]);
            acc[2][t] = av2.mul_add(bv, acc[2][t]);
            acc[3][t] = av3.mul_add(bv, acc[3][t]);
        }
    }
    for (r, row) in acc.iter().enumerate() {
        c[(i0 + r) * n + j0..(i0 + r) * n + j0 + NR].copy_from_slice(row);
    }
}

/// Generic tile for short row blocks or column tails.
#[inline]
fn tile_tail(
    c: &mut [f64],
    a: &[f64],
    b: &[f64],
    k: usize,
    (k0, k1): (usize, usize),
    n: usize,
    i0: usize,
    j0: usize,
    h: usize,
) {
    let width = (n - j0).min(NR);
    let mut acc = [[0.0f64; NR]; MR];
    for (r, row) in acc.iter_mut().enumerate().take(h) {
        row[..width].copy_from_slice(&c[(i0 + r) * n + j0..(i0 + r) * n + j0 + width]);
    }
    for kk in k0..k1 {
        let bs = &b[kk * n + j0..kk * n + j0 + width];
        for r in 0..h {
            let av = a[(i0 + r) * k + kk];
            let row = &mut acc[r];
            for (t, &bv) in bs.iter().enumerate() {
                row[t] = av.mul_add(bv, row[t]);
            }
        }
    }
    for (r, row) in acc.iter().enumerate().take(h) {
        c[(i0 + r) * n + j0..(i0 + r) * n + j0 + width].copy_from_slice(&row[..width]);
    }
}

/// Accumulates a block of full rows over one k window.
fn gemm_block(c_rows: &mut [f64], a_rows: &[f64], b: &[f64], k: usize, kw: (usize, usize), n: usize) {
    let m = c_rows.len() / n;
    let mut i0 = 0;
    while i0 < m {
        let h = (m - i0).min(MR);
        let mut j0 = 0;
        while j0 + NR <= n {
            if h == MR {
                tile_full(c_rows, a_rows, b, k, kw, n, i0, j0);
            } else {
                tile_tail(c_rows, a_rows, b, k, kw, n, i0, j0, h);
            }
            j0 += NR;
        }
        if j0 < n {
            tile_tail(c_rows, a_rows, b, k, kw, n, i0, j0, h);
        }
        i0 += h;
    }
}

/// `c += a · b` for row-major `a (m×k)`, `b (k×n)`, `c (m×n)`.
pub fn gemm_acc(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let parallel = m * k * n >= PAR_THRESHOLD && m > MR;
    // Sequential k panels keep large `b` cache-resident; per-element
    // accumulation order is unchanged.
    let panel = if k * n * 8 > (6 << 20) { KP } else { k };
    let mut k0 = 0;
    while k0 < k {
        let k1 = (k0 + panel).min(k);
        if parallel {
            let threads = rayon::current_num_threads().max(1);
            let rows_per = m.div_ceil(threads).max(MR);
            c.par_chunks_mut(rows_per * n)
                .zip(a.par_chunks(rows_per * k))
                .for_each(|(crows, arows)| gemm_block(crows, arows, b, k, (k0, k1), n));
        } else {
            gemm_block(c, a, b, k, (k0, k1), n);
        }
        k0 = k1;
    }
}

/// `c = a · b`.
pub fn gemm(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    c.fill(0.0);
    gemm_acc(c, a, b, m, k, n);
}

/// `c = aᵀ · b` for row-major `a (p×m)`, `b (p×n)`, `c (m×n)`.
///
/// Computed as `(bᵀ · a)ᵀ` with two small transposes when the output is tall,
/// so the register kernel streams the large operand row-wise. Both routes add
/// in ascending `p` per element, and multiplication commutes, so the results
/// are bit-identical.
pub fn gemm_tn(c: &mut [f64], a: &[f64], b: &[f64], p: usize, m: usize, n: usize) {
    debug_assert_eq!(a.len(), p * m);
    debug_assert_eq!(b.len(), p * n);
    debug_assert_eq!(c.len(), m * n);
    if m > 4 * n && p * m >= PAR_THRESHOLD {
        TN_SCRATCH.with(|cell| {
            let (bt, ct) = &mut *cell.borrow_mut();
            bt.resize(n * p, 0.0);
            ct.resize(n * m, 0.0);
            transpose_into(b, &mut bt[..n * p], p, n);
            gemm(&mut ct[..n * m], &bt[..n * p], a, n, p, m);
            transpose_into(&ct[..n * m], c, n, m);
        });
        return;
    }
    c.fill(0.0);
    if p * m * n >= PAR_THRESHOLD && m > MR {
        let threads = rayon::current_num_threads().max(1);
        let rows_per = m.div_ceil(threads).max(MR);
        c.par_chunks_mut(rows_per * n)
            .enumerate()
            .for_each(|(t, crows)| {
                let i0 = t * rows_per;
                let i1 = (i0 + crows.len() / n).min(m);
                gemm_tn_block(crows, a, b, m, n, (0, p), (i0, i1));
            });
    } else {
        gemm_tn_block(c, a, b, m, n, (0, p), (0, m));
    }
}

fn gemm_tn_block(
    c: &mut [f64],
    a: &[f64],
    b: &[f64],
    m: usize,
    n: usize,
    (p0, p1): (usize, usize),
    (i0, i1): (usize, usize),
) {
    let mut i = i0;
    while i < i1 {
        let h = (i1 - i).min(MR);
        let mut j0 = 0;
        while j0 < n {
            let width = (n - j0).min(NR);
            let mut acc = [[0.0f64; NR]; MR];
            for (r, row) in acc.iter_mut().enumerate().take(h) {
                row[..width]
                    .copy_from_slice(&c[(i - i0 + r) * n + j0..(i - i0 + r) * n + j0 + width]);
            }
            for p in p0..p1 {
                let bs = &b[p * n + j0..p * n + j0 + width];
                for r in 0..h {
                    let av = a[p * m + i + r];
                    let row = &mut acc[r];
                    for (t, &bv) in bs.iter().enumerate() {
                        row[t] = av.mul_add(bv, row[t]);
                    }
                }
            }
            for (r, row) in acc.iter().enumerate().take(h) {
                c[(i - i0 + r) * n + j0..(i - i0 + r) * n + j0 + width]
                    .copy_from_slice(&row[..width]);
            }
            j0 += width;
        }
        i += h;
    }
}

/// `c = a · bᵀ` for row-major `a (m×k)`, `b (n×k)`, `c (m×n)`.
pub fn gemm_nt(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    let work = m * k * n;
    if work >= PAR_THRESHOLD && m >= rayon::current_num_threads() {
        c.par_chunks_mut(n)
            .zip(a.par_chunks(k))
            .for_each(|(crow, arow)| {
                for (j, cv) in crow.iter_mut().enumerate() {
                    *cv = dot(arow, &b[j * k..(j + 1) * k]);
                }
            });
    } else if work >= PAR_THRESHOLD {
        // Few output rows: parallelize across columns instead.
        for (crow, arow) in c.chunks_mut(n).zip(a.chunks(k)) {
            crow.par_iter_mut().enumerate().for_each(|(j, cv)| {
                *cv = dot(arow, &b[j * k..(j + 1) * k]);
            });
        }
    } else {
        for (crow, arow) in c.chunks_mut(n).zip(a.chunks(k)) {
            for (j, cv) in crow.iter_mut().enumerate() {
                *cv = dot(arow, &b[j * k..(j + 1) * k]);
            }
        }
    }
}

/// Row-major transpose `src (m×n)` into `dst (n×m)`, in cache-friendly tiles.
pub fn transpose_into(src: &[f64], dst: &mut [f64], m: usize, n: usize) {
    debug_assert_eq!(src.len(), m * n);
    debug_assert_eq!(dst.len(), m * n);
    const T: usize = 32;
    let mut i0 = 0;
    while i0 < m {
        let i1 = (i0 + T).min(m);
        let mut j0 = 0;
        while j0 < n {
            let j1 = (j0 + T).min(n);
            for i in i0..i1 {
                for j in j0..j1 {
                    dst[j * m + i] = src[i * n + j];
                }
            }
            j0 = j1;
        }
        i0 = i1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for kk in 0..k {
                    acc = a[i * k + kk].mul_add(b[kk * n + j], acc);
                }
                c[i * n + j] = acc;
            }
        }
        c
    }

    #[test]
    fn blocked_gemm_matches_naive_over_odd_shapes() {
        for &(m, k, n) in &[(1, 1, 1), (3, 5, 7), (9, 4, 17), (33, 25, 50), (64, 13, 16)] {
            let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
            let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
            let mut c = vec![0.0; m * n];
            gemm(&mut c, &a, &b, m, k, n);
            let want = naive(&a, &b, m, k, n);
            for (x, y) in c.iter().zip(&want) {
                assert!((x - y).abs() < 1e-12, "{m}x{k}x{n}");
            }
        }
    }

    #[test]
    fn gemm_tn_matches_explicit_transpose() {
        for &(p, m, n) in &[(13usize, 7usize, 5usize), (40, 33, 17), (7, 4, 16), (300, 90, 11)] {
            let a: Vec<f64> = (0..p * m).map(|i| (i as f64 * 0.37).sin()).collect();
            let b: Vec<f64> = (0..p * n).map(|i| (i as f64 * 0.11).cos()).collect();
            let mut at = vec![0.0; m * p];
            transpose_into(&a, &mut at, p, m);
            let want = naive(&at, &b, m, p, n);
            let mut got = vec![0.0; m * n];
            gemm_tn(&mut got, &a, &b, p, m, n);
            for (w, g) in want.iter().zip(&got) {
                assert!((w - g).abs() < 1e-12, "{p}x{m}x{n}");
            }
        }
    }

    #[test]
    fn gemm_nt_matches_naive() {
        let (m, k, n) = (6usize, 9usize, 11usize);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.21).sin()).collect();
        let b: Vec<f64> = (0..n * k).map(|i| (i as f64 * 0.13).cos()).collect();
        let mut bt = vec![0.0; k * n];
        transpose_into(&b, &mut bt, n, k);
        let want = naive(&a, &bt, m, k, n);
        let mut got = vec![0.0; m * n];
        gemm_nt(&mut got, &a, &b, m, k, n);
        for (w, g) in want.iter().zip(&got) {
            assert!((w - g).abs() < 1e-12);
        }
    }

    #[test]
    fn k_panels_change_nothing_bitwise() {
        // 8 MB b matrix forces the panel path.
        let (m, k, n) = (8usize, 2048usize, 512usize);
        let a: Vec<f64> = (0..m * k).map(|i| ((i * 2654435761) as f64).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| ((i * 40503) as f64).cos()).collect();
        let mut paneled = vec![0.0; m * n];
        gemm(&mut paneled, &a, &b, m, k, n);
        let mut single = vec![0.0; m * n];
        gemm_block(&mut single, &a, &b, k, (0, k), n);
        assert_eq!(paneled, single);
    }

    #[test]
    fn parallel_and_serial_gemm_agree_bitwise() {
        let m = 300;
        let k = 64;
        let n = 48;
        let a: Vec<f64> = (0..m * k).map(|i| ((i * 2654435761) as f64).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| ((i * 40503) as f64).cos()).collect();
        let mut big = vec![0.0; m * n];
        gemm(&mut big, &a, &b, m, k, n); // over threshold, parallel path
        let mut small = vec![0.0; m * n];
        gemm_block(&mut small, &a, &b, k, (0, k), n);
        assert_eq!(big, small);
    }
}
