//! Zero-padded, stride-1 patch extraction.
//!
//! Both the conv layers and the closed-form conv solver unroll images into
//! rows of flattened local patches, so the exact row layout lives here and
//! nowhere else. A patch row is ordered channel-major: index
//! `c·K_H·K_W + u·K_W + v`.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Below this volume the rayon dispatch overhead dominates.
const PAR_THRESHOLD: usize = 1 << 16;

/// Geometry of a stride-1, size-preserving convolution over `C×H×W` images.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvGeometry {
    pub fn new(channels: usize, height: usize, width: usize, kh: usize, kw: usize) -> Result<Self> {
        if kh % 2 == 0 || kw % 2 == 0 {
            // Even kernels have no well-defined center pixel.
            return Err(Error::Unsupported(format!(
                "even kernel dims {kh}x{kw}: center is not defined"
            )));
        }
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::shape("ConvGeometry", "zero-sized image"));
        }
        Ok(ConvGeometry {
            channels,
            height,
            width,
            kh,
            kw,
        })
    }

    /// Length of one flattened patch row.
    pub fn row_len(&self) -> usize {
        self.kh * self.kw * self.channels
    }

    /// Number of patch positions (`|Ξ| = H·W`).
    pub fn positions(&self) -> usize {
        self.height * self.width
    }

    /// Column holding the center pixel of channel `c` in a patch row.
    pub fn center_col(&self, c: usize) -> usize {
        c * self.kh * self.kw + (self.kh / 2) * self.kw + self.kw / 2
    }

    pub fn pixels(&self) -> usize {
        self.channels * self.height * self.width
    }
}

/// Unrolls one `C×H×W` image into `H·W` patch rows, row-major over `(i, j)`.
///
/// `out` must have length `positions() * row_len()`.
pub fn im2col(img: &[f64], g: &ConvGeometry, out: &mut [f64]) {
    let rl = g.row_len();
    debug_assert_eq!(img.len(), g.pixels());
    debug_assert_eq!(out.len(), g.positions() * rl);
    if g.positions() * rl >= PAR_THRESHOLD {
        out.par_chunks_mut(rl)
            .enumerate()
            .for_each(|(pos, row)| fill_patch_row(img, g, pos / g.width, pos % g.width, row));
    } else {
        for (pos, row) in out.chunks_mut(rl).enumerate() {
            fill_patch_row(img, g, pos / g.width, pos % g.width, row);
        }
    }
}

#[inline]
fn fill_patch_row(img: &[f64], g: &ConvGeometry, i: usize, j: usize, row: &mut [f64]) {
    let (h, w) = (g.height, g.width);
    let (kh, kw) = (g.kh, g.kw);
    let (ph, pw) = (kh / 2, kw / 2);
    let mut idx = 0;
    for c in 0..g.channels {
        let plane = &img[c * h * w..(c + 1) * h * w];
        for u in 0..kh {
            let y = i as isize + u as isize - ph as isize;
            if y < 0 || y >= h as isize {
                row[idx..idx + kw].fill(0.0);
                idx += kw;
                continue;
            }
            let base = y as usize * w;
            // Interior columns copied as one contiguous run.
            let x0 = j as isize - pw as isize;
            let lo = (-x0).clamp(0, kw as isize) as usize;
            let hi = ((w as isize - x0).clamp(0, kw as isize)) as usize;
            row[idx..idx + lo].fill(0.0);
            if hi > lo {
                let src0 = (x0 + lo as isize) as usize;
                row[idx + lo..idx + hi].copy_from_slice(&plane[base + src0..base + src0 + (hi - lo)]);
            }
            row[idx + hi..idx + kw].fill(0.0);
            idx += kw;
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch-row gradients back onto image
/// pixels. Written as a gather per pixel so it is race-free and the
/// accumulation order is fixed.
pub fn col2im(col: &[f64], g: &ConvGeometry, out: &mut [f64]) {
    let (h, w) = (g.height, g.width);
    let rl = g.row_len();
    debug_assert_eq!(out.len(), g.pixels());
    debug_assert_eq!(col.len(), g.positions() * rl);
    let gather_row = |c: usize, y: usize, orow: &mut [f64]| {
        let (kh, kw) = (g.kh, g.kw);
        let (ph, pw) = (kh / 2, kw / 2);
        for (x, o) in orow.iter_mut().enumerate() {
            let mut acc = 0.0f64;
            for u in 0..kh {
                let i = y as isize + ph as isize - u as isize;
                if i < 0 || i >= h as isize {
                    continue;
                }
                for v in 0..kw {
                    let j = x as isize + pw as isize - v as isize;
                    if j < 0 || j >= w as isize {
                        continue;
                    }
                    let pos = i as usize * w + j as usize;
                    acc += col[pos * rl + c * kh * kw + u * kw + v];
                }
            }
            *o = acc;
        }
    };
    if g.positions() * rl >= PAR_THRESHOLD {
        out.par_chunks_mut(w)
            .enumerate()
            .for_each(|(r, orow)| gather_row(r / h, r % h, orow));
    } else {
        for (r, orow) in out.chunks_mut(w).enumerate() {
            gather_row(r / h, r % h, orow);
        }
    }
}
