//! Closed-form predictors for one-layer networks and the high-probability
//! error bound for the one-layer conv.
//!
//! The linear-model limits: starting from `W⁰`, gradient descent on
//! `f(x) = Wᵀx` converges to
//! `Ŵ = W⁰ + Xᵀ(XXᵀ)⁻¹(Y − XW⁰)` when the system is overparameterized
//! (rows of `X` independent), and to the least-squares solution
//! `Ŵ = (XᵀX)⁻¹XᵀY` when it is underparameterized (columns independent).
//! The one-layer conv on a single image is the special case where `X` holds
//! the flattened local patches and `Y` their center pixels.

use crate::error::{Error, Result};
use crate::patches::{im2col, ConvGeometry};
use crate::tensor::gemm;
use crate::tensor::linalg::{solve_gram, spd_solve, DEFAULT_RANK_TOL};
use crate::tensor::Tensor;

/// Prediction of the trained one-layer linear net on `x`:
/// `Π_∥(x) + W⁰·Π_⊥(x)` where `Π_∥` projects onto the training example.
pub fn theorem1_predict(w0: &Tensor, xhat: &Tensor, x: &Tensor) -> Result<Tensor> {
    let (d, d2) = w0.as2d()?;
    if d != d2 || xhat.shape() != [d] || x.shape() != [d] {
        return Err(Error::shape(
            "theorem1_predict",
            format!(
                "W⁰ {:?}, x̂ {:?}, x {:?}",
                w0.shape(),
                xhat.shape(),
                x.shape()
            ),
        ));
    }
    let norm_sq = xhat.dot(xhat)?;
    if norm_sq == 0.0 {
        return Err(Error::Degenerate {
            op: "theorem1_predict",
            detail: "training example is the zero vector".into(),
        });
    }
    let alpha = xhat.dot(x)? / norm_sq;
    let parallel = xhat.scale(alpha);
    let perp = x.sub(&parallel)?;
    parallel.add(&w0.matvec(&perp)?)
}

/// The weight matrix gradient descent converges to on a single example:
/// `Ŵ = W⁰ + û x̂ᵀ` with `û = (I − W⁰) x̂ / ‖x̂‖²`.
pub fn theorem1_weight(w0: &Tensor, xhat: &Tensor) -> Result<Tensor> {
    let (d, _) = w0.as2d()?;
    let norm_sq = xhat.dot(xhat)?;
    if norm_sq == 0.0 {
        return Err(Error::Degenerate {
            op: "theorem1_weight",
            detail: "training example is the zero vector".into(),
        });
    }
    let u = xhat.sub(&w0.matvec(xhat)?)?.scale(1.0 / norm_sq);
    let mut w = w0.clone();
    for i in 0..d {
        for j in 0..d {
            let v = w.get2(i, j) + u.data()[i] * xhat.data()[j];
            w.set2(i, j, v);
        }
    }
    Ok(w)
}

/// Gradient-descent limit for the overparameterized linear model
/// (`X` is `N×D` with independent rows, `W⁰` is `D×d`):
/// `Ŵ = W⁰ + Xᵀ(XXᵀ)⁻¹(Y − XW⁰)`.
pub fn gd_limit_overparam(w0: &Tensor, x: &Tensor, y: &Tensor) -> Result<Tensor> {
    let (_, d_feat) = x.as2d()?;
    let (w_rows, _) = w0.as2d()?;
    if w_rows != d_feat {
        return Err(Error::shape(
            "gd_limit_overparam",
            format!("W⁰ {:?} vs X {:?}", w0.shape(), x.shape()),
        ));
    }
    let rhs = y.sub(&x.matmul(w0)?)?;
    let u = solve_gram(x, &rhs)?;
    w0.add(&x.transpose()?.matmul(&u)?)
}

/// Least-squares solution for the underparameterized linear model
/// (`X` is `N×D` with independent columns): `Ŵ = (XᵀX)⁻¹XᵀY`.
pub fn least_squares_underparam(x: &Tensor, y: &Tensor) -> Result<Tensor> {
    let xt = x.transpose()?;
    let gram = xt.matmul(x)?;
    let rhs = xt.matmul(y)?;
    spd_solve("least_squares_underparam", &gram, &rhs)
}

/// The `(X, Y, Ξ)` system of flattened local patches and center pixels.
#[derive(Clone, Debug)]
pub struct PatchMatrix {
    /// `|Ξ| × (K_H·K_W·C)`: one flattened zero-padded patch per coordinate.
    pub x: Tensor,
    /// `|Ξ| × C`: the (multi-channel) center pixel of each patch.
    pub y: Tensor,
    /// Row-major coordinate order of `Ξ`.
    pub coords: Vec<(usize, usize)>,
    pub geometry: ConvGeometry,
}

impl PatchMatrix {
    /// The canonical center selector `Λ` with `X·Λ = Y` exactly.
    pub fn center_selector(&self) -> Tensor {
        let g = &self.geometry;
        let mut lam = Tensor::zeros(&[g.row_len(), g.channels]);
        for c in 0..g.channels {
            lam.set2(g.center_col(c), c, 1.0);
        }
        lam
    }
}

/// Builds the patch system of a `C×H×W` image for odd `K_H×K_W` kernels.
pub fn extract_patches(image: &Tensor, kh: usize, kw: usize) -> Result<PatchMatrix> {
    let &[c, h, w] = image.shape() else {
        return Err(Error::shape(
            "extract_patches",
            format!("expected [C, H, W], got {:?}", image.shape()),
        ));
    };
    let geometry = ConvGeometry::new(c, h, w, kh, kw)?;
    let mut x = Tensor::zeros(&[geometry.positions(), geometry.row_len()]);
    im2col(image.data(), &geometry, x.data_mut());
    let mut y = Tensor::zeros(&[geometry.positions(), c]);
    let mut coords = Vec::with_capacity(geometry.positions());
    for i in 0..h {
        for j in 0..w {
            coords.push((i, j));
            for ch in 0..c {
                y.set2(i * w + j, ch, image.data()[ch * h * w + i * w + j]);
            }
        }
    }
    Ok(PatchMatrix {
        x,
        y,
        coords,
        geometry,
    })
}

/// Selects a linearly independent subset of rows by modified Gram–Schmidt,
/// carrying the matching `Y` rows along. Returns the kept row indices.
pub fn reduce_to_row_basis(
    x: &Tensor,
    y: &Tensor,
    rel_tol: f64,
) -> Result<(Option<(Tensor, Tensor)>, Vec<usize>)> {
    let (n, d) = x.as2d()?;
    let max_norm = (0..n)
        .map(|i| gemm::dot(x.row(i), x.row(i)).sqrt())
        .fold(0.0f64, f64::max);
    if max_norm == 0.0 {
        return Ok((None, vec![]));
    }
    let threshold = rel_tol * max_norm;
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    for i in 0..n {
        let mut v = x.row(i).to_vec();
        for _ in 0..2 {
            for u in &basis {
                let proj = gemm::dot(&v, u);
                for (vj, &uj) in v.iter_mut().zip(u) {
                    *vj -= proj * uj;
                }
            }
        }
        let norm = gemm::dot(&v, &v).sqrt();
        if norm > threshold {
            for vj in v.iter_mut() {
                *vj /= norm;
            }
            basis.push(v);
            kept.push(i);
            if kept.len() == d {
                break;
            }
        }
    }
    let xb = Tensor::from_rows(&kept.iter().map(|&i| x.row(i).to_vec()).collect::<Vec<_>>())?;
    let yb = Tensor::from_rows(&kept.iter().map(|&i| y.row(i).to_vec()).collect::<Vec<_>>())?;
    Ok((Some((xb, yb)), kept))
}

/// Closed-form one-layer conv weights trained on the patch system.
///
/// With the patch rows reduced to a basis, the system is overparameterized
/// whenever the basis is smaller than the per-channel parameter count and the
/// gradient-descent limit applies; a full-rank basis with more patches than
/// parameters is the pure least-squares regime where `Ŵ = Λ` and `W⁰` drops
/// out. The boundary case (`|Ξ|` equal to the parameter count, full rank) is
/// handled by the overparameterized formula, whose Gram is invertible there.
pub fn conv1_closed_form(w0_flat: &Tensor, pm: &PatchMatrix) -> Result<Tensor> {
    let d_cols = pm.geometry.row_len();
    let c = pm.geometry.channels;
    if w0_flat.shape() != [d_cols, c] {
        return Err(Error::shape(
            "conv1_closed_form",
            format!("W⁰ {:?}, expected [{d_cols}, {c}]", w0_flat.shape()),
        ));
    }
    let (reduced, kept) = reduce_to_row_basis(&pm.x, &pm.y, DEFAULT_RANK_TOL)?;
    let Some((xb, yb)) = reduced else {
        // No constraints at all (all-zero training image).
        return Ok(w0_flat.clone());
    };
    if kept.len() < d_cols || pm.x.shape()[0] == d_cols {
        gd_limit_overparam(w0_flat, &xb, &yb)
    } else {
        least_squares_underparam(&pm.x, &pm.y)
    }
}

/// Applies flat one-layer conv weights to an image.
pub fn apply_conv1(w_flat: &Tensor, image: &Tensor, kh: usize, kw: usize) -> Result<Tensor> {
    let &[c, h, w] = image.shape() else {
        return Err(Error::shape(
            "apply_conv1",
            format!("expected [C, H, W], got {:?}", image.shape()),
        ));
    };
    let g = ConvGeometry::new(c, h, w, kh, kw)?;
    if w_flat.shape() != [g.row_len(), c] {
        return Err(Error::shape(
            "apply_conv1",
            format!("weights {:?}, expected [{}, {c}]", w_flat.shape(), g.row_len()),
        ));
    }
    let mut col = vec![0.0; g.positions() * g.row_len()];
    im2col(image.data(), &g, &mut col);
    let mut out_cols = vec![0.0; g.positions() * c];
    gemm::gemm(&mut out_cols, &col, w_flat.data(), g.positions(), g.row_len(), c);
    let mut out = Tensor::zeros(&[c, h, w]);
    gemm::transpose_into(&out_cols, out.data_mut(), g.positions(), c);
    Ok(out)
}

/// Inputs of the one-layer conv error bound.
#[derive(Clone, Copy, Debug)]
pub struct Thm2BoundInputs {
    pub kh: usize,
    pub kw: usize,
    pub channels: usize,
    /// Nullity `𝔫 = K_H·K_W·C − rank` of the patch span.
    pub nullity: usize,
    /// Std of the `W⁰` entries.
    pub init_std: f64,
    /// Bound on absolute pixel values of the test distribution.
    pub pixel_bound: f64,
    /// Failure probability, `δ ∈ (0, 1)`.
    pub delta: f64,
    /// Tail constant `M > 1`.
    pub big_m: f64,
}

impl Thm2BoundInputs {
    /// Smallest `δ` for which the tail argument is valid:
    /// `δ₀ = 2𝔫 / (C·(M − log M − 1))`.
    pub fn delta_floor(&self) -> f64 {
        if self.nullity == 0 {
            return 0.0;
        }
        2.0 * self.nullity as f64
            / (self.channels as f64 * (self.big_m - self.big_m.ln() - 1.0))
    }

    pub fn validate(&self) -> Result<()> {
        let cap = self.kh * self.kw * self.channels;
        if self.nullity > cap {
            return Err(Error::invalid(
                "thm2_bound",
                format!("nullity {} exceeds {cap}", self.nullity),
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid("thm2_bound", format!("delta = {}", self.delta)));
        }
        if !(self.big_m > 1.0) {
            return Err(Error::invalid("thm2_bound", format!("M = {}", self.big_m)));
        }
        if !(self.init_std > 0.0) || !(self.pixel_bound >= 0.0) {
            return Err(Error::invalid("thm2_bound", "σ must be > 0 and B ≥ 0"));
        }
        Ok(())
    }
}

/// Evaluates the bound display without the validity gate:
/// `((√(𝔫σ²(2·log(𝔫/δ) + C(1+log M))) + √(𝔫C)) · B·√(K_H·K_W·C))² / C`.
pub fn thm2_bound_value(inp: &Thm2BoundInputs) -> f64 {
    if inp.nullity == 0 {
        return 0.0;
    }
    let n = inp.nullity as f64;
    let c = inp.channels as f64;
    let sigma_sq = inp.init_std * inp.init_std;
    let inner = n * sigma_sq * (2.0 * (n / inp.delta).ln() + c * (1.0 + inp.big_m.ln()));
    let term = inner.sqrt() + (n * c).sqrt();
    let patch = inp.pixel_bound * ((inp.kh * inp.kw) as f64 * c).sqrt();
    (term * patch) * (term * patch) / c
}

/// The bound with its validity condition `δ ≥ δ₀` enforced.
pub fn thm2_bound(inp: &Thm2BoundInputs) -> Result<f64> {
    inp.validate()?;
    let floor = inp.delta_floor();
    if inp.delta < floor {
        return Err(Error::BoundValidity(format!(
            "delta {} below floor {floor:.6} for nullity {} / {} channels / M {}",
            inp.delta, inp.nullity, inp.channels, inp.big_m
        )));
    }
    Ok(thm2_bound_value(inp))
}
