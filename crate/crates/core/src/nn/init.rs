//! Weight initialization schemes.
//!
//! `Default` is `N(0, 1/(f_i·f_o))`; Xavier and Kaiming come in normal and
//! uniform flavors; `Orthogonal` takes the polar factor of a Gaussian draw.

use serde::{Deserialize, Serialize};

use super::{LayerKind, LayerParams, LayerSpec};
use crate::error::Result;
use crate::tensor::linalg::svd;
use crate::tensor::rng::{sample, Dist, RngState};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    #[default]
    Default,
    XavierNormal,
    XavierUniform,
    KaimingNormal,
    KaimingUniform,
    Orthogonal,
}

/// Draws an `out×in`-shaped weight matrix for given fan-in/fan-out.
fn draw_matrix(
    scheme: InitScheme,
    rows: usize,
    cols: usize,
    fan_in: usize,
    fan_out: usize,
    rng: &mut RngState,
) -> Result<Tensor> {
    let fi = fan_in as f64;
    let fo = fan_out as f64;
    match scheme {
        InitScheme::Default => sample(
            Dist::gaussian(0.0, 1.0 / (fi * fo).sqrt()),
            &[rows, cols],
            rng,
        ),
        InitScheme::XavierNormal => sample(
            Dist::gaussian(0.0, (2.0 / (fi + fo)).sqrt()),
            &[rows, cols],
            rng,
        ),
        InitScheme::XavierUniform => {
            let b = (6.0 / (fi + fo)).sqrt();
            sample(Dist::uniform(-b, b), &[rows, cols], rng)
        }
        InitScheme::KaimingNormal => {
            sample(Dist::gaussian(0.0, (2.0 / fi).sqrt()), &[rows, cols], rng)
        }
        InitScheme::KaimingUniform => {
            let b = (6.0 / fi).sqrt();
            sample(Dist::uniform(-b, b), &[rows, cols], rng)
        }
        InitScheme::Orthogonal => {
            let g = sample(Dist::gaussian(0.0, 1.0), &[rows, cols], rng)?;
            // Polar factor U·Vᵀ: semi-orthogonal with the same shape.
            let d = svd(&g)?;
            d.u.matmul(&d.v.transpose()?)
        }
    }
}

pub(super) fn init_layer(
    spec: &LayerSpec,
    scheme: InitScheme,
    rng: RngState,
) -> Result<LayerParams> {
    match spec.kind {
        LayerKind::Relu => Ok(LayerParams::None),
        LayerKind::Dense => {
            let mut r = rng.split(0);
            let w = draw_matrix(
                scheme,
                spec.out_dims,
                spec.in_dims,
                spec.in_dims,
                spec.out_dims,
                &mut r,
            )?;
            let b = spec.has_bias.then(|| Tensor::zeros(&[spec.out_dims]));
            Ok(LayerParams::Dense { w, b })
        }
        LayerKind::Conv2d => {
            let (kh, kw) = spec.kernel.expect("validated");
            let fan_in = spec.in_dims * kh * kw;
            let fan_out = spec.out_dims * kh * kw;
            let mut r = rng.split(0);
            // Drawn in the natural out×(K·K·C_in) view, stored transposed in
            // the GEMM layout.
            let nat = draw_matrix(scheme, spec.out_dims, fan_in, fan_in, fan_out, &mut r)?;
            let w = nat.transpose()?;
            let b = spec.has_bias.then(|| Tensor::zeros(&[spec.out_dims]));
            Ok(LayerParams::Conv { w, b })
        }
        LayerKind::ResidualFcBlock => {
            let d = spec.in_dims;
            let mut r1 = rng.split(0);
            let mut r2 = rng.split(1);
            let w1 = draw_matrix(scheme, d, d, d, d, &mut r1)?;
            let w2 = draw_matrix(scheme, d, d, d, d, &mut r2)?;
            let b1 = spec.has_bias.then(|| Tensor::zeros(&[d]));
            let b2 = spec.has_bias.then(|| Tensor::zeros(&[d]));
            Ok(LayerParams::Residual { w1, b1, w2, b2 })
        }
    }
}
