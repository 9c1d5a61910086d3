//! Forward pass and manual backpropagation.
//!
//! Activations live in their public layouts (`[B, d]` for fully connected
//! nets, `[B, C, H, W]` for conv nets); conv layers unroll patches through
//! `patches::im2col`, multiply against the flat kernel matrix, and transpose
//! the per-pixel rows back to channel planes. The gradient of every layer
//! kind is written out by hand.

use super::{Entry, LayerKind, LayerParams, Network};
use crate::error::{Error, Result};
use crate::patches::{im2col, ConvGeometry};
use crate::tensor::gemm;
use crate::tensor::Tensor;

/// Gradient container; mirrors [`LayerParams`] tensor-for-tensor.
pub type LayerGrads = LayerParams;

#[derive(Clone, Debug)]
pub struct Gradients {
    /// One entry per layer; `None` for parameterless or frozen layers.
    pub layers: Vec<Option<LayerGrads>>,
    pub loss: f64,
}

impl Gradients {
    /// Euclidean norm over all gradient entries.
    pub fn total_norm(&self) -> f64 {
        let mut acc = 0.0;
        for g in self.layers.iter().flatten() {
            for t in g.tensors() {
                acc += gemm::dot(t.data(), t.data());
            }
        }
        acc.sqrt()
    }

    pub fn has_non_finite(&self) -> bool {
        self.layers
            .iter()
            .flatten()
            .any(|g| g.tensors().iter().any(|t| !t.is_finite()))
    }
}

/// Reusable buffers for the conv hot path. `layer_cols` retains each conv
/// layer's patch rows from the forward pass inside `backward`, so the
/// backward pass never re-extracts patches.
#[derive(Default)]
pub struct Workspace {
    col: Vec<f64>,
    cols_out: Vec<f64>,
    dcol: Vec<f64>,
    wt: Vec<f64>,
    layer_cols: Vec<Vec<f64>>,
}

impl Workspace {
    pub fn new() -> Self {
        Workspace::default()
    }
}

fn grow(buf: &mut Vec<f64>, len: usize) -> &mut [f64] {
    if buf.len() < len {
        buf.resize(len, 0.0);
    }
    &mut buf[..len]
}

/// Input normalized to batched form plus whether the caller batched it.
fn to_batched(net: &Network, input: &Tensor) -> Result<(Tensor, bool)> {
    match net.entry() {
        Entry::Flat(d) => match input.shape() {
            [n] if *n == d => Ok((input.clone().reshape(vec![1, d])?, false)),
            [_, n] if *n == d => Ok((input.clone(), true)),
            other => Err(Error::shape(
                "forward",
                format!("expected [{d}] or [B, {d}], got {other:?}"),
            )),
        },
        Entry::Image(c) => match input.shape() {
            [ci, h, w] if *ci == c => {
                Ok((input.clone().reshape(vec![1, c, *h, *w])?, false))
            }
            [_, ci, _, _] if *ci == c => Ok((input.clone(), true)),
            other => Err(Error::shape(
                "forward",
                format!("expected [{c}, H, W] or [B, {c}, H, W], got {other:?}"),
            )),
        },
    }
}

fn unbatch(t: Tensor, was_batched: bool) -> Result<Tensor> {
    if was_batched {
        Ok(t)
    } else {
        let shape = t.shape()[1..].to_vec();
        t.reshape(shape)
    }
}

/// Validates `[B, C, H, W]` and builds the layer's patch geometry.
fn conv_geometry(spec_in: usize, kh: usize, kw: usize, act: &Tensor) -> Result<ConvGeometry> {
    match act.shape() {
        [_, c, h, w] if *c == spec_in => ConvGeometry::new(*c, *h, *w, kh, kw),
        other => Err(Error::shape(
            "conv2d",
            format!("expected [B, {spec_in}, H, W], got {other:?}"),
        )),
    }
}

/// One conv layer forward on a batched activation. The patch rows are left
/// in `col_buf`, the per-pixel output rows in `out_cols_buf`.
fn conv_forward_into(
    act: &Tensor,
    w: &Tensor,
    b: Option<&Tensor>,
    kh: usize,
    kw: usize,
    c_out: usize,
    col_buf: &mut Vec<f64>,
    out_cols_buf: &mut Vec<f64>,
) -> Result<Tensor> {
    let g = conv_geometry(w.shape()[0] / (kh * kw), kh, kw, act)?;
    let batch = act.shape()[0];
    let hw = g.positions();
    let rl = g.row_len();

    let col = grow(col_buf, batch * hw * rl);
    for e in 0..batch {
        im2col(
            &act.data()[e * g.pixels()..(e + 1) * g.pixels()],
            &g,
            &mut col[e * hw * rl..(e + 1) * hw * rl],
        );
    }
    let out_cols = grow(out_cols_buf, batch * hw * c_out);
    gemm::gemm(out_cols, &col_buf[..batch * hw * rl], w.data(), batch * hw, rl, c_out);
    if let Some(bias) = b {
        for row in out_cols.chunks_mut(c_out) {
            for (o, &bv) in row.iter_mut().zip(bias.data()) {
                *o += bv;
            }
        }
    }

    let mut out = Tensor::zeros(&[batch, c_out, g.height, g.width]);
    for e in 0..batch {
        gemm::transpose_into(
            &out_cols_buf[e * hw * c_out..(e + 1) * hw * c_out],
            &mut out.data_mut()[e * c_out * hw..(e + 1) * c_out * hw],
            hw,
            c_out,
        );
    }
    Ok(out)
}

fn dense_forward(act: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    let (batch, d_in) = act.as2d()?;
    let (d_out, wk) = w.as2d()?;
    if wk != d_in {
        return Err(Error::shape(
            "dense",
            format!("weight {d_out}x{wk} applied to width {d_in}"),
        ));
    }
    let mut out = Tensor::zeros(&[batch, d_out]);
    gemm::gemm_nt(out.data_mut(), act.data(), w.data(), batch, d_in, d_out);
    if let Some(bias) = b {
        for row in out.data_mut().chunks_mut(d_out) {
            for (o, &bv) in row.iter_mut().zip(bias.data()) {
                *o += bv;
            }
        }
    }
    Ok(out)
}

fn relu(t: &Tensor) -> Tensor {
    t.map(|x| if x > 0.0 { x } else { 0.0 })
}

/// `g ⊙ [x > 0]`; the derivative at exactly zero is taken as zero.
fn relu_mask(g: &Tensor, x: &Tensor) -> Tensor {
    let mut out = g.clone();
    for (o, &xv) in out.data_mut().iter_mut().zip(x.data()) {
        if xv <= 0.0 {
            *o = 0.0;
        }
    }
    out
}

/// Extra per-layer values the backward pass needs beyond the layer input.
enum Aux {
    None,
    Residual { h1: Tensor, a1: Tensor, h2: Tensor },
}

fn layer_forward(
    net: &Network,
    idx: usize,
    act: &Tensor,
    ws: &mut Workspace,
    keep_aux: bool,
) -> Result<(Tensor, Aux)> {
    let spec = net.layer_spec(idx);
    match (&spec.kind, &net.params()[idx]) {
        (LayerKind::Relu, _) => Ok((relu(act), Aux::None)),
        (LayerKind::Dense, LayerParams::Dense { w, b }) => {
            Ok((dense_forward(act, w, b.as_ref())?, Aux::None))
        }
        (LayerKind::Conv2d, LayerParams::Conv { w, b }) => {
            let (kh, kw) = spec.kernel.expect("validated");
            // In the backward pass's internal forward the patch rows are
            // retained per layer for reuse; plain forwards share one buffer.
            if keep_aux {
                if ws.layer_cols.len() < net.depth() {
                    ws.layer_cols.resize_with(net.depth(), Vec::new);
                }
                Ok((
                    conv_forward_into(act, w, b.as_ref(), kh, kw, spec.out_dims, &mut ws.layer_cols[idx], &mut ws.cols_out)?,
                    Aux::None,
                ))
            } else {
                Ok((
                    conv_forward_into(act, w, b.as_ref(), kh, kw, spec.out_dims, &mut ws.col, &mut ws.cols_out)?,
                    Aux::None,
                ))
            }
        }
        (LayerKind::ResidualFcBlock, LayerParams::Residual { w1, b1, w2, b2 }) => {
            let h1 = dense_forward(act, w1, b1.as_ref())?;
            let a1 = relu(&h1);
            let h2 = dense_forward(&a1, w2, b2.as_ref())?;
            let a2 = relu(&h2);
            let out = act.add(&a2)?;
            let aux = if keep_aux {
                Aux::Residual { h1, a1, h2 }
            } else {
                Aux::None
            };
            Ok((out, aux))
        }
        _ => Err(Error::Spec(format!("layer {idx}: spec/params mismatch"))),
    }
}

/// Forward pass; with `capture`, also returns the post-activation value of
/// every layer in order.
pub fn forward(net: &Network, input: &Tensor, capture: bool) -> Result<(Tensor, Vec<Tensor>)> {
    forward_from(net, 0, input, capture)
}

/// Runs layers `start..` only; the input must match what layer `start`
/// expects.
pub fn forward_from(
    net: &Network,
    start: usize,
    input: &Tensor,
    capture: bool,
) -> Result<(Tensor, Vec<Tensor>)> {
    if start >= net.depth() {
        return Err(Error::invalid(
            "forward_from",
            format!("start layer {start} out of range (depth {})", net.depth()),
        ));
    }
    let (mut act, was_batched) = to_batched_at(net, start, input)?;
    let mut ws = Workspace::new();
    let mut captured = Vec::new();
    for idx in start..net.depth() {
        let (next, _) = layer_forward(net, idx, &act, &mut ws, false)?;
        act = next;
        if capture {
            captured.push(unbatch(act.clone(), was_batched)?);
        }
    }
    Ok((unbatch(act, was_batched)?, captured))
}

/// Like [`to_batched`] but validating against the entry of layer `start`.
fn to_batched_at(net: &Network, start: usize, input: &Tensor) -> Result<(Tensor, bool)> {
    if start == 0 {
        return to_batched(net, input);
    }
    let expect = net.spec().layers[start..]
        .iter()
        .find(|l| l.is_parameterized())
        .map(|l| l.in_dims);
    let Some(d) = expect else {
        // Only relu layers remain; accept anything batched as given.
        return Ok((input.clone(), true));
    };
    match (net.entry(), input.shape()) {
        (Entry::Image(_), [c, h, w]) if *c == d => {
            Ok((input.clone().reshape(vec![1, *c, *h, *w])?, false))
        }
        (Entry::Image(_), [_, c, _, _]) if *c == d => Ok((input.clone(), true)),
        (Entry::Flat(_), [n]) if *n == d => Ok((input.clone().reshape(vec![1, d])?, false)),
        (Entry::Flat(_), [_, n]) if *n == d => Ok((input.clone(), true)),
        (_, other) => Err(Error::shape(
            "forward_from",
            format!("layer {start} expects width/channels {d}, got {other:?}"),
        )),
    }
}

fn col_sums(data: &[f64], cols: usize) -> Tensor {
    let mut out = Tensor::zeros(&[cols]);
    for row in data.chunks(cols) {
        for (o, &v) in out.data_mut().iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

fn dense_backward(
    g: &Tensor,
    x: &Tensor,
    w: &Tensor,
    has_bias: bool,
) -> Result<(Tensor, Option<Tensor>, Tensor)> {
    let (batch, d_out) = g.as2d()?;
    let (_, d_in) = x.as2d()?;
    let mut gw = Tensor::zeros(&[d_out, d_in]);
    gemm::gemm_tn(gw.data_mut(), g.data(), x.data(), batch, d_out, d_in);
    let gb = has_bias.then(|| col_sums(g.data(), d_out));
    let gx = g.matmul(w)?;
    Ok((gw, gb, gx))
}

/// Gradients of [`super::loss_mse`] w.r.t. every trainable parameter.
pub fn backward(net: &Network, input: &Tensor, target: &Tensor) -> Result<Gradients> {
    backward_with(net, input, target, &mut Workspace::new())
}

pub fn backward_with(
    net: &Network,
    input: &Tensor,
    target: &Tensor,
    ws: &mut Workspace,
) -> Result<Gradients> {
    if input.shape() != target.shape() {
        return Err(Error::shape(
            "backward",
            format!("input {:?} vs target {:?}", input.shape(), target.shape()),
        ));
    }
    let (act0, was_batched) = to_batched(net, input)?;
    let (target_b, _) = to_batched(net, target)?;
    let _ = was_batched;

    // Forward, retaining every layer input.
    let depth = net.depth();
    let mut acts: Vec<Tensor> = Vec::with_capacity(depth + 1);
    let mut auxes: Vec<Aux> = Vec::with_capacity(depth);
    acts.push(act0);
    for idx in 0..depth {
        let (next, aux) = layer_forward(net, idx, &acts[idx], ws, true)?;
        acts.push(next);
        auxes.push(aux);
    }
    let pred = &acts[depth];
    let loss = super::loss_mse(pred, &target_b)?;

    let n = pred.len() as f64;
    let mut g = pred.zip_map(&target_b, |p, t| (p - t) / n)?;

    let mut grads: Vec<Option<LayerGrads>> = (0..depth).map(|_| None).collect();
    for idx in (0..depth).rev() {
        let spec = net.layer_spec(idx);
        let x = &acts[idx];
        match (&spec.kind, &net.params()[idx]) {
            (LayerKind::Relu, _) => {
                for (gv, &xv) in g.data_mut().iter_mut().zip(x.data()) {
                    if xv <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            (LayerKind::Dense, LayerParams::Dense { w, b }) => {
                let (gw, gb, gx) = dense_backward(&g, x, w, b.is_some())?;
                if spec.trainable {
                    grads[idx] = Some(LayerGrads::Dense { w: gw, b: gb });
                }
                g = gx;
            }
            (LayerKind::Conv2d, LayerParams::Conv { w, b }) => {
                let (kh, kw) = spec.kernel.expect("validated");
                let geom = conv_geometry(spec.in_dims, kh, kw, x)?;
                let batch = x.shape()[0];
                let hw = geom.positions();
                let rl = geom.row_len();
                let c_out = spec.out_dims;

                // Per-pixel rows of the output gradient.
                let g_cols = grow(&mut ws.cols_out, batch * hw * c_out);
                for e in 0..batch {
                    gemm::transpose_into(
                        &g.data()[e * c_out * hw..(e + 1) * c_out * hw],
                        &mut g_cols[e * hw * c_out..(e + 1) * hw * c_out],
                        c_out,
                        hw,
                    );
                }
                if spec.trainable {
                    // Patch rows were retained by the forward pass.
                    let mut gw = Tensor::zeros(&[rl, c_out]);
                    gemm::gemm_tn(
                        gw.data_mut(),
                        &ws.layer_cols[idx][..batch * hw * rl],
                        &ws.cols_out[..batch * hw * c_out],
                        batch * hw,
                        rl,
                        c_out,
                    );
                    let gb = b
                        .is_some()
                        .then(|| col_sums(&ws.cols_out[..batch * hw * c_out], c_out));
                    grads[idx] = Some(LayerGrads::Conv { w: gw, b: gb });
                }
                if idx > 0 {
                    // Input gradient as a convolution of `g` with the
                    // flipped, channel-transposed kernel — the exact adjoint
                    // of the zero-padded forward conv, through the same
                    // patch-extraction path.
                    let c_in = spec.in_dims;
                    let khw = kh * kw;
                    let rl_out = khw * c_out;
                    let wflip = grow(&mut ws.wt, rl_out * c_in);
                    for co in 0..c_out {
                        for u in 0..kh {
                            for v in 0..kw {
                                let row = (co * khw + u * kw + v) * c_in;
                                let fu = (kh - 1 - u) * kw + (kw - 1 - v);
                                for ci in 0..c_in {
                                    wflip[row + ci] = w.data()[(ci * khw + fu) * c_out + co];
                                }
                            }
                        }
                    }
                    let g_geom = ConvGeometry::new(c_out, geom.height, geom.width, kh, kw)?;
                    let gcol = grow(&mut ws.dcol, batch * hw * rl_out);
                    for e in 0..batch {
                        im2col(
                            &g.data()[e * g_geom.pixels()..(e + 1) * g_geom.pixels()],
                            &g_geom,
                            &mut gcol[e * hw * rl_out..(e + 1) * hw * rl_out],
                        );
                    }
                    let prod = grow(&mut ws.col, batch * hw * c_in);
                    gemm::gemm(
                        prod,
                        &ws.dcol[..batch * hw * rl_out],
                        &ws.wt[..rl_out * c_in],
                        batch * hw,
                        rl_out,
                        c_in,
                    );
                    let mut gx = Tensor::zeros(x.shape());
                    for e in 0..batch {
                        gemm::transpose_into(
                            &ws.col[e * hw * c_in..(e + 1) * hw * c_in],
                            &mut gx.data_mut()[e * geom.pixels()..(e + 1) * geom.pixels()],
                            hw,
                            c_in,
                        );
                    }
                    g = gx;
                }
            }
            (LayerKind::ResidualFcBlock, LayerParams::Residual { w1, b1, w2, b2 }) => {
                let Aux::Residual { h1, a1, h2 } = &auxes[idx] else {
                    unreachable!("residual aux retained in backward forward pass")
                };
                let g_h2 = relu_mask(&g, h2);
                let (gw2, gb2, g_a1) = dense_backward(&g_h2, a1, w2, b2.is_some())?;
                let g_h1 = relu_mask(&g_a1, h1);
                let (gw1, gb1, g_skip) = dense_backward(&g_h1, x, w1, b1.is_some())?;
                if spec.trainable {
                    grads[idx] = Some(LayerGrads::Residual {
                        w1: gw1,
                        b1: gb1,
                        w2: gw2,
                        b2: gb2,
                    });
                }
                g = g.add(&g_skip)?;
            }
            _ => return Err(Error::Spec(format!("layer {idx}: spec/params mismatch"))),
        }
    }

    Ok(Gradients {
        layers: grads,
        loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{arch, build_network, loss_mse, InitScheme, LayerSpec, NetworkSpec};
    use crate::tensor::rng::{sample, Dist, RngState};

    fn net_of(layers: Vec<LayerSpec>, seed: u64) -> Network {
        build_network(&NetworkSpec::new(layers, InitScheme::Default, seed)).unwrap()
    }

    #[test]
    fn relu_layer_on_negatives() {
        let net = net_of(
            vec![LayerSpec::dense(2, 2), LayerSpec::relu(), LayerSpec::dense(2, 2)],
            1,
        );
        let x = Tensor::new(vec![2], vec![-1.0, 2.0]).unwrap();
        let (_, caps) = net.forward(&x, true).unwrap();
        assert_eq!(caps.len(), 3);
        // Feed [-1, 2] directly into the relu layer.
        let (y, _) = forward_from(&net, 1, &x, false).unwrap();
        let expect_after_relu = [0.0f64, 2.0];
        let LayerParams::Dense { w, .. } = &net.params()[2] else {
            unreachable!()
        };
        let manual = [
            w.get2(0, 0) * expect_after_relu[0] + w.get2(0, 1) * expect_after_relu[1],
            w.get2(1, 0) * expect_after_relu[0] + w.get2(1, 1) * expect_after_relu[1],
        ];
        assert!((y.data()[0] - manual[0]).abs() < 1e-15);
        assert!((y.data()[1] - manual[1]).abs() < 1e-15);
    }

    #[test]
    fn zero_weight_dense_maps_to_zero() {
        let mut net = net_of(vec![LayerSpec::dense(3, 3).with_bias(false)], 1);
        if let LayerParams::Dense { w, .. } = &mut net.params_mut()[0] {
            w.data_mut().fill(0.0);
        }
        let x = Tensor::new(vec![3], vec![1.0, -2.0, 3.0]).unwrap();
        let (y, _) = net.forward(&x, false).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_preserves_shape_for_all_layer_kinds() {
        let mut st = RngState::new(4);
        let conv = net_of(arch::cnn(3, 2, 5, 3), 2);
        let img = sample(Dist::gaussian(0.0, 1.0), &[2, 9, 7], &mut st).unwrap();
        let (y, _) = conv.forward(&img, false).unwrap();
        assert_eq!(y.shape(), img.shape());

        let res = net_of(arch::residual_fcn(2, 6), 3);
        let x = sample(Dist::gaussian(0.0, 1.0), &[6], &mut st).unwrap();
        let (y, _) = res.forward(&x, false).unwrap();
        assert_eq!(y.shape(), x.shape());
    }

    #[test]
    fn one_layer_linear_gradient_matches_closed_form() {
        // For loss ½·mean, the gradient is (W−I)·x̂x̂ᵀ scaled by 1/d.
        let d = 6;
        let net = net_of(vec![LayerSpec::dense(d, d).with_bias(false)], 9);
        let mut st = RngState::new(13);
        let xhat = sample(Dist::gaussian(0.0, 1.0), &[d], &mut st).unwrap();
        let grads = net.backward(&xhat, &xhat).unwrap();
        let LayerParams::Dense { w, .. } = &net.params()[0] else {
            unreachable!()
        };
        let LayerGrads::Dense { w: gw, .. } = grads.layers[0].as_ref().unwrap() else {
            unreachable!()
        };
        let wx = w.matvec(&xhat).unwrap();
        let mut expect = Tensor::zeros(&[d, d]);
        for i in 0..d {
            for j in 0..d {
                expect.set2(i, j, (wx.data()[i] - xhat.data()[i]) * xhat.data()[j] / d as f64);
            }
        }
        assert!(gw.sub(&expect).unwrap().max_abs() < 1e-10);
    }

    /// Central finite differences over every parameter of every layer kind.
    fn finite_diff_check(mut net: Network, input: &Tensor, target: &Tensor, tol: f64) {
        let grads = net.backward(input, target).unwrap();
        let h = 1e-5;
        for li in 0..net.depth() {
            let Some(layer_grads) = grads.layers[li].clone() else {
                continue;
            };
            let analytic: Vec<Tensor> = layer_grads.tensors().into_iter().cloned().collect();
            for (ti, ga) in analytic.iter().enumerate() {
                for pi in 0..ga.len() {
                    let orig = net.params()[li].tensors()[ti].data()[pi];
                    net.params_mut()[li].tensors_mut()[ti].data_mut()[pi] = orig + h;
                    let (out_p, _) = net.forward(input, false).unwrap();
                    let lp = loss_mse(&out_p, target).unwrap();
                    net.params_mut()[li].tensors_mut()[ti].data_mut()[pi] = orig - h;
                    let (out_m, _) = net.forward(input, false).unwrap();
                    let lm = loss_mse(&out_m, target).unwrap();
                    net.params_mut()[li].tensors_mut()[ti].data_mut()[pi] = orig;
                    let numeric = (lp - lm) / (2.0 * h);
                    let a = ga.data()[pi];
                    let denom = a.abs().max(numeric.abs()).max(1e-8);
                    assert!(
                        (a - numeric).abs() / denom < tol,
                        "layer {li} tensor {ti} param {pi}: analytic {a} vs numeric {numeric}"
                    );
                }
            }
        }
    }

    #[test]
    fn finite_differences_relu_fcn() {
        let mut st = RngState::new(21);
        let net = net_of(arch::fcn(3, 8, 8, true), 5);
        let x = sample(Dist::gaussian(0.0, 1.0), &[8], &mut st).unwrap();
        let t = sample(Dist::gaussian(0.0, 1.0), &[8], &mut st).unwrap();
        finite_diff_check(net, &x, &t, 1e-4);
    }

    #[test]
    fn finite_differences_conv() {
        let mut st = RngState::new(22);
        let net = net_of(arch::cnn(2, 1, 3, 3), 6);
        let x = sample(Dist::gaussian(0.0, 1.0), &[1, 5, 5], &mut st).unwrap();
        let t = sample(Dist::gaussian(0.0, 1.0), &[1, 5, 5], &mut st).unwrap();
        finite_diff_check(net, &x, &t, 1e-4);
    }

    #[test]
    fn finite_differences_residual_block() {
        let mut st = RngState::new(23);
        let net = net_of(arch::residual_fcn(2, 5), 7);
        let x = sample(Dist::gaussian(0.0, 1.0), &[5], &mut st).unwrap();
        let t = sample(Dist::gaussian(0.0, 1.0), &[5], &mut st).unwrap();
        finite_diff_check(net, &x, &t, 1e-4);
    }

    #[test]
    fn finite_differences_batched_input() {
        let mut st = RngState::new(24);
        let net = net_of(arch::fcn(2, 4, 6, true), 8);
        let x = sample(Dist::gaussian(0.0, 1.0), &[3, 4], &mut st).unwrap();
        let t = sample(Dist::gaussian(0.0, 1.0), &[3, 4], &mut st).unwrap();
        finite_diff_check(net, &x, &t, 1e-4);
    }

    #[test]
    fn frozen_layers_get_no_gradient() {
        let layers = vec![
            LayerSpec::dense(4, 4),
            LayerSpec::relu(),
            LayerSpec::dense(4, 4).frozen(),
        ];
        let net = net_of(layers, 3);
        let mut st = RngState::new(30);
        let x = sample(Dist::gaussian(0.0, 1.0), &[4], &mut st).unwrap();
        let grads = net.backward(&x, &x).unwrap();
        assert!(grads.layers[0].is_some());
        assert!(grads.layers[1].is_none());
        assert!(grads.layers[2].is_none());
    }

    #[test]
    fn backward_shape_mismatch_is_an_error() {
        let net = net_of(vec![LayerSpec::dense(3, 3)], 1);
        let x = Tensor::zeros(&[3]);
        let t = Tensor::zeros(&[4]);
        assert!(net.backward(&x, &t).is_err());
    }
}
