//! Exact weight constructions that realize the identity function, plus a
//! verifier.
//!
//! Three families: linear FCNs (every layer the identity matrix), ReLU FCNs
//! (positive and negative parts stored in separate hidden units), and CNNs
//! (center-tap kernels, with a positive/negative channel split below depth-1).
//! Channels `[0, C)` carry the positive part and `[C, 2C)` the negative part.

use crate::error::{Error, Result};
use crate::nn::{arch, build_network, Entry, InitScheme, LayerKind, LayerParams, Network, NetworkSpec};
use crate::tensor::rng::{sample, Dist, RngState};
use crate::tensor::Tensor;

fn zeroed_biases(net: &mut Network) {
    for p in net.params_mut() {
        match p {
            LayerParams::Dense { b, .. } | LayerParams::Conv { b, .. } => {
                if let Some(b) = b {
                    b.data_mut().fill(0.0);
                }
            }
            LayerParams::Residual { b1, b2, .. } => {
                for b in [b1, b2].into_iter().flatten() {
                    b.data_mut().fill(0.0);
                }
            }
            LayerParams::None => {}
        }
    }
}

/// Linear FCN of `depth` layers, every weight the `d×d` identity.
pub fn identity_linear_fcn(depth: usize, d: usize) -> Result<Network> {
    if depth == 0 {
        return Err(Error::invalid("identity_linear_fcn", "depth must be >= 1"));
    }
    let spec = NetworkSpec::new(arch::fcn(depth, d, d, false), InitScheme::Default, 0);
    let mut net = build_network(&spec)?;
    for li in 0..net.depth() {
        net.set_layer_params(
            li,
            LayerParams::Dense {
                w: Tensor::identity(d),
                b: Some(Tensor::zeros(&[d])),
            },
        )?;
    }
    zeroed_biases(&mut net);
    Ok(net)
}

/// ReLU FCN with hidden width `2d`: the bottom layer stacks `[I; −I]`, the
/// top layer merges `[I, −I]`, and intermediate layers are `I_{2d}` so every
/// hidden activation stays non-negative.
pub fn identity_relu_fcn(depth: usize, d: usize) -> Result<Network> {
    if depth < 2 {
        return Err(Error::Unsupported(
            "a depth-1 ReLU network cannot represent the identity on negative inputs".into(),
        ));
    }
    let spec = NetworkSpec::new(arch::fcn(depth, d, 2 * d, true), InitScheme::Default, 0);
    let mut net = build_network(&spec)?;

    let mut bottom = Tensor::zeros(&[2 * d, d]);
    for i in 0..d {
        bottom.set2(i, i, 1.0);
        bottom.set2(d + i, i, -1.0);
    }
    let mut top = Tensor::zeros(&[d, 2 * d]);
    for i in 0..d {
        top.set2(i, i, 1.0);
        top.set2(i, d + i, -1.0);
    }

    let mut dense_seen = 0usize;
    let dense_total = depth;
    for li in 0..net.depth() {
        if net.layer_spec(li).kind != LayerKind::Dense {
            continue;
        }
        let w = if dense_seen == 0 {
            bottom.clone()
        } else if dense_seen + 1 == dense_total {
            top.clone()
        } else {
            Tensor::identity(2 * d)
        };
        let rows = w.shape()[0];
        net.set_layer_params(
            li,
            LayerParams::Dense {
                w,
                b: Some(Tensor::zeros(&[rows])),
            },
        )?;
        dense_seen += 1;
    }
    Ok(net)
}

/// Center-tap kernel: `W[c̄][c][⌊K/2⌋][⌊K/2⌋] = v` for the given channel
/// pairs, zero elsewhere.
fn center_kernel(c_out: usize, c_in: usize, k: usize, taps: &[(usize, usize, f64)]) -> Tensor {
    let mut w = Tensor::zeros(&[c_out, c_in, k, k]);
    let mid = k / 2;
    for &(co, ci, v) in taps {
        w.data_mut()[((co * c_in + ci) * k + mid) * k + mid] = v;
    }
    w
}

/// CNN identity construction. Depth 1 uses a single center-delta kernel;
/// depth ≥ 2 splits positive/negative parts into `2C` hidden channels.
/// The weights are size-agnostic: they encode the identity for any spatial
/// input size.
pub fn identity_cnn(depth: usize, channels: usize, k: usize) -> Result<Network> {
    if k % 2 == 0 {
        return Err(Error::Unsupported(format!(
            "even kernel size {k}: center tap is not defined"
        )));
    }
    if depth == 0 {
        return Err(Error::invalid("identity_cnn", "depth must be >= 1"));
    }
    let c = channels;
    let spec = NetworkSpec::new(arch::cnn(depth, c, 2 * c, k), InitScheme::Default, 0);
    let mut net = build_network(&spec)?;

    let mut conv_seen = 0usize;
    for li in 0..net.depth() {
        if net.layer_spec(li).kind != LayerKind::Conv2d {
            continue;
        }
        let kernel = if depth == 1 {
            let taps: Vec<_> = (0..c).map(|i| (i, i, 1.0)).collect();
            center_kernel(c, c, k, &taps)
        } else if conv_seen == 0 {
            // Split: channels [0,C) positive, [C,2C) negative.
            let mut taps: Vec<_> = (0..c).map(|i| (i, i, 1.0)).collect();
            taps.extend((0..c).map(|i| (c + i, i, -1.0)));
            center_kernel(2 * c, c, k, &taps)
        } else if conv_seen + 1 == depth {
            // Merge: out_i = pos_i − neg_i.
            let mut taps: Vec<_> = (0..c).map(|i| (i, i, 1.0)).collect();
            taps.extend((0..c).map(|i| (i, c + i, -1.0)));
            center_kernel(c, 2 * c, k, &taps)
        } else {
            let taps: Vec<_> = (0..2 * c).map(|i| (i, i, 1.0)).collect();
            center_kernel(2 * c, 2 * c, k, &taps)
        };
        net.set_kernel4d(li, &kernel)?;
        conv_seen += 1;
    }
    zeroed_biases(&mut net);
    Ok(net)
}

/// Max `‖f(x) − x‖_∞` over seeded random inputs. For image networks the
/// inputs are `spatial × spatial`.
pub fn verify_identity(net: &Network, trials: usize, seed: u64, spatial: usize) -> Result<f64> {
    let mut rng = RngState::new(seed).split(0x1d);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let x = match net.entry() {
            Entry::Flat(d) => sample(Dist::gaussian(0.0, 1.0), &[d], &mut rng)?,
            Entry::Image(c) => sample(Dist::gaussian(0.0, 1.0), &[c, spatial, spatial], &mut rng)?,
        };
        let (y, _) = net.forward(&x, false)?;
        worst = worst.max(y.sub(&x)?.max_abs());
    }
    Ok(worst)
}
