//! Network specs, parameter containers, initialization, and manual
//! backpropagation.
//!
//! Layer kinds are exactly the ones the experiments need: `dense`, `conv2d`
//! (stride 1, size-preserving padding), `relu`, and the two-matrix residual
//! block `x ↦ x + relu(W₂ relu(W₁ x))`. Conv weights are stored GEMM-ready as
//! a `(K_H·K_W·C_in) × C_out` matrix whose column `c̄` is the flattened kernel
//! for output channel `c̄`; [`Network::kernel4d`] converts to the
//! `C_out×C_in×K_H×K_W` view.

mod init;
mod run;

pub use init::InitScheme;
pub use run::{backward, backward_with, forward, forward_from, Gradients, LayerGrads, Workspace};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::rng::RngState;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Dense,
    Conv2d,
    Relu,
    ResidualFcBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    #[serde(default)]
    pub in_dims: usize,
    #[serde(default)]
    pub out_dims: usize,
    /// `(K_H, K_W)` for conv2d; stride is always 1 and padding
    /// `(⌊K_H/2⌋, ⌊K_W/2⌋)` so the spatial size is preserved.
    #[serde(default)]
    pub kernel: Option<(usize, usize)>,
    #[serde(default = "default_true")]
    pub has_bias: bool,
    #[serde(default = "default_true")]
    pub trainable: bool,
}

fn default_true() -> bool {
    true
}

impl LayerSpec {
    pub fn dense(in_dims: usize, out_dims: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Dense,
            in_dims,
            out_dims,
            kernel: None,
            has_bias: true,
            trainable: true,
        }
    }

    pub fn conv2d(in_ch: usize, out_ch: usize, k: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Conv2d,
            in_dims: in_ch,
            out_dims: out_ch,
            kernel: Some((k, k)),
            has_bias: true,
            trainable: true,
        }
    }

    pub fn relu() -> Self {
        LayerSpec {
            kind: LayerKind::Relu,
            in_dims: 0,
            out_dims: 0,
            kernel: None,
            has_bias: false,
            trainable: false,
        }
    }

    pub fn residual_fc(width: usize) -> Self {
        LayerSpec {
            kind: LayerKind::ResidualFcBlock,
            in_dims: width,
            out_dims: width,
            kernel: None,
            has_bias: true,
            trainable: true,
        }
    }

    pub fn with_bias(mut self, has_bias: bool) -> Self {
        self.has_bias = has_bias;
        self
    }

    pub fn frozen(mut self) -> Self {
        self.trainable = false;
        self
    }

    pub fn is_parameterized(&self) -> bool {
        !matches!(self.kind, LayerKind::Relu)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    pub init_scheme: InitScheme,
    pub seed: u64,
}

/// What the first parameterized layer expects at the network entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Entry {
    /// Flattened vectors of this width.
    Flat(usize),
    /// Images with this many channels; spatial size is free.
    Image(usize),
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>, init_scheme: InitScheme, seed: u64) -> Self {
        NetworkSpec {
            layers,
            init_scheme,
            seed,
        }
    }

    /// Checks adjacency of layer dims and the identity-task contract that the
    /// composed map preserves the entry shape.
    pub fn validate(&self) -> Result<Entry> {
        let first = self
            .layers
            .iter()
            .find(|l| l.is_parameterized())
            .ok_or_else(|| Error::Spec("network has no parameterized layers".into()))?;
        let image_family = matches!(first.kind, LayerKind::Conv2d);
        let entry = if image_family {
            Entry::Image(first.in_dims)
        } else {
            Entry::Flat(first.in_dims)
        };

        let mut width = first.in_dims;
        for (idx, l) in self.layers.iter().enumerate() {
            match l.kind {
                LayerKind::Relu => continue,
                LayerKind::Dense => {
                    if image_family {
                        return Err(Error::Spec(format!(
                            "layer {idx}: dense layer inside a convolutional network"
                        )));
                    }
                }
                LayerKind::ResidualFcBlock => {
                    if image_family {
                        return Err(Error::Spec(format!(
                            "layer {idx}: residual fc block inside a convolutional network"
                        )));
                    }
                    if l.in_dims != l.out_dims {
                        return Err(Error::Spec(format!(
                            "layer {idx}: residual block requires in_dims = out_dims"
                        )));
                    }
                }
                LayerKind::Conv2d => {
                    if !image_family {
                        return Err(Error::Spec(format!(
                            "layer {idx}: conv layer inside a fully connected network"
                        )));
                    }
                    match l.kernel {
                        Some((kh, kw)) if kh % 2 == 1 && kw % 2 == 1 => {}
                        Some((kh, kw)) => {
                            return Err(Error::Spec(format!(
                                "layer {idx}: even kernel {kh}x{kw} unsupported"
                            )))
                        }
                        None => {
                            return Err(Error::Spec(format!("layer {idx}: conv without kernel")))
                        }
                    }
                }
            }
            if l.in_dims != width {
                return Err(Error::Spec(format!(
                    "layer {idx}: expects {} inputs, previous layer provides {width}",
                    l.in_dims
                )));
            }
            width = l.out_dims;
        }

        let entry_width = first.in_dims;
        if width != entry_width {
            return Err(Error::Spec(format!(
                "network maps {entry_width} -> {width}; the identity task requires matching entry and exit dims"
            )));
        }
        Ok(entry)
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }
}

/// Parameter tensors of one layer.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams {
    None,
    Dense {
        /// `out×in`, row-major.
        w: Tensor,
        b: Option<Tensor>,
    },
    Conv {
        /// `(K_H·K_W·C_in) × C_out`; column `c̄` is kernel `c̄` flattened
        /// channel-major, matching `patches::im2col` rows.
        w: Tensor,
        b: Option<Tensor>,
    },
    Residual {
        w1: Tensor,
        b1: Option<Tensor>,
        w2: Tensor,
        b2: Option<Tensor>,
    },
}

impl LayerParams {
    /// Parameter tensors in a fixed order (`w`, `b`, `w2`, `b2`).
    pub fn tensors(&self) -> Vec<&Tensor> {
        match self {
            LayerParams::None => vec![],
            LayerParams::Dense { w, b } | LayerParams::Conv { w, b } => {
                let mut v = vec![w];
                if let Some(b) = b {
                    v.push(b);
                }
                v
            }
            LayerParams::Residual { w1, b1, w2, b2 } => {
                let mut v = vec![w1];
                if let Some(b) = b1 {
                    v.push(b);
                }
                v.push(w2);
                if let Some(b) = b2 {
                    v.push(b);
                }
                v
            }
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            LayerParams::None => vec![],
            LayerParams::Dense { w, b } | LayerParams::Conv { w, b } => {
                let mut v = vec![w];
                if let Some(b) = b {
                    v.push(b);
                }
                v
            }
            LayerParams::Residual { w1, b1, w2, b2 } => {
                let mut v = vec![w1];
                if let Some(b) = b1 {
                    v.push(b);
                }
                v.push(w2);
                if let Some(b) = b2 {
                    v.push(b);
                }
                v
            }
        }
    }
}

/// An instantiated network: spec, live parameters, and the untouched
/// initialization snapshot `W⁰`.
#[derive(Clone, Debug)]
pub struct Network {
    spec: NetworkSpec,
    params: Vec<LayerParams>,
    initial: Vec<LayerParams>,
}

/// Draws parameters for every layer from the seeded generator.
///
/// Each layer initializes from its own substream, so adding evaluation
/// sampling or reordering other draws never changes layer weights. Biases
/// start at zero. Conv fan-in/fan-out are `C_in·K_H·K_W` / `C_out·K_H·K_W`.
pub fn build_network(spec: &NetworkSpec) -> Result<Network> {
    spec.validate()?;
    let root = RngState::new(spec.seed);
    let mut params = Vec::with_capacity(spec.layers.len());
    for (idx, l) in spec.layers.iter().enumerate() {
        params.push(init::init_layer(l, spec.init_scheme, root.split2(1, idx as u64))?);
    }
    Ok(Network {
        spec: spec.clone(),
        initial: params.clone(),
        params,
    })
}

impl Network {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn entry(&self) -> Entry {
        // Spec was validated at build time.
        self.spec.validate().expect("validated at construction")
    }

    pub fn depth(&self) -> usize {
        self.spec.layers.len()
    }

    pub fn params(&self) -> &[LayerParams] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [LayerParams] {
        &mut self.params
    }

    /// Initialization snapshot `W⁰`; never mutated after construction.
    pub fn initial_params(&self) -> &[LayerParams] {
        &self.initial
    }

    pub fn layer_spec(&self, idx: usize) -> &LayerSpec {
        &self.spec.layers[idx]
    }

    /// Replaces the parameters of one layer; shapes must match.
    pub fn set_layer_params(&mut self, idx: usize, p: LayerParams) -> Result<()> {
        let shapes = |lp: &LayerParams| {
            lp.tensors()
                .iter()
                .map(|t| t.shape().to_vec())
                .collect::<Vec<_>>()
        };
        if shapes(&self.params[idx]) != shapes(&p) {
            return Err(Error::shape(
                "set_layer_params",
                format!("layer {idx}: parameter shapes differ"),
            ));
        }
        self.params[idx] = p;
        Ok(())
    }

    /// Conv kernel as the `C_out×C_in×K_H×K_W` tensor.
    pub fn kernel4d(&self, layer: usize) -> Result<Tensor> {
        let l = &self.spec.layers[layer];
        let LayerParams::Conv { w, .. } = &self.params[layer] else {
            return Err(Error::invalid("kernel4d", format!("layer {layer} is not conv")));
        };
        let (kh, kw) = l.kernel.unwrap();
        let (c_in, c_out) = (l.in_dims, l.out_dims);
        let mut out = Tensor::zeros(&[c_out, c_in, kh, kw]);
        for co in 0..c_out {
            for ci in 0..c_in {
                for u in 0..kh {
                    for v in 0..kw {
                        let flat_row = ci * kh * kw + u * kw + v;
                        out.data_mut()[((co * c_in + ci) * kh + u) * kw + v] =
                            w.get2(flat_row, co);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Writes a `C_out×C_in×K_H×K_W` kernel into the flat conv storage.
    pub fn set_kernel4d(&mut self, layer: usize, kernel: &Tensor) -> Result<()> {
        let l = self.spec.layers[layer].clone();
        let (kh, kw) = l
            .kernel
            .ok_or_else(|| Error::invalid("set_kernel4d", "layer is not conv"))?;
        let (c_in, c_out) = (l.in_dims, l.out_dims);
        if kernel.shape() != [c_out, c_in, kh, kw] {
            return Err(Error::shape(
                "set_kernel4d",
                format!("{:?} != [{c_out}, {c_in}, {kh}, {kw}]", kernel.shape()),
            ));
        }
        let LayerParams::Conv { w, .. } = &mut self.params[layer] else {
            return Err(Error::invalid("set_kernel4d", "layer is not conv"));
        };
        for co in 0..c_out {
            for ci in 0..c_in {
                for u in 0..kh {
                    for v in 0..kw {
                        let flat_row = ci * kh * kw + u * kw + v;
                        w.set2(
                            flat_row,
                            co,
                            kernel.data()[((co * c_in + ci) * kh + u) * kw + v],
                        );
                    }
                }
            }
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor, capture: bool) -> Result<(Tensor, Vec<Tensor>)> {
        forward(self, input, capture)
    }

    pub fn backward(&self, input: &Tensor, target: &Tensor) -> Result<Gradients> {
        backward(self, input, target)
    }
}

/// `½ · mean((pred − target)²)`.
pub fn loss_mse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(
            "loss_mse",
            format!("{:?} vs {:?}", pred.shape(), target.shape()),
        ));
    }
    let n = pred.len() as f64;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum();
    Ok(0.5 * sum / n)
}

/// Parameter counts `(weights_only, with_bias)`.
pub fn count_params(spec: &NetworkSpec) -> (u64, u64) {
    let mut weights = 0u64;
    let mut biases = 0u64;
    for l in &spec.layers {
        match l.kind {
            LayerKind::Relu => {}
            LayerKind::Dense => {
                weights += (l.in_dims * l.out_dims) as u64;
                if l.has_bias {
                    biases += l.out_dims as u64;
                }
            }
            LayerKind::Conv2d => {
                let (kh, kw) = l.kernel.unwrap_or((0, 0));
                weights += (kh * kw * l.in_dims * l.out_dims) as u64;
                if l.has_bias {
                    biases += l.out_dims as u64;
                }
            }
            LayerKind::ResidualFcBlock => {
                weights += 2 * (l.in_dims * l.out_dims) as u64;
                if l.has_bias {
                    biases += 2 * l.out_dims as u64;
                }
            }
        }
    }
    (weights, weights + biases)
}

/// Builders for the architecture families used throughout the experiments.
pub mod arch {
    use super::*;

    /// `depth` dense layers with ReLU between them (none at the output).
    pub fn fcn(depth: usize, input_dim: usize, hidden_dim: usize, relu: bool) -> Vec<LayerSpec> {
        let mut layers = Vec::new();
        for i in 0..depth {
            let din = if i == 0 { input_dim } else { hidden_dim };
            let dout = if i + 1 == depth { input_dim } else { hidden_dim };
            layers.push(LayerSpec::dense(din, dout));
            if relu && i + 1 != depth {
                layers.push(LayerSpec::relu());
            }
        }
        layers
    }

    /// `depth` conv layers (`data_ch → ch → … → ch → data_ch`) with ReLU
    /// between them.
    pub fn cnn(depth: usize, data_ch: usize, ch: usize, k: usize) -> Vec<LayerSpec> {
        let mut layers = Vec::new();
        for i in 0..depth {
            let cin = if i == 0 { data_ch } else { ch };
            let cout = if i + 1 == depth { data_ch } else { ch };
            layers.push(LayerSpec::conv2d(cin, cout, k));
            if i + 1 != depth {
                layers.push(LayerSpec::relu());
            }
        }
        layers
    }

    /// Residual FCN: entry dense layer, `blocks` residual blocks, no output
    /// nonlinearity.
    pub fn residual_fcn(blocks: usize, width: usize) -> Vec<LayerSpec> {
        let mut layers = vec![LayerSpec::dense(width, width)];
        for _ in 0..blocks {
            layers.push(LayerSpec::residual_fc(width));
        }
        layers
    }
}
