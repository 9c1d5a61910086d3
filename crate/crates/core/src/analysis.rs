//! Measurement machinery: ρ-controlled test images, correlation heatmaps
//! against the identity/constant references, the similarity-probe classifier,
//! channel visualizations, weight distances, and subnetwork evaluation.

use crate::error::{Error, Result};
use crate::nn::{Entry, LayerKind, LayerParams, Network};
use crate::tensor::linalg::svd;
use crate::tensor::rng::{sample, Dist, RngState};
use crate::tensor::{gemm, Tensor};

/// Correlation value plus a flag marking degenerate (near-zero variance)
/// inputs, for which the value is reported as 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correlation {
    pub value: f64,
    pub degenerate: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMode {
    #[default]
    Pearson,
    Cosine,
}

const VAR_FLOOR: f64 = 1e-20;

/// Pearson correlation over flattened, mean-centered entries.
pub fn pearson_corr(a: &Tensor, b: &Tensor) -> Result<Correlation> {
    correlation(a, b, CorrelationMode::Pearson)
}

pub fn correlation(a: &Tensor, b: &Tensor, mode: CorrelationMode) -> Result<Correlation> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            "correlation",
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    if a.len() < 2 {
        return Err(Error::invalid("correlation", "need at least 2 entries"));
    }
    let n = a.len() as f64;
    let (ma, mb) = match mode {
        CorrelationMode::Pearson => (
            a.data().iter().sum::<f64>() / n,
            b.data().iter().sum::<f64>() / n,
        ),
        CorrelationMode::Cosine => (0.0, 0.0),
    };
    let mut num = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (dx, dy) = (x - ma, y - mb);
        num += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va < VAR_FLOOR || vb < VAR_FLOOR {
        return Ok(Correlation {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(Correlation {
        value: num / (va.sqrt() * vb.sqrt()),
        degenerate: false,
    })
}

/// Measurement target: the identity function or the constant function
/// returning the training example.
#[derive(Clone, Debug)]
pub enum ReferenceFunction {
    Identity,
    Constant { anchor: Tensor },
}

impl ReferenceFunction {
    pub fn eval(&self, x: &Tensor) -> Tensor {
        match self {
            ReferenceFunction::Identity => x.clone(),
            ReferenceFunction::Constant { anchor } => anchor.clone(),
        }
    }
}

/// Random image with a prescribed correlation `ρ` to `x̂` and the same norm.
///
/// Procedure: sample i.i.d. Gaussian pixels, add `α·x̂` with `α` solving
/// `corr(z + αx̂, x̂) = ρ`, then rescale to `‖x̂‖`. For `ρ = 1` the test image
/// is `x̂` itself.
pub fn gen_correlated_image(xhat: &Tensor, rho: f64, rng: &mut RngState) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid("gen_correlated_image", format!("rho = {rho}")));
    }
    let norm = xhat.frob_norm();
    if norm == 0.0 {
        return Err(Error::Degenerate {
            op: "gen_correlated_image",
            detail: "training example has zero norm".into(),
        });
    }
    if rho == 1.0 {
        return Ok(xhat.clone());
    }

    let n = xhat.len() as f64;
    let mean_x = xhat.data().iter().sum::<f64>() / n;
    let xc: Vec<f64> = xhat.data().iter().map(|&v| v - mean_x).collect();
    let b = gemm::dot(&xc, &xc);
    if b < VAR_FLOOR {
        return Err(Error::Degenerate {
            op: "gen_correlated_image",
            detail: "training example has zero variance".into(),
        });
    }

    for _attempt in 0..100 {
        let z = sample(Dist::gaussian(0.0, 1.0), xhat.shape(), rng)?;
        let mean_z = z.data().iter().sum::<f64>() / n;
        let zc: Vec<f64> = z.data().iter().map(|&v| v - mean_z).collect();
        let a = gemm::dot(&zc, &xc);
        let n2 = gemm::dot(&zc, &zc);
        // corr(z + αx̂, x̂) = ρ reduces to a quadratic in α whose
        // discriminant ρ²(1−ρ²)(b·n2 − a²) is non-negative by
        // Cauchy–Schwarz; the + root gives the correct sign.
        let disc = b * n2 - a * a;
        if disc <= 0.0 {
            continue;
        }
        let alpha = -a / b + (rho / b) * (disc / (1.0 - rho * rho)).sqrt();
        let mut img = z;
        img.axpy(alpha, xhat)?;
        let img_norm = img.frob_norm();
        if img_norm < VAR_FLOOR.sqrt() {
            continue;
        }
        return Ok(img.scale(norm / img_norm));
    }
    Err(Error::Degenerate {
        op: "gen_correlated_image",
        detail: "no feasible noise draw after 100 attempts".into(),
    })
}

/// Per-model, per-ρ mean correlations of model predictions against the two
/// reference functions.
#[derive(Clone, Debug)]
pub struct CorrelationHeatmap {
    pub row_labels: Vec<String>,
    pub rho_grid: Vec<f64>,
    /// Rows × ρ cells, correlation of predictions to the identity function.
    pub corr_identity: Tensor,
    /// Rows × ρ cells, correlation of predictions to the constant function.
    pub corr_constant: Tensor,
    pub samples_per_cell: usize,
}

/// Evenly spaced ρ grid over `[0, 1]`.
pub fn rho_grid(points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![0.0];
    }
    (0..points)
        .map(|i| i as f64 / (points - 1) as f64)
        .collect()
}

/// Fills both heatmap planes. Each cell draws its samples from a substream
/// keyed by `(row, column)`, so the result is deterministic and independent
/// of evaluation order.
pub fn reference_heatmap(
    models: &[(String, &Network)],
    xhat: &Tensor,
    grid: &[f64],
    samples_per_cell: usize,
    mode: CorrelationMode,
    seed: u64,
) -> Result<CorrelationHeatmap> {
    let rows = models.len();
    let cols = grid.len();
    let mut corr_identity = Tensor::zeros(&[rows, cols]);
    let mut corr_constant = Tensor::zeros(&[rows, cols]);
    let root = RngState::new(seed).split(0x6ea7);
    for (r, (_, net)) in models.iter().enumerate() {
        for (c, &rho) in grid.iter().enumerate() {
            let mut rng = root.split2(r as u64, c as u64);
            let mut sum_id = 0.0;
            let mut sum_const = 0.0;
            for _ in 0..samples_per_cell {
                let x = gen_correlated_image(xhat, rho, &mut rng)?;
                let (pred, _) = net.forward(&x, false)?;
                sum_id += correlation(&pred, &x, mode)?.value;
                sum_const += correlation(&pred, xhat, mode)?.value;
            }
            corr_identity.set2(r, c, sum_id / samples_per_cell as f64);
            corr_constant.set2(r, c, sum_const / samples_per_cell as f64);
        }
    }
    Ok(CorrelationHeatmap {
        row_labels: models.iter().map(|(l, _)| l.clone()).collect(),
        rho_grid: grid.to_vec(),
        corr_identity,
        corr_constant,
        samples_per_cell,
    })
}

/// Row means of both planes: `(identity, constant)` per row.
pub fn mean_correlation_curve(h: &CorrelationHeatmap) -> (Vec<f64>, Vec<f64>) {
    let cols = h.rho_grid.len() as f64;
    let mean_rows = |t: &Tensor| -> Vec<f64> {
        (0..h.row_labels.len())
            .map(|r| t.row(r).iter().sum::<f64>() / cols)
            .collect()
    };
    (mean_rows(&h.corr_identity), mean_rows(&h.corr_constant))
}

/// A labeled image set for the probe classifier.
#[derive(Clone, Debug)]
pub struct LabeledSet {
    pub items: Vec<Tensor>,
    pub labels: Vec<u8>,
}

impl LabeledSet {
    pub fn new(items: Vec<Tensor>, labels: Vec<u8>) -> Result<Self> {
        if items.len() != labels.len() || items.is_empty() {
            return Err(Error::invalid("LabeledSet", "empty or mismatched set"));
        }
        Ok(LabeledSet { items, labels })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Representation of every item at `layer_index` (0 = raw input), flattened
/// into rows of a matrix.
fn layer_reps(net: &Network, layer_index: usize, set: &LabeledSet) -> Result<Tensor> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(set.len());
    for item in &set.items {
        if layer_index == 0 {
            rows.push(item.data().to_vec());
        } else {
            let (_, caps) = crate::nn::forward(net, item, true)?;
            rows.push(caps[layer_index - 1].data().to_vec());
        }
    }
    Tensor::from_rows(&rows)
}

/// Error rate of the similarity-weighted probe classifier at one layer.
///
/// Each test item votes for classes with weights `⟨rep(xᵢ), rep(xⱼ)⟩` over
/// the training items; prediction is the argmax (ties resolve to the lowest
/// class index).
pub fn probe_error_rate(
    net: &Network,
    layer_index: usize,
    probe_train: &LabeledSet,
    probe_test: &LabeledSet,
) -> Result<f64> {
    if layer_index > net.depth() {
        return Err(Error::invalid(
            "probe_error_rate",
            format!("layer {layer_index} > depth {}", net.depth()),
        ));
    }
    let train_reps = layer_reps(net, layer_index, probe_train)?;
    let test_reps = layer_reps(net, layer_index, probe_test)?;
    let (n_test, d) = test_reps.as2d()?;
    let (n_train, _) = train_reps.as2d()?;

    // Similarity matrix test × train.
    let mut sim = Tensor::zeros(&[n_test, n_train]);
    gemm::gemm_nt(
        sim.data_mut(),
        test_reps.data(),
        train_reps.data(),
        n_test,
        d,
        n_train,
    );

    let n_classes = 10usize;
    let mut errors = 0usize;
    for i in 0..n_test {
        let mut scores = [0.0f64; 10];
        for (j, &sv) in sim.row(i).iter().enumerate() {
            scores[probe_train.labels[j] as usize] += sv;
        }
        let mut best = 0usize;
        for c in 1..n_classes {
            if scores[c] > scores[best] {
                best = c;
            }
        }
        if best != probe_test.labels[i] as usize {
            errors += 1;
        }
    }
    Ok(errors as f64 / n_test as f64)
}

/// How a multi-channel activation is collapsed to one image.
pub enum VizMode<'a> {
    /// Top right-singular vector of the `C×(H·W)` matrix, sign-oriented so
    /// its correlation with the channel-mean image is non-negative.
    TopSingular,
    /// The channel most correlated with the given input image.
    MaxCorr(&'a Tensor),
    /// Channel `k` verbatim.
    Index(usize),
}

pub fn channel_viz(activation: &Tensor, mode: VizMode) -> Result<Tensor> {
    let &[c, h, w] = activation.shape() else {
        return Err(Error::shape(
            "channel_viz",
            format!("expected [C, H, W], got {:?}", activation.shape()),
        ));
    };
    let channel = |k: usize| {
        Tensor::new(
            vec![h, w],
            activation.data()[k * h * w..(k + 1) * h * w].to_vec(),
        )
    };
    match mode {
        VizMode::Index(k) => {
            if k >= c {
                return Err(Error::invalid("channel_viz", format!("channel {k} >= {c}")));
            }
            channel(k)
        }
        VizMode::MaxCorr(input) => {
            let flat_input = input.clone().reshape(vec![h, w])?;
            let mut best = 0usize;
            let mut best_corr = f64::NEG_INFINITY;
            for k in 0..c {
                let corr = pearson_corr(&channel(k)?, &flat_input)?.value;
                if corr > best_corr {
                    best_corr = corr;
                    best = k;
                }
            }
            channel(best)
        }
        VizMode::TopSingular => {
            let mat = activation.clone().reshape(vec![c, h * w])?;
            let d = svd(&mat)?;
            let mut v1: Vec<f64> = (0..h * w).map(|i| d.v.get2(i, 0)).collect();
            // Orient: non-negative correlation with the channel mean.
            let mut mean = vec![0.0f64; h * w];
            for k in 0..c {
                for (m, &x) in mean
                    .iter_mut()
                    .zip(&activation.data()[k * h * w..(k + 1) * h * w])
                {
                    *m += x / c as f64;
                }
            }
            let mean_t = Tensor::new(vec![h, w], mean)?;
            let v1_t = Tensor::new(vec![h, w], v1.clone())?;
            let corr = pearson_corr(&v1_t, &mean_t)?;
            if !corr.degenerate && corr.value < 0.0 {
                for x in v1.iter_mut() {
                    *x = -*x;
                }
            }
            Tensor::new(vec![h, w], v1)
        }
    }
}

/// Relative weight movement `‖W⁰ − W*‖ / ‖W⁰‖` (Frobenius).
pub fn weight_distance(w0: &Tensor, wstar: &Tensor) -> Result<f64> {
    if w0.shape() != wstar.shape() {
        return Err(Error::shape(
            "weight_distance",
            format!("{:?} vs {:?}", w0.shape(), wstar.shape()),
        ));
    }
    let base = w0.frob_norm();
    if base == 0.0 {
        return Err(Error::Degenerate {
            op: "weight_distance",
            detail: "zero initial norm".into(),
        });
    }
    Ok(w0.sub(wstar)?.frob_norm() / base)
}

/// Per-layer relative weight distances of a network against its `W⁰`
/// snapshot (weights only, biases excluded); `None` for parameterless
/// layers.
pub fn layer_weight_distances(net: &Network) -> Result<Vec<Option<f64>>> {
    let mut out = Vec::with_capacity(net.depth());
    for (p, p0) in net.params().iter().zip(net.initial_params()) {
        let dist = match (p, p0) {
            (LayerParams::Dense { w, .. }, LayerParams::Dense { w: w0, .. })
            | (LayerParams::Conv { w, .. }, LayerParams::Conv { w: w0, .. }) => {
                Some(weight_distance(w0, w)?)
            }
            (
                LayerParams::Residual { w1, w2, .. },
                LayerParams::Residual {
                    w1: w01, w2: w02, ..
                },
            ) => {
                let num =
                    (w01.sub(w1)?.frob_norm().powi(2) + w02.sub(w2)?.frob_norm().powi(2)).sqrt();
                let den = (w01.frob_norm().powi(2) + w02.frob_norm().powi(2)).sqrt();
                if den == 0.0 {
                    return Err(Error::Degenerate {
                        op: "layer_weight_distances",
                        detail: "zero initial norm".into(),
                    });
                }
                Some(num / den)
            }
            _ => None,
        };
        out.push(dist);
    }
    Ok(out)
}

/// Forward pass at a different spatial size; only meaningful for
/// all-convolutional (size-agnostic) networks.
pub fn eval_at_size(net: &Network, image: &Tensor) -> Result<Tensor> {
    match net.entry() {
        Entry::Image(_) => {
            let (out, _) = net.forward(image, false)?;
            Ok(out)
        }
        Entry::Flat(_) => Err(Error::Unsupported(
            "input-size evaluation requires an all-convolutional network".into(),
        )),
    }
}

/// Feeds a grayscale image directly to layer `start_layer`, replicating it
/// across the channels that layer expects.
pub fn upper_subnet_predict(net: &Network, start_layer: usize, image: &Tensor) -> Result<Tensor> {
    if net.depth() < 2 || start_layer == 0 || start_layer >= net.depth() {
        return Err(Error::invalid(
            "upper_subnet_predict",
            format!(
                "start layer must lie in [1, {}), got {start_layer}",
                net.depth()
            ),
        ));
    }
    if !matches!(net.entry(), Entry::Image(_)) {
        return Err(Error::Unsupported(
            "upper-subnetwork evaluation requires a convolutional network".into(),
        ));
    }
    let &[c_img, h, w] = image.shape() else {
        return Err(Error::shape(
            "upper_subnet_predict",
            format!("expected [1, H, W], got {:?}", image.shape()),
        ));
    };
    if c_img != 1 {
        return Err(Error::shape(
            "upper_subnet_predict",
            "expected a single-channel image to replicate",
        ));
    }
    let expect = net.spec().layers[start_layer..]
        .iter()
        .find(|l| matches!(l.kind, LayerKind::Conv2d))
        .map(|l| l.in_dims)
        .ok_or_else(|| Error::Spec("no convolutional layer at or after the start layer".into()))?;
    let mut rep = Tensor::zeros(&[expect, h, w]);
    for c in 0..expect {
        rep.data_mut()[c * h * w..(c + 1) * h * w].copy_from_slice(image.data());
    }
    let (out, _) = crate::nn::forward_from(net, start_layer, &rep, false)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::{identity_cnn, identity_linear_fcn};
    use crate::nn::{build_network, InitScheme, LayerSpec, NetworkSpec};

    #[test]
    fn pearson_basics() {
        let a = Tensor::new(vec![4], vec![1.0, 2.0, 3.0, 5.0]).unwrap();
        assert!((pearson_corr(&a, &a).unwrap().value - 1.0).abs() < 1e-12);
        let neg = a.scale(-1.0);
        assert!((pearson_corr(&a, &neg).unwrap().value + 1.0).abs() < 1e-12);
        let flat = Tensor::full(&[4], 3.0);
        let c = pearson_corr(&a, &flat).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.value, 0.0);
    }

    #[test]
    fn pearson_matches_two_pass_oracle() {
        let mut rng = RngState::new(3);
        let a = sample(Dist::gaussian(0.0, 1.0), &[40], &mut rng).unwrap();
        let b = sample(Dist::gaussian(0.0, 1.0), &[40], &mut rng).unwrap();
        // Textbook two-pass formula.
        let n = 40.0;
        let ma = a.data().iter().sum::<f64>() / n;
        let mb = b.data().iter().sum::<f64>() / n;
        let cov = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| (x - ma) * (y - mb))
            .sum::<f64>()
            / n;
        let sa = (a.data().iter().map(|&x| (x - ma) * (x - ma)).sum::<f64>() / n).sqrt();
        let sb = (b.data().iter().map(|&y| (y - mb) * (y - mb)).sum::<f64>() / n).sqrt();
        let oracle = cov / (sa * sb);
        assert!((pearson_corr(&a, &b).unwrap().value - oracle).abs() < 1e-12);
    }

    #[test]
    fn correlated_image_contract() {
        let mut rng = RngState::new(7);
        let xhat = sample(Dist::gaussian(0.5, 1.0), &[1, 8, 8], &mut rng).unwrap();
        for &rho in &[0.0, 0.25, 0.5, 0.75, 1.0] {
            for _ in 0..50 {
                let img = gen_correlated_image(&xhat, rho, &mut rng).unwrap();
                let c = pearson_corr(&img, &xhat).unwrap().value;
                assert!((c - rho).abs() < 1e-6, "rho {rho}: got {c}");
                let rel = (img.frob_norm() - xhat.frob_norm()).abs() / xhat.frob_norm();
                assert!(rel < 1e-6, "rho {rho}: norm error {rel}");
            }
        }
    }

    #[test]
    fn correlated_image_rho_one_is_anchor() {
        let mut rng = RngState::new(9);
        let xhat = sample(Dist::gaussian(0.0, 1.0), &[16], &mut rng).unwrap();
        let img = gen_correlated_image(&xhat, 1.0, &mut rng).unwrap();
        assert_eq!(img, xhat);
    }

    #[test]
    fn heatmap_identity_construction_is_identity_everywhere() {
        let net = identity_cnn(2, 1, 3).unwrap();
        let mut rng = RngState::new(5);
        let xhat = sample(Dist::gaussian(0.2, 1.0), &[1, 6, 6], &mut rng).unwrap();
        let grid = rho_grid(5);
        let models = vec![("id".to_string(), &net)];
        let h = reference_heatmap(&models, &xhat, &grid, 4, CorrelationMode::Pearson, 1).unwrap();
        for c in 0..grid.len() {
            assert!(h.corr_identity.get2(0, c) >= 0.999, "cell {c}");
        }
    }

    #[test]
    fn heatmap_constant_model_tracks_constant_reference() {
        // Dense net with zero weights and bias = x̂ computes the constant map.
        let d = 12;
        let spec = NetworkSpec::new(vec![LayerSpec::dense(d, d)], InitScheme::Default, 1);
        let mut net = build_network(&spec).unwrap();
        let mut rng = RngState::new(11);
        let xhat = sample(Dist::gaussian(0.0, 1.0), &[d], &mut rng).unwrap();
        net.set_layer_params(
            0,
            LayerParams::Dense {
                w: Tensor::zeros(&[d, d]),
                b: Some(xhat.clone()),
            },
        )
        .unwrap();
        let grid = rho_grid(3);
        let models = vec![("const".to_string(), &net)];
        let h = reference_heatmap(&models, &xhat, &grid, 4, CorrelationMode::Pearson, 2).unwrap();
        for c in 0..grid.len() {
            assert!(h.corr_constant.get2(0, c) >= 0.999);
        }
        // At ρ = 1 the two references coincide for any model fitting x̂.
        let last = grid.len() - 1;
        assert!((h.corr_constant.get2(0, last) - h.corr_identity.get2(0, last)).abs() < 1e-9);
    }

    #[test]
    fn heatmap_is_deterministic() {
        let net = identity_cnn(1, 1, 3).unwrap();
        let mut rng = RngState::new(6);
        let xhat = sample(Dist::gaussian(0.0, 1.0), &[1, 5, 5], &mut rng).unwrap();
        let grid = rho_grid(4);
        let models = vec![("m".to_string(), &net)];
        let a = reference_heatmap(&models, &xhat, &grid, 3, CorrelationMode::Pearson, 9).unwrap();
        let b = reference_heatmap(&models, &xhat, &grid, 3, CorrelationMode::Pearson, 9).unwrap();
        assert_eq!(a.corr_identity, b.corr_identity);
        assert_eq!(a.corr_constant, b.corr_constant);
    }

    #[test]
    fn mean_curve_examples() {
        let h = CorrelationHeatmap {
            row_labels: vec!["a".into(), "b".into()],
            rho_grid: vec![0.0, 0.5, 1.0],
            corr_identity: Tensor::full(&[2, 3], 0.25),
            corr_constant: Tensor::new(vec![2, 3], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap(),
            samples_per_cell: 1,
        };
        let (id_means, const_means) = mean_correlation_curve(&h);
        assert_eq!(id_means, vec![0.25, 0.25]);
        // Direct averaging oracle.
        assert!((const_means[0] - 0.2).abs() < 1e-14);
        assert!((const_means[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn single_column_heatmap_means_equal_column() {
        let h = CorrelationHeatmap {
            row_labels: vec!["a".into()],
            rho_grid: vec![0.0],
            corr_identity: Tensor::new(vec![1, 1], vec![0.7]).unwrap(),
            corr_constant: Tensor::new(vec![1, 1], vec![-0.3]).unwrap(),
            samples_per_cell: 1,
        };
        let (id_means, const_means) = mean_correlation_curve(&h);
        assert_eq!(id_means, vec![0.7]);
        assert_eq!(const_means, vec![-0.3]);
    }

    #[test]
    fn probe_is_layer_constant_on_linear_identity_construction() {
        let net = identity_linear_fcn(3, 6).unwrap();
        let mut rng = RngState::new(13);
        let mut items = Vec::new();
        let mut labels = Vec::new();
        for i in 0..12 {
            items.push(sample(Dist::gaussian(0.0, 1.0), &[6], &mut rng).unwrap());
            labels.push((i % 3) as u8);
        }
        let train = LabeledSet::new(items[..8].to_vec(), labels[..8].to_vec()).unwrap();
        let test = LabeledSet::new(items[8..].to_vec(), labels[8..].to_vec()).unwrap();
        let base = probe_error_rate(&net, 0, &train, &test).unwrap();
        for layer in 1..=net.depth() {
            let e = probe_error_rate(&net, layer, &train, &test).unwrap();
            assert_eq!(e, base, "layer {layer}");
        }
    }

    #[test]
    fn probe_matches_identical_example() {
        // Test item equals one training item; all others orthogonal.
        let e0 = Tensor::new(vec![4], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let e1 = Tensor::new(vec![4], vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let e2 = Tensor::new(vec![4], vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let train = LabeledSet::new(vec![e0.clone(), e1, e2], vec![7, 1, 2]).unwrap();
        let test = LabeledSet::new(vec![e0], vec![7]).unwrap();
        let net = identity_linear_fcn(1, 4).unwrap();
        assert_eq!(probe_error_rate(&net, 0, &train, &test).unwrap(), 0.0);
    }

    #[test]
    fn channel_viz_single_channel_is_the_channel() {
        let mut rng = RngState::new(15);
        let act = sample(Dist::gaussian(0.0, 1.0), &[1, 4, 4], &mut rng).unwrap();
        let viz = channel_viz(&act, VizMode::TopSingular).unwrap();
        // Proportional to the channel itself (up to normalization).
        let c = pearson_corr(&viz, &act.clone().reshape(vec![4, 4]).unwrap()).unwrap();
        assert!(c.value.abs() > 1.0 - 1e-9);
    }

    #[test]
    fn channel_viz_equal_channels_align_with_pattern() {
        let mut rng = RngState::new(16);
        let p = sample(Dist::gaussian(0.0, 1.0), &[5, 5], &mut rng).unwrap();
        let mut act = Tensor::zeros(&[3, 5, 5]);
        for c in 0..3 {
            act.data_mut()[c * 25..(c + 1) * 25].copy_from_slice(p.data());
        }
        let viz = channel_viz(&act, VizMode::TopSingular).unwrap();
        let corr = pearson_corr(&viz, &p).unwrap().value;
        assert!(corr > 0.999, "corr {corr}");
    }

    #[test]
    fn channel_viz_top_singular_matches_svd_module() {
        let mut rng = RngState::new(17);
        let act = sample(Dist::gaussian(0.0, 1.0), &[4, 5, 5], &mut rng).unwrap();
        let viz = channel_viz(&act, VizMode::TopSingular).unwrap();
        let mat = act.clone().reshape(vec![4, 25]).unwrap();
        let d = svd(&mat).unwrap();
        // viz must be the top right-singular vector up to sign.
        let mut dots = 0.0;
        for i in 0..25 {
            dots += viz.data()[i] * d.v.get2(i, 0);
        }
        assert!((dots.abs() - 1.0).abs() < 1e-9);
        // And the rank-1 truncation riesidual matches the tail energy.
        let mut rank1 = Tensor::zeros(&[4, 25]);
        for i in 0..4 {
            for j in 0..25 {
                rank1.set2(i, j, d.s[0] * d.u.get2(i, 0) * d.v.get2(j, 0));
            }
        }
        let resid = mat.sub(&rank1).unwrap().frob_norm();
        let tail = d.s.iter().skip(1).map(|s| s * s).sum::<f64>().sqrt();
        assert!((resid - tail).abs() < 1e-9);
        assert!(channel_viz(&act, VizMode::Index(4)).is_err());
    }

    #[test]
    fn weight_distance_examples() {
        let mut rng = RngState::new(18);
        let w0 = sample(Dist::gaussian(0.0, 1.0), &[3, 3], &mut rng).unwrap();
        assert_eq!(weight_distance(&w0, &w0).unwrap(), 0.0);
        assert!((weight_distance(&w0, &w0.scale(2.0)).unwrap() - 1.0).abs() < 1e-12);
        assert!((weight_distance(&w0, &Tensor::zeros(&[3, 3])).unwrap() - 1.0).abs() < 1e-12);
        assert!(weight_distance(&Tensor::zeros(&[3, 3]), &w0).is_err());
    }

    #[test]
    fn eval_at_size_identity_cnn() {
        let net = identity_cnn(3, 1, 5).unwrap();
        let mut rng = RngState::new(19);
        for &s in &[7usize, 112] {
            let img = sample(Dist::gaussian(0.0, 1.0), &[1, s, s], &mut rng).unwrap();
            let out = eval_at_size(&net, &img).unwrap();
            assert_eq!(out.shape(), img.shape());
            assert!(out.sub(&img).unwrap().max_abs() < 1e-12, "size {s}");
        }
        let fcn = identity_linear_fcn(1, 9).unwrap();
        let img = Tensor::zeros(&[1, 3, 3]);
        assert!(eval_at_size(&fcn, &img).is_err());
    }

    #[test]
    fn upper_subnet_replication_and_bounds() {
        let net = identity_cnn(3, 1, 3).unwrap();
        let mut rng = RngState::new(20);
        let img = sample(Dist::gaussian(0.0, 1.0), &[1, 2, 2], &mut rng).unwrap();
        // Hand trace from layer 1 (after the split conv): the replicated
        // image passes two relu+center-tap stages in both channels, and the
        // merge layer computes their difference, so the output is zero.
        let out = upper_subnet_predict(&net, 1, &img).unwrap();
        assert!(out.max_abs() < 1e-12);

        let depth1 = identity_cnn(1, 1, 3).unwrap();
        assert!(upper_subnet_predict(&depth1, 1, &img).is_err());
        assert!(upper_subnet_predict(&net, 0, &img).is_err());
    }
}
