//! Network definition, forward pass, loss and reverse-mode gradients.
//!
//! Row-vector convention throughout: a dense layer computes `x W + b` with
//! `x` of shape `1 x d_in`; a graph convolution computes
//! `act(A_hat X W + 1 b)` with `X` of shape `n x d_in`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::Graph;
use crate::error::{Error, Result};

/// Layer widths. The decoder expands the latent vector through dense layers
/// into `seed_channels` features per node before the graph convolutions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GcaArchitecture {
    pub enc_conv: Vec<usize>,
    pub latent_dim: usize,
    pub dec_hidden: Vec<usize>,
    pub seed_channels: usize,
    pub dec_conv: Vec<usize>,
    pub fcnn_hidden: Vec<usize>,
}

impl Default for GcaArchitecture {
    fn default() -> Self {
        Self {
            enc_conv: vec![16, 32],
            latent_dim: 12,
            dec_hidden: vec![32],
            seed_channels: 4,
            dec_conv: vec![16],
            fcnn_hidden: vec![32, 32],
        }
    }
}

impl GcaArchitecture {
    pub fn validate(&self) -> Result<()> {
        let widths = self
            .enc_conv
            .iter()
            .chain(&self.dec_hidden)
            .chain(&self.dec_conv)
            .chain(&self.fcnn_hidden)
            .chain([&self.latent_dim, &self.seed_channels]);
        if self.enc_conv.is_empty() || widths.into_iter().any(|&w| w == 0) {
            return Err(Error::Config("layer widths must be positive and the encoder non-empty".into()));
        }
        Ok(())
    }
}

/// Weight `d_in x d_out` and bias `1 x d_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: DMatrix<f64>,
    pub bias: DMatrix<f64>,
}

impl Layer {
    fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            weight: DMatrix::zeros(d_in, d_out),
            bias: DMatrix::zeros(1, d_out),
        }
    }

    fn glorot(d_in: usize, d_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (d_in + d_out) as f64).sqrt();
        Self {
            weight: DMatrix::from_fn(d_in, d_out, |_, _| rng.random_range(-limit..limit)),
            bias: DMatrix::zeros(1, d_out),
        }
    }
}

/// All trainable tensors. Gradients use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct GcaParams {
    pub enc_conv: Vec<Layer>,
    pub enc_head: Vec<Layer>,
    pub dec_head: Vec<Layer>,
    pub dec_conv: Vec<Layer>,
    pub fcnn: Vec<Layer>,
}

fn chain_dims(dims: &[usize]) -> Vec<(usize, usize)> {
    dims.windows(2).map(|w| (w[0], w[1])).collect()
}

impl GcaParams {
    fn shapes(arch: &GcaArchitecture, n_nodes: usize) -> [Vec<(usize, usize)>; 5] {
        let enc: Vec<usize> = std::iter::once(1).chain(arch.enc_conv.iter().copied()).collect();
        let pooled = *arch.enc_conv.last().unwrap_or(&1);
        let dec_head: Vec<usize> = std::iter::once(arch.latent_dim)
            .chain(arch.dec_hidden.iter().copied())
            .chain(std::iter::once(n_nodes * arch.seed_channels))
            .collect();
        let dec_conv: Vec<usize> = std::iter::once(arch.seed_channels)
            .chain(arch.dec_conv.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        let fcnn: Vec<usize> = std::iter::once(1)
            .chain(arch.fcnn_hidden.iter().copied())
            .chain(std::iter::once(arch.latent_dim))
            .collect();
        [
            chain_dims(&enc),
            vec![(pooled, arch.latent_dim)],
            chain_dims(&dec_head),
            chain_dims(&dec_conv),
            chain_dims(&fcnn),
        ]
    }

    fn build(arch: &GcaArchitecture, n_nodes: usize, mut make: impl FnMut(usize, usize) -> Layer) -> Self {
        let [a, b, c, d, e] = Self::shapes(arch, n_nodes);
        let mut group = |dims: Vec<(usize, usize)>| dims.into_iter().map(|(i, o)| make(i, o)).collect();
        Self {
            enc_conv: group(a),
            enc_head: group(b),
            dec_head: group(c),
            dec_conv: group(d),
            fcnn: group(e),
        }
    }

    pub fn zeros(arch: &GcaArchitecture, n_nodes: usize) -> Self {
        Self::build(arch, n_nodes, Layer::zeros)
    }

    pub fn glorot(arch: &GcaArchitecture, n_nodes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(arch, n_nodes, |i, o| Layer::glorot(i, o, &mut rng))
    }

    pub fn zeros_like(&self) -> Self {
        let z = |ls: &[Layer]| ls.iter().map(|l| Layer::zeros(l.weight.nrows(), l.weight.ncols())).collect();
        Self {
            enc_conv: z(&self.enc_conv),
            enc_head: z(&self.enc_head),
            dec_head: z(&self.dec_head),
            dec_conv: z(&self.dec_conv),
            fcnn: z(&self.fcnn),
        }
    }

    fn groups(&self) -> [(&'static str, &[Layer]); 5] {
        [
            ("enc_conv", &self.enc_conv),
            ("enc_head", &self.enc_head),
            ("dec_head", &self.dec_head),
            ("dec_conv", &self.dec_conv),
            ("fcnn", &self.fcnn),
        ]
    }

    /// Every tensor in a fixed order, with a stable name.
    pub fn named_tensors(&self) -> Vec<(String, &DMatrix<f64>)> {
        let mut out = Vec::new();
        for (group, layers) in self.groups() {
            for (i, l) in layers.iter().enumerate() {
                out.push((format!("{group}.{i}.weight"), &l.weight));
                out.push((format!("{group}.{i}.bias"), &l.bias));
            }
        }
        out
    }

    pub fn tensors(&self) -> Vec<&DMatrix<f64>> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        let mut out = Vec::new();
        for layers in [
            &mut self.enc_conv,
            &mut self.enc_head,
            &mut self.dec_head,
            &mut self.dec_conv,
            &mut self.fcnn,
        ] {
            for l in layers.iter_mut() {
                out.push(&mut l.weight);
                out.push(&mut l.bias);
            }
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Affine scalings applied around the network.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcaNormalization {
    /// Physical field = network field * `field_scale`.
    pub field_scale: f64,
    pub dt_offset: f64,
    pub dt_scale: f64,
}

impl Default for GcaNormalization {
    fn default() -> Self {
        Self {
            field_scale: 1.0,
            dt_offset: 0.0,
            dt_scale: 1.0,
        }
    }
}

impl GcaNormalization {
    pub fn dwell(&self, dt: f64) -> f64 {
        (dt - self.dt_offset) / self.dt_scale
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcaModel {
    pub architecture: GcaArchitecture,
    pub n_nodes: usize,
    pub params: GcaParams,
    pub normalization: GcaNormalization,
}

impl GcaModel {
    pub fn new(architecture: GcaArchitecture, n_nodes: usize, normalization: GcaNormalization, seed: u64) -> Result<Self> {
        architecture.validate()?;
        let params = GcaParams::glorot(&architecture, n_nodes, seed);
        Ok(Self {
            architecture,
            n_nodes,
            params,
            normalization,
        })
    }

    pub fn zeros(architecture: GcaArchitecture, n_nodes: usize) -> Result<Self> {
        architecture.validate()?;
        let params = GcaParams::zeros(&architecture, n_nodes);
        Ok(Self {
            architecture,
            n_nodes,
            params,
            normalization: GcaNormalization::default(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Elu,
    Identity,
}

impl Activation {
    fn for_layer(i: usize, count: usize) -> Self {
        if i + 1 == count {
            Activation::Identity
        } else {
            Activation::Elu
        }
    }

    /// Output and, for ELU, the elementwise derivative at `pre`.
    fn apply(self, pre: DMatrix<f64>) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
        match self {
            Activation::Identity => (pre, None),
            Activation::Elu => {
                let out = pre.map(elu);
                let deriv = pre.zip_map(&out, |p, o| if p > 0.0 { 1.0 } else { o + 1.0 });
                (out, Some(deriv))
            }
        }
    }
}

#[inline]
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// `c = beta * c + op(a) op(b)`, with `op` an optional transpose.
fn gemm(a: &DMatrix<f64>, ta: bool, b: &DMatrix<f64>, tb: bool, beta: f64, c: &mut DMatrix<f64>) {
    // column-major strides, swapped for a transposed view
    let view = |x: &DMatrix<f64>, t: bool| {
        let (r, c, rs, cs) = (x.nrows(), x.ncols(), 1isize, x.nrows() as isize);
        if t {
            (c, r, cs, rs)
        } else {
            (r, c, rs, cs)
        }
    };
    let (m, k, rsa, csa) = view(a, ta);
    let (kb, n, rsb, csb) = view(b, tb);
    assert!(k == kb && c.shape() == (m, n), "gemm shape mismatch");
    let rsc = 1isize;
    let csc = m as isize;
    // SAFETY: the shapes and strides above describe the three column-major buffers exactly
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

/// Values kept from the forward pass of one layer.
struct LayerCache {
    input: DMatrix<f64>,
    deriv: Option<DMatrix<f64>>,
}

impl LayerCache {
    fn d_pre(&self, d_out: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.deriv {
            Some(deriv) => d_out.component_mul(deriv),
            None => d_out.clone(),
        }
    }
}

fn dense_forward(layer: &Layer, x: &DMatrix<f64>, act: Activation) -> (DMatrix<f64>, LayerCache) {
    let mut pre = layer.bias.clone();
    gemm(x, false, &layer.weight, false, 1.0, &mut pre);
    let (out, deriv) = act.apply(pre);
    (out, LayerCache { input: x.clone(), deriv })
}

fn conv_forward(graph: &Graph, layer: &Layer, x: &DMatrix<f64>, act: Activation) -> (DMatrix<f64>, LayerCache) {
    let agg = graph.apply(x);
    let mut pre = DMatrix::zeros(agg.nrows(), layer.weight.ncols());
    gemm(&agg, false, &layer.weight, false, 0.0, &mut pre);
    for (j, mut col) in pre.column_iter_mut().enumerate() {
        col.add_scalar_mut(layer.bias[(0, j)]);
    }
    let (out, deriv) = act.apply(pre);
    (out, LayerCache { input: agg, deriv })
}

/// One graph convolution, `act(A_hat X W + 1 b)`.
pub fn gc_layer_forward(graph: &Graph, features: &DMatrix<f64>, layer: &Layer, activation: Activation) -> Result<DMatrix<f64>> {
    if features.nrows() != graph.n_nodes() || features.ncols() != layer.weight.nrows() || layer.bias.shape() != (1, layer.weight.ncols()) {
        return Err(Error::Shape(format!(
            "features {:?}, weight {:?}, bias {:?} on {} nodes",
            features.shape(),
            layer.weight.shape(),
            layer.bias.shape(),
            graph.n_nodes()
        )));
    }
    Ok(conv_forward(graph, layer, features, activation).0)
}

fn dense_backward(layer: &Layer, cache: &LayerCache, d_out: &DMatrix<f64>, grad: &mut Layer) -> DMatrix<f64> {
    let d_pre = cache.d_pre(d_out);
    gemm(&cache.input, true, &d_pre, false, 1.0, &mut grad.weight);
    grad.bias += &d_pre;
    let mut d_in = DMatrix::zeros(d_pre.nrows(), layer.weight.nrows());
    gemm(&d_pre, false, &layer.weight, true, 0.0, &mut d_in);
    d_in
}

fn conv_backward(graph: &Graph, layer: &Layer, cache: &LayerCache, d_out: &DMatrix<f64>, grad: &mut Layer) -> DMatrix<f64> {
    let d_pre = cache.d_pre(d_out);
    gemm(&cache.input, true, &d_pre, false, 1.0, &mut grad.weight);
    for (j, col) in d_pre.column_iter().enumerate() {
        grad.bias[(0, j)] += col.sum();
    }
    // A_hat is symmetric
    let mut d_agg = DMatrix::zeros(d_pre.nrows(), layer.weight.nrows());
    gemm(&d_pre, false, &layer.weight, true, 0.0, &mut d_agg);
    graph.apply(&d_agg)
}

/// Network outputs for one sample, in normalized field units.
#[derive(Clone, Debug, PartialEq)]
pub struct GcaOutput {
    pub x_hat: Vec<f64>,
    pub z: Vec<f64>,
    pub z_p: Vec<f64>,
}

struct ForwardCache {
    enc_conv: Vec<LayerCache>,
    enc_head: Vec<LayerCache>,
    dec_head: Vec<LayerCache>,
    dec_conv: Vec<LayerCache>,
    fcnn: Vec<LayerCache>,
    z: DMatrix<f64>,
    z_p: DMatrix<f64>,
    x_hat: DMatrix<f64>,
}

fn run_dense(layers: &[Layer], mut x: DMatrix<f64>) -> (DMatrix<f64>, Vec<LayerCache>) {
    let mut caches = Vec::with_capacity(layers.len());
    for (i, l) in layers.iter().enumerate() {
        let (out, c) = dense_forward(l, &x, Activation::for_layer(i, layers.len()));
        caches.push(c);
        x = out;
    }
    (x, caches)
}

fn decode(model: &GcaModel, graph: &Graph, z: &DMatrix<f64>) -> (DMatrix<f64>, Vec<LayerCache>, Vec<LayerCache>) {
    let p = &model.params;
    let (flat, dec_head) = run_dense(&p.dec_head, z.clone());
    let c = model.architecture.seed_channels;
    // node i, channel k  <-  flat[i * c + k]
    let mut h = DMatrix::from_fn(model.n_nodes, c, |i, k| flat[(0, i * c + k)]);
    let mut dec_conv = Vec::with_capacity(p.dec_conv.len());
    for (i, l) in p.dec_conv.iter().enumerate() {
        let (out, cache) = conv_forward(graph, l, &h, Activation::for_layer(i, p.dec_conv.len()));
        dec_conv.push(cache);
        h = out;
    }
    (h, dec_head, dec_conv)
}

fn check_shapes(model: &GcaModel, graph: &Graph, x: &[f64]) -> Result<()> {
    if graph.n_nodes() != model.n_nodes || x.len() != model.n_nodes {
        return Err(Error::Shape(format!(
            "model has {} nodes, graph {}, field {}",
            model.n_nodes,
            graph.n_nodes(),
            x.len()
        )));
    }
    Ok(())
}

fn forward_cached(model: &GcaModel, graph: &Graph, x: &[f64], dt: f64) -> Result<ForwardCache> {
    check_shapes(model, graph, x)?;
    let p = &model.params;
    let mut h = DMatrix::from_column_slice(model.n_nodes, 1, x);
    let mut enc_conv = Vec::with_capacity(p.enc_conv.len());
    for l in &p.enc_conv {
        let (out, cache) = conv_forward(graph, l, &h, Activation::Elu);
        enc_conv.push(cache);
        h = out;
    }
    let pooled = h.row_mean();
    let pooled = DMatrix::from_row_slice(1, pooled.len(), pooled.as_slice());
    let (z, enc_head) = run_dense(&p.enc_head, pooled);

    let t = DMatrix::from_element(1, 1, model.normalization.dwell(dt));
    let (z_p, fcnn) = run_dense(&p.fcnn, t);

    let (x_hat, dec_head, dec_conv) = decode(model, graph, &z);
    Ok(ForwardCache {
        enc_conv,
        enc_head,
        dec_head,
        dec_conv,
        fcnn,
        z,
        z_p,
        x_hat,
    })
}

/// Encoder latent, parameter-branch latent and reconstruction for a
/// normalized input field `x` at dwell time `dt` (seconds).
pub fn gca_forward(model: &GcaModel, graph: &Graph, x: &[f64], dt: f64) -> Result<GcaOutput> {
    let c = forward_cached(model, graph, x, dt)?;
    Ok(GcaOutput {
        x_hat: c.x_hat.iter().copied().collect(),
        z: c.z.iter().copied().collect(),
        z_p: c.z_p.iter().copied().collect(),
    })
}

/// Loss split into its reconstruction and parameter-consistency parts.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub rec: f64,
    pub param: f64,
}

fn mean_sq_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len().max(1) as f64
}

/// `mean (x - x_hat)^2 + lambda * mean (z - z_p)^2`.
pub fn gca_loss(x: &[f64], x_hat: &[f64], z: &[f64], z_p: &[f64], lambda: f64) -> LossParts {
    let rec = mean_sq_diff(x, x_hat);
    let param = mean_sq_diff(z, z_p);
    LossParts {
        total: rec + lambda * param,
        rec,
        param,
    }
}

/// One training example: the (possibly corrupted) encoder input, the clean
/// reconstruction target, both normalized, and its dwell time.
#[derive(Clone, Debug, PartialEq)]
pub struct GcaSample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
    pub dwell_time: f64,
}

/// Mean loss over the batch and its gradient with respect to every
/// parameter tensor.
pub fn gca_backward(model: &GcaModel, graph: &Graph, batch: &[GcaSample], lambda: f64) -> Result<(LossParts, GcaParams)> {
    let p = &model.params;
    let mut grads = p.zeros_like();
    let mut loss = LossParts::default();
    let scale = 1.0 / batch.len().max(1) as f64;
    for s in batch {
        if s.target.len() != model.n_nodes {
            return Err(Error::Shape(format!(
                "target has {} entries for {} nodes",
                s.target.len(),
                model.n_nodes
            )));
        }
        let c = forward_cached(model, graph, &s.input, s.dwell_time)?;
        let x_hat: Vec<f64> = c.x_hat.iter().copied().collect();
        let l = gca_loss(&s.target, &x_hat, c.z.as_slice(), c.z_p.as_slice(), lambda);
        loss.total += scale * l.total;
        loss.rec += scale * l.rec;
        loss.param += scale * l.param;

        let n = model.n_nodes as f64;
        let latent = c.z.len() as f64;
        let d_xhat = DMatrix::from_fn(model.n_nodes, 1, |i, _| scale * 2.0 * (c.x_hat[(i, 0)] - s.target[i]) / n);
        let d_param = (&c.z - &c.z_p) * (scale * 2.0 * lambda / latent);

        // decoder
        let mut d = d_xhat;
        for (k, cache) in c.dec_conv.iter().enumerate().rev() {
            d = conv_backward(graph, &p.dec_conv[k], cache, &d, &mut grads.dec_conv[k]);
        }
        let ch = model.architecture.seed_channels;
        let mut d_flat = DMatrix::zeros(1, model.n_nodes * ch);
        for i in 0..model.n_nodes {
            for k in 0..ch {
                d_flat[(0, i * ch + k)] = d[(i, k)];
            }
        }
        let mut d = d_flat;
        for (k, cache) in c.dec_head.iter().enumerate().rev() {
            d = dense_backward(&p.dec_head[k], cache, &d, &mut grads.dec_head[k]);
        }

        // encoder: latent receives reconstruction and consistency terms
        let mut d = d + &d_param;
        for (k, cache) in c.enc_head.iter().enumerate().rev() {
            d = dense_backward(&p.enc_head[k], cache, &d, &mut grads.enc_head[k]);
        }
        let width = d.ncols();
        let mut d = DMatrix::from_fn(model.n_nodes, width, |_, j| d[(0, j)] / n);
        for (k, cache) in c.enc_conv.iter().enumerate().rev() {
            d = conv_backward(graph, &p.enc_conv[k], cache, &d, &mut grads.enc_conv[k]);
        }

        // parameter branch
        let mut d = -d_param;
        for (k, cache) in c.fcnn.iter().enumerate().rev() {
            d = dense_backward(&p.fcnn[k], cache, &d, &mut grads.fcnn[k]);
        }
    }
    Ok((loss, grads))
}

/// Field predicted for dwell time `dt` through the parameter branch and the
/// decoder, in physical units.
pub fn predict_gca(model: &GcaModel, graph: &Graph, dt: f64) -> Result<Vec<f64>> {
    if graph.n_nodes() != model.n_nodes {
        return Err(Error::Shape(format!(
            "graph has {} nodes, model {}",
            graph.n_nodes(),
            model.n_nodes
        )));
    }
    let t = DMatrix::from_element(1, 1, model.normalization.dwell(dt));
    let (z_p, _) = run_dense(&model.params.fcnn, t);
    Ok(decode_latent(model, graph, &z_p))
}

/// Decode an arbitrary latent vector to a physical field.
pub fn decode_latent(model: &GcaModel, graph: &Graph, latent: &DMatrix<f64>) -> Vec<f64> {
    let (x_hat, _, _) = decode(model, graph, latent);
    x_hat.iter().map(|v| v * model.normalization.field_scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(n: usize) -> Graph {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Graph::from_edges(n, &edges).unwrap()
    }

    #[test]
    fn zero_model_outputs_zero() {
        let arch = GcaArchitecture::default();
        let m = GcaModel::zeros(arch, 6).unwrap();
        let out = gca_forward(&m, &ring(6), &[0.3; 6], 40.0).unwrap();
        assert!(out.x_hat.iter().chain(&out.z).chain(&out.z_p).all(|&v| v == 0.0));
        assert!(predict_gca(&m, &ring(6), 55.0).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layer_shapes_follow_architecture() {
        let m = GcaModel::new(GcaArchitecture::default(), 10, GcaNormalization::default(), 1).unwrap();
        let shapes: Vec<_> = m.params.named_tensors().iter().map(|(n, t)| (n.clone(), t.shape())).collect();
        assert_eq!(shapes[0], ("enc_conv.0.weight".into(), (1, 16)));
        assert_eq!(shapes[2], ("enc_conv.1.weight".into(), (16, 32)));
        assert_eq!(shapes[4], ("enc_head.0.weight".into(), (32, 12)));
        assert_eq!(shapes[8], ("dec_head.1.weight".into(), (32, 40)));
        assert_eq!(shapes.last().unwrap().1, (1, 12));
        let mut p = m.params.clone();
        assert_eq!(p.tensors_mut().len(), shapes.len());
    }

    #[test]
    fn loss_examples() {
        let x = [1.0; 4];
        let z = [0.5; 12];
        assert_eq!(gca_loss(&x, &x, &z, &z, 0.5).total, 0.0);
        let x_hat = [0.0; 4];
        let z_p = [-0.5; 12];
        let l = gca_loss(&x, &x_hat, &z, &z_p, 0.5);
        assert_eq!(l.total, 1.5);
        assert_eq!(gca_loss(&x, &x_hat, &z, &z_p, 0.0).total, l.rec);
    }

    #[test]
    fn elu_values() {
        assert_eq!(elu(0.0), 0.0);
        assert_eq!(elu(2.0), 2.0);
        assert!((elu(-1.0) - ((-1.0f64).exp() - 1.0)).abs() < 1e-16);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let m = GcaModel::new(GcaArchitecture::default(), 6, GcaNormalization::default(), 0).unwrap();
        assert!(matches!(gca_forward(&m, &ring(5), &[0.0; 5], 1.0), Err(Error::Shape(_))));
        assert!(matches!(gca_forward(&m, &ring(6), &[0.0; 5], 1.0), Err(Error::Shape(_))));
    }

    #[test]
    fn consistency_term_does_not_reach_decoder() {
        let g = ring(5);
        let m = GcaModel::new(GcaArchitecture::default(), 5, GcaNormalization::default(), 3).unwrap();
        let input: Vec<f64> = (0..5).map(|i| i as f64 * 0.2).collect();
        let out = gca_forward(&m, &g, &input, 0.4).unwrap();
        // target equal to the reconstruction zeroes the reconstruction gradient
        let batch = [GcaSample {
            input,
            target: out.x_hat.clone(),
            dwell_time: 0.4,
        }];
        let (_, grads) = gca_backward(&m, &g, &batch, 0.5).unwrap();
        for l in grads.dec_head.iter().chain(&grads.dec_conv) {
            assert!(l.weight.iter().chain(l.bias.iter()).all(|&v| v == 0.0));
        }
        assert!(grads.fcnn.iter().any(|l| l.weight.iter().any(|&v| v != 0.0)));
    }
}
