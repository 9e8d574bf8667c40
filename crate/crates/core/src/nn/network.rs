//! Feedforward networks with a hand-written backward pass.
//!
//! A [`Network`] is an ordered stack of layers mapping a flattened batch
//! `[B x d]` to representations `[B x r]`. Classifier methods add a linear
//! head producing one logit per row.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::tensor::{gemm, Tensor};
use crate::error::{config, usage, Error, Result};

/// Activation shape flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Flat(usize),
    Image { channels: usize, height: usize, width: usize },
}

impl Shape {
    pub fn size(&self) -> usize {
        match *self {
            Shape::Flat(n) => n,
            Shape::Image { channels, height, width } => channels * height * width,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Dense { input: usize, output: usize },
    LeakyRelu { slope: f64 },
    Relu,
    /// Valid (unpadded) convolution with stride 1.
    Conv2d { in_channels: usize, out_channels: usize, kernel: usize },
    /// Non-overlapping `size x size` max pooling; trailing rows/columns are dropped.
    MaxPool { size: usize },
    Flatten,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    /// Representation is the model output (HSC, Deep SVDD, Deep SAD).
    None,
    /// Linear map to a scalar logit (BCE, Focal).
    Linear,
}

#[derive(Debug, Clone)]
struct Layer {
    spec: LayerSpec,
    input: Shape,
    output: Shape,
    /// `(weight, bias)` for dense and conv layers.
    params: Option<(Tensor, Tensor)>,
}

#[derive(Debug, Clone)]
pub struct Network {
    input: Shape,
    layers: Vec<Layer>,
    head: Option<(Tensor, Tensor)>,
    rep_dim: usize,
}

/// Everything the backward pass needs from a forward call.
#[derive(Debug, Clone)]
pub struct Cache {
    batch: usize,
    shapes: Vec<Shape>,
    has_head: bool,
    /// Input of every layer, in order; the last entry is the representation.
    activations: Vec<Vec<f64>>,
    pool_argmax: Vec<Option<Vec<usize>>>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub reps: Tensor,
    pub logits: Option<Tensor>,
    pub cache: Cache,
}

/// Loss gradient with respect to the network output.
#[derive(Debug, Clone)]
pub enum OutputGrad {
    Reps(Tensor),
    Logits(Tensor),
}

/// One gradient per parameter tensor, in [`Network::parameters`] order.
/// Head entries are `None` when the loss did not flow through the head.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub(crate) grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, i: usize) -> Option<&Tensor> {
        self.grads.get(i).and_then(|g| g.as_ref())
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Option<&Tensor>> {
        self.grads.iter().map(|g| g.as_ref())
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().flatten().all(Tensor::all_finite)
    }
}

fn glorot<R: Rng + ?Sized>(shape: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite glorot bound");
    let n = shape.iter().product();
    let data = (0..n).map(|_| dist.sample(rng)).collect();
    Tensor::from_parts_unchecked(shape, data)
}

fn propagate(spec: &LayerSpec, input: Shape, index: usize) -> Result<Shape> {
    let bad = |msg: String| config(format!("layer {index} ({spec:?}): {msg}"));
    match (*spec, input) {
        (LayerSpec::Dense { input: i, output }, Shape::Flat(n)) => {
            if i != n {
                return Err(bad(format!("expects {i} inputs, previous layer yields {n}")));
            }
            if output == 0 {
                return Err(bad("zero outputs".into()));
            }
            Ok(Shape::Flat(output))
        }
        (LayerSpec::Dense { .. }, Shape::Image { .. }) => {
            Err(bad("dense layer needs a flat input; insert Flatten".into()))
        }
        (LayerSpec::LeakyRelu { slope }, s) => {
            if !slope.is_finite() {
                return Err(bad("slope must be finite".into()));
            }
            Ok(s)
        }
        (LayerSpec::Relu, s) => Ok(s),
        (
            LayerSpec::Conv2d { in_channels, out_channels, kernel },
            Shape::Image { channels, height, width },
        ) => {
            if in_channels != channels {
                return Err(bad(format!("expects {in_channels} channels, got {channels}")));
            }
            if kernel == 0 || kernel > height || kernel > width || out_channels == 0 {
                return Err(bad(format!("kernel {kernel} does not fit {height}x{width}")));
            }
            Ok(Shape::Image {
                channels: out_channels,
                height: height - kernel + 1,
                width: width - kernel + 1,
            })
        }
        (LayerSpec::MaxPool { size }, Shape::Image { channels, height, width }) => {
            if size == 0 || size > height || size > width {
                return Err(bad(format!("pool {size} does not fit {height}x{width}")));
            }
            Ok(Shape::Image { channels, height: height / size, width: width / size })
        }
        (LayerSpec::Conv2d { .. } | LayerSpec::MaxPool { .. }, Shape::Flat(_)) => {
            Err(bad("needs an image-shaped input".into()))
        }
        (LayerSpec::Flatten, s) => Ok(Shape::Flat(s.size())),
    }
}

impl Network {
    /// Builds a network, checking that every layer composes with its predecessor.
    pub fn new<R: Rng + ?Sized>(
        input: Shape,
        specs: &[LayerSpec],
        head: Head,
        rng: &mut R,
    ) -> Result<Self> {
        if input.size() == 0 {
            return Err(config("network input must be non-empty"));
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input;
        for (i, spec) in specs.iter().enumerate() {
            let output = propagate(spec, shape, i)?;
            let params = match *spec {
                LayerSpec::Dense { input, output } => Some((
                    glorot(vec![output, input], input, output, rng),
                    Tensor::zeros(vec![output]),
                )),
                LayerSpec::Conv2d { in_channels, out_channels, kernel } => Some((
                    glorot(
                        vec![out_channels, in_channels, kernel, kernel],
                        in_channels * kernel * kernel,
                        out_channels * kernel * kernel,
                        rng,
                    ),
                    Tensor::zeros(vec![out_channels]),
                )),
                _ => None,
            };
            layers.push(Layer { spec: *spec, input: shape, output, params });
            shape = output;
        }
        let rep_dim = match shape {
            Shape::Flat(r) => r,
            Shape::Image { .. } => {
                return Err(config("network must end in a flat representation"));
            }
        };
        let head = match head {
            Head::None => None,
            Head::Linear => Some((glorot(vec![1, rep_dim], rep_dim, 1, rng), Tensor::zeros(vec![1]))),
        };
        Ok(Self { input, layers, head, rep_dim })
    }

    /// `d -> hidden[0] -> ... -> rep_dim` with leaky-ReLU between dense layers
    /// and a linear final layer.
    pub fn mlp<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        rep_dim: usize,
        slope: f64,
        head: Head,
        rng: &mut R,
    ) -> Result<Self> {
        let mut specs = Vec::new();
        let mut prev = input_dim;
        for &h in hidden {
            specs.push(LayerSpec::Dense { input: prev, output: h });
            specs.push(LayerSpec::LeakyRelu { slope });
            prev = h;
        }
        specs.push(LayerSpec::Dense { input: prev, output: rep_dim });
        Self::new(Shape::Flat(input_dim), &specs, head, rng)
    }

    pub fn input_dim(&self) -> usize {
        self.input.size()
    }

    pub fn rep_dim(&self) -> usize {
        self.rep_dim
    }

    pub fn has_head(&self) -> bool {
        self.head.is_some()
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    fn shapes(&self) -> Vec<Shape> {
        self.layers.iter().map(|l| l.output).collect()
    }

    /// Parameter tensors: `(weight, bias)` per parametrized layer, then the head.
    pub fn parameters(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for (w, b) in self.layers.iter().filter_map(|l| l.params.as_ref()) {
            out.push(w);
            out.push(b);
        }
        if let Some((w, b)) = &self.head {
            out.push(w);
            out.push(b);
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for (w, b) in self.layers.iter_mut().filter_map(|l| l.params.as_mut()) {
            out.push(w);
            out.push(b);
        }
        if let Some((w, b)) = &mut self.head {
            out.push(w);
            out.push(b);
        }
        out
    }

    /// Index of the first head tensor in [`Self::parameters`], if any.
    pub fn head_offset(&self) -> Option<usize> {
        self.head.as_ref().map(|_| 2 * self.layers.iter().filter(|l| l.params.is_some()).count())
    }

    pub fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize> {
        if batch.shape().len() != 2 || batch.shape()[1] != self.input.size() {
            return Err(config(format!(
                "batch shape {:?} does not match network input width {}",
                batch.shape(),
                self.input.size()
            )));
        }
        if !batch.all_finite() {
            return Err(Error::Input("batch contains non-finite values".into()));
        }
        Ok(batch.rows())
    }

    /// Runs the network and keeps the activations for [`Self::backward`].
    pub fn forward(&self, batch: &Tensor) -> Result<ForwardOutput> {
        let b = self.check_batch(batch)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pool_argmax = Vec::with_capacity(self.layers.len());
        let mut current = batch.data().to_vec();
        for layer in &self.layers {
            let (next, argmax) = layer.forward(&current, b);
            activations.push(current);
            pool_argmax.push(argmax);
            current = next;
        }
        let reps = Tensor::from_parts_unchecked(vec![b, self.rep_dim], current.clone());
        let logits = self.head.as_ref().map(|(w, bias)| head_logits(&current, b, self.rep_dim, w, bias));
        activations.push(current);
        Ok(ForwardOutput {
            reps,
            logits,
            cache: Cache {
                batch: b,
                shapes: self.shapes(),
                has_head: self.head.is_some(),
                activations,
                pool_argmax,
            },
        })
    }

    /// Forward pass without retaining activations.
    pub fn infer(&self, batch: &Tensor) -> Result<(Tensor, Option<Tensor>)> {
        let b = self.check_batch(batch)?;
        let mut current = batch.data().to_vec();
        for layer in &self.layers {
            current = layer.forward(&current, b).0;
        }
        let logits = self.head.as_ref().map(|(w, bias)| head_logits(&current, b, self.rep_dim, w, bias));
        Ok((Tensor::from_parts_unchecked(vec![b, self.rep_dim], current), logits))
    }

    /// Backpropagates an output gradient into per-parameter gradients.
    pub fn backward(&self, cache: &Cache, upstream: &OutputGrad) -> Result<Gradients> {
        if cache.shapes != self.shapes() || cache.has_head != self.head.is_some() {
            return Err(usage("cache was produced by a different network"));
        }
        let b = cache.batch;
        let reps = cache.activations.last().expect("cache holds the representation");
        let mut head_grads = None;
        let mut delta = match upstream {
            OutputGrad::Reps(g) => {
                if g.shape() != [b, self.rep_dim] {
                    return Err(usage(format!(
                        "representation gradient has shape {:?}, expected [{b}, {}]",
                        g.shape(),
                        self.rep_dim
                    )));
                }
                g.data().to_vec()
            }
            OutputGrad::Logits(g) => {
                let (w, _) = self
                    .head
                    .as_ref()
                    .ok_or_else(|| usage("logit gradient supplied to a network without head"))?;
                if g.len() != b {
                    return Err(usage(format!("logit gradient has {} entries, expected {b}", g.len())));
                }
                let g = g.data();
                let mut dw = vec![0.0; self.rep_dim];
                for (i, &gi) in g.iter().enumerate() {
                    for (d, z) in dw.iter_mut().zip(&reps[i * self.rep_dim..(i + 1) * self.rep_dim]) {
                        *d += gi * z;
                    }
                }
                let db: f64 = g.iter().sum();
                head_grads = Some((
                    Tensor::from_parts_unchecked(vec![1, self.rep_dim], dw),
                    Tensor::from_parts_unchecked(vec![1], vec![db]),
                ));
                let mut d = vec![0.0; b * self.rep_dim];
                for (i, &gi) in g.iter().enumerate() {
                    for (dd, wv) in d[i * self.rep_dim..(i + 1) * self.rep_dim].iter_mut().zip(w.data()) {
                        *dd = gi * wv;
                    }
                }
                d
            }
        };

        let mut layer_grads: Vec<Option<(Tensor, Tensor)>> = vec![None; self.layers.len()];
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let need_input_grad = i > 0;
            let (dx, grads) = layer.backward(
                &cache.activations[i],
                &delta,
                cache.pool_argmax[i].as_deref(),
                b,
                need_input_grad,
            );
            layer_grads[i] = grads;
            delta = dx;
        }

        let mut grads = Vec::new();
        for (w, bias) in layer_grads.into_iter().flatten() {
            grads.push(Some(w));
            grads.push(Some(bias));
        }
        if self.head.is_some() {
            match head_grads {
                Some((w, bias)) => {
                    grads.push(Some(w));
                    grads.push(Some(bias));
                }
                None => {
                    grads.push(None);
                    grads.push(None);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn head_logits(reps: &[f64], b: usize, r: usize, w: &Tensor, bias: &Tensor) -> Tensor {
    let wd = w.data();
    let logits = (0..b)
        .map(|i| {
            reps[i * r..(i + 1) * r].iter().zip(wd).map(|(z, w)| z * w).sum::<f64>() + bias.data()[0]
        })
        .collect();
    Tensor::from_parts_unchecked(vec![b], logits)
}

impl Layer {
    fn forward(&self, x: &[f64], b: usize) -> (Vec<f64>, Option<Vec<usize>>) {
        match self.spec {
            LayerSpec::Dense { input, output } => {
                let (w, bias) = self.params.as_ref().expect("dense params");
                let mut out = vec![0.0; b * output];
                for row in out.chunks_exact_mut(output) {
                    row.copy_from_slice(bias.data());
                }
                gemm(b, input, output, x, false, w.data(), true, &mut out, true);
                (out, None)
            }
            LayerSpec::LeakyRelu { slope } => {
                (x.iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect(), None)
            }
            LayerSpec::Relu => (x.iter().map(|&v| v.max(0.0)).collect(), None),
            LayerSpec::Conv2d { in_channels, out_channels, kernel } => {
                let (w, bias) = self.params.as_ref().expect("conv params");
                let Shape::Image { height, width, .. } = self.input else { unreachable!() };
                let Shape::Image { height: oh, width: ow, .. } = self.output else { unreachable!() };
                let in_size = in_channels * height * width;
                let out_size = out_channels * oh * ow;
                let mut out = vec![0.0; b * out_size];
                let wd = w.data();
                for n in 0..b {
                    let xs = &x[n * in_size..(n + 1) * in_size];
                    let ys = &mut out[n * out_size..(n + 1) * out_size];
                    for o in 0..out_channels {
                        let plane = &mut ys[o * oh * ow..(o + 1) * oh * ow];
                        plane.iter_mut().for_each(|v| *v = bias.data()[o]);
                        for c in 0..in_channels {
                            let xc = &xs[c * height * width..(c + 1) * height * width];
                            for p in 0..kernel {
                                for q in 0..kernel {
                                    let wv = wd[((o * in_channels + c) * kernel + p) * kernel + q];
                                    for i in 0..oh {
                                        let xrow = &xc[(i + p) * width + q..(i + p) * width + q + ow];
                                        for (yv, xv) in plane[i * ow..(i + 1) * ow].iter_mut().zip(xrow) {
                                            *yv += wv * xv;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                (out, None)
            }
            LayerSpec::MaxPool { size } => {
                let Shape::Image { channels, height, width } = self.input else { unreachable!() };
                let (oh, ow) = (height / size, width / size);
                let in_size = channels * height * width;
                let mut out = Vec::with_capacity(b * channels * oh * ow);
                let mut argmax = Vec::with_capacity(out.capacity());
                for n in 0..b {
                    for c in 0..channels {
                        let base = n * in_size + c * height * width;
                        for i in 0..oh {
                            for j in 0..ow {
                                let mut best = base + (i * size) * width + j * size;
                                for p in 0..size {
                                    for q in 0..size {
                                        let idx = base + (i * size + p) * width + j * size + q;
                                        if x[idx] > x[best] {
                                            best = idx;
                                        }
                                    }
                                }
                                out.push(x[best]);
                                argmax.push(best);
                            }
                        }
                    }
                }
                (out, Some(argmax))
            }
            LayerSpec::Flatten => (x.to_vec(), None),
        }
    }

    /// Returns `(dL/dinput, parameter grads)`; the input gradient is empty when not requested.
    fn backward(
        &self,
        x: &[f64],
        delta: &[f64],
        argmax: Option<&[usize]>,
        b: usize,
        need_input_grad: bool,
    ) -> (Vec<f64>, Option<(Tensor, Tensor)>) {
        match self.spec {
            LayerSpec::Dense { input, output } => {
                let (w, _) = self.params.as_ref().expect("dense params");
                let mut dw = vec![0.0; output * input];
                gemm(output, b, input, delta, true, x, false, &mut dw, false);
                let mut db = vec![0.0; output];
                for row in delta.chunks_exact(output) {
                    for (d, v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                let dx = if need_input_grad {
                    let mut dx = vec![0.0; b * input];
                    gemm(b, output, input, delta, false, w.data(), false, &mut dx, false);
                    dx
                } else {
                    Vec::new()
                };
                (
                    dx,
                    Some((
                        Tensor::from_parts_unchecked(vec![output, input], dw),
                        Tensor::from_parts_unchecked(vec![output], db),
                    )),
                )
            }
            LayerSpec::LeakyRelu { slope } => (
                x.iter().zip(delta).map(|(&v, &d)| if v > 0.0 { d } else { slope * d }).collect(),
                None,
            ),
            LayerSpec::Relu => {
                (x.iter().zip(delta).map(|(&v, &d)| if v > 0.0 { d } else { 0.0 }).collect(), None)
            }
            LayerSpec::Conv2d { in_channels, out_channels, kernel } => {
                let (w, _) = self.params.as_ref().expect("conv params");
                let Shape::Image { height, width, .. } = self.input else { unreachable!() };
                let Shape::Image { height: oh, width: ow, .. } = self.output else { unreachable!() };
                let in_size = in_channels * height * width;
                let out_size = out_channels * oh * ow;
                let wd = w.data();
                let mut dw = vec![0.0; wd.len()];
                let mut db = vec![0.0; out_channels];
                let mut dx = if need_input_grad { vec![0.0; b * in_size] } else { Vec::new() };
                for n in 0..b {
                    let xs = &x[n * in_size..(n + 1) * in_size];
                    let ds = &delta[n * out_size..(n + 1) * out_size];
                    for o in 0..out_channels {
                        let plane = &ds[o * oh * ow..(o + 1) * oh * ow];
                        db[o] += plane.iter().sum::<f64>();
                        for c in 0..in_channels {
                            let xc = &xs[c * height * width..(c + 1) * height * width];
                            for p in 0..kernel {
                                for q in 0..kernel {
                                    let widx = ((o * in_channels + c) * kernel + p) * kernel + q;
                                    let mut acc = 0.0;
                                    for i in 0..oh {
                                        let xrow = &xc[(i + p) * width + q..(i + p) * width + q + ow];
                                        let drow = &plane[i * ow..(i + 1) * ow];
                                        acc += xrow.iter().zip(drow).map(|(a, d)| a * d).sum::<f64>();
                                    }
                                    dw[widx] += acc;
                                    if need_input_grad {
                                        let wv = wd[widx];
                                        let dxc = &mut dx[n * in_size + c * height * width
                                            ..n * in_size + (c + 1) * height * width];
                                        for i in 0..oh {
                                            let drow = &plane[i * ow..(i + 1) * ow];
                                            let dxrow =
                                                &mut dxc[(i + p) * width + q..(i + p) * width + q + ow];
                                            for (g, d) in dxrow.iter_mut().zip(drow) {
                                                *g += wv * d;
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                (
                    dx,
                    Some((
                        Tensor::from_parts_unchecked(w.shape().to_vec(), dw),
                        Tensor::from_parts_unchecked(vec![out_channels], db),
                    )),
                )
            }
            LayerSpec::MaxPool { .. } => {
                let argmax = argmax.expect("pool argmax");
                let mut dx = vec![0.0; x.len()];
                for (&idx, &d) in argmax.iter().zip(delta) {
                    dx[idx] += d;
                }
                (dx, None)
            }
            LayerSpec::Flatten => (delta.to_vec(), None),
        }
    }
}
