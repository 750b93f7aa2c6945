//! Layer composition: pyramid layers (six summed sweeps), per-voxel
//! fully-connected layers, the softmax head, initialisation and parameter
//! bookkeeping.
//!
//! Parameters are always visited in declaration order: layers in sequence;
//! inside a pyramid layer the six directions in [`Direction::ALL`] order,
//! each as `θ_x{i,f,c,o}, θ_h{i,f,c,o}, bias_{i,f,c,o}`; inside an FC layer
//! the weights (`[in][out]`) then the bias. Flat parameter vectors,
//! optimiser state and checkpoints all use this order.

use rand::Rng;
use rayon::prelude::*;

use crate::clstm::{sweep_backward, sweep_forward, sweep_inference, ClstmParams, Direction, SweepCache};
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};
use crate::volume::Volume;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Pyramid { hidden: usize },
    Fc { units: usize, activation: Activation },
}

/// Layer list plus the input channel count and the (square, odd) filter
/// extent shared by all C-LSTM kernels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input_channels: usize,
    pub filter: usize,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// Three pyramid layers of 16, 32 and 64 units, each followed by an FC
    /// layer (25 and 45 tanh units, then a softmax over `classes`).
    pub fn reference(input_channels: usize, classes: usize, filter: usize) -> Self {
        use LayerSpec::*;
        Architecture {
            input_channels,
            filter,
            layers: vec![
                Pyramid { hidden: 16 },
                Fc { units: 25, activation: Activation::Tanh },
                Pyramid { hidden: 32 },
                Fc { units: 45, activation: Activation::Tanh },
                Pyramid { hidden: 64 },
                Fc { units: classes, activation: Activation::Softmax },
            ],
        }
    }

    /// Checks widths and the filter extent, without requiring a softmax head.
    pub fn validate_layers(&self) -> Result<()> {
        if self.input_channels == 0 {
            return Err(Error::config("arch.input_channels", "must be >= 1"));
        }
        if self.layers.is_empty() {
            return Err(Error::config("arch.layers", "at least one layer is required"));
        }
        let has_pyramid = self.layers.iter().any(|l| matches!(l, LayerSpec::Pyramid { .. }));
        if has_pyramid && (self.filter < 3 || self.filter.is_multiple_of(2)) {
            return Err(Error::config(
                "arch.filter",
                format!("C-LSTM filters must be odd and >= 3, got {}", self.filter),
            ));
        }
        for (i, l) in self.layers.iter().enumerate() {
            let width = match l {
                LayerSpec::Pyramid { hidden } => *hidden,
                LayerSpec::Fc { units, .. } => *units,
            };
            if width == 0 {
                return Err(Error::config(format!("arch.layers[{i}]"), "width must be >= 1"));
            }
            if matches!(l, LayerSpec::Fc { activation: Activation::Softmax, .. }) && i + 1 != self.layers.len() {
                return Err(Error::config(format!("arch.layers[{i}]"), "softmax is only allowed on the last layer"));
            }
        }
        Ok(())
    }

    /// Full validation for a trainable network: the last layer must be a
    /// softmax FC layer with at least two classes.
    pub fn validate(&self) -> Result<()> {
        self.validate_layers()?;
        match self.layers.last() {
            Some(LayerSpec::Fc { units, activation: Activation::Softmax }) if *units >= 2 => Ok(()),
            _ => Err(Error::config(
                "arch.layers",
                "the last layer must be a softmax FC layer with >= 2 classes",
            )),
        }
    }

    pub fn output_channels(&self) -> usize {
        match self.layers.last() {
            Some(LayerSpec::Pyramid { hidden }) => *hidden,
            Some(LayerSpec::Fc { units, .. }) => *units,
            None => self.input_channels,
        }
    }

    /// Input channel count of each layer.
    pub fn layer_inputs(&self) -> Vec<usize> {
        let mut c = self.input_channels;
        self.layers
            .iter()
            .map(|l| {
                let input = c;
                c = match l {
                    LayerSpec::Pyramid { hidden } => *hidden,
                    LayerSpec::Fc { units, .. } => *units,
                };
                input
            })
            .collect()
    }

    /// Closed-form parameter count of every layer.
    pub fn layer_param_counts(&self) -> Vec<usize> {
        let k2 = self.filter * self.filter;
        self.layers
            .iter()
            .zip(self.layer_inputs())
            .map(|(l, c)| match *l {
                LayerSpec::Pyramid { hidden: o } => {
                    Direction::ALL.len() * (4 * k2 * c * o + 4 * k2 * o * o + 4 * o)
                }
                LayerSpec::Fc { units, .. } => c * units + units,
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_param_counts().iter().sum()
    }
}

/// Six directional C-LSTMs whose outputs are summed.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidLayer {
    pub params: Vec<ClstmParams>,
}

impl PyramidLayer {
    pub fn zeros(input_channels: usize, hidden: usize, filter: usize) -> Self {
        PyramidLayer {
            params: Direction::ALL
                .iter()
                .map(|_| ClstmParams::zeros(input_channels, hidden, filter, filter))
                .collect(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.params[0].hidden()
    }
}

/// Channel mixing applied identically at every voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct FcLayer {
    pub in_units: usize,
    pub out_units: usize,
    /// `[in][out]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl FcLayer {
    pub fn zeros(in_units: usize, out_units: usize, activation: Activation) -> Self {
        FcLayer {
            in_units,
            out_units,
            weights: vec![0.0; in_units * out_units],
            bias: vec![0.0; out_units],
            activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Pyramid(PyramidLayer),
    Fc(FcLayer),
}

impl Layer {
    fn tensors(&self) -> Vec<&[f64]> {
        match self {
            Layer::Pyramid(p) => p.params.iter().flat_map(|c| c.tensors()).collect(),
            Layer::Fc(f) => vec![&f.weights, &f.bias],
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::Pyramid(p) => p.params.iter_mut().flat_map(|c| c.tensors_mut()).collect(),
            Layer::Fc(f) => vec![&mut f.weights, &mut f.bias],
        }
    }
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub enum LayerCache {
    Pyramid(Vec<SweepCache>),
    Fc { input: Volume, output: Volume },
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Architecture,
    pub layers: Vec<Layer>,
}

impl Network {
    /// All-zero network; use [`Network::init_uniform`] for training.
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch.validate_layers()?;
        let layers = arch
            .layers
            .iter()
            .zip(arch.layer_inputs())
            .map(|(l, c)| match *l {
                LayerSpec::Pyramid { hidden } => Layer::Pyramid(PyramidLayer::zeros(c, hidden, arch.filter)),
                LayerSpec::Fc { units, activation } => Layer::Fc(FcLayer::zeros(c, units, activation)),
            })
            .collect();
        Ok(Network {
            arch: arch.clone(),
            layers,
        })
    }

    /// Every weight and bias drawn i.i.d. from `U(−0.1, 0.1)` in declaration order.
    pub fn init_uniform(arch: &Architecture, seed: u64) -> Result<Self> {
        let mut net = Network::zeros(arch)?;
        let mut rng = stream(seed, Stream::Init, 0);
        for t in net.tensors_mut() {
            for w in t.iter_mut() {
                *w = rng.random_range(-0.1..0.1);
            }
        }
        Ok(net)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.tensors()).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect()
    }

    /// Count of allocated parameters.
    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.param_count()
            )));
        }
        let mut rest = flat;
        for t in self.tensors_mut() {
            let (head, tail) = rest.split_at(t.len());
            t.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    fn check_input(&self, x: &Volume) -> Result<()> {
        if x.dims().channels != self.arch.input_channels {
            return Err(Error::shape(format!(
                "input has {} channels, network expects {}",
                x.dims().channels,
                self.arch.input_channels
            )));
        }
        Ok(())
    }

    /// Forward pass retaining activations for [`Network::backward`].
    pub fn forward(&self, x: &Volume) -> Result<(Volume, ForwardCache)> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        for layer in &self.layers {
            match layer {
                Layer::Pyramid(p) => {
                    let (h, c) = pyramid_forward(&a, p)?;
                    caches.push(LayerCache::Pyramid(c));
                    a = h;
                }
                Layer::Fc(f) => {
                    let y = fc_forward(&a, f)?;
                    caches.push(LayerCache::Fc {
                        input: a,
                        output: y.clone(),
                    });
                    a = y;
                }
            }
        }
        Ok((a, ForwardCache { layers: caches }))
    }

    /// Forward pass without retaining activations.
    pub fn predict(&self, x: &Volume) -> Result<Volume> {
        self.check_input(x)?;
        let mut a = x.clone();
        for layer in &self.layers {
            a = match layer {
                Layer::Pyramid(p) => pyramid_inference(&a, p)?,
                Layer::Fc(f) => fc_forward(&a, f)?,
            };
        }
        Ok(a)
    }

    /// Gradients of `⟨dout, output⟩` w.r.t. every parameter, returned as a
    /// network of the same architecture.
    pub fn backward(&self, cache: &ForwardCache, dout: &Volume) -> Result<Network> {
        Ok(self.backward_with_input(cache, dout)?.0)
    }

    /// As [`Network::backward`], also returning the gradient w.r.t. the input.
    pub fn backward_with_input(&self, cache: &ForwardCache, dout: &Volume) -> Result<(Network, Volume)> {
        if cache.layers.len() != self.layers.len() {
            return Err(Error::shape("cache does not belong to this network"));
        }
        let mut grads = Network::zeros(&self.arch)?;
        let mut g = dout.clone();
        for ((layer, lc), gl) in self
            .layers
            .iter()
            .zip(&cache.layers)
            .zip(grads.layers.iter_mut())
            .rev()
        {
            g = match (layer, lc, gl) {
                (Layer::Pyramid(p), LayerCache::Pyramid(c), Layer::Pyramid(gp)) => {
                    let (dx, dp) = pyramid_backward(c, p, &g)?;
                    *gp = dp;
                    dx
                }
                (Layer::Fc(f), LayerCache::Fc { input, output }, Layer::Fc(gf)) => {
                    let (dx, df) = fc_backward(f, input, output, &g)?;
                    *gf = df;
                    dx
                }
                _ => return Err(Error::shape("cache layer kind mismatch")),
            };
        }
        Ok((grads, g))
    }
}

fn sum_in_order(parts: Vec<Volume>) -> Result<Volume> {
    let mut iter = parts.into_iter();
    let mut acc = iter.next().ok_or_else(|| Error::shape("no parts to sum"))?;
    for v in iter {
        acc.add_assign(&v)?;
    }
    Ok(acc)
}

fn check_pyramid(layer: &PyramidLayer) -> Result<()> {
    if layer.params.len() != Direction::ALL.len() {
        return Err(Error::shape(format!(
            "pyramid layer needs {} parameter sets, has {}",
            Direction::ALL.len(),
            layer.params.len()
        )));
    }
    Ok(())
}

/// Runs the six sweeps (concurrently) and sums their outputs in direction order.
pub fn pyramid_forward(x: &Volume, layer: &PyramidLayer) -> Result<(Volume, Vec<SweepCache>)> {
    check_pyramid(layer)?;
    let results: Vec<(Volume, SweepCache)> = Direction::ALL
        .par_iter()
        .zip(layer.params.par_iter())
        .map(|(&dir, p)| sweep_forward(x, p, dir))
        .collect::<Result<_>>()?;
    let (outs, caches): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok((sum_in_order(outs)?, caches))
}

pub fn pyramid_inference(x: &Volume, layer: &PyramidLayer) -> Result<Volume> {
    check_pyramid(layer)?;
    let outs: Vec<Volume> = Direction::ALL
        .par_iter()
        .zip(layer.params.par_iter())
        .map(|(&dir, p)| sweep_inference(x, p, dir))
        .collect::<Result<_>>()?;
    sum_in_order(outs)
}

pub fn pyramid_backward(caches: &[SweepCache], layer: &PyramidLayer, dh: &Volume) -> Result<(Volume, PyramidLayer)> {
    check_pyramid(layer)?;
    if caches.len() != layer.params.len() {
        return Err(Error::shape("one sweep cache per direction is required"));
    }
    let results: Vec<(Volume, ClstmParams)> = caches
        .par_iter()
        .zip(layer.params.par_iter())
        .map(|(c, p)| sweep_backward(c, p, dh))
        .collect::<Result<_>>()?;
    let (dxs, params): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok((sum_in_order(dxs)?, PyramidLayer { params }))
}

pub fn fc_forward(x: &Volume, layer: &FcLayer) -> Result<Volume> {
    let dims = x.dims();
    if dims.channels != layer.in_units {
        return Err(Error::shape(format!(
            "FC layer expects {} channels, input has {}",
            layer.in_units, dims.channels
        )));
    }
    let n = dims.voxels();
    let mut out = Volume::zeros(dims.with_channels(layer.out_units))?;
    out.data_mut().par_chunks_mut(n).enumerate().for_each(|(o, dst)| {
        dst.fill(layer.bias[o]);
        for i in 0..layer.in_units {
            let w = layer.weights[i * layer.out_units + o];
            for (d, s) in dst.iter_mut().zip(x.channel(i)) {
                *d += w * s;
            }
        }
        if layer.activation == Activation::Tanh {
            dst.iter_mut().for_each(|v| *v = v.tanh());
        }
    });
    if layer.activation == Activation::Softmax {
        softmax_channels(out.data_mut(), n, layer.out_units);
    }
    Ok(out)
}

/// Softmax across channels at each voxel, with max subtraction.
fn softmax_channels(data: &mut [f64], n: usize, channels: usize) {
    let mut z = vec![0.0; channels];
    for v in 0..n {
        let mut max = f64::NEG_INFINITY;
        for (c, zc) in z.iter_mut().enumerate() {
            *zc = data[v + n * c];
            max = max.max(*zc);
        }
        let mut sum = 0.0;
        for zc in z.iter_mut() {
            *zc = (*zc - max).exp();
            sum += *zc;
        }
        for (c, zc) in z.iter().enumerate() {
            data[v + n * c] = zc / sum;
        }
    }
}

/// Returns `(d input, parameter gradients)` given the gradient w.r.t. the
/// activated output.
pub fn fc_backward(layer: &FcLayer, input: &Volume, output: &Volume, dy: &Volume) -> Result<(Volume, FcLayer)> {
    if dy.dims() != output.dims() || input.dims().channels != layer.in_units {
        return Err(Error::shape(format!(
            "FC backward: gradient {} vs output {}",
            dy.dims(),
            output.dims()
        )));
    }
    let n = output.dims().voxels();
    let (cin, cout) = (layer.in_units, layer.out_units);
    let y = output.data();
    let g = dy.data();
    let mut dz = vec![0.0; n * cout];
    match layer.activation {
        Activation::Tanh => {
            for ((d, &yv), &gv) in dz.iter_mut().zip(y).zip(g) {
                *d = gv * (1.0 - yv * yv);
            }
        }
        Activation::Softmax => {
            for v in 0..n {
                let mut s = 0.0;
                for c in 0..cout {
                    s += y[v + n * c] * g[v + n * c];
                }
                for c in 0..cout {
                    dz[v + n * c] = y[v + n * c] * (g[v + n * c] - s);
                }
            }
        }
    }
    let mut grads = FcLayer::zeros(cin, cout, layer.activation);
    // dW[i][o] = Σ_v x[i][v]·dz[o][v]
    grads
        .weights
        .par_chunks_mut(cout)
        .enumerate()
        .for_each(|(i, row)| {
            let xi = input.channel(i);
            for (o, w) in row.iter_mut().enumerate() {
                *w = xi.iter().zip(&dz[o * n..(o + 1) * n]).map(|(a, b)| a * b).sum();
            }
        });
    for o in 0..cout {
        grads.bias[o] = dz[o * n..(o + 1) * n].iter().sum();
    }
    let mut dx = Volume::zeros(input.dims())?;
    dx.data_mut().par_chunks_mut(n).enumerate().for_each(|(i, dst)| {
        for o in 0..cout {
            let w = layer.weights[i * cout + o];
            for (d, s) in dst.iter_mut().zip(&dz[o * n..(o + 1) * n]) {
                *d += w * s;
            }
        }
    });
    Ok((dx, grads))
}
