//! Minimal 1D/2D convolutional network engine with exact
//! backpropagation.
//!
//! Every layer is a stride-1, dilation-free convolution with odd kernel
//! width followed by a pointwise nonlinearity of Lipschitz constant <= 1,
//! so networks built here are shift-equivariant by construction (exactly
//! so under circular padding). Parameters are stored in single precision;
//! all arithmetic runs in double precision, which keeps finite-difference
//! gradient checks stable.

use crate::error::{Error, Result};
use crate::math::SeededRng;
use crate::signal::{GridSignal, Shape};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Pointwise nonlinearities; all have Lipschitz constant <= 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Nonlinearity {
    Identity,
    Relu,
    LeakyRelu,
    Tanh,
}

const LEAKY_SLOPE: f64 = 0.01;

impl Nonlinearity {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Identity => x,
            Nonlinearity::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Nonlinearity::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Nonlinearity::Tanh => libm::tanh(x),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Identity => 1.0,
            Nonlinearity::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Nonlinearity::Tanh => {
                let t = libm::tanh(x);
                1.0 - t * t
            }
        }
    }
}

/// Convolution boundary handling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    ZeroSame,
    CircularSame,
    Valid,
}

/// Signal dimensionality the model operates on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dims {
    One,
    Two,
}

/// One convolutional layer: filters `[out][in][kh][kw]` (kh = 1 for 1D
/// layers, kh = kw = K for 2D), optional per-output-channel bias, and a
/// pointwise nonlinearity.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    weights: Vec<f32>,
    bias: Option<Vec<f32>>,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    kh: usize,
    nonlinearity: Nonlinearity,
}

impl ConvLayer {
    fn new(
        weights: Vec<f32>,
        bias: Option<Vec<f32>>,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        dims: Dims,
        nonlinearity: Nonlinearity,
    ) -> Result<Self> {
        if kernel == 0 || kernel % 2 == 0 {
            return Err(Error::InvalidConfig(format!("kernel width must be odd, got {kernel}")));
        }
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::InvalidConfig("channel counts must be >= 1".into()));
        }
        let kh = match dims {
            Dims::One => 1,
            Dims::Two => kernel,
        };
        let expected = out_channels * in_channels * kh * kernel;
        if weights.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "expected {expected} filter taps, got {}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidConfig("filter taps must be finite".into()));
        }
        if let Some(b) = &bias {
            if b.len() != out_channels {
                return Err(Error::ShapeMismatch(format!(
                    "expected {out_channels} biases, got {}",
                    b.len()
                )));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig("biases must be finite".into()));
            }
        }
        Ok(ConvLayer { weights, bias, in_channels, out_channels, kernel, kh, nonlinearity })
    }

    pub fn new_1d(
        weights: Vec<f32>,
        bias: Option<Vec<f32>>,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        nonlinearity: Nonlinearity,
    ) -> Result<Self> {
        Self::new(weights, bias, in_channels, out_channels, kernel, Dims::One, nonlinearity)
    }

    pub fn new_2d(
        weights: Vec<f32>,
        bias: Option<Vec<f32>>,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        nonlinearity: Nonlinearity,
    ) -> Result<Self> {
        Self::new(weights, bias, in_channels, out_channels, kernel, Dims::Two, nonlinearity)
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> Option<&[f32]> {
        self.bias.as_deref()
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.nonlinearity
    }

    /// Sum of absolute tap values over all filters of the layer.
    pub fn l1_norm(&self) -> f64 {
        self.weights.iter().map(|w| f64::from(w.abs())).sum()
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f32] {
        &mut self.weights
    }

    pub(crate) fn bias_mut(&mut self) -> Option<&mut [f32]> {
        self.bias.as_deref_mut()
    }
}

/// A cascade of convolutional layers sharing one padding mode.
#[derive(Clone, Debug, PartialEq)]
pub struct CNNModel {
    layers: Vec<ConvLayer>,
    padding: Padding,
    dims: Dims,
}

impl CNNModel {
    pub fn new(layers: Vec<ConvLayer>, padding: Padding, dims: Dims) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("model must have at least one layer".into()));
        }
        for (l, layer) in layers.iter().enumerate() {
            let expected_kh = match dims {
                Dims::One => 1,
                Dims::Two => layer.kernel,
            };
            if layer.kh != expected_kh {
                return Err(Error::ShapeMismatch(format!(
                    "layer {l} kernel dimensionality does not match model dims"
                )));
            }
            if l > 0 && layers[l - 1].out_channels != layer.in_channels {
                return Err(Error::ShapeMismatch(format!(
                    "layer {l} expects {} input channels but layer {} produces {}",
                    layer.in_channels,
                    l - 1,
                    layers[l - 1].out_channels
                )));
            }
        }
        Ok(CNNModel { layers, padding, dims })
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn padding(&self) -> Padding {
        self.padding
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Largest kernel width across layers (the K of the bound).
    pub fn kernel_width(&self) -> usize {
        self.layers.iter().map(|l| l.kernel).max().unwrap_or(1)
    }

    /// Half receptive field: sum over layers of (K_l - 1) / 2 samples.
    pub fn receptive_margin(&self) -> usize {
        self.layers.iter().map(|l| (l.kernel - 1) / 2).sum()
    }

    /// Product of the per-layer filter L1 norms (the bound's H).
    /// Dimensionless tap-absolute sums; biases excluded.
    pub fn l1_product(&self) -> f64 {
        self.layers.iter().map(|l| l.l1_norm()).product()
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [ConvLayer] {
        &mut self.layers
    }
}

/// Recipe for building a freshly initialized model.
///
/// `channels` lists the channel counts including input and output, e.g.
/// `[1, 16, 32, 16, 1]` describes four layers. Hidden layers use
/// `hidden`, the last layer uses `output`. Weights are drawn from a
/// normal distribution scaled by 1/sqrt(fan-in); biases start at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ArchSpec {
    pub dims: Dims,
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub hidden: Nonlinearity,
    pub output: Nonlinearity,
    pub padding: Padding,
    pub bias: bool,
}

impl ArchSpec {
    /// Default 2D encoder-decoder used for the relay-placement task:
    /// channels 1-16-32-16-1, K = 5, leaky ReLU hidden, identity output,
    /// zero same padding.
    pub fn default_mid() -> Self {
        ArchSpec {
            dims: Dims::Two,
            channels: vec![1, 16, 32, 16, 1],
            kernel: 5,
            hidden: Nonlinearity::LeakyRelu,
            output: Nonlinearity::Identity,
            padding: Padding::ZeroSame,
            bias: true,
        }
    }

    pub fn build(&self, init_seed: u64) -> Result<CNNModel> {
        if self.channels.len() < 2 {
            return Err(Error::InvalidConfig(
                "channels must list input and output counts".into(),
            ));
        }
        let mut rng = SeededRng::new(init_seed);
        let kh = match self.dims {
            Dims::One => 1,
            Dims::Two => self.kernel,
        };
        let num_layers = self.channels.len() - 1;
        let mut layers = Vec::with_capacity(num_layers);
        for l in 0..num_layers {
            let in_c = self.channels[l];
            let out_c = self.channels[l + 1];
            let fan_in = (in_c * kh * self.kernel) as f64;
            let scale = libm::sqrt(1.0 / fan_in);
            let weights: Vec<f32> = (0..out_c * in_c * kh * self.kernel)
                .map(|_| (scale * rng.normal()) as f32)
                .collect();
            let bias = self.bias.then(|| vec![0.0f32; out_c]);
            let nonlin = if l + 1 == num_layers { self.output } else { self.hidden };
            layers.push(ConvLayer::new(
                weights, bias, in_c, out_c, self.kernel, self.dims, nonlin,
            )?);
        }
        CNNModel::new(layers, self.padding, self.dims)
    }
}

/// Dense double-precision activation buffer.
#[derive(Clone, Debug)]
pub(crate) struct Tensor {
    pub data: Vec<f64>,
    pub ch: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Tensor {
    pub fn zeros(ch: usize, rows: usize, cols: usize) -> Self {
        Tensor { data: vec![0.0; ch * rows * cols], ch, rows, cols }
    }

    pub fn from_signal(sig: &GridSignal) -> Self {
        Tensor {
            data: sig.values().iter().map(|v| f64::from(*v)).collect(),
            ch: sig.channels(),
            rows: sig.shape().rows(),
            cols: sig.shape().cols(),
        }
    }
}

fn pad_tensor(x: &Tensor, ph: usize, pw: usize, mode: Padding) -> Tensor {
    if ph == 0 && pw == 0 {
        return x.clone();
    }
    let rows = x.rows + 2 * ph;
    let cols = x.cols + 2 * pw;
    let mut out = Tensor::zeros(x.ch, rows, cols);
    match mode {
        Padding::ZeroSame | Padding::Valid => {
            for c in 0..x.ch {
                for i in 0..x.rows {
                    let src = (c * x.rows + i) * x.cols;
                    let dst = (c * rows + i + ph) * cols + pw;
                    out.data[dst..dst + x.cols].copy_from_slice(&x.data[src..src + x.cols]);
                }
            }
        }
        Padding::CircularSame => {
            for c in 0..x.ch {
                for i in 0..rows {
                    let si = (i + x.rows - ph % x.rows) % x.rows;
                    for j in 0..cols {
                        let sj = (j + x.cols - pw % x.cols) % x.cols;
                        out.data[(c * rows + i) * cols + j] =
                            x.data[(c * x.rows + si) * x.cols + sj];
                    }
                }
            }
        }
    }
    out
}

/// Dense correlation of the padded input with the layer filters plus
/// bias; returns the pre-activation tensor.
fn correlate(layer: &ConvLayer, xp: &Tensor, out_rows: usize, out_cols: usize) -> Tensor {
    let mut pre = Tensor::zeros(layer.out_channels, out_rows, out_cols);
    let kh = layer.kh;
    let kw = layer.kernel;
    for oc in 0..layer.out_channels {
        let ob = oc * out_rows * out_cols;
        if let Some(b) = &layer.bias {
            let bv = f64::from(b[oc]);
            for v in &mut pre.data[ob..ob + out_rows * out_cols] {
                *v = bv;
            }
        }
        for ic in 0..layer.in_channels {
            for ki in 0..kh {
                for kj in 0..kw {
                    let w =
                        f64::from(layer.weights[((oc * layer.in_channels + ic) * kh + ki) * kw + kj]);
                    if w == 0.0 {
                        continue;
                    }
                    for i in 0..out_rows {
                        let xb = (ic * xp.rows + i + ki) * xp.cols + kj;
                        let row = &xp.data[xb..xb + out_cols];
                        let dst = &mut pre.data[ob + i * out_cols..ob + (i + 1) * out_cols];
                        for j in 0..out_cols {
                            dst[j] += w * row[j];
                        }
                    }
                }
            }
        }
    }
    pre
}

fn layer_pads(layer: &ConvLayer, padding: Padding) -> (usize, usize) {
    match padding {
        Padding::Valid => (0, 0),
        _ => ((layer.kh - 1) / 2, (layer.kernel - 1) / 2),
    }
}

fn layer_out_dims(layer: &ConvLayer, padding: Padding, rows: usize, cols: usize) -> Result<(usize, usize)> {
    match padding {
        Padding::Valid => {
            if rows < layer.kh || cols < layer.kernel {
                return Err(Error::InputTooSmall(format!(
                    "valid convolution with kernel {}x{} on a {rows}x{cols} input",
                    layer.kh, layer.kernel
                )));
            }
            Ok((rows - layer.kh + 1, cols - layer.kernel + 1))
        }
        _ => Ok((rows, cols)),
    }
}

/// Per-layer state captured during a forward pass, kept in double
/// precision for exact backpropagation.
pub(crate) struct ForwardCache {
    /// Padded input of each layer.
    xps: Vec<Tensor>,
    /// Pre-activation of each layer.
    pres: Vec<Tensor>,
    pub out: Tensor,
}

pub(crate) fn forward_cached(model: &CNNModel, input: &Tensor) -> Result<ForwardCache> {
    if input.ch != model.layers[0].in_channels {
        return Err(Error::ShapeMismatch(format!(
            "model expects {} input channels, got {}",
            model.layers[0].in_channels, input.ch
        )));
    }
    let mut xps = Vec::with_capacity(model.layers.len());
    let mut pres = Vec::with_capacity(model.layers.len());
    let mut x = input.clone();
    for layer in &model.layers {
        let (ph, pw) = layer_pads(layer, model.padding);
        let (out_rows, out_cols) = layer_out_dims(layer, model.padding, x.rows, x.cols)?;
        let xp = pad_tensor(&x, ph, pw, model.padding);
        let pre = correlate(layer, &xp, out_rows, out_cols);
        let mut post = pre.clone();
        for v in &mut post.data {
            *v = layer.nonlinearity.apply(*v);
        }
        xps.push(xp);
        pres.push(pre);
        x = post;
    }
    Ok(ForwardCache { xps, pres, out: x })
}

pub(crate) fn forward_f64(model: &CNNModel, input: &Tensor) -> Result<Tensor> {
    // Same path as forward_cached without retaining intermediates.
    if input.ch != model.layers[0].in_channels {
        return Err(Error::ShapeMismatch(format!(
            "model expects {} input channels, got {}",
            model.layers[0].in_channels, input.ch
        )));
    }
    let mut x = input.clone();
    for layer in &model.layers {
        let (ph, pw) = layer_pads(layer, model.padding);
        let (out_rows, out_cols) = layer_out_dims(layer, model.padding, x.rows, x.cols)?;
        let xp = pad_tensor(&x, ph, pw, model.padding);
        let mut pre = correlate(layer, &xp, out_rows, out_cols);
        for v in &mut pre.data {
            *v = layer.nonlinearity.apply(*v);
        }
        x = pre;
    }
    Ok(x)
}

fn output_metadata(model: &CNNModel, sig: &GridSignal, out: &Tensor) -> Result<GridSignal> {
    let (shape, origin) = match model.padding {
        Padding::Valid => {
            let rho = sig.resolution();
            let shrink_rows: usize = model.layers.iter().map(|l| l.kh - 1).sum();
            let shrink_cols: usize = model.layers.iter().map(|l| l.kernel - 1).sum();
            match sig.shape() {
                Shape::One { .. } => {
                    let origin = (sig.origin().0 + shrink_cols as f64 / 2.0 * rho, sig.origin().1);
                    (Shape::One { len: out.cols }, origin)
                }
                Shape::Two { .. } => {
                    let origin = (
                        sig.origin().0 + shrink_rows as f64 / 2.0 * rho,
                        sig.origin().1 + shrink_cols as f64 / 2.0 * rho,
                    );
                    (Shape::Two { rows: out.rows, cols: out.cols }, origin)
                }
            }
        }
        _ => (sig.shape(), sig.origin()),
    };
    GridSignal::new(
        out.data.iter().map(|v| *v as f32).collect(),
        shape,
        out.ch,
        sig.resolution(),
        origin,
    )
}

/// Run the model on a signal. Grid metadata is preserved; valid padding
/// shrinks the grid by K-1 samples per layer per axis and shifts the
/// origin accordingly.
pub fn forward(model: &CNNModel, input: &GridSignal) -> Result<GridSignal> {
    match (model.dims, input.shape()) {
        (Dims::One, Shape::One { .. }) | (Dims::Two, Shape::Two { .. }) => {}
        _ => {
            return Err(Error::ShapeMismatch(
                "signal dimensionality does not match model dims".into(),
            ))
        }
    }
    let x = Tensor::from_signal(input);
    let out = forward_f64(model, &x)?;
    output_metadata(model, input, &out)
}

/// Per-layer gradients, shape-congruent to the model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &CNNModel) -> Self {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    bias: l.bias.as_ref().map(|b| vec![0.0; b.len()]),
                })
                .collect(),
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += y;
            }
            if let (Some(ab), Some(bb)) = (&mut a.bias, &b.bias) {
                for (x, y) in ab.iter_mut().zip(bb) {
                    *x += y;
                }
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            for x in &mut layer.weights {
                *x *= factor;
            }
            if let Some(b) = &mut layer.bias {
                for x in b {
                    *x *= factor;
                }
            }
        }
    }
}

pub(crate) fn backward_cached(
    model: &CNNModel,
    cache: &ForwardCache,
    upstream: &Tensor,
) -> Gradients {
    let mut grads = Gradients::zeros_like(model);
    let mut dpost = upstream.clone();
    for (l, layer) in model.layers.iter().enumerate().rev() {
        let pre = &cache.pres[l];
        let xp = &cache.xps[l];
        // g = dpost (.) sigma'(pre)
        let mut g = dpost.clone();
        for (gv, pv) in g.data.iter_mut().zip(&pre.data) {
            *gv *= layer.nonlinearity.derivative(*pv);
        }
        let kh = layer.kh;
        let kw = layer.kernel;
        let out_rows = g.rows;
        let out_cols = g.cols;
        let lg = &mut grads.layers[l];
        let mut dxp = Tensor::zeros(layer.in_channels, xp.rows, xp.cols);
        for oc in 0..layer.out_channels {
            let ob = oc * out_rows * out_cols;
            if let Some(db) = &mut lg.bias {
                db[oc] += g.data[ob..ob + out_rows * out_cols].iter().sum::<f64>();
            }
            for ic in 0..layer.in_channels {
                for ki in 0..kh {
                    for kj in 0..kw {
                        let widx = ((oc * layer.in_channels + ic) * kh + ki) * kw + kj;
                        let w = f64::from(layer.weights[widx]);
                        let mut dw = 0.0;
                        for i in 0..out_rows {
                            let gb = ob + i * out_cols;
                            let xb = (ic * xp.rows + i + ki) * xp.cols + kj;
                            let grow = &g.data[gb..gb + out_cols];
                            let xrow = &xp.data[xb..xb + out_cols];
                            let drow = &mut dxp.data[xb..xb + out_cols];
                            let mut acc = 0.0;
                            for j in 0..out_cols {
                                acc += grow[j] * xrow[j];
                                drow[j] += w * grow[j];
                            }
                            dw += acc;
                        }
                        lg.weights[widx] += dw;
                    }
                }
            }
        }
        // Fold the padded-input gradient back onto the layer input.
        let (ph, pw) = layer_pads(layer, model.padding);
        dpost = match model.padding {
            Padding::Valid => dxp,
            Padding::ZeroSame => {
                let rows = xp.rows - 2 * ph;
                let cols = xp.cols - 2 * pw;
                let mut dx = Tensor::zeros(layer.in_channels, rows, cols);
                for c in 0..layer.in_channels {
                    for i in 0..rows {
                        let src = (c * xp.rows + i + ph) * xp.cols + pw;
                        let dst = (c * rows + i) * cols;
                        dx.data[dst..dst + cols].copy_from_slice(&dxp.data[src..src + cols]);
                    }
                }
                dx
            }
            Padding::CircularSame => {
                let rows = xp.rows - 2 * ph;
                let cols = xp.cols - 2 * pw;
                let mut dx = Tensor::zeros(layer.in_channels, rows, cols);
                for c in 0..layer.in_channels {
                    for i in 0..xp.rows {
                        let si = (i + rows - ph % rows) % rows;
                        for j in 0..xp.cols {
                            let sj = (j + cols - pw % cols) % cols;
                            dx.data[(c * rows + si) * cols + sj] +=
                                dxp.data[(c * xp.rows + i) * xp.cols + j];
                        }
                    }
                }
                dx
            }
        };
    }
    grads
}

/// Exact gradients of the scalar `<upstream, forward(model, input)>` with
/// respect to every filter tap and bias.
pub fn backward(model: &CNNModel, input: &GridSignal, upstream: &GridSignal) -> Result<Gradients> {
    let x = Tensor::from_signal(input);
    let cache = forward_cached(model, &x)?;
    let up = Tensor::from_signal(upstream);
    if up.ch != cache.out.ch || up.rows != cache.out.rows || up.cols != cache.out.cols {
        return Err(Error::ShapeMismatch(format!(
            "upstream is {}x{}x{} but forward output is {}x{}x{}",
            up.ch, up.rows, up.cols, cache.out.ch, cache.out.rows, cache.out.cols
        )));
    }
    Ok(backward_cached(model, &cache, &up))
}

/// Product over layers of the filter L1 norms (the bound's H).
pub fn l1_product(model: &CNNModel) -> f64 {
    model.l1_product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::SeededRng;
    use crate::signal::{shift_signal, GridSignal, Shape};
    use alloc::vec;

    // Reference convolution written as plain nested loops with explicit
    // out-of-range handling, independent of the pad-then-correlate path.
    fn naive_layer(layer: &ConvLayer, padding: Padding, x: &Tensor) -> Tensor {
        let (kh, kw) = (layer.kh, layer.kernel);
        let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
        let (rows, cols) = match padding {
            Padding::Valid => (x.rows - kh + 1, x.cols - kw + 1),
            _ => (x.rows, x.cols),
        };
        let mut out = Tensor::zeros(layer.out_channels, rows, cols);
        let get = |c: usize, i: isize, j: isize| -> f64 {
            match padding {
                Padding::Valid => x.data[(c * x.rows + i as usize) * x.cols + j as usize],
                Padding::ZeroSame => {
                    if i < 0 || j < 0 || i >= x.rows as isize || j >= x.cols as isize {
                        0.0
                    } else {
                        x.data[(c * x.rows + i as usize) * x.cols + j as usize]
                    }
                }
                Padding::CircularSame => {
                    let iw = i.rem_euclid(x.rows as isize) as usize;
                    let jw = j.rem_euclid(x.cols as isize) as usize;
                    x.data[(c * x.rows + iw) * x.cols + jw]
                }
            }
        };
        for oc in 0..layer.out_channels {
            for i in 0..rows {
                for j in 0..cols {
                    let mut acc = layer.bias.as_ref().map_or(0.0, |b| f64::from(b[oc]));
                    for ic in 0..layer.in_channels {
                        for ki in 0..kh {
                            for kj in 0..kw {
                                let w = f64::from(
                                    layer.weights
                                        [((oc * layer.in_channels + ic) * kh + ki) * kw + kj],
                                );
                                let (si, sj) = match padding {
                                    Padding::Valid => {
                                        (i as isize + ki as isize, j as isize + kj as isize)
                                    }
                                    _ => (
                                        i as isize + ki as isize - ph as isize,
                                        j as isize + kj as isize - pw as isize,
                                    ),
                                };
                                acc += w * get(ic, si, sj);
                            }
                        }
                    }
                    out.data[(oc * rows + i) * cols + j] = layer.nonlinearity.apply(acc);
                }
            }
        }
        out
    }

    fn naive_forward(model: &CNNModel, x: &Tensor) -> Tensor {
        let mut cur = x.clone();
        for layer in model.layers() {
            cur = naive_layer(layer, model.padding(), &cur);
        }
        cur
    }

    fn random_model(
        dims: Dims,
        channels: &[usize],
        kernel: usize,
        padding: Padding,
        seed: u64,
    ) -> CNNModel {
        let spec = ArchSpec {
            dims,
            channels: channels.to_vec(),
            kernel,
            hidden: Nonlinearity::LeakyRelu,
            output: Nonlinearity::Tanh,
            padding,
            bias: true,
        };
        let mut model = spec.build(seed).unwrap();
        // Nonzero biases so the bias path is exercised.
        let mut rng = SeededRng::new(seed ^ 0x9e37);
        for layer in model.layers_mut() {
            if let Some(b) = layer.bias_mut() {
                for v in b {
                    *v = (0.1 * rng.normal()) as f32;
                }
            }
        }
        model
    }

    fn random_tensor(ch: usize, rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = SeededRng::new(seed);
        let mut t = Tensor::zeros(ch, rows, cols);
        for v in &mut t.data {
            *v = f64::from(rng.normal() as f32);
        }
        t
    }

    #[test]
    fn forward_matches_naive_reference() {
        let cases = [
            (Dims::One, vec![1usize, 3, 2], 5usize, 1usize, 24usize),
            (Dims::One, vec![2, 2], 3, 1, 9),
            (Dims::Two, vec![1, 2, 1], 3, 10, 11),
            (Dims::Two, vec![3, 2], 5, 8, 8),
        ];
        for (case_idx, (dims, channels, kernel, rows, cols)) in cases.iter().enumerate() {
            for padding in [Padding::ZeroSame, Padding::CircularSame, Padding::Valid] {
                let model = random_model(*dims, channels, *kernel, padding, 100 + case_idx as u64);
                let x = random_tensor(channels[0], *rows, *cols, 7 + case_idx as u64);
                let got = forward_f64(&model, &x).unwrap();
                let want = naive_forward(&model, &x);
                assert_eq!(got.rows, want.rows);
                assert_eq!(got.cols, want.cols);
                for (a, b) in got.data.iter().zip(&want.data) {
                    assert!((a - b).abs() < 1e-12, "{a} vs {b} ({padding:?})");
                }
            }
        }
    }

    #[test]
    fn kernel_of_one_with_identity_is_scalar_gain() {
        let layer =
            ConvLayer::new_1d(vec![2.5], None, 1, 1, 1, Nonlinearity::Identity).unwrap();
        let model = CNNModel::new(vec![layer], Padding::ZeroSame, Dims::One).unwrap();
        let sig =
            GridSignal::new(vec![1.0, -2.0, 4.0], Shape::One { len: 3 }, 1, 1.0, (0.0, 0.0))
                .unwrap();
        let out = forward(&model, &sig).unwrap();
        assert_eq!(out.values(), &[2.5, -5.0, 10.0]);
    }

    #[test]
    fn even_kernel_rejected() {
        assert!(ConvLayer::new_1d(vec![1.0; 4], None, 1, 1, 4, Nonlinearity::Identity).is_err());
        assert!(ConvLayer::new_1d(vec![], None, 1, 1, 0, Nonlinearity::Identity).is_err());
    }

    #[test]
    fn channel_chain_mismatch_rejected() {
        let a = ConvLayer::new_1d(vec![0.1; 3 * 2], None, 1, 2, 3, Nonlinearity::Relu).unwrap();
        let b = ConvLayer::new_1d(vec![0.1; 3 * 3], None, 3, 1, 3, Nonlinearity::Identity).unwrap();
        assert!(CNNModel::new(vec![a, b], Padding::ZeroSame, Dims::One).is_err());
    }

    #[test]
    fn input_narrower_than_valid_support_rejected() {
        let model = random_model(Dims::One, &[1, 1], 5, Padding::Valid, 1);
        let sig = GridSignal::new(vec![1.0; 4], Shape::One { len: 4 }, 1, 1.0, (0.0, 0.0)).unwrap();
        assert!(matches!(forward(&model, &sig), Err(Error::InputTooSmall(_))));
    }

    #[test]
    fn circular_padding_is_exactly_shift_equivariant() {
        let model = random_model(Dims::Two, &[1, 4, 1], 5, Padding::CircularSame, 3);
        let mut rng = SeededRng::new(55);
        let vals: Vec<f32> = (0..12 * 12).map(|_| rng.normal() as f32).collect();
        let sig =
            GridSignal::new(vals, Shape::Two { rows: 12, cols: 12 }, 1, 1.0, (0.0, 0.0)).unwrap();
        let base = forward(&model, &sig).unwrap();
        for (di, dj) in [(1isize, 0isize), (0, 5), (3, 7), (-2, 4)] {
            let shifted_out = forward(&model, &shift_signal(&sig, di, dj)).unwrap();
            let expected = shift_signal(&base, di, dj);
            for (a, b) in shifted_out.values().iter().zip(expected.values()) {
                assert!((a - b).abs() <= 1e-5, "{a} vs {b} at shift ({di},{dj})");
            }
        }
    }

    #[test]
    fn zero_padding_is_shift_equivariant_in_the_interior() {
        // Shifting the input moves the zero boundary, so only outputs whose
        // receptive field stays inside the original support must agree.
        let model = random_model(Dims::One, &[1, 3, 1], 5, Padding::ZeroSame, 8);
        let margin = model.receptive_margin();
        let n = 64usize;
        let mut rng = SeededRng::new(9);
        let vals: Vec<f32> = (0..n).map(|_| rng.normal() as f32).collect();
        let sig = GridSignal::new(vals, Shape::One { len: n }, 1, 1.0, (0.0, 0.0)).unwrap();
        let base = forward(&model, &sig).unwrap();
        let d = 4usize;
        let shifted_out = forward(&model, &shift_signal(&sig, d as isize, 0)).unwrap();
        for t in margin..n - margin - d {
            let a = base.value(0, 0, t);
            let b = shifted_out.value(0, 0, t + d);
            assert!((a - b).abs() <= 1e-5, "t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn valid_padding_shrinks_grid_and_shifts_origin() {
        let model = random_model(Dims::Two, &[1, 2, 1], 3, Padding::Valid, 4);
        let sig = GridSignal::zeros(Shape::Two { rows: 10, cols: 10 }, 1, 2.0, (-9.0, -9.0))
            .unwrap();
        let out = forward(&model, &sig).unwrap();
        // Two K=3 layers remove 4 samples per axis; origin moves in by
        // 2 samples * 2 m.
        assert_eq!(out.shape(), Shape::Two { rows: 6, cols: 6 });
        assert_eq!(out.origin(), (-5.0, -5.0));
        assert_eq!(out.resolution(), 2.0);
    }

    #[test]
    fn l1_product_matches_hand_sum() {
        let a = ConvLayer::new_1d(
            vec![0.5, -1.0, 0.25],
            Some(vec![9.0]),
            1,
            1,
            3,
            Nonlinearity::Relu,
        )
        .unwrap();
        let b = ConvLayer::new_1d(vec![-2.0, 0.0, 1.0], None, 1, 1, 3, Nonlinearity::Tanh).unwrap();
        let model = CNNModel::new(vec![a, b], Padding::ZeroSame, Dims::One).unwrap();
        // (0.5 + 1 + 0.25) * (2 + 0 + 1) = 5.25; bias excluded.
        assert!((l1_product(&model) - 5.25).abs() < 1e-12);
    }

    fn scalar_loss(model: &CNNModel, x: &Tensor, up: &Tensor) -> f64 {
        let out = forward_f64(model, x).unwrap();
        out.data.iter().zip(&up.data).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn backprop_matches_central_differences() {
        let eps = 1e-5f64;
        let cases = [
            (Dims::One, vec![1usize, 3, 1], 5usize, Padding::ZeroSame, 1usize, 20usize),
            (Dims::One, vec![1, 2, 2, 1], 3, Padding::CircularSame, 1, 12),
            (Dims::Two, vec![1, 2, 1], 3, Padding::ZeroSame, 8, 9),
            (Dims::Two, vec![2, 3, 1], 3, Padding::Valid, 8, 8),
            (Dims::Two, vec![1, 2, 1], 5, Padding::CircularSame, 7, 7),
        ];
        for (case_idx, (dims, channels, kernel, padding, rows, cols)) in cases.iter().enumerate()
        {
            let model = random_model(*dims, channels, *kernel, *padding, 40 + case_idx as u64);
            let x = random_tensor(channels[0], *rows, *cols, 90 + case_idx as u64);
            let probe = forward_f64(&model, &x).unwrap();
            let up = random_tensor(probe.ch, probe.rows, probe.cols, 17 + case_idx as u64);

            let xs = GridSignal::new(
                x.data.iter().map(|v| *v as f32).collect(),
                if matches!(dims, Dims::One) {
                    Shape::One { len: *cols }
                } else {
                    Shape::Two { rows: *rows, cols: *cols }
                },
                channels[0],
                1.0,
                (0.0, 0.0),
            )
            .unwrap();
            let ups = GridSignal::new(
                up.data.iter().map(|v| *v as f32).collect(),
                if matches!(dims, Dims::One) {
                    Shape::One { len: probe.cols }
                } else {
                    Shape::Two { rows: probe.rows, cols: probe.cols }
                },
                probe.ch,
                1.0,
                (0.0, 0.0),
            )
            .unwrap();
            // Backward sees the f32-rounded upstream; use the same values
            // on the finite-difference side.
            let up64 = Tensor {
                data: ups.values().iter().map(|v| f64::from(*v)).collect(),
                ch: up.ch,
                rows: up.rows,
                cols: up.cols,
            };
            let x64 = Tensor {
                data: xs.values().iter().map(|v| f64::from(*v)).collect(),
                ch: x.ch,
                rows: x.rows,
                cols: x.cols,
            };
            let grads = backward(&model, &xs, &ups).unwrap();

            for l in 0..model.num_layers() {
                let nw = model.layers()[l].weights().len();
                // Probe a spread of taps instead of all of them.
                for idx in (0..nw).step_by(1 + nw / 7) {
                    let w0 = model.layers()[l].weights()[idx];
                    let wp = (f64::from(w0) + eps) as f32;
                    let wm = (f64::from(w0) - eps) as f32;
                    let mut mp = model.clone();
                    mp.layers_mut()[l].weights_mut()[idx] = wp;
                    let mut mm = model.clone();
                    mm.layers_mut()[l].weights_mut()[idx] = wm;
                    // Use the deltas actually realized after f32 rounding.
                    let h = f64::from(wp) - f64::from(wm);
                    let fd = (scalar_loss(&mp, &x64, &up64) - scalar_loss(&mm, &x64, &up64)) / h;
                    let an = grads.layers[l].weights[idx];
                    let denom = an.abs().max(fd.abs()).max(1e-6);
                    assert!(
                        (fd - an).abs() / denom <= 1e-4,
                        "case {case_idx} layer {l} tap {idx}: fd={fd} analytic={an}"
                    );
                }
                if model.layers()[l].bias().is_some() {
                    let b0 = model.layers()[l].bias().unwrap()[0];
                    let bp = (f64::from(b0) + eps) as f32;
                    let bm = (f64::from(b0) - eps) as f32;
                    let mut mp = model.clone();
                    mp.layers_mut()[l].bias_mut().unwrap()[0] = bp;
                    let mut mm = model.clone();
                    mm.layers_mut()[l].bias_mut().unwrap()[0] = bm;
                    let h = f64::from(bp) - f64::from(bm);
                    let fd = (scalar_loss(&mp, &x64, &up64) - scalar_loss(&mm, &x64, &up64)) / h;
                    let an = grads.layers[l].bias.as_ref().unwrap()[0];
                    let denom = an.abs().max(fd.abs()).max(1e-6);
                    assert!(
                        (fd - an).abs() / denom <= 1e-4,
                        "case {case_idx} layer {l} bias: fd={fd} analytic={an}"
                    );
                }
            }
        }
    }

    #[test]
    fn backward_rejects_mismatched_upstream() {
        let model = random_model(Dims::One, &[1, 1], 3, Padding::ZeroSame, 2);
        let sig = GridSignal::zeros(Shape::One { len: 8 }, 1, 1.0, (0.0, 0.0)).unwrap();
        let bad = GridSignal::zeros(Shape::One { len: 7 }, 1, 1.0, (0.0, 0.0)).unwrap();
        assert!(matches!(backward(&model, &sig, &bad), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn build_is_deterministic_in_seed() {
        let spec = ArchSpec::default_mid();
        let a = spec.build(5).unwrap();
        let b = spec.build(5).unwrap();
        let c = spec.build(6).unwrap();
        for (la, lb) in a.layers().iter().zip(b.layers()) {
            assert_eq!(la.weights(), lb.weights());
        }
        assert_ne!(a.layers()[0].weights(), c.layers()[0].weights());
    }

    #[test]
    fn nonlinearities_have_unit_bounded_slope() {
        for nl in [
            Nonlinearity::Identity,
            Nonlinearity::Relu,
            Nonlinearity::LeakyRelu,
            Nonlinearity::Tanh,
        ] {
            let mut rng = SeededRng::new(31);
            for _ in 0..500 {
                let a = 4.0 * rng.normal();
                let b = 4.0 * rng.normal();
                if a == b {
                    continue;
                }
                let slope = (nl.apply(a) - nl.apply(b)) / (a - b);
                assert!(slope.abs() <= 1.0 + 1e-12, "{nl:?} slope {slope}");
                assert!(nl.derivative(a).abs() <= 1.0);
            }
        }
    }
}
