//! Windowed loss, windowed training, Monte-Carlo estimation of the
//! full-signal loss, and the generalization-bound calculator with its
//! empirical verification harness.
//!
//! The windowed cost restricts the input to a centered window of A
//! samples and scores the network output on the central B samples,
//! normalized to a per-sample mean. The full-signal cost is estimated on
//! the interior of wide freshly generated signals, excluding a margin at
//! least as large as the receptive half-width so the estimator targets
//! the stationary interior statistics.

use crate::error::{Error, Result};
use crate::math::{derive_seed, mean_and_stderr};
use crate::net::{
    backward_cached, forward_cached, forward_f64, ArchSpec, CNNModel, Dims, Gradients, Tensor,
};
use crate::signal::{
    generate_stationary_pair, sample_variance, GridSignal, StationaryPairConfig, WindowSpec,
};
use alloc::format;
use alloc::vec::Vec;

/// Index bookkeeping between an A-cropped input, the network output and
/// the central B target window, per axis.
struct WindowMap {
    /// Crop start of the input window in original indices (rows, cols).
    crop: (usize, usize),
    /// Output index offset: output u maps to original crop + offset + u.
    offset: (usize, usize),
    /// Target window start in original indices.
    target: (usize, usize),
    /// Target window extent (rows, cols).
    extent: (usize, usize),
}

impl WindowMap {
    fn build(
        model: &CNNModel,
        rows: usize,
        cols: usize,
        a: usize,
        b: usize,
    ) -> Result<WindowMap> {
        if a < b || b == 0 {
            return Err(Error::InvalidConfig(format!(
                "window widths must satisfy A >= B >= 1, got A={a} B={b}"
            )));
        }
        let two_d = matches!(model.dims(), Dims::Two);
        let (a_r, b_r) = if two_d { (a, b) } else { (1, 1) };
        if a_r > rows || a > cols {
            return Err(Error::InvalidConfig(format!(
                "input window A={a} does not fit the {rows}x{cols} grid"
            )));
        }
        let crop = ((rows - a_r) / 2, (cols - a) / 2);
        let (off_r, off_c, out_r, out_c) = match model.padding() {
            crate::net::Padding::Valid => {
                let shrink_r: usize =
                    model.layers().iter().map(|l| if two_d { l.kernel() - 1 } else { 0 }).sum();
                let shrink_c: usize = model.layers().iter().map(|l| l.kernel() - 1).sum();
                if a_r <= shrink_r && two_d || a <= shrink_c {
                    return Err(Error::InputTooSmall(format!(
                        "input window A={a} underflows valid-mode shrinkage"
                    )));
                }
                (shrink_r / 2, shrink_c / 2, a_r - shrink_r, a - shrink_c)
            }
            _ => (0, 0, a_r, a),
        };
        let target = ((rows - b_r) / 2, (cols - b) / 2);
        // Every target sample must be covered by the output window.
        let lo_ok = target.0 >= crop.0 + off_r && target.1 >= crop.1 + off_c;
        let hi_ok = lo_ok
            && target.0 - crop.0 - off_r + b_r <= out_r
            && target.1 - crop.1 - off_c + b <= out_c;
        if !hi_ok {
            return Err(Error::InputTooSmall(format!(
                "output window B={b} is not covered by the network output for A={a}"
            )));
        }
        Ok(WindowMap { crop, offset: (off_r, off_c), target, extent: (b_r, b) })
    }

    fn out_index(&self, ti: usize, tj: usize) -> (usize, usize) {
        (
            self.target.0 + ti - self.crop.0 - self.offset.0,
            self.target.1 + tj - self.crop.1 - self.offset.1,
        )
    }
}

fn crop_tensor(x: &Tensor, start: (usize, usize), extent: (usize, usize)) -> Tensor {
    let mut out = Tensor::zeros(x.ch, extent.0, extent.1);
    for c in 0..x.ch {
        for i in 0..extent.0 {
            let src = (c * x.rows + start.0 + i) * x.cols + start.1;
            let dst = (c * extent.0 + i) * extent.1;
            out.data[dst..dst + extent.1].copy_from_slice(&x.data[src..src + extent.1]);
        }
    }
    out
}

/// Windowed per-sample mean squared error: the input is restricted to a
/// centered window of `a` samples before the forward pass and the output
/// is scored against `y` on the central `b` samples.
pub fn windowed_loss(
    model: &CNNModel,
    x: &GridSignal,
    y: &GridSignal,
    a: usize,
    b: usize,
) -> Result<f64> {
    if x.shape() != y.shape() || x.resolution() != y.resolution() {
        return Err(Error::ShapeMismatch("x and y must live on the same grid".into()));
    }
    let rows = x.shape().rows();
    let cols = x.shape().cols();
    let map = WindowMap::build(model, rows, cols, a, b)?;
    let xt = Tensor::from_signal(x);
    let a_r = if matches!(model.dims(), Dims::Two) { a } else { 1 };
    let cropped = crop_tensor(&xt, map.crop, (a_r, a));
    let out = forward_f64(model, &cropped)?;
    let yt = Tensor::from_signal(y);
    let mut acc = 0.0;
    let mut count = 0usize;
    for c in 0..out.ch {
        for ti in 0..map.extent.0 {
            for tj in 0..map.extent.1 {
                let (oi, oj) = map.out_index(ti, tj);
                let pred = out.data[(c * out.rows + oi) * out.cols + oj];
                let tgt =
                    yt.data[(c * rows + map.target.0 + ti) * cols + map.target.1 + tj];
                let d = pred - tgt;
                acc += d * d;
                count += 1;
            }
        }
    }
    Ok(acc / count as f64)
}

/// Stochastic optimizers for the windowed training loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam_default() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Optimizer state; updates run in double precision and are stored back
/// into the model's single-precision parameters.
pub struct Optimizer {
    kind: OptimizerKind,
    m: Option<Gradients>,
    v: Option<Gradients>,
    t: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Optimizer { kind, m: None, v: None, t: 0 }
    }

    pub fn step(&mut self, model: &mut CNNModel, grads: &Gradients, lr: f64) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (layer, lg) in model.layers_mut().iter_mut().zip(&grads.layers) {
                    for (w, g) in layer.weights_mut().iter_mut().zip(&lg.weights) {
                        *w = (f64::from(*w) - lr * g) as f32;
                    }
                    if let (Some(b), Some(gb)) = (layer.bias_mut(), &lg.bias) {
                        for (w, g) in b.iter_mut().zip(gb) {
                            *w = (f64::from(*w) - lr * g) as f32;
                        }
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if self.m.is_none() {
                    self.m = Some(Gradients::zeros_like(model));
                    self.v = Some(Gradients::zeros_like(model));
                }
                self.t += 1;
                let m = self.m.as_mut().unwrap();
                let v = self.v.as_mut().unwrap();
                let bc1 = 1.0 - libm::pow(beta1, self.t as f64);
                let bc2 = 1.0 - libm::pow(beta2, self.t as f64);
                for (((layer, lg), lm), lv) in model
                    .layers_mut()
                    .iter_mut()
                    .zip(&grads.layers)
                    .zip(&mut m.layers)
                    .zip(&mut v.layers)
                {
                    for (((w, g), mw), vw) in layer
                        .weights_mut()
                        .iter_mut()
                        .zip(&lg.weights)
                        .zip(&mut lm.weights)
                        .zip(&mut lv.weights)
                    {
                        *mw = beta1 * *mw + (1.0 - beta1) * g;
                        *vw = beta2 * *vw + (1.0 - beta2) * g * g;
                        let update = (*mw / bc1) / (libm::sqrt(*vw / bc2) + eps);
                        *w = (f64::from(*w) - lr * update) as f32;
                    }
                    if let (Some(b), (Some(gb), (Some(mb), Some(vb)))) =
                        (layer.bias_mut(), (&lg.bias, (&mut lm.bias, &mut lv.bias)))
                    {
                        for (((w, g), mw), vw) in
                            b.iter_mut().zip(gb).zip(mb.iter_mut()).zip(vb.iter_mut())
                        {
                            *mw = beta1 * *mw + (1.0 - beta1) * g;
                            *vw = beta2 * *vw + (1.0 - beta2) * g * g;
                            let update = (*mw / bc1) / (libm::sqrt(*vw / bc2) + eps);
                            *w = (f64::from(*w) - lr * update) as f32;
                        }
                    }
                }
            }
        }
    }
}

/// Configuration for the windowed training loop.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub input_window_a: usize,
    pub output_window_b: usize,
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_window_a < self.output_window_b || self.output_window_b == 0 {
            return Err(Error::InvalidConfig(format!(
                "window widths must satisfy A >= B >= 1, got A={} B={}",
                self.input_window_a, self.output_window_b
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Train a 1D model on freshly generated stationary pairs by minimizing
/// the windowed loss with stochastic gradient steps. Deterministic given
/// the config seed; returns the model and the per-step loss curve.
pub fn train_windowed(
    cfg: &TrainConfig,
    pair_cfg: &StationaryPairConfig,
    arch: &ArchSpec,
) -> Result<(CNNModel, Vec<f64>)> {
    cfg.validate()?;
    pair_cfg.validate()?;
    if !matches!(arch.dims, Dims::One) {
        return Err(Error::InvalidConfig("windowed pair training is 1D".into()));
    }
    let mut model = arch.build(derive_seed(cfg.seed, "init", 0))?;
    let a = cfg.input_window_a;
    let b = cfg.output_window_b;
    let mut optimizer = Optimizer::new(cfg.optimizer);
    let mut curve = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut grads = Gradients::zeros_like(&model);
        let mut loss_acc = 0.0;
        for item in 0..cfg.batch_size {
            let pair_seed =
                derive_seed(cfg.seed, "train-pair", (step * cfg.batch_size + item) as u64);
            let (x, y) = generate_stationary_pair(pair_cfg, pair_seed, a as f64, 1.0)?;
            let map = WindowMap::build(&model, 1, a, a, b)?;
            let xt = Tensor::from_signal(&x);
            let cache = forward_cached(&model, &xt)?;
            let yt = Tensor::from_signal(&y);
            let out = &cache.out;
            let count = (out.ch * map.extent.0 * map.extent.1) as f64;
            let mut upstream = Tensor::zeros(out.ch, out.rows, out.cols);
            let mut loss = 0.0;
            for c in 0..out.ch {
                for ti in 0..map.extent.0 {
                    for tj in 0..map.extent.1 {
                        let (oi, oj) = map.out_index(ti, tj);
                        let idx = (c * out.rows + oi) * out.cols + oj;
                        let tgt = yt.data[(map.target.0 + ti) * a + map.target.1 + tj];
                        let d = out.data[idx] - tgt;
                        loss += d * d;
                        upstream.data[idx] = 2.0 * d / count;
                    }
                }
            }
            loss /= count;
            loss_acc += loss;
            let item_grads = backward_cached(&model, &cache, &upstream);
            grads.add(&item_grads);
        }
        grads.scale(1.0 / cfg.batch_size as f64);
        let loss = loss_acc / cfg.batch_size as f64;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { step });
        }
        optimizer.step(&mut model, &grads, cfg.learning_rate);
        curve.push(loss);
    }
    Ok((model, curve))
}

/// Monte-Carlo estimate of the full-signal loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
}

/// Estimate the full-signal mean squared error of the model on the
/// stationary pair process, averaged over the interior (excluding
/// `margin` samples per side) of `trials` independently generated wide
/// signals.
pub fn estimate_full_loss(
    model: &CNNModel,
    pair_cfg: &StationaryPairConfig,
    eval_width: usize,
    margin: usize,
    trials: usize,
    seed: u64,
) -> Result<LossEstimate> {
    if !matches!(model.dims(), Dims::One) {
        return Err(Error::InvalidConfig("full-loss estimation is 1D".into()));
    }
    let needed = model.receptive_margin();
    if margin < needed {
        return Err(Error::InvalidConfig(format!(
            "margin {margin} is smaller than the receptive half-width {needed}; \
             border contamination would bias the estimate"
        )));
    }
    if eval_width <= 2 * margin {
        return Err(Error::InvalidConfig(format!(
            "eval_width {eval_width} leaves no interior after margin {margin}"
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be >= 1".into()));
    }
    let off = match model.padding() {
        crate::net::Padding::Valid => {
            model.layers().iter().map(|l| l.kernel() - 1).sum::<usize>() / 2
        }
        _ => 0,
    };
    let mut per_trial = Vec::with_capacity(trials);
    for trial in 0..trials {
        let pair_seed = derive_seed(seed, "full-loss", trial as u64);
        let (x, y) = generate_stationary_pair(pair_cfg, pair_seed, eval_width as f64, 1.0)?;
        let xt = Tensor::from_signal(&x);
        let out = forward_f64(model, &xt)?;
        let yt = Tensor::from_signal(&y);
        let n = eval_width;
        let mut acc = 0.0;
        let mut count = 0usize;
        for c in 0..out.ch {
            for t in margin..n - margin {
                let pred = out.data[c * out.cols + (t - off)];
                let d = pred - yt.data[t];
                acc += d * d;
                count += 1;
            }
        }
        per_trial.push(acc / count as f64);
    }
    let (mean, stderr) = mean_and_stderr(&per_trial);
    Ok(LossEstimate { mean, stderr, trials })
}

/// Inputs to the generalization bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundInputs {
    pub loss_window: f64,
    pub h_product: f64,
    pub num_layers: usize,
    pub filter_width: usize,
    pub input_width: usize,
    pub output_width: usize,
    pub var_x: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if self.input_width < self.output_width || self.output_width == 0 {
            return Err(Error::InvalidConfig(format!(
                "window widths must satisfy A >= B >= 1, got A={} B={}",
                self.input_width, self.output_width
            )));
        }
        if !(self.loss_window >= 0.0 && self.loss_window.is_finite()) {
            return Err(Error::InvalidConfig("loss_window must be finite and >= 0".into()));
        }
        if !(self.h_product > 0.0 && self.h_product.is_finite()) {
            return Err(Error::InvalidConfig("h_product must be finite and > 0".into()));
        }
        if !(self.var_x >= 0.0 && self.var_x.is_finite()) {
            return Err(Error::InvalidConfig("var_x must be finite and >= 0".into()));
        }
        if self.num_layers == 0 || self.filter_width == 0 {
            return Err(Error::InvalidConfig("num_layers and filter_width must be >= 1".into()));
        }
        Ok(())
    }

    /// The border-slack term without the clamp; negative when A > B + LK.
    pub fn slack_unclamped(&self) -> f64 {
        let b = self.output_width as f64;
        let excess = self.output_width as f64
            + (self.num_layers * self.filter_width) as f64
            - self.input_width as f64;
        self.h_product * excess / b * self.var_x
    }
}

/// Upper bound on the full-signal loss:
/// `loss_window + H * max(0, B + L*K - A) / B * var(X)`.
///
/// The slack term is clamped at zero: at A = B + LK border effects vanish
/// and the bound reduces to the windowed loss, and a negative term for
/// even wider input windows would only loosen the reported bound in the
/// wrong direction. The unclamped value is available through
/// [`BoundInputs::slack_unclamped`].
pub fn theorem_bound(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let slack = inputs.slack_unclamped();
    Ok(inputs.loss_window + if slack > 0.0 { slack } else { 0.0 })
}

/// Evaluation settings for [`verify_bound`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifyConfig {
    /// Width in samples of each wide evaluation signal.
    pub eval_width: usize,
    /// Interior exclusion margin for the full-loss estimate.
    pub eval_margin: usize,
    /// Number of wide evaluation signals.
    pub eval_trials: usize,
    /// Number of held-out windows for the windowed-loss estimate.
    pub holdout_windows: usize,
}

/// One row of the bound-verification report.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundRow {
    pub seed: u64,
    pub loss_window: f64,
    pub loss_window_stderr: f64,
    pub h_product: f64,
    pub var_x: f64,
    pub input_width: usize,
    pub output_width: usize,
    pub num_layers: usize,
    pub filter_width: usize,
    pub lhs_mean: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    pub rhs_unclamped: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
    pub holds_fraction: f64,
}

/// Full per-seed pipeline: train on windows, measure the windowed loss on
/// held-out windows, evaluate the bound, and estimate the full-signal
/// loss. Pure given the seed, so seeds may be processed in parallel.
pub fn verify_bound_seed(
    pair_cfg: &StationaryPairConfig,
    arch: &ArchSpec,
    cfg: &TrainConfig,
    vcfg: &VerifyConfig,
    seed: u64,
) -> Result<BoundRow> {
    if vcfg.holdout_windows < 2 {
        return Err(Error::InvalidConfig("holdout_windows must be >= 2".into()));
    }
    let train_cfg = TrainConfig { seed: derive_seed(seed, "train", 0), ..cfg.clone() };
    let (model, _curve) = train_windowed(&train_cfg, pair_cfg, arch)?;
    let a = cfg.input_window_a;
    let b = cfg.output_window_b;

    // Held-out windowed loss and input variance, on fresh seeds.
    let mut window_losses = Vec::with_capacity(vcfg.holdout_windows);
    let mut holdout_inputs = Vec::with_capacity(vcfg.holdout_windows);
    for i in 0..vcfg.holdout_windows {
        let s = derive_seed(seed, "holdout", i as u64);
        let (x, y) = generate_stationary_pair(pair_cfg, s, a as f64, 1.0)?;
        window_losses.push(windowed_loss(&model, &x, &y, a, b)?);
        holdout_inputs.push(x);
    }
    let (loss_window, loss_window_stderr) = mean_and_stderr(&window_losses);
    let whole = WindowSpec::new(2.0 * a as f64, 0.0)?;
    let var_x = sample_variance(&holdout_inputs, &whole)?;

    let inputs = BoundInputs {
        loss_window,
        h_product: model.l1_product(),
        num_layers: model.num_layers(),
        filter_width: model.kernel_width(),
        input_width: a,
        output_width: b,
        var_x,
    };
    let rhs = theorem_bound(&inputs)?;
    let rhs_unclamped = loss_window + inputs.slack_unclamped();

    let lhs = estimate_full_loss(
        &model,
        pair_cfg,
        vcfg.eval_width,
        vcfg.eval_margin,
        vcfg.eval_trials,
        derive_seed(seed, "eval", 0),
    )?;
    Ok(BoundRow {
        seed,
        loss_window,
        loss_window_stderr,
        h_product: inputs.h_product,
        var_x,
        input_width: a,
        output_width: b,
        num_layers: inputs.num_layers,
        filter_width: inputs.filter_width,
        lhs_mean: lhs.mean,
        lhs_stderr: lhs.stderr,
        rhs,
        rhs_unclamped,
        holds: lhs.mean <= rhs + 3.0 * lhs.stderr,
    })
}

/// Run [`verify_bound_seed`] for every seed and aggregate the fraction of
/// seeds for which the bound holds within three standard errors.
pub fn verify_bound(
    pair_cfg: &StationaryPairConfig,
    arch: &ArchSpec,
    cfg: &TrainConfig,
    vcfg: &VerifyConfig,
    seeds: &[u64],
) -> Result<BoundReport> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("at least one seed is required".into()));
    }
    let mut rows = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        rows.push(verify_bound_seed(pair_cfg, arch, cfg, vcfg, seed)?);
    }
    let held = rows.iter().filter(|r| r.holds).count();
    Ok(BoundReport { holds_fraction: held as f64 / rows.len() as f64, rows })
}
