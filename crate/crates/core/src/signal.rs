//! Grid-sampled signals, window operators, and generators of jointly
//! stationary input/output process pairs.
//!
//! Stationary pairs are built as shift-invariant maps of a single white
//! noise process: `X = g * w` and `Y = sigma(f * w)` with finite FIR
//! filters applied circularly on an extended grid that is then cropped.
//! Restricting a circularly stationary process to a window yields an
//! exactly stationary process on that window, so joint stationarity holds
//! by construction rather than approximately.

use crate::error::{Error, Result};
use crate::math::SeededRng;
use crate::net::Nonlinearity;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Grid dimensionality and extent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    One { len: usize },
    Two { rows: usize, cols: usize },
}

impl Shape {
    pub fn rows(&self) -> usize {
        match self {
            Shape::One { .. } => 1,
            Shape::Two { rows, .. } => *rows,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Shape::One { len } => *len,
            Shape::Two { cols, .. } => *cols,
        }
    }

    pub fn count(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn is_two(&self) -> bool {
        matches!(self, Shape::Two { .. })
    }
}

/// A sampled real field on a regular 1D or 2D grid.
///
/// `resolution` is meters per sample and `origin` is the coordinate of
/// sample (0, 0). For 2D grids the first index maps to the x axis and the
/// second to the y axis; 1D grids use a single index along x. Values are
/// stored channel-major, row-major in single precision; all numerical
/// kernels accumulate in double precision.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSignal {
    values: Vec<f32>,
    shape: Shape,
    channels: usize,
    resolution: f64,
    origin: (f64, f64),
}

impl GridSignal {
    pub fn new(
        values: Vec<f32>,
        shape: Shape,
        channels: usize,
        resolution: f64,
        origin: (f64, f64),
    ) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidConfig("channels must be >= 1".into()));
        }
        if shape.count() == 0 {
            return Err(Error::InvalidConfig("grid must contain at least one sample".into()));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::InvalidConfig(format!("resolution must be > 0, got {resolution}")));
        }
        if values.len() != shape.count() * channels {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values, got {}",
                shape.count() * channels,
                values.len()
            )));
        }
        if !(origin.0.is_finite() && origin.1.is_finite()) {
            return Err(Error::InvalidConfig("origin must be finite".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("signal values must all be finite".into()));
        }
        Ok(GridSignal { values, shape, channels, resolution, origin })
    }

    pub fn zeros(shape: Shape, channels: usize, resolution: f64, origin: (f64, f64)) -> Result<Self> {
        Self::new(vec![0.0; shape.count() * channels], shape, channels, resolution, origin)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    /// Value at (channel, row, col); 1D signals use row 0.
    pub fn value(&self, c: usize, i: usize, j: usize) -> f32 {
        self.values[(c * self.shape.rows() + i) * self.shape.cols() + j]
    }

    /// Coordinate of sample (i, j): (origin.x + i*rho, origin.y + j*rho).
    pub fn coord(&self, i: usize, j: usize) -> (f64, f64) {
        (self.origin.0 + i as f64 * self.resolution, self.origin.1 + j as f64 * self.resolution)
    }

    /// Replace values, keeping grid metadata. Lengths must match.
    pub fn with_values(&self, values: Vec<f32>) -> Result<Self> {
        Self::new(values, self.shape, self.channels, self.resolution, self.origin)
    }

    fn in_window(&self, i: usize, j: usize, w: &WindowSpec) -> bool {
        let half = w.width / 2.0;
        match self.shape {
            Shape::One { .. } => {
                let x = self.origin.0 + j as f64 * self.resolution;
                (x - w.center).abs() <= half
            }
            Shape::Two { .. } => {
                let (x, y) = self.coord(i, j);
                (x - w.center).abs() <= half && (y - w.center).abs() <= half
            }
        }
    }
}

/// A square-pulse window in physical units: samples whose coordinate lies
/// within `center +/- width/2` (on every axis for 2D grids) are kept.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowSpec {
    pub width: f64,
    pub center: f64,
}

impl WindowSpec {
    pub fn new(width: f64, center: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite() && center.is_finite()) {
            return Err(Error::InvalidConfig(format!("window width must be > 0, got {width}")));
        }
        Ok(WindowSpec { width, center })
    }
}

/// Configuration of a jointly stationary pair (X, Y) driven by one white
/// noise process.
#[derive(Clone, Debug, PartialEq)]
pub struct StationaryPairConfig {
    pub noise_std: f64,
    pub gen_filter: Vec<f64>,
    pub target_filter: Vec<f64>,
    pub target_nonlinearity: Nonlinearity,
}

impl StationaryPairConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_std > 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise_std must be > 0, got {}",
                self.noise_std
            )));
        }
        for (name, f) in [("gen_filter", &self.gen_filter), ("target_filter", &self.target_filter)]
        {
            if f.is_empty() {
                return Err(Error::InvalidConfig(format!("{name} must have at least one tap")));
            }
            if f.iter().any(|t| !t.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} taps must be finite")));
            }
        }
        Ok(())
    }

    /// Closed-form variance of X: noise_std^2 * sum(g^2).
    pub fn input_variance(&self) -> f64 {
        self.noise_std * self.noise_std * self.gen_filter.iter().map(|g| g * g).sum::<f64>()
    }
}

/// Circular FIR convolution of `noise` with both filters, pointwise
/// nonlinearity on the target branch. Shared by generation and by the
/// joint-shift tests.
pub(crate) fn synthesize_circular(
    cfg: &StationaryPairConfig,
    noise: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let m = noise.len();
    let mut x = vec![0.0f64; m];
    let mut y = vec![0.0f64; m];
    for t in 0..m {
        let mut ax = 0.0;
        for (k, g) in cfg.gen_filter.iter().enumerate() {
            ax += g * noise[(t + m - k % m) % m];
        }
        x[t] = ax;
        let mut ay = 0.0;
        for (k, f) in cfg.target_filter.iter().enumerate() {
            ay += f * noise[(t + m - k % m) % m];
        }
        y[t] = cfg.target_nonlinearity.apply(ay);
    }
    (x, y)
}

pub(crate) fn white_noise(std: f64, len: usize, seed: u64) -> Vec<f64> {
    let mut rng = SeededRng::new(seed);
    (0..len).map(|_| std * rng.normal()).collect()
}

/// Generate a jointly stationary pair (X, Y) on identical centered 1D
/// grids of `floor(extent / resolution)` samples. Deterministic in
/// (cfg, seed): same inputs give bit-identical outputs.
pub fn generate_stationary_pair(
    cfg: &StationaryPairConfig,
    seed: u64,
    extent: f64,
    resolution: f64,
) -> Result<(GridSignal, GridSignal)> {
    cfg.validate()?;
    if !(extent > 0.0 && resolution > 0.0) {
        return Err(Error::InvalidConfig("extent and resolution must be > 0".into()));
    }
    let n = (extent / resolution) as usize;
    let support = cfg.gen_filter.len().max(cfg.target_filter.len());
    if n < support {
        return Err(Error::InvalidConfig(format!(
            "extent/resolution = {n} samples is smaller than the filter support {support}"
        )));
    }
    // Extended circular grid, then crop: the crop of a circularly
    // stationary process is stationary on the whole returned window.
    let m = n + support;
    let noise = white_noise(cfg.noise_std, m, seed);
    let (x_ext, y_ext) = synthesize_circular(cfg, &noise);
    let origin = (-((n - 1) as f64) / 2.0 * resolution, 0.0);
    let shape = Shape::One { len: n };
    let x = GridSignal::new(x_ext[..n].iter().map(|v| *v as f32).collect(), shape, 1, resolution, origin)?;
    let y = GridSignal::new(y_ext[..n].iter().map(|v| *v as f32).collect(), shape, 1, resolution, origin)?;
    Ok((x, y))
}

/// Zero out all samples outside the window; grid metadata is unchanged.
/// A window disjoint from the grid yields an all-zero signal.
pub fn apply_window(sig: &GridSignal, w: &WindowSpec) -> GridSignal {
    let rows = sig.shape().rows();
    let cols = sig.shape().cols();
    let mut values = sig.values().to_vec();
    for i in 0..rows {
        for j in 0..cols {
            if !sig.in_window(i, j, w) {
                for c in 0..sig.channels() {
                    values[(c * rows + i) * cols + j] = 0.0;
                }
            }
        }
    }
    sig.with_values(values).expect("metadata unchanged")
}

/// Unbiased pooled sample variance of all in-region values across signals.
pub fn sample_variance(sigs: &[GridSignal], region: &WindowSpec) -> Result<f64> {
    let mut values = Vec::new();
    for sig in sigs {
        let rows = sig.shape().rows();
        let cols = sig.shape().cols();
        for i in 0..rows {
            for j in 0..cols {
                if sig.in_window(i, j, region) {
                    for c in 0..sig.channels() {
                        values.push(f64::from(sig.value(c, i, j)));
                    }
                }
            }
        }
    }
    crate::math::sample_variance_of(&values).ok_or_else(|| {
        Error::InsufficientData(format!(
            "pooled variance needs at least 2 in-region samples, found {}",
            values.len()
        ))
    })
}

/// Average of centered products at the given lag over the valid overlap.
/// Lag 0 coincides with the biased sample variance. 1D single-channel
/// signals only; used as a stationarity diagnostic.
pub fn empirical_autocovariance(sig: &GridSignal, lag: isize) -> Result<f64> {
    if sig.shape().is_two() || sig.channels() != 1 {
        return Err(Error::InvalidArgument(
            "autocovariance is defined for 1D single-channel signals".into(),
        ));
    }
    let n = sig.shape().cols();
    let lag_abs = lag.unsigned_abs();
    if lag_abs >= n {
        return Err(Error::InvalidArgument(format!("|lag| = {lag_abs} out of range for n = {n}")));
    }
    let vals = sig.values();
    let mean = vals.iter().map(|v| f64::from(*v)).sum::<f64>() / n as f64;
    let overlap = n - lag_abs;
    let mut acc = 0.0;
    for t in 0..overlap {
        acc += (f64::from(vals[t]) - mean) * (f64::from(vals[t + lag_abs]) - mean);
    }
    Ok(acc / overlap as f64)
}

/// Circular shift of values by whole samples per axis; metadata unchanged.
/// 1D signals shift along their single axis by `di`.
pub fn shift_signal(sig: &GridSignal, di: isize, dj: isize) -> GridSignal {
    let rows = sig.shape().rows();
    let cols = sig.shape().cols();
    let (si, sj) = match sig.shape() {
        Shape::One { len } => (0usize, di.rem_euclid(len as isize) as usize),
        Shape::Two { rows, cols } => {
            (di.rem_euclid(rows as isize) as usize, dj.rem_euclid(cols as isize) as usize)
        }
    };
    let mut values = vec![0.0f32; sig.values().len()];
    for c in 0..sig.channels() {
        for i in 0..rows {
            for j in 0..cols {
                let ti = (i + si) % rows;
                let tj = (j + sj) % cols;
                values[(c * rows + ti) * cols + tj] = sig.value(c, i, j);
            }
        }
    }
    sig.with_values(values).expect("metadata unchanged")
}
