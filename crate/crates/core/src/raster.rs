//! Conversion between 2D point sets and Gaussian-superposition images,
//! and recovery of point sets from predicted images via weighted Lloyd
//! iterations.

use crate::error::{Error, Result};
use crate::signal::{GridSignal, Shape};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// A finite set of 2D points in meters. May be empty.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct PositionSet {
    points: Vec<(f64, f64)>,
}

impl PositionSet {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.iter().any(|(x, y)| !(x.is_finite() && y.is_finite())) {
            return Err(Error::InvalidArgument("all coordinates must be finite".into()));
        }
        Ok(PositionSet { points })
    }

    pub fn empty() -> Self {
        PositionSet { points: Vec::new() }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Union of two sets (concatenation; duplicates are kept).
    pub fn union(&self, other: &PositionSet) -> PositionSet {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        PositionSet { points }
    }
}

/// Rasterization grid: a square window of `window_width` meters sampled
/// at `resolution` meters per pixel, with Gaussian pulses of standard
/// deviation `sigma`.
///
/// The image is N x N with N = floor(window_width / resolution); with
/// rho in meters per pixel the pixel count is A / rho, not rho * A.
/// `sigma` is interpreted in meters by default; set `sigma_in_pixels`
/// to scale it by the resolution instead.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RasterConfig {
    pub window_width: f64,
    pub resolution: f64,
    pub sigma: f64,
    pub sigma_in_pixels: bool,
}

impl RasterConfig {
    /// Reference settings: rho = 1.25 m/pixel, sigma = 6.4 m.
    pub fn new(window_width: f64) -> Result<Self> {
        let rc = RasterConfig { window_width, resolution: 1.25, sigma: 6.4, sigma_in_pixels: false };
        rc.validate()?;
        Ok(rc)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window_width > 0.0 && self.resolution > 0.0 && self.sigma > 0.0) {
            return Err(Error::InvalidConfig(
                "window width, resolution and sigma must all be > 0".into(),
            ));
        }
        if self.pixels() < 1 {
            return Err(Error::InvalidConfig(format!(
                "window of {} m at {} m/pixel yields an empty image",
                self.window_width, self.resolution
            )));
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        (self.window_width / self.resolution) as usize
    }

    pub fn sigma_meters(&self) -> f64 {
        if self.sigma_in_pixels {
            self.sigma * self.resolution
        } else {
            self.sigma
        }
    }

    /// Same grid with a different window width.
    pub fn with_window(&self, window_width: f64) -> Result<Self> {
        let rc = RasterConfig { window_width, ..*self };
        rc.validate()?;
        Ok(rc)
    }

    /// Coordinate of pixel center (i, j): (rho*(i+1/2) - A/2, rho*(j+1/2) - A/2).
    fn pixel_origin(&self) -> (f64, f64) {
        let o = self.resolution * 0.5 - self.window_width / 2.0;
        (o, o)
    }
}

/// Parameters of the Lloyd's-algorithm position extraction. Upstream
/// descriptions of this step leave its settings open, so these defaults
/// pin down an explicit choice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtractionConfig {
    /// Threshold as a fraction of the image maximum.
    pub threshold_frac: f64,
    pub max_iters: usize,
    /// Convergence tolerance on center movement, meters.
    pub tol: f64,
    /// Seeds closer than this are merged (brighter one kept), meters.
    pub merge_radius: f64,
}

impl ExtractionConfig {
    /// Defaults tied to the raster grid: threshold 0.1, 50 iterations,
    /// tol = rho/10, merge radius = 2*sigma.
    pub fn defaults_for(rc: &RasterConfig) -> Self {
        ExtractionConfig {
            threshold_frac: 0.1,
            max_iters: 50,
            tol: rc.resolution / 10.0,
            merge_radius: 2.0 * rc.sigma_meters(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_frac > 0.0 && self.threshold_frac < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "threshold_frac must lie in (0, 1), got {}",
                self.threshold_frac
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be >= 1".into()));
        }
        if !(self.tol > 0.0 && self.merge_radius >= 0.0) {
            return Err(Error::InvalidConfig("tol must be > 0 and merge_radius >= 0".into()));
        }
        Ok(())
    }
}

/// Render a point set as a superposition of normalized Gaussian pulses
/// sampled at pixel centers. Points outside the window still contribute
/// their tails. Per-pixel sums run in double precision and every pixel is
/// independent of evaluation order.
pub fn rasterize(ps: &PositionSet, rc: &RasterConfig) -> Result<GridSignal> {
    rc.validate()?;
    let n = rc.pixels();
    let sigma = rc.sigma_meters();
    let inv_norm = 1.0 / (2.0 * core::f64::consts::PI * sigma * sigma);
    let inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
    // Beyond 12 sigma a pulse contributes less than 1e-31 of its peak,
    // far below f32 resolution of any attainable pixel value.
    let cutoff_sq = (12.0 * sigma) * (12.0 * sigma);
    let (ox, oy) = rc.pixel_origin();
    let rho = rc.resolution;
    let mut values = vec![0.0f64; n * n];
    for &(px, py) in ps.points() {
        // Pixel index range the cutoff box can touch.
        let lo_i = libm::floor(((px - 12.0 * sigma) - ox) / rho).max(0.0) as usize;
        let hi_i = (libm::ceil(((px + 12.0 * sigma) - ox) / rho).max(0.0) as usize)
            .min(n.saturating_sub(1));
        let lo_j = libm::floor(((py - 12.0 * sigma) - oy) / rho).max(0.0) as usize;
        let hi_j = (libm::ceil(((py + 12.0 * sigma) - oy) / rho).max(0.0) as usize)
            .min(n.saturating_sub(1));
        for i in lo_i..=hi_i {
            let dx = ox + i as f64 * rho - px;
            for j in lo_j..=hi_j {
                let dy = oy + j as f64 * rho - py;
                let d_sq = dx * dx + dy * dy;
                if d_sq <= cutoff_sq {
                    values[i * n + j] += inv_norm * libm::exp(-d_sq * inv_two_sigma_sq);
                }
            }
        }
    }
    GridSignal::new(
        values.iter().map(|v| *v as f32).collect(),
        Shape::Two { rows: n, cols: n },
        1,
        rho,
        rc.pixel_origin(),
    )
}

/// Recover a position set from an intensity image.
///
/// Negative values are clamped to zero, the image is thresholded at a
/// fraction of its maximum, centers are seeded at local maxima, nearby
/// seeds merged, and weighted Lloyd iterations move each center to the
/// intensity-weighted centroid of its Voronoi cell over above-threshold
/// pixels. An all-zero or all-below-threshold image yields an empty set.
pub fn extract_positions(
    img: &GridSignal,
    rc: &RasterConfig,
    ec: &ExtractionConfig,
) -> Result<PositionSet> {
    extract_positions_traced(img, rc, ec).map(|(ps, _)| ps)
}

/// [`extract_positions`] that also returns the maximum center movement
/// of every Lloyd iteration actually run, as a convergence diagnostic.
pub fn extract_positions_traced(
    img: &GridSignal,
    rc: &RasterConfig,
    ec: &ExtractionConfig,
) -> Result<(PositionSet, Vec<f64>)> {
    rc.validate()?;
    ec.validate()?;
    let (rows, cols) = match img.shape() {
        Shape::Two { rows, cols } => (rows, cols),
        Shape::One { .. } => {
            return Err(Error::InvalidArgument("extraction expects a 2D image".into()))
        }
    };
    if img.channels() != 1 {
        return Err(Error::InvalidArgument("extraction expects a single-channel image".into()));
    }
    let vals: Vec<f64> =
        img.values().iter().map(|v| if *v > 0.0 { f64::from(*v) } else { 0.0 }).collect();
    let max = vals.iter().cloned().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return Ok((PositionSet::empty(), Vec::new()));
    }
    let thr = ec.threshold_frac * max;
    let masked: Vec<bool> = vals.iter().map(|v| *v >= thr).collect();

    // Seed centers at local maxima of the thresholded image.
    let mut seeds: Vec<(usize, f64)> = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            let idx = i * cols + j;
            if !masked[idx] {
                continue;
            }
            let v = vals[idx];
            let mut is_max = true;
            'neigh: for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let ni = i as i64 + di;
                    let nj = j as i64 + dj;
                    if ni < 0 || nj < 0 || ni >= rows as i64 || nj >= cols as i64 {
                        continue;
                    }
                    if vals[ni as usize * cols + nj as usize] > v {
                        is_max = false;
                        break 'neigh;
                    }
                }
            }
            if is_max {
                seeds.push((idx, v));
            }
        }
    }
    // Merge seeds closer than merge_radius, keeping the brighter one.
    // Sort by brightness descending, then index for determinism.
    seeds.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let coord_of = |idx: usize| -> (f64, f64) { img.coord(idx / cols, idx % cols) };
    let merge_sq = ec.merge_radius * ec.merge_radius;
    let mut centers: Vec<(f64, f64)> = Vec::new();
    for (idx, _) in &seeds {
        let c = coord_of(*idx);
        let close = centers
            .iter()
            .any(|k| (k.0 - c.0) * (k.0 - c.0) + (k.1 - c.1) * (k.1 - c.1) < merge_sq);
        if !close {
            centers.push(c);
        }
    }
    if centers.is_empty() {
        return Ok((PositionSet::empty(), Vec::new()));
    }

    // Above-threshold support pixels with their intensities.
    let support: Vec<(f64, f64, f64)> = (0..rows * cols)
        .filter(|idx| masked[*idx])
        .map(|idx| {
            let (x, y) = coord_of(idx);
            (x, y, vals[idx])
        })
        .collect();

    // Weighted Lloyd iterations.
    let mut movements = Vec::new();
    for _ in 0..ec.max_iters {
        let mut wsum = vec![0.0f64; centers.len()];
        let mut xsum = vec![0.0f64; centers.len()];
        let mut ysum = vec![0.0f64; centers.len()];
        for &(x, y, w) in &support {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (k, c) in centers.iter().enumerate() {
                let d = (c.0 - x) * (c.0 - x) + (c.1 - y) * (c.1 - y);
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            wsum[best] += w;
            xsum[best] += w * x;
            ysum[best] += w * y;
        }
        let mut max_move = 0.0f64;
        for k in 0..centers.len() {
            if wsum[k] > 0.0 {
                let nx = xsum[k] / wsum[k];
                let ny = ysum[k] / wsum[k];
                let d = libm::sqrt(
                    (nx - centers[k].0) * (nx - centers[k].0)
                        + (ny - centers[k].1) * (ny - centers[k].1),
                );
                if d > max_move {
                    max_move = d;
                }
                centers[k] = (nx, ny);
            }
        }
        movements.push(max_move);
        if max_move < ec.tol {
            break;
        }
    }
    Ok((PositionSet::new(centers)?, movements))
}
