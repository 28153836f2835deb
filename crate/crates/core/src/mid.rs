//! Relay-placement evaluation: scenario generation, a heuristic relay
//! oracle, the path-loss power model, the minimum-spanning-tree per-edge
//! power metric, and the zero-shot scaling sweep.

use crate::error::{Error, Result};
use crate::math::{derive_seed, erf_inv, SeededRng};
use crate::net::{forward, CNNModel};
use crate::raster::{extract_positions, rasterize, ExtractionConfig, PositionSet, RasterConfig};
use alloc::collections::BinaryHeap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Path-loss channel model parameters. The channel constant is named
/// `channel_const` (the usual symbol clashes with the filter width).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelParams {
    /// Required communication rate as a fraction of the channel bitrate.
    pub rate: f64,
    /// Noise power level, milliwatts.
    pub noise_power_mw: f64,
    /// Receiver physics constant, dimensionless.
    pub channel_const: f64,
    /// Path loss exponent.
    pub path_loss_exp: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            rate: 0.5,
            noise_power_mw: 1e-7,
            channel_const: 5e-6,
            path_loss_exp: 2.52,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate < 1.0) {
            return Err(Error::InvalidConfig(format!("rate must lie in (0, 1), got {}", self.rate)));
        }
        if !(self.noise_power_mw > 0.0 && self.channel_const > 0.0 && self.path_loss_exp > 0.0) {
            return Err(Error::InvalidConfig(
                "noise power, channel constant and path loss exponent must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Minimum transmit power in milliwatts for two agents `d` meters apart
/// to communicate at the configured rate:
/// `P(d) = erfinv(R)^2 * P_N0 * d^n / Kc`.
pub fn min_power(d: f64, cp: &ChannelParams) -> Result<f64> {
    cp.validate()?;
    if !(d >= 0.0) {
        return Err(Error::InvalidArgument(format!("distance must be >= 0, got {d}")));
    }
    let e = erf_inv(cp.rate)?;
    Ok(e * e * cp.noise_power_mw * libm::pow(d, cp.path_loss_exp) / cp.channel_const)
}

/// Random scenario: task agents sampled uniformly in a square window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub window_width: f64,
    pub num_task_agents: usize,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_task_agents < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 task agents, got {}",
                self.num_task_agents
            )));
        }
        if !(self.window_width > 0.0) {
            return Err(Error::InvalidConfig("window width must be > 0".into()));
        }
        Ok(())
    }
}

/// I.i.d. uniform task positions in `[-A/2, A/2]^2`; deterministic given
/// the scenario seed.
pub fn sample_task_positions(sc: &ScenarioConfig) -> Result<PositionSet> {
    sc.validate()?;
    let half = sc.window_width / 2.0;
    let mut rng = SeededRng::new(sc.seed);
    let points = (0..sc.num_task_agents)
        .map(|_| (rng.uniform_in(-half, half), rng.uniform_in(-half, half)))
        .collect();
    PositionSet::new(points)
}

#[derive(PartialEq)]
struct HeapEdge {
    weight: f64,
    from: usize,
    to: usize,
}

impl Eq for HeapEdge {}

impl Ord for HeapEdge {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        // Min-heap through reversal; ties broken lexicographically on
        // (from, to) for determinism.
        other
            .weight
            .total_cmp(&self.weight)
            .then_with(|| other.from.cmp(&self.from))
            .then_with(|| other.to.cmp(&self.to))
    }
}

impl PartialOrd for HeapEdge {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Prim's algorithm with a binary heap over the complete graph defined by
/// `weight(u, v)`. Returns the n-1 tree edges as (u, v, weight).
fn prim_mst<W: Fn(usize, usize) -> f64>(n: usize, weight: W) -> Vec<(usize, usize, f64)> {
    let mut in_tree = vec![false; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut heap = BinaryHeap::new();
    in_tree[0] = true;
    for v in 1..n {
        heap.push(HeapEdge { weight: weight(0, v), from: 0, to: v });
    }
    while edges.len() + 1 < n {
        let e = heap.pop().expect("complete graph is connected");
        if in_tree[e.to] {
            continue;
        }
        in_tree[e.to] = true;
        edges.push((e.from, e.to, e.weight));
        for v in 0..n {
            if !in_tree[v] {
                heap.push(HeapEdge { weight: weight(e.to, v), from: e.to, to: v });
            }
        }
    }
    edges
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    libm::sqrt((a.0 - b.0) * (a.0 - b.0) + (a.1 - b.1) * (a.1 - b.1))
}

/// Mean edge weight and edge count of the minimum spanning tree of the
/// complete agent graph weighted by required transmit power. Duplicate
/// points are allowed (zero-weight edges).
pub fn mst_mean_edge_power(agents: &PositionSet, cp: &ChannelParams) -> Result<(f64, usize)> {
    cp.validate()?;
    let pts = agents.points();
    let n = pts.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("MST needs at least 2 agents, got {n}")));
    }
    let e = erf_inv(cp.rate)?;
    let scale = e * e * cp.noise_power_mw / cp.channel_const;
    let edges = prim_mst(n, |u, v| scale * libm::pow(dist(pts[u], pts[v]), cp.path_loss_exp));
    let total: f64 = edges.iter().map(|(_, _, w)| w).sum();
    Ok((total / edges.len() as f64, edges.len()))
}

/// Heuristic relay oracle: compute the Euclidean MST over the task
/// agents and place `ceil(len/spacing) - 1` equally spaced relays on
/// every tree edge, so that no hop in the augmented network exceeds
/// `spacing` meters. Stand-in for a convex relay-placement solver.
pub fn oracle_comm_positions(task: &PositionSet, spacing: f64) -> Result<PositionSet> {
    if task.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "relay oracle needs at least 2 task agents, got {}",
            task.len()
        )));
    }
    if !(spacing > 0.0) {
        return Err(Error::InvalidArgument(format!("spacing must be > 0, got {spacing}")));
    }
    let pts = task.points();
    let edges = prim_mst(pts.len(), |u, v| dist(pts[u], pts[v]));
    let mut relays = Vec::new();
    for (u, v, len) in edges {
        let hops = libm::ceil(len / spacing) as usize;
        for i in 1..hops {
            let t = i as f64 / hops as f64;
            relays.push((
                pts[u].0 + t * (pts[v].0 - pts[u].0),
                pts[u].1 + t * (pts[v].1 - pts[u].1),
            ));
        }
    }
    PositionSet::new(relays)
}

/// One evaluated scenario of the zero-shot sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialRecord {
    pub width: f64,
    pub trial: usize,
    pub num_task: usize,
    pub num_comm: usize,
    pub mean_power_mw: f64,
    pub num_edges: usize,
}

/// Aggregated per-width row of the power report.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WidthRow {
    pub width: f64,
    pub num_task: usize,
    pub mean_num_comm: f64,
    pub power_mean_mw: f64,
    pub power_std_mw: f64,
    pub trials: usize,
    /// Trials on which extraction produced no communication agents; the
    /// power for those trials is computed over the task agents alone.
    pub zero_comm_trials: usize,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct PowerReport {
    pub rows: Vec<WidthRow>,
    pub trials: Vec<TrialRecord>,
}

/// Task count scaled in proportion to the window area, floored at 2.
pub fn scaled_task_count(base_count: usize, base_width: f64, width: f64) -> usize {
    let ratio = (width / base_width) * (width / base_width);
    let scaled = libm::round(base_count as f64 * ratio) as usize;
    scaled.max(2)
}

/// Evaluate one scenario with an arbitrary image predictor: sample
/// tasks, rasterize, predict the communication-agent image, extract
/// positions, and score the MST per-edge power over the union of all
/// agents. Pure given `trial_seed`; trials may be evaluated in parallel.
#[allow(clippy::too_many_arguments)]
pub fn zero_shot_trial_with<F>(
    predict: F,
    rc: &RasterConfig,
    ec: &ExtractionConfig,
    cp: &ChannelParams,
    width: f64,
    num_task: usize,
    trial: usize,
    trial_seed: u64,
) -> Result<TrialRecord>
where
    F: Fn(&PositionSet, &crate::signal::GridSignal) -> Result<crate::signal::GridSignal>,
{
    let sc = ScenarioConfig { window_width: width, num_task_agents: num_task, seed: trial_seed };
    let tasks = sample_task_positions(&sc)?;
    let rc_w = rc.with_window(width)?;
    let img = rasterize(&tasks, &rc_w)?;
    let out = predict(&tasks, &img)?;
    let comm = extract_positions(&out, &rc_w, ec)?;
    let all = tasks.union(&comm);
    let (mean_power_mw, num_edges) = mst_mean_edge_power(&all, cp)?;
    Ok(TrialRecord {
        width,
        trial,
        num_task,
        num_comm: comm.len(),
        mean_power_mw,
        num_edges,
    })
}

/// [`zero_shot_trial_with`] using a CNN forward pass as the predictor.
#[allow(clippy::too_many_arguments)]
pub fn zero_shot_trial(
    model: &CNNModel,
    rc: &RasterConfig,
    ec: &ExtractionConfig,
    cp: &ChannelParams,
    width: f64,
    num_task: usize,
    trial: usize,
    trial_seed: u64,
) -> Result<TrialRecord> {
    zero_shot_trial_with(
        |_, img| forward(model, img),
        rc,
        ec,
        cp,
        width,
        num_task,
        trial,
        trial_seed,
    )
}

/// Aggregate trial records (one width, any order) into a report row.
pub fn aggregate_width(width: f64, num_task: usize, records: &[TrialRecord]) -> WidthRow {
    let trials = records.len();
    let mean_num_comm =
        records.iter().map(|r| r.num_comm as f64).sum::<f64>() / trials as f64;
    let powers: Vec<f64> = records.iter().map(|r| r.mean_power_mw).collect();
    let (mean, _) = crate::math::mean_and_stderr(&powers);
    let std = crate::math::sample_variance_of(&powers).map(libm::sqrt).unwrap_or(0.0);
    WidthRow {
        width,
        num_task,
        mean_num_comm,
        power_mean_mw: mean,
        power_std_mw: std,
        trials,
        zero_comm_trials: records.iter().filter(|r| r.num_comm == 0).count(),
    }
}

/// Zero-shot scaling sweep: for each width (agent count scaled with the
/// window area) run `trials` independent scenarios through the
/// rasterize - model - extract - MST pipeline and aggregate per-width
/// power statistics. Widths must not be below the model's training
/// (base) width.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_zero_shot_with<F>(
    predict: F,
    base: &ScenarioConfig,
    rc: &RasterConfig,
    ec: &ExtractionConfig,
    cp: &ChannelParams,
    widths: &[f64],
    trials: usize,
    seed: u64,
) -> Result<PowerReport>
where
    F: Fn(&PositionSet, &crate::signal::GridSignal) -> Result<crate::signal::GridSignal>,
{
    base.validate()?;
    rc.validate()?;
    ec.validate()?;
    cp.validate()?;
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be >= 1".into()));
    }
    for &w in widths {
        if w < base.window_width {
            return Err(Error::InvalidConfig(format!(
                "evaluation width {w} is below the base width {}",
                base.window_width
            )));
        }
    }
    let mut report = PowerReport::default();
    for (wi, &width) in widths.iter().enumerate() {
        let num_task = scaled_task_count(base.num_task_agents, base.window_width, width);
        let mut records = Vec::with_capacity(trials);
        for trial in 0..trials {
            let trial_seed = derive_seed(seed, "zero-shot", (wi * trials + trial) as u64);
            records.push(zero_shot_trial_with(
                &predict, rc, ec, cp, width, num_task, trial, trial_seed,
            )?);
        }
        report.rows.push(aggregate_width(width, num_task, &records));
        report.trials.extend(records);
    }
    Ok(report)
}

/// [`evaluate_zero_shot_with`] using a CNN forward pass as the predictor.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_zero_shot(
    model: &CNNModel,
    base: &ScenarioConfig,
    rc: &RasterConfig,
    ec: &ExtractionConfig,
    cp: &ChannelParams,
    widths: &[f64],
    trials: usize,
    seed: u64,
) -> Result<PowerReport> {
    evaluate_zero_shot_with(
        |_, img| forward(model, img),
        base,
        rc,
        ec,
        cp,
        widths,
        trials,
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::erf;

    // Decode a Pruefer sequence into tree edges; enumerating all
    // sequences enumerates all labeled spanning trees.
    fn prufer_decode(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
        let mut degree = vec![1usize; n];
        for &s in seq {
            degree[s] += 1;
        }
        let mut edges = Vec::with_capacity(n - 1);
        let mut seq = seq.to_vec();
        while let Some(&s) = seq.first() {
            let leaf = (0..n).find(|v| degree[*v] == 1).unwrap();
            edges.push((leaf, s));
            degree[leaf] -= 1;
            degree[s] -= 1;
            seq.remove(0);
        }
        let rest: Vec<usize> = (0..n).filter(|v| degree[*v] == 1).collect();
        edges.push((rest[0], rest[1]));
        edges
    }

    fn brute_force_min_tree<W: Fn(usize, usize) -> f64>(n: usize, weight: W) -> f64 {
        if n == 2 {
            return weight(0, 1);
        }
        let mut best = f64::INFINITY;
        let len = n - 2;
        let mut seq = vec![0usize; len];
        loop {
            let w: f64 = prufer_decode(&seq, n).iter().map(|&(u, v)| weight(u, v)).sum();
            if w < best {
                best = w;
            }
            // Advance the sequence like an odometer in base n.
            let mut k = 0;
            while k < len {
                seq[k] += 1;
                if seq[k] < n {
                    break;
                }
                seq[k] = 0;
                k += 1;
            }
            if k == len {
                break;
            }
        }
        best
    }

    #[test]
    fn power_law_reference_value() {
        // At the default channel parameters a 30 m hop costs about 24 mW.
        let cp = ChannelParams::default();
        let p = min_power(30.0, &cp).unwrap();
        assert!((p - 24.0).abs() < 0.5, "p={p}");
        assert_eq!(min_power(0.0, &cp).unwrap(), 0.0);
    }

    #[test]
    fn power_inverts_the_rate_equation() {
        // Independent check by bisection: the returned power must make
        // erf(sqrt(Kc * P / (P_N0 * d^n))) equal the requested rate.
        let cp = ChannelParams::default();
        for d in [1.0, 10.0, 30.0, 100.0, 1000.0] {
            let p = min_power(d, &cp).unwrap();
            let rate_of = |pw: f64| {
                erf(libm::sqrt(
                    cp.channel_const * pw
                        / (cp.noise_power_mw * libm::pow(d, cp.path_loss_exp)),
                ))
            };
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            while rate_of(hi) < cp.rate {
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if rate_of(mid) < cp.rate {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let oracle = 0.5 * (lo + hi);
            assert!(
                (p - oracle).abs() <= 1e-9 * oracle.max(1e-300),
                "d={d}: p={p} oracle={oracle}"
            );
        }
    }

    #[test]
    fn power_is_strictly_monotone_in_distance() {
        let cp = ChannelParams::default();
        let mut prev = min_power(0.0, &cp).unwrap();
        for k in 1..=10_000 {
            let d = k as f64 * 0.1;
            let p = min_power(d, &cp).unwrap();
            assert!(p > prev, "not monotone at d={d}");
            prev = p;
        }
    }

    #[test]
    fn power_rejects_bad_inputs() {
        let cp = ChannelParams::default();
        assert!(min_power(-1.0, &cp).is_err());
        assert!(min_power(f64::NAN, &cp).is_err());
        assert!(min_power(1.0, &ChannelParams { rate: 1.0, ..cp }).is_err());
        assert!(min_power(1.0, &ChannelParams { noise_power_mw: 0.0, ..cp }).is_err());
    }

    #[test]
    fn prim_matches_exhaustive_tree_enumeration() {
        let cp = ChannelParams::default();
        let mut rng = SeededRng::new(999);
        for instance in 0..50 {
            let n = 2 + (instance % 6); // 2 through 7 agents
            let pts: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.uniform_in(-100.0, 100.0), rng.uniform_in(-100.0, 100.0)))
                .collect();
            let e = erf_inv(cp.rate).unwrap();
            let scale = e * e * cp.noise_power_mw / cp.channel_const;
            let weight =
                |u: usize, v: usize| scale * libm::pow(dist(pts[u], pts[v]), cp.path_loss_exp);
            let best = brute_force_min_tree(n, weight);
            let (mean, edges) =
                mst_mean_edge_power(&PositionSet::new(pts.clone()).unwrap(), &cp).unwrap();
            assert_eq!(edges, n - 1);
            let total = mean * edges as f64;
            assert!(
                (total - best).abs() <= 1e-9 * best.max(1e-12),
                "instance {instance}: prim={total} brute={best}"
            );
        }
    }

    #[test]
    fn mst_handles_duplicates_and_rejects_singletons() {
        let cp = ChannelParams::default();
        let dup = PositionSet::new(vec![(1.0, 1.0), (1.0, 1.0), (4.0, 5.0)]).unwrap();
        let (mean, edges) = mst_mean_edge_power(&dup, &cp).unwrap();
        assert_eq!(edges, 2);
        assert!(mean > 0.0);
        let single = PositionSet::new(vec![(0.0, 0.0)]).unwrap();
        assert!(mst_mean_edge_power(&single, &cp).is_err());
    }

    #[test]
    fn relay_oracle_spacing_and_counts() {
        // Two agents 95 m apart with 30 m spacing need ceil(95/30)-1 = 3
        // relays at the quarter points.
        let task = PositionSet::new(vec![(0.0, 0.0), (95.0, 0.0)]).unwrap();
        let relays = oracle_comm_positions(&task, 30.0).unwrap();
        assert_eq!(relays.len(), 3);
        for (k, &(x, y)) in relays.points().iter().enumerate() {
            assert!((x - 95.0 * (k + 1) as f64 / 4.0).abs() < 1e-12);
            assert_eq!(y, 0.0);
        }
        // A short edge needs no relays.
        let close = PositionSet::new(vec![(0.0, 0.0), (10.0, 0.0)]).unwrap();
        assert!(oracle_comm_positions(&close, 30.0).unwrap().is_empty());
        // Every hop in the augmented network is at most the spacing.
        let mut rng = SeededRng::new(5);
        let pts: Vec<(f64, f64)> =
            (0..6).map(|_| (rng.uniform_in(-150.0, 150.0), rng.uniform_in(-150.0, 150.0))).collect();
        let task = PositionSet::new(pts.clone()).unwrap();
        let relays = oracle_comm_positions(&task, 30.0).unwrap();
        let all = task.union(&relays);
        let (_, edges) = mst_mean_edge_power(&all, &ChannelParams::default()).unwrap();
        assert_eq!(edges, all.len() - 1);
        // Euclidean MST of the union has no hop longer than the spacing
        // (plus float slack).
        let apts = all.points();
        let tree = prim_mst(apts.len(), |u, v| dist(apts[u], apts[v]));
        for (_, _, len) in tree {
            assert!(len <= 30.0 + 1e-9, "hop of {len} m");
        }
        assert!(oracle_comm_positions(&task, 0.0).is_err());
    }

    #[test]
    fn task_count_scales_with_area() {
        assert_eq!(scaled_task_count(5, 320.0, 320.0), 5);
        assert_eq!(scaled_task_count(5, 320.0, 640.0), 20);
        assert_eq!(scaled_task_count(5, 320.0, 960.0), 45);
        assert_eq!(scaled_task_count(5, 320.0, 1280.0), 80);
        assert_eq!(scaled_task_count(5, 320.0, 1600.0), 125);
        // Floored at 2 so the MST stays defined.
        assert_eq!(scaled_task_count(2, 320.0, 320.0), 2);
        assert_eq!(scaled_task_count(5, 320.0, 100.0), 2);
    }

    #[test]
    fn task_sampling_is_bounded_and_deterministic() {
        let sc = ScenarioConfig { window_width: 200.0, num_task_agents: 40, seed: 8 };
        let a = sample_task_positions(&sc).unwrap();
        assert_eq!(a.len(), 40);
        for &(x, y) in a.points() {
            assert!(x.abs() <= 100.0 && y.abs() <= 100.0);
        }
        let b = sample_task_positions(&sc).unwrap();
        assert_eq!(a, b);
        let c = sample_task_positions(&ScenarioConfig { seed: 9, ..sc }).unwrap();
        assert_ne!(a, c);
        assert!(sample_task_positions(&ScenarioConfig { num_task_agents: 1, ..sc }).is_err());
    }

    #[test]
    fn zero_shot_pipeline_with_oracle_replay() {
        // Predictor that rasterizes the oracle relays directly, bypassing
        // any model; the sweep must recover those relays and produce a
        // power metric over the full team.
        let rc = RasterConfig::new(160.0).unwrap();
        let ec = ExtractionConfig::defaults_for(&rc);
        let cp = ChannelParams::default();
        let base = ScenarioConfig { window_width: 160.0, num_task_agents: 3, seed: 0 };
        let predict = |tasks: &PositionSet, img: &crate::signal::GridSignal| {
            let relays = oracle_comm_positions(tasks, 30.0)?;
            let rc_here = RasterConfig {
                window_width: img.resolution() * img.shape().rows() as f64,
                ..rc
            };
            rasterize(&relays, &rc_here)
        };
        let report =
            evaluate_zero_shot_with(predict, &base, &rc, &ec, &cp, &[160.0, 320.0], 6, 31).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.rows[0].num_task, 3);
        assert_eq!(report.rows[1].num_task, 12);
        assert_eq!(report.trials.len(), 12);
        for row in &report.rows {
            assert_eq!(row.trials, 6);
            assert!(row.power_mean_mw > 0.0 && row.power_mean_mw.is_finite());
            assert!(row.power_std_mw >= 0.0);
        }
        for t in &report.trials {
            assert_eq!(t.num_edges, t.num_task + t.num_comm - 1);
        }
        // Determinism of the whole sweep.
        let again =
            evaluate_zero_shot_with(predict, &base, &rc, &ec, &cp, &[160.0, 320.0], 6, 31).unwrap();
        assert_eq!(report, again);
    }

    #[test]
    fn zero_shot_validation() {
        let rc = RasterConfig::new(160.0).unwrap();
        let ec = ExtractionConfig::defaults_for(&rc);
        let cp = ChannelParams::default();
        let base = ScenarioConfig { window_width: 160.0, num_task_agents: 3, seed: 0 };
        let identity = |_: &PositionSet, img: &crate::signal::GridSignal| Ok(img.clone());
        // Width below the base width.
        assert!(
            evaluate_zero_shot_with(identity, &base, &rc, &ec, &cp, &[80.0], 2, 0).is_err()
        );
        assert!(evaluate_zero_shot_with(identity, &base, &rc, &ec, &cp, &[160.0], 0, 0).is_err());
    }

    #[test]
    fn aggregate_width_by_hand() {
        let mk = |trial: usize, power: f64, comm: usize| TrialRecord {
            width: 100.0,
            trial,
            num_task: 4,
            num_comm: comm,
            mean_power_mw: power,
            num_edges: 3 + comm,
        };
        let row = aggregate_width(100.0, 4, &[mk(0, 2.0, 1), mk(1, 4.0, 0), mk(2, 6.0, 2)]);
        assert_eq!(row.trials, 3);
        assert!((row.power_mean_mw - 4.0).abs() < 1e-12);
        assert!((row.power_std_mw - 2.0).abs() < 1e-12);
        assert!((row.mean_num_comm - 1.0).abs() < 1e-12);
        assert_eq!(row.zero_comm_trials, 1);
    }
}
