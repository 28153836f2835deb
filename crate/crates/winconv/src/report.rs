//! CSV report writers. All floats use Rust's shortest round-trippable
//! decimal formatting so repeated runs diff cleanly.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use winconv_core::{BoundReport, PowerReport, TrialRecord};

pub fn write_bound_csv(report: &BoundReport, path: &Path) -> io::Result<()> {
    let mut out =
        String::from("seed,loss_window,H,varX,A,B,L,K,lhs_mean,lhs_stderr,rhs,holds\n");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.seed,
            r.loss_window,
            r.h_product,
            r.var_x,
            r.input_width,
            r.output_width,
            r.num_layers,
            r.filter_width,
            r.lhs_mean,
            r.lhs_stderr,
            r.rhs,
            r.holds
        );
    }
    fs::write(path, out)
}

pub fn write_power_csv(report: &PowerReport, path: &Path) -> io::Result<()> {
    let mut out = String::from("width_m,num_task,mean_num_comm,power_mean_mw,power_std_mw\n");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.width, r.num_task, r.mean_num_comm, r.power_mean_mw, r.power_std_mw
        );
    }
    fs::write(path, out)
}

pub fn write_trials_csv(trials: &[TrialRecord], path: &Path) -> io::Result<()> {
    let mut out = String::from("width_m,trial,num_task,num_comm,mean_power_mw,num_edges\n");
    for t in trials {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            t.width, t.trial, t.num_task, t.num_comm, t.mean_power_mw, t.num_edges
        );
    }
    fs::write(path, out)
}

/// Quartile summary of one sample, with a median notch interval of
/// `median +/- 1.57 * IQR / sqrt(n)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub notch_lo: f64,
    pub notch_hi: f64,
}

/// Linear-interpolation quantile on a sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let median = quantile(&sorted, 0.5);
    let q3 = quantile(&sorted, 0.75);
    let notch = 1.57 * (q3 - q1) / (values.len() as f64).sqrt();
    Some(BoxStats {
        min: sorted[0],
        q1,
        median,
        q3,
        max: *sorted.last().unwrap(),
        notch_lo: median - notch,
        notch_hi: median + notch,
    })
}

/// Per-width box-plot data over the per-trial mean powers.
pub fn write_boxplot_csv(report: &PowerReport, path: &Path) -> io::Result<()> {
    let mut out = String::from("width_m,min,q1,median,q3,max,notch_lo,notch_hi\n");
    for row in &report.rows {
        let powers: Vec<f64> = report
            .trials
            .iter()
            .filter(|t| t.width == row.width)
            .map(|t| t.mean_power_mw)
            .collect();
        if let Some(b) = box_stats(&powers) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                row.width, b.min, b.q1, b.median, b.q3, b.max, b.notch_lo, b.notch_hi
            );
        }
    }
    fs::write(path, out)
}

pub fn write_loss_curve_csv(curve: &[f64], path: &Path) -> io::Result<()> {
    let mut out = String::from("step,loss\n");
    for (step, loss) in curve.iter().enumerate() {
        let _ = writeln!(out, "{step},{loss}");
    }
    fs::write(path, out)
}
