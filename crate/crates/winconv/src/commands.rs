//! Subcommand implementations. Each command is deterministic given its
//! config (including the root seed), writes its artifacts into the
//! output directory, and echoes the effective config for provenance.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use winconv_core::{
    aggregate_width, backward, derive_seed, forward, oracle_comm_positions, rasterize,
    sample_task_positions, scaled_task_count, verify_bound_seed, zero_shot_trial, BoundReport,
    CNNModel, Dims, Error as CoreError, GridSignal, Gradients, Optimizer, PowerReport,
    RasterConfig, ScenarioConfig, TrialRecord,
};

use crate::checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
use crate::config::{optimizer_from_name, MidTrainSection, RunConfig};
use crate::pgm::{read_pgm16, read_positions_csv, write_pgm16, write_positions_csv, PgmError};
use crate::report;

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Core(#[from] CoreError),
    #[error("{0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("{0}")]
    File(#[from] PgmError),
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Failed(String),
}

fn missing_section(name: &str) -> CommandError {
    CommandError::Config(format!("the config file has no {name:?} section"))
}

fn echo_config(cfg: &RunConfig, out: &Path) -> Result<(), CommandError> {
    let text = serde_json::to_string_pretty(cfg)
        .map_err(|e| CommandError::Config(e.to_string()))?;
    fs::write(out.join("config.echo.json"), text + "\n")?;
    Ok(())
}

fn ensure_out(out: &Path) -> Result<(), CommandError> {
    if !out.is_dir() {
        return Err(CommandError::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("output directory {} does not exist", out.display()),
        )));
    }
    Ok(())
}

/// Train-and-verify sweep over independent seeds; exits successfully only
/// when the bound holds on at least the configured fraction of seeds.
pub fn cmd_bound(cfg: &RunConfig, out: &Path) -> Result<(), CommandError> {
    ensure_out(out)?;
    let section = cfg.bound.as_ref().ok_or_else(|| missing_section("bound"))?;
    let pair = section.to_pair()?;
    let arch = section.arch.to_core(Dims::One);
    let train_cfg = section.train_config(0)?;
    let vcfg = section.verify_config();

    let seeds: Vec<u64> =
        (0..section.num_seeds).map(|i| derive_seed(cfg.seed, "bound-seed", i)).collect();
    let rows = seeds
        .par_iter()
        .map(|&seed| verify_bound_seed(&pair, &arch, &train_cfg, &vcfg, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let held = rows.iter().filter(|r| r.holds).count();
    let report =
        BoundReport { holds_fraction: held as f64 / rows.len() as f64, rows };

    report::write_bound_csv(&report, &out.join("bound.csv"))?;
    echo_config(cfg, out)?;
    if report.holds_fraction < section.holds_threshold {
        return Err(CommandError::Failed(format!(
            "bound held on {:.3} of seeds, below the threshold {:.3}",
            report.holds_fraction, section.holds_threshold
        )));
    }
    Ok(())
}

fn mse_and_upstream(out: &GridSignal, target: &GridSignal) -> (f64, GridSignal) {
    let count = out.values().len() as f64;
    let mut loss = 0.0;
    let upstream: Vec<f32> = out
        .values()
        .iter()
        .zip(target.values())
        .map(|(p, t)| {
            let d = f64::from(*p) - f64::from(*t);
            loss += d * d;
            (2.0 * d / count) as f32
        })
        .collect();
    (loss / count, out.with_values(upstream).expect("same shape"))
}

struct TrainState {
    model: CNNModel,
    curve: Vec<f64>,
}

fn mid_train_loop(
    section: &MidTrainSection,
    root_seed: u64,
    mut state: TrainState,
) -> Result<TrainState, (TrainState, CommandError)> {
    let rc = match section.raster.raster_config() {
        Ok(rc) => rc,
        Err(e) => return Err((state, e.into())),
    };
    let sc_width = rc.window_width;
    let mut optimizer = match optimizer_from_name(&section.optimizer) {
        Ok(kind) => Optimizer::new(kind),
        Err(e) => return Err((state, e.into())),
    };
    let start = state.curve.len();
    for step in start..section.steps {
        let mut grads = Gradients::zeros_like(&state.model);
        let mut loss_acc = 0.0;
        for item in 0..section.batch_size {
            let r: Result<(f64, Gradients), CoreError> = (|| {
                let scn_seed = derive_seed(
                    root_seed,
                    "mid-pair",
                    (step * section.batch_size + item) as u64,
                );
                let sc = ScenarioConfig {
                    window_width: sc_width,
                    num_task_agents: section.num_task_agents,
                    seed: scn_seed,
                };
                let tasks = sample_task_positions(&sc)?;
                let input = rasterize(&tasks, &rc)?;
                let relays = oracle_comm_positions(&tasks, section.relay_spacing)?;
                let target = rasterize(&relays, &rc)?;
                let out = forward(&state.model, &input)?;
                let (loss, upstream) = mse_and_upstream(&out, &target);
                let g = backward(&state.model, &input, &upstream)?;
                Ok((loss, g))
            })();
            match r {
                Ok((loss, g)) => {
                    loss_acc += loss;
                    grads.add(&g);
                }
                Err(e) => return Err((state, e.into())),
            }
        }
        grads.scale(1.0 / section.batch_size as f64);
        let loss = loss_acc / section.batch_size as f64;
        if !loss.is_finite() {
            return Err((state, CoreError::TrainingDiverged { step }.into()));
        }
        optimizer.step(&mut state.model, &grads, section.learning_rate);
        state.curve.push(loss);
    }
    Ok(state)
}

/// Train the 2D model against the relay oracle's rasterized labels.
/// On divergence the partial artifacts are kept with a `.partial` suffix.
pub fn cmd_mid_train(cfg: &RunConfig, out: &Path, resume: bool) -> Result<(), CommandError> {
    ensure_out(out)?;
    let section = cfg.mid_train.as_ref().ok_or_else(|| missing_section("mid_train"))?;
    let ckpt_path = out.join("model.ckpt");
    let curve_path = out.join("loss_curve.csv");

    let state = if resume {
        let model = load_checkpoint(&ckpt_path)?;
        let curve = read_loss_curve(&curve_path)?;
        TrainState { model, curve }
    } else {
        let arch = section.arch.to_core(Dims::Two);
        let model = arch.build(derive_seed(cfg.seed, "mid-init", 0))?;
        TrainState { model, curve: Vec::new() }
    };

    match mid_train_loop(section, cfg.seed, state) {
        Ok(state) => {
            save_checkpoint(&state.model, &ckpt_path)?;
            report::write_loss_curve_csv(&state.curve, &curve_path)?;
            echo_config(cfg, out)?;
            let tail = state.curve.len().min(20);
            let final_loss = if tail == 0 {
                f64::INFINITY
            } else {
                state.curve[state.curve.len() - tail..].iter().sum::<f64>() / tail as f64
            };
            if final_loss > section.loss_threshold {
                return Err(CommandError::Failed(format!(
                    "final training loss {final_loss} exceeds the threshold {}",
                    section.loss_threshold
                )));
            }
            Ok(())
        }
        Err((state, err)) => {
            let _ = save_checkpoint(&state.model, &out.join("model.ckpt.partial"));
            let _ =
                report::write_loss_curve_csv(&state.curve, &out.join("loss_curve.csv.partial"));
            Err(err)
        }
    }
}

fn read_loss_curve(path: &Path) -> Result<Vec<f64>, CommandError> {
    let text = fs::read_to_string(path)?;
    let mut curve = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let loss = line
            .split(',')
            .nth(1)
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| {
                CommandError::Config(format!("bad loss curve line {}", lineno + 1))
            })?;
        curve.push(loss);
    }
    Ok(curve)
}

/// Zero-shot sweep of a trained checkpoint across window widths. Writes
/// the per-width power report, box-plot data, and optionally per-trial
/// detail and rendered input/output image pairs.
pub fn cmd_mid_eval(
    cfg: &RunConfig,
    out: &Path,
    checkpoint: &Path,
    render: bool,
) -> Result<(), CommandError> {
    ensure_out(out)?;
    let section = cfg.mid_eval.as_ref().ok_or_else(|| missing_section("mid_eval"))?;
    let model = load_checkpoint(checkpoint)?;
    let rc = section.raster.raster_config()?;
    let ec = section.raster.extraction_config(&rc)?;
    let cp = section.channel.to_core();
    cp.validate()?;
    let base_width = rc.window_width;
    for &w in &section.widths {
        if w < base_width {
            return Err(CommandError::Config(format!(
                "evaluation width {w} is below the training width {base_width}"
            )));
        }
    }
    if section.trials == 0 {
        return Err(CommandError::Config("trials must be >= 1".into()));
    }

    // Trial evaluations are pure given their derived seed, so they can
    // run in parallel; collection keeps (width, trial) order.
    let jobs: Vec<(usize, f64, usize, usize)> = section
        .widths
        .iter()
        .enumerate()
        .flat_map(|(wi, &width)| {
            let num_task = scaled_task_count(section.num_task_agents, base_width, width);
            (0..section.trials).map(move |trial| (wi, width, num_task, trial))
        })
        .collect();
    let records: Vec<TrialRecord> = jobs
        .par_iter()
        .map(|&(wi, width, num_task, trial)| {
            let trial_seed =
                derive_seed(cfg.seed, "zero-shot", (wi * section.trials + trial) as u64);
            zero_shot_trial(&model, &rc, &ec, &cp, width, num_task, trial, trial_seed)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut pr = PowerReport::default();
    for (wi, &width) in section.widths.iter().enumerate() {
        let slice = &records[wi * section.trials..(wi + 1) * section.trials];
        let num_task = scaled_task_count(section.num_task_agents, base_width, width);
        pr.rows.push(aggregate_width(width, num_task, slice));
        pr.trials.extend_from_slice(slice);
    }

    report::write_power_csv(&pr, &out.join("power_report.csv"))?;
    report::write_boxplot_csv(&pr, &out.join("power_boxplot.csv"))?;
    if section.write_trial_detail {
        report::write_trials_csv(&pr.trials, &out.join("power_trials.csv"))?;
    }
    if render {
        render_pairs(&model, &rc, section, cfg.seed, base_width, out)?;
    }
    echo_config(cfg, out)?;
    Ok(())
}

fn render_pairs(
    model: &CNNModel,
    rc: &RasterConfig,
    section: &crate::config::MidEvalSection,
    root_seed: u64,
    base_width: f64,
    out: &Path,
) -> Result<(), CommandError> {
    for (wi, &width) in section.widths.iter().enumerate() {
        let num_task = scaled_task_count(section.num_task_agents, base_width, width);
        let rc_w = rc.with_window(width)?;
        for trial in 0..section.render_trials.min(section.trials) {
            let trial_seed =
                derive_seed(root_seed, "zero-shot", (wi * section.trials + trial) as u64);
            let sc = ScenarioConfig {
                window_width: width,
                num_task_agents: num_task,
                seed: trial_seed,
            };
            let tasks = sample_task_positions(&sc)?;
            let input = rasterize(&tasks, &rc_w)?;
            let output = forward(model, &input)?;
            write_pgm16(&input, &rc_w, &out.join(format!("input_w{width}_t{trial}.pgm")))?;
            write_pgm16(&output, &rc_w, &out.join(format!("output_w{width}_t{trial}.pgm")))?;
        }
    }
    Ok(())
}

/// Rasterize a positions CSV into a PGM image pair.
pub fn cmd_rasterize(cmd_cfg: &RunConfig, out: &Path) -> Result<(), CommandError> {
    ensure_out(out)?;
    let section = cmd_cfg.rasterize.as_ref().ok_or_else(|| missing_section("rasterize"))?;
    if section.positions.is_empty() {
        return Err(CommandError::Config("rasterize.positions must name a CSV file".into()));
    }
    let ps = read_positions_csv(&PathBuf::from(&section.positions))?;
    let rc = section.raster.raster_config()?;
    let img = rasterize(&ps, &rc)?;
    write_pgm16(&img, &rc, &out.join("image.pgm"))?;
    echo_config(cmd_cfg, out)?;
    Ok(())
}

/// Extract positions from a PGM image (written by this tool) to CSV.
pub fn cmd_extract(cmd_cfg: &RunConfig, out: &Path) -> Result<(), CommandError> {
    ensure_out(out)?;
    let section = cmd_cfg.extract.as_ref().ok_or_else(|| missing_section("extract"))?;
    if section.image.is_empty() {
        return Err(CommandError::Config("extract.image must name a PGM file".into()));
    }
    let (img, rc) = read_pgm16(&PathBuf::from(&section.image))?;
    let ec = section.raster.extraction_config(&rc)?;
    let ps = winconv_core::extract_positions(&img, &rc, &ec)?;
    write_positions_csv(&ps, &out.join("positions.csv"))?;
    echo_config(cmd_cfg, out)?;
    Ok(())
}

impl crate::config::BoundSection {
    fn to_pair(&self) -> Result<winconv_core::StationaryPairConfig, CoreError> {
        let pair = self.pair.to_core();
        pair.validate()?;
        Ok(pair)
    }
}
