//! End-to-end tests of the binary through real process invocations.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn winconv(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_winconv"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

const TINY_TRAIN: &str = r#"{
    "seed": 3,
    "mid_train": {
        "raster": {"window_width": 40.0, "resolution": 2.5, "sigma": 5.0},
        "arch": {"channels": [1, 2, 1], "kernel": 3},
        "num_task_agents": 2,
        "batch_size": 1,
        "steps": 4,
        "learning_rate": 0.001,
        "loss_threshold": 1e9
    },
    "mid_eval": {
        "raster": {"window_width": 40.0, "resolution": 2.5, "sigma": 5.0},
        "num_task_agents": 2,
        "widths": [40.0, 80.0],
        "trials": 3,
        "render_trials": 1
    }
}"#;

#[test]
fn rasterize_extract_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    write(
        &dir.path().join("pts.csv"),
        "x_m,y_m\n-30.0,10.0\n25.0,-35.0\n",
    );
    write(
        &dir.path().join("cfg.json"),
        r#"{
            "rasterize": {"raster": {"window_width": 160.0}, "positions": "pts.csv"},
            "extract": {"raster": {"window_width": 160.0}, "image": "image.pgm"}
        }"#,
    );
    let out = winconv(&["rasterize", "--config", "cfg.json", "--out", "."], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("image.pgm").is_file());
    assert!(dir.path().join("image.pgm.meta").is_file());

    let out = winconv(&["extract", "--config", "cfg.json", "--out", "."], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("positions.csv")).unwrap();
    let mut pts: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let mut it = l.split(',');
            (it.next().unwrap().parse().unwrap(), it.next().unwrap().parse().unwrap())
        })
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert_eq!(pts.len(), 2);
    assert!((pts[0].0 + 30.0).abs() <= 1.25 && (pts[0].1 - 10.0).abs() <= 1.25);
    assert!((pts[1].0 - 25.0).abs() <= 1.25 && (pts[1].1 + 35.0).abs() <= 1.25);
}

#[test]
fn bound_command_writes_csv_and_respects_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "seed": 1,
        "bound": {
            "arch": {"channels": [1, 2, 1], "kernel": 3,
                     "hidden_nonlinearity": "tanh", "output_nonlinearity": "identity",
                     "bias": false},
            "input_window_a": 32, "output_window_b": 8,
            "batch_size": 2, "steps": 10, "learning_rate": 0.01,
            "eval_width": 256, "eval_margin": 8, "eval_trials": 4,
            "holdout_windows": 16, "num_seeds": 2, "holds_threshold": 0.0
        }
    }"#;
    write(&dir.path().join("cfg.json"), cfg);
    let out = winconv(&["bound", "--config", "cfg.json", "--out", "."], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("bound.csv")).unwrap();
    assert!(csv.starts_with("seed,loss_window,H,varX,A,B,L,K,lhs_mean,lhs_stderr,rhs,holds\n"));
    assert_eq!(csv.lines().count(), 3);
    assert!(dir.path().join("config.echo.json").is_file());

    // An impossible threshold flips the exit code but still writes the CSV.
    let strict = cfg.replace("\"holds_threshold\": 0.0", "\"holds_threshold\": 1.1");
    write(&dir.path().join("strict.json"), &strict);
    let out = winconv(&["bound", "--config", "strict.json", "--out", "."], dir.path());
    assert!(!out.status.success());
}

#[test]
fn bound_rejects_a_smaller_than_b() {
    let dir = tempfile::tempdir().unwrap();
    write(
        &dir.path().join("cfg.json"),
        r#"{"bound": {"input_window_a": 8, "output_window_b": 64}}"#,
    );
    let out = winconv(&["bound", "--config", "cfg.json", "--out", "."], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("A") && err.contains("B"), "{err}");
}

#[test]
fn config_parse_errors_report_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("broken.json"), "{\n  \"seed\": oops\n}");
    let out = winconv(&["bound", "--config", "broken.json", "--out", "."], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
    assert!(err.contains("column"), "{err}");

    write(&dir.path().join("unknown.json"), r#"{"sede": 3}"#);
    let out = winconv(&["bound", "--config", "unknown.json", "--out", "."], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sede"));
}

#[test]
fn missing_output_directory_is_a_clean_failure() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("cfg.json"), TINY_TRAIN);
    let out = winconv(
        &["mid-train", "--config", "cfg.json", "--out", "no/such/dir"],
        dir.path(),
    );
    assert!(!out.status.success());
}

#[test]
fn mid_train_then_eval_with_renders_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("cfg.json"), TINY_TRAIN);
    let out = winconv(&["mid-train", "--config", "cfg.json", "--out", "."], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("model.ckpt").is_file());
    assert!(dir.path().join("loss_curve.csv").is_file());

    let eval = |outdir: &str| {
        fs::create_dir_all(dir.path().join(outdir)).unwrap();
        let out = winconv(
            &[
                "mid-eval",
                "--config",
                "cfg.json",
                "--checkpoint",
                "model.ckpt",
                "--out",
                outdir,
                "--render",
            ],
            dir.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    eval("e1");
    eval("e2");

    for name in ["power_report.csv", "power_boxplot.csv", "power_trials.csv"] {
        let a = fs::read(dir.path().join("e1").join(name)).unwrap();
        let b = fs::read(dir.path().join("e2").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    // One rendered input/output pair per width.
    let pgms: Vec<String> = fs::read_dir(dir.path().join("e1"))
        .unwrap()
        .filter_map(|e| {
            let n = e.unwrap().file_name().into_string().unwrap();
            n.ends_with(".pgm").then_some(n)
        })
        .collect();
    assert_eq!(pgms.len(), 4, "{pgms:?}");

    let report = fs::read_to_string(dir.path().join("e1/power_report.csv")).unwrap();
    assert!(report.starts_with("width_m,num_task,mean_num_comm,power_mean_mw,power_std_mw\n"));
    assert_eq!(report.lines().count(), 3);

    // A different root seed changes the report.
    fs::create_dir_all(dir.path().join("e3")).unwrap();
    let out = winconv(
        &[
            "mid-eval", "--config", "cfg.json", "--checkpoint", "model.ckpt", "--out", "e3",
            "--seed", "99",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = fs::read(dir.path().join("e1/power_report.csv")).unwrap();
    let b = fs::read(dir.path().join("e3/power_report.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn eval_width_below_training_width_fails() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("cfg.json"), TINY_TRAIN);
    let out = winconv(&["mid-train", "--config", "cfg.json", "--out", "."], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let narrow = TINY_TRAIN.replace("\"widths\": [40.0, 80.0]", "\"widths\": [20.0]");
    write(&dir.path().join("narrow.json"), &narrow);
    let out = winconv(
        &["mid-eval", "--config", "narrow.json", "--checkpoint", "model.ckpt", "--out", "."],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("below the training width"));
}

#[test]
fn threads_flag_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("cfg.json"), TINY_TRAIN);
    let out = winconv(&["mid-train", "--config", "cfg.json", "--out", "."], dir.path());
    assert!(out.status.success());
    for (outdir, extra) in [("t1", vec!["--threads", "1"]), ("t2", vec!["--threads", "3"])] {
        fs::create_dir_all(dir.path().join(outdir)).unwrap();
        let mut args = vec![
            "mid-eval", "--config", "cfg.json", "--checkpoint", "model.ckpt", "--out", outdir,
        ];
        args.extend(extra);
        let out = winconv(&args, dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(
        fs::read(dir.path().join("t1/power_report.csv")).unwrap(),
        fs::read(dir.path().join("t2/power_report.csv")).unwrap()
    );
}
