use std::path::Path;
use std::process::{Command, Output};

use spinn::pde::ProblemId;
use spinn_cli::checkpoint::{Checkpoint, Stored};
use spinn_cli::output::read_grid;

fn spinn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinn"))
        .args(args)
        .env_remove("SPINN_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &str = r#"
problem = "helmholtz3d"
[model]
rank = 4
depth = 2
width = 8
[train]
iterations = 30
collocation = 6
resample_every = 10
log_every = 3
checkpoint_every = 10
[eval]
resolution = 9
interval = 9
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn train_tiny(dir: &Path, out: &str, extra: &[&str]) -> Output {
    let cfg = write_config(dir, TINY);
    let out = dir.join(out);
    let mut args = vec!["train", "--config", &cfg, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    spinn(&args)
}

fn summary_value(dir: &Path, key: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("summary.json")).unwrap();
    serde_json::from_str::<serde_json::Value>(&text).unwrap()[key].clone()
}

#[test]
fn train_writes_the_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let o = train_tiny(tmp.path(), "run", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let run = tmp.path().join("run");
    for f in ["metrics.jsonl", "timing.jsonl", "model.ckpt", "last.ckpt", "prediction.spgd", "summary.json"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    assert!(!run.join(".lock").exists());
    let metrics = std::fs::read_to_string(run.join("metrics.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = metrics.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let steps: Vec<u64> = lines.iter().map(|l| l["step"].as_u64().unwrap()).collect();
    assert_eq!(steps, vec![0, 3, 6, 9, 12, 15, 18, 21, 24, 27, 29]);
    assert!(lines[3]["rel_l2"].is_number() && lines[1]["rel_l2"].is_null());
    assert!(lines.iter().all(|l| l.get("elapsed_ms").is_none()));
    let best = summary_value(&run, "best_loss").as_f64().unwrap();
    assert!(lines.iter().all(|l| best <= l["loss"].as_f64().unwrap()));
    let grid = read_grid(&run.join("prediction.spgd")).unwrap();
    assert_eq!(grid.dims(), &[9, 9, 9]);
}

#[test]
fn same_seed_gives_identical_logs_and_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = train_tiny(tmp.path(), out, &["--seed", "7"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let read = |run: &str, f: &str| std::fs::read(tmp.path().join(run).join(f)).unwrap();
    for f in ["metrics.jsonl", "model.ckpt", "last.ckpt", "prediction.spgd"] {
        assert_eq!(read("a", f), read("b", f), "{f} differs");
    }
    let o = train_tiny(tmp.path(), "c", &["--seed", "8"]);
    assert!(o.status.success());
    assert_ne!(read("a", "metrics.jsonl"), read("c", "metrics.jsonl"));
}

#[test]
fn resumed_run_matches_an_uninterrupted_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(train_tiny(tmp.path(), "full", &[]).status.success());
    assert!(train_tiny(tmp.path(), "split", &["--iterations", "15"]).status.success());
    let o = train_tiny(tmp.path(), "split", &["--resume"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let last = |run: &str| std::fs::read(tmp.path().join(run).join("last.ckpt")).unwrap();
    assert_eq!(last("full"), last("split"));
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = spinn(&["train"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("helmholtz3d") && stderr(&o).contains("ns4d"));
    let cfg = write_config(tmp.path(), "problem = \"kg3d\"\n[train]\nitertions = 5\n");
    let o = spinn(&["train", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("itertions") && stderr(&o).contains("line 3"), "{}", stderr(&o));
    assert_eq!(spinn(&["train", "--problem", "heat"]).status.code(), Some(2));
    assert_eq!(spinn(&["bogus"]).status.code(), Some(2));
}

#[test]
fn locked_run_directory_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    std::fs::create_dir_all(&run).unwrap();
    std::fs::write(run.join(".lock"), "1").unwrap();
    let o = train_tiny(tmp.path(), "run", &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("locked"));
    assert!(!run.join("metrics.jsonl").exists());
}

fn exact_checkpoint(dir: &Path, id: ProblemId) -> String {
    let p = dir.join(format!("{id}.ckpt"));
    Checkpoint {
        stored: Stored::Exact(id),
        step: 0,
    }
    .save(&p)
    .unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn eval_of_exact_checkpoint_reports_zero_error_and_writes_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let ck = exact_checkpoint(tmp.path(), ProblemId::Kg3d);
    let out = tmp.path().join("eval");
    let o = spinn(&["eval", "--checkpoint", &ck, "--resolution", "64", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("relative_l2  0\n"), "{}", stdout(&o));
    let len = std::fs::metadata(out.join("grid.spgd")).unwrap().len();
    assert_eq!(len, 28 + 64 * 64 * 64 * 8);
}

#[test]
fn eval_reproduces_the_training_time_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(train_tiny(tmp.path(), "run", &[]).status.success());
    let run = tmp.path().join("run");
    let trained = summary_value(&run, "rel_l2").as_f64().unwrap();
    let ck = run.join("model.ckpt");
    let o = spinn(&["eval", "--checkpoint", ck.to_str().unwrap(), "--problem", "helmholtz3d", "--resolution", "9"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o).lines().find(|l| l.starts_with("relative_l2")).unwrap().to_string();
    let value: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((value - trained).abs() <= 1e-12, "{value} vs {trained}");
    let o = spinn(&["eval", "--checkpoint", ck.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn export_writes_csv_and_pgm_slices() {
    let tmp = tempfile::tempdir().unwrap();
    let ck = exact_checkpoint(tmp.path(), ProblemId::Kg3d);
    let out = tmp.path().join("slice");
    let o = spinn(&["export", "--checkpoint", &ck, "--pin", "t=0", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let pgm = std::fs::read(out.join("slice.pgm")).unwrap();
    let header = b"P5\n64 64\n255\n";
    assert_eq!(&pgm[..header.len()], header);
    assert_eq!(pgm.len(), header.len() + 64 * 64);
    let csv = std::fs::read_to_string(out.join("slice.csv")).unwrap();
    assert_eq!(csv.lines().count(), 64 * 64 + 1);
    assert_eq!(csv.lines().next().unwrap(), "x1,x2,x3,value");
    // u(x, 0) = x1 + x2
    for line in csv.lines().skip(1).step_by(97) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(v[2], 0.0);
        assert!((v[3] - (v[0] + v[1])).abs() < 1e-14);
    }
    let bad = spinn(&["export", "--checkpoint", &ck, "--out", out.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn helmholtz_slice_extrema_sit_on_the_analytic_maxima() {
    let tmp = tempfile::tempdir().unwrap();
    let ck = exact_checkpoint(tmp.path(), ProblemId::Helmholtz3d);
    let out = tmp.path().join("slice");
    let pin = format!("x3={}", 1.0 / 6.0);
    let o = spinn(&["export", "--checkpoint", &ck, "--pin", &pin, "--resolution", "65", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("slice.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv.lines().skip(1).map(|l| l.split(',').map(|s| s.parse().unwrap()).collect()).collect();
    let max = rows.iter().map(|r| r[3]).fold(f64::NEG_INFINITY, f64::max);
    assert!((max - 1.0).abs() < 1e-12);
    let peaks: Vec<&Vec<f64>> = rows.iter().filter(|r| r[3] > 1.0 - 1e-9).collect();
    // sin(4 pi x) sin(4 pi y) = 1 at x, y in {-7/8, -3/8, 1/8, 5/8} (same sign) and the mirrored pairs
    assert_eq!(peaks.len(), 32);
    for r in &peaks {
        let (sx, sy) = ((4.0 * std::f64::consts::PI * r[0]).sin(), (4.0 * std::f64::consts::PI * r[1]).sin());
        assert!((sx.abs() - 1.0).abs() < 1e-12 && (sx - sy).abs() < 1e-12);
    }
    let pgm = std::fs::read(out.join("slice.pgm")).unwrap();
    let pixels = &pgm[b"P5\n65 65\n255\n".len()..];
    assert_eq!(pixels.iter().filter(|&&p| p == 255).count(), 32);
}

#[test]
fn flops_text_and_csv_agree() {
    let text = stdout(&spinn(&["flops"]));
    let csv = stdout(&spinn(&["flops", "--csv"]));
    let nums = |s: &str| -> Vec<u64> {
        s.split(|c: char| c == ',' || c.is_whitespace())
            .filter_map(|w| w.parse::<u64>().ok())
            .filter(|&v| v > 1000)
            .collect()
    };
    assert_eq!(nums(&text), nums(&csv));
    assert!(csv.contains("monolithic,total,238303576064,152068685824,390372261888"));
    assert!(text.contains("(1/1370)"));
    let tiny = stdout(&spinn(&["flops", "--arch", "separable", "--N", "1", "--dim", "2", "--layers", "1,2,1", "--rank", "1", "--order", "0", "--csv"]));
    assert_eq!(tiny, "arch,row,adds,mults,flops\nseparable,value,9,9,18\nseparable,total,9,9,18\n");
}
