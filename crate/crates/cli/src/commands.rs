//! Subcommand implementations.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;
use spinn::error::EvalError;
use spinn::flops::{cost_ratio, count_ops, ArchKind, ArchSpec, OpTable};
use spinn::nets::JetBatch;
use spinn::pde::{AnalyticModel, PdeProblem, ProblemId};
use spinn::separable::{FactorizedBatch, FeatureSource, SeparableModel, SolutionGrid};
use spinn::trainer::{default_resolution, train_with, EvalReport, Evaluator, Progress, Resume};

use crate::checkpoint::{Checkpoint, Stored};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{csv_text, pgm_bytes, write_file, write_grid};

/// A loaded checkpoint as a feature source.
pub enum Source {
    Neural(SeparableModel),
    Exact(AnalyticModel),
}

impl FeatureSource for Source {
    fn dim(&self) -> usize {
        match self {
            Source::Neural(m) => m.dim(),
            Source::Exact(m) => m.dim(),
        }
    }

    fn rank(&self) -> usize {
        match self {
            Source::Neural(m) => m.rank(),
            Source::Exact(m) => m.rank(),
        }
    }

    fn out_dim(&self) -> usize {
        match self {
            Source::Neural(m) => m.out_dim(),
            Source::Exact(m) => m.out_dim(),
        }
    }

    fn bounds(&self) -> &[(f64, f64)] {
        match self {
            Source::Neural(m) => m.bounds(),
            Source::Exact(m) => m.bounds(),
        }
    }

    fn axis_features(&self, axis: usize, xs: &[f64], order: usize) -> Result<JetBatch, EvalError> {
        match self {
            Source::Neural(m) => m.axis_features(axis, xs, order),
            Source::Exact(m) => m.axis_features(axis, xs, order),
        }
    }
}

/// Loads a checkpoint and the problem it is evaluated on. Exact checkpoints
/// name their problem; neural ones need `problem`.
pub fn load_source(path: &Path, problem: Option<&str>) -> Result<(Source, PdeProblem), CliError> {
    let ck = Checkpoint::load(path)?;
    let requested = problem.map(str::parse::<ProblemId>).transpose()?;
    match ck.stored {
        Stored::Exact(id) => {
            if requested.is_some_and(|r| r != id) {
                return Err(CliError::Usage(format!("checkpoint holds the exact solution of {id}")));
            }
            let problem = PdeProblem::new(id);
            Ok((Source::Exact(problem.analytic_model()?), problem))
        }
        Stored::Neural { model, .. } => {
            let id = requested.ok_or_else(|| {
                CliError::Usage(format!(
                    "--problem is required for trained checkpoints; expected one of: {}",
                    ProblemId::ALL_NAMES.join(", ")
                ))
            })?;
            let problem = PdeProblem::new(id);
            if model.bounds() != problem.domain().bounds() || model.out_dim() != problem.out_dim() {
                return Err(CliError::Usage(format!("checkpoint does not match the {id} domain")));
            }
            Ok((Source::Neural(model), problem))
        }
    }
}

/// Exclusive claim on a run directory, released on drop.
struct RunLock(PathBuf);

impl RunLock {
    fn acquire(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id()).map_err(|e| CliError::io(&path, e))?;
                Ok(RunLock(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Locked(dir.to_path_buf())),
            Err(e) => Err(CliError::io(path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

pub struct TrainArgs {
    pub config: Option<PathBuf>,
    pub problem: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub iterations: Option<usize>,
    pub resume: bool,
}

fn open_log(path: &Path, append: bool) -> Result<BufWriter<File>, CliError> {
    let f = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .map_err(|e| CliError::io(path, e))?;
    Ok(BufWriter::new(f))
}

fn eval_json(e: Option<&EvalReport>) -> serde_json::Value {
    match e {
        Some(e) => json!({"rel_l2": e.rel_l2, "rmse": e.rmse, "vorticity_rel_l2": e.vorticity_rel_l2}),
        None => json!({"rel_l2": null, "rmse": null, "vorticity_rel_l2": null}),
    }
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if args.problem.is_some() {
        cfg.problem = args.problem.clone();
    }
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if args.out.is_some() {
        cfg.output = args.out.clone();
    }
    if args.iterations.is_some() {
        cfg.train.iterations = args.iterations;
    }
    let run = cfg.resolve()?;
    let dir = &run.output;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let _lock = RunLock::acquire(dir)?;

    let mut model = run.model.build(&run.problem, run.seed)?;
    let mut resume = None;
    if args.resume {
        let ck = Checkpoint::load(&dir.join("last.ckpt"))?;
        match ck.stored {
            Stored::Neural {
                model: m,
                adam: Some(adam),
            } if m.param_count() == model.param_count() => {
                model = m;
                resume = Some(Resume {
                    adam,
                    step: ck.step as usize,
                });
            }
            _ => return Err(CliError::Usage("last.ckpt cannot resume this configuration".into())),
        }
    }
    let mut metrics = open_log(&dir.join("metrics.jsonl"), args.resume)?;
    let mut timing = open_log(&dir.join("timing.jsonl"), args.resume)?;
    let mut io_error: Option<CliError> = None;
    let outcome = train_with(&run.problem, model, &run.train, resume, |p| {
        if io_error.is_some() {
            return;
        }
        let result = match p {
            Progress::Record(r) => {
                let mut line = json!({
                    "step": r.step,
                    "loss": r.loss.total,
                    "pde": r.loss.pde,
                    "ic": r.loss.ic,
                    "bc": r.loss.bc,
                    "passes": r.passes,
                });
                if let (Some(obj), serde_json::Value::Object(e)) = (line.as_object_mut(), eval_json(r.eval.as_ref())) {
                    obj.extend(e);
                }
                writeln!(metrics, "{line}")
                    .and_then(|_| writeln!(timing, "{}", json!({"step": r.step, "elapsed_ms": r.elapsed_ms as u64})))
                    .map_err(|e| CliError::io(dir.join("metrics.jsonl"), e))
            }
            Progress::Checkpoint { step, model, adam } => Checkpoint {
                stored: Stored::Neural {
                    model: model.clone(),
                    adam: Some(adam.clone()),
                },
                step: step as u64,
            }
            .save(&dir.join("last.ckpt")),
        };
        io_error = result.err();
    })?;
    if let Some(e) = io_error {
        return Err(e);
    }
    metrics.flush().map_err(|e| CliError::io(dir.join("metrics.jsonl"), e))?;
    timing.flush().map_err(|e| CliError::io(dir.join("timing.jsonl"), e))?;

    Checkpoint {
        stored: Stored::Neural {
            model: outcome.best.clone(),
            adam: None,
        },
        step: outcome.best_step as u64,
    }
    .save(&dir.join("model.ckpt"))?;
    Checkpoint {
        stored: Stored::Neural {
            model: outcome.last.clone(),
            adam: Some(outcome.adam.clone()),
        },
        step: outcome.steps as u64,
    }
    .save(&dir.join("last.ckpt"))?;
    if outcome.best_loss.is_finite() {
        let batch = uniform_grid(&run.problem, run.train.eval_resolution)?;
        let grid = outcome.best.predict_grid(&batch).map_err(spinn::error::TrainError::from)?;
        write_grid(&dir.join("prediction.spgd"), &grid)?;
    }
    let mut summary = json!({
        "problem": run.problem.id().name(),
        "seed": run.seed,
        "steps": outcome.steps,
        "best_step": outcome.best_step,
        "best_loss": if outcome.best_loss.is_finite() { json!(outcome.best_loss) } else { json!(null) },
        "aborted": outcome.aborted,
    });
    if let (Some(obj), serde_json::Value::Object(e)) = (summary.as_object_mut(), eval_json(outcome.final_eval.as_ref())) {
        obj.extend(e);
    }
    write_file(&dir.join("summary.json"), format!("{summary:#}\n"))?;

    println!("problem      {}", run.problem.id());
    println!("steps        {}", outcome.steps);
    println!("best step    {} (loss {:e})", outcome.best_step, outcome.best_loss);
    print_report(outcome.final_eval.as_ref());
    println!("run dir      {}", dir.display());
    match outcome.aborted {
        Some(msg) => Err(CliError::Aborted(msg)),
        None => Ok(()),
    }
}

fn print_report(report: Option<&EvalReport>) {
    match report {
        Some(r) => {
            println!("relative_l2  {}", r.rel_l2);
            println!("rmse         {}", r.rmse);
            if let Some(v) = r.vorticity_rel_l2 {
                println!("vorticity    {v}");
            }
        }
        None => println!("relative_l2  n/a (no reference solution)"),
    }
}

fn uniform_grid(problem: &PdeProblem, resolution: usize) -> Result<FactorizedBatch, CliError> {
    if resolution < 2 {
        return Err(CliError::Usage("resolution must be at least 2".into()));
    }
    let bounds = problem.domain().bounds();
    FactorizedBatch::uniform(bounds, &vec![resolution; bounds.len()]).map_err(|e| CliError::Usage(e.to_string()))
}

pub fn eval(checkpoint: &Path, problem: Option<&str>, resolution: Option<usize>, out: Option<&Path>) -> Result<(), CliError> {
    let (source, problem) = load_source(checkpoint, problem)?;
    let resolution = resolution.unwrap_or_else(|| default_resolution(problem.dim()));
    let batch = uniform_grid(&problem, resolution)?;
    let report = match Evaluator::new(&problem, resolution) {
        Ok(ev) => Some(ev.evaluate(&source)?),
        Err(spinn::error::TrainError::Pde(_)) => None,
        Err(e) => return Err(e.into()),
    };
    println!("problem      {}", problem.id());
    print_report(report.as_ref());
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let grid = source.predict_grid(&batch).map_err(spinn::error::TrainError::from)?;
        write_grid(&dir.join("grid.spgd"), &grid)?;
    }
    Ok(())
}

pub struct ExportArgs {
    pub checkpoint: PathBuf,
    pub problem: Option<String>,
    pub resolution: usize,
    pub pins: Vec<String>,
    pub component: usize,
    pub out: PathBuf,
    pub name: String,
}

/// `x<k>` (1-based) or `t` for the time axis.
fn parse_axis(name: &str, problem: &PdeProblem) -> Result<usize, CliError> {
    if name == "t" {
        return problem
            .domain()
            .time_axis()
            .ok_or_else(|| CliError::Usage(format!("{} has no time axis", problem.id())));
    }
    name.strip_prefix('x')
        .and_then(|k| k.parse::<usize>().ok())
        .filter(|&k| (1..=problem.dim()).contains(&k))
        .map(|k| k - 1)
        .ok_or_else(|| CliError::Usage(format!("unknown axis `{name}` (use x1..x{} or t)", problem.dim())))
}

/// Slice with all but two axes pinned.
pub fn slice_batch(problem: &PdeProblem, pins: &[String], resolution: usize) -> Result<(FactorizedBatch, [usize; 2]), CliError> {
    let d = problem.dim();
    let bounds = problem.domain().bounds();
    let mut fixed: Vec<Option<f64>> = vec![None; d];
    for pin in pins {
        let (axis, value) = pin
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("pin `{pin}` must look like AXIS=VALUE")))?;
        let axis = parse_axis(axis.trim(), problem)?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("pin `{pin}` has a non-numeric value")))?;
        let (lo, hi) = bounds[axis];
        if !(lo..=hi).contains(&value) {
            return Err(CliError::Usage(format!("pin `{pin}` lies outside [{lo}, {hi}]")));
        }
        if fixed[axis].replace(value).is_some() {
            return Err(CliError::Usage(format!("axis {} pinned twice", axis + 1)));
        }
    }
    let free: Vec<usize> = (0..d).filter(|&i| fixed[i].is_none()).collect();
    if free.len() != 2 {
        return Err(CliError::Usage(format!("pin exactly {} of the {d} axes", d - 2)));
    }
    if resolution < 2 {
        return Err(CliError::Usage("resolution must be at least 2".into()));
    }
    let axes = (0..d)
        .map(|i| match fixed[i] {
            Some(v) => vec![v],
            None => {
                let (lo, hi) = bounds[i];
                (0..resolution)
                    .map(|k| lo + (hi - lo) * k as f64 / (resolution - 1) as f64)
                    .collect()
            }
        })
        .collect();
    let batch = FactorizedBatch::new(axes).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok((batch, [free[0], free[1]]))
}

pub fn export(args: ExportArgs) -> Result<(), CliError> {
    let (source, problem) = load_source(&args.checkpoint, args.problem.as_deref())?;
    if args.component >= problem.out_dim() {
        return Err(CliError::Usage(format!("component must be below {}", problem.out_dim())));
    }
    let (batch, [a, b]) = slice_batch(&problem, &args.pins, args.resolution)?;
    let grid: SolutionGrid = source.predict_grid(&batch).map_err(spinn::error::TrainError::from)?;
    let values = grid.component(args.component);
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let header: Vec<String> = (1..=problem.dim()).map(|k| format!("x{k}")).chain(["value".to_string()]).collect();
    let mut rows = Vec::with_capacity(batch.len());
    batch.for_each_point(|p, x| {
        let mut row = x.to_vec();
        row.push(values[p]);
        rows.push(row);
    });
    write_file(&args.out.join(format!("{}.csv", args.name)), csv_text(&header, rows))?;
    // First free axis runs down the rows, the second across the columns.
    let (h, w) = (batch.axis(a).len(), batch.axis(b).len());
    write_file(&args.out.join(format!("{}.pgm", args.name)), pgm_bytes(values, w, h))?;
    println!("wrote {h}x{w} slice of {} to {}", problem.id(), args.out.display());
    Ok(())
}

pub struct FlopsArgs {
    pub arch: Option<String>,
    pub points: usize,
    pub dim: usize,
    pub layers: Option<String>,
    pub rank: usize,
    pub out_dim: usize,
    pub order: usize,
    pub csv: bool,
}

const ROW_NAMES: [&str; 3] = ["value", "order1", "order2"];

fn table_lines(name: &str, table: &OpTable, csv: bool) -> Vec<String> {
    let total = table.total();
    let rows = table
        .rows
        .iter()
        .enumerate()
        .map(|(k, c)| (ROW_NAMES[k], *c))
        .chain([("total", total)]);
    rows.map(|(row, c)| {
        if csv {
            format!("{name},{row},{},{},{}", c.adds, c.mults, c.flops())
        } else {
            format!("{name:<12}{row:<8}{:>18}{:>18}{:>18}", c.adds, c.mults, c.flops())
        }
    })
    .collect()
}

pub fn flops_report(args: &FlopsArgs) -> Result<String, CliError> {
    let specs: Vec<(String, ArchSpec)> = match args.arch.as_deref() {
        None => vec![
            ("separable".into(), ArchSpec::separable_64_cubed()),
            ("monolithic".into(), ArchSpec::monolithic_64_cubed()),
        ],
        Some(kind) => {
            let kind = match kind {
                "separable" => ArchKind::Separable {
                    rank: args.rank,
                    out_dim: args.out_dim,
                },
                "monolithic" => ArchKind::Monolithic,
                other => return Err(CliError::Usage(format!("unknown architecture `{other}`"))),
            };
            let layers = match &args.layers {
                Some(s) => s
                    .split(',')
                    .map(|w| w.trim().parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| CliError::Usage(format!("bad layer list `{s}`")))?,
                None => match kind {
                    ArchKind::Separable { rank, out_dim } => vec![1, 64, 64, 64, 64, rank * out_dim],
                    ArchKind::Monolithic => [args.dim].into_iter().chain([128; 6]).chain([1]).collect(),
                },
            };
            let name = match kind {
                ArchKind::Separable { .. } => "separable",
                ArchKind::Monolithic => "monolithic",
            };
            vec![(
                name.into(),
                ArchSpec {
                    kind,
                    points: vec![args.points; args.dim],
                    layers,
                    order: args.order,
                },
            )]
        }
    };
    let mut lines = vec![if args.csv {
        "arch,row,adds,mults,flops".to_string()
    } else {
        format!("{:<12}{:<8}{:>18}{:>18}{:>18}", "arch", "row", "adds", "mults", "flops")
    }];
    for (name, spec) in &specs {
        lines.extend(table_lines(name, &count_ops(spec)?, args.csv));
    }
    if specs.len() == 2 {
        let ratio = cost_ratio(&specs[0].1, &specs[1].1)?;
        lines.push(if args.csv {
            format!("ratio,total,,,{ratio}")
        } else {
            format!("separable/monolithic flops ratio {ratio} (1/{:.0})", 1.0 / ratio)
        });
    }
    Ok(lines.join("\n") + "\n")
}
