//! Experiment orchestration: runs, sweeps and their artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nalgebra::DVector;
use rangeinv::problems::InverseProblem;
use rangeinv::solvers::{solve, Method, StopReason};
use rangeinv::{Problem, Record};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::instance::build_from_config;
use crate::noise::make_noise;

pub const OUTPUT_ROOT_ENV: &str = "RANGEINV_OUTPUT_ROOT";

pub const CSV_HEADER: &str = "n,alpha,residual,penalty,error,j_spread,ms";

/// Output root: the environment override if set, else `dir`.
pub fn output_root(dir: &str) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root),
        _ => PathBuf::from(dir),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSpec {
    pub method: Method,
    pub delta: f64,
    pub seed: u64,
}

impl RunSpec {
    pub fn dir_name(&self) -> String {
        format!("{}_delta{:e}_seed{}", self.method, self.delta, self.seed)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub method: Method,
    pub delta: f64,
    pub seed: u64,
    pub stop_reason: Option<StopReason>,
    pub iterations: usize,
    pub final_residual: Option<f64>,
    pub final_error: Option<f64>,
    pub final_j_spread: Option<f64>,
    pub message: Option<String>,
    pub error: Option<String>,
}

impl RunSummary {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub version: &'static str,
    pub config: ExperimentConfig,
    pub runs: Vec<RunSummary>,
    pub error: Option<String>,
}

impl Summary {
    pub fn ok(&self) -> bool {
        self.error.is_none() && self.runs.iter().all(RunSummary::ok)
    }
}

pub fn record_csv(record: &Record) -> String {
    let mut out = String::with_capacity(64 * (record.entries.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for e in &record.entries {
        let error = e.error.map(|v| format!("{v:e}")).unwrap_or_default();
        writeln!(
            out,
            "{},{:e},{:e},{:e},{},{:e},{:e}",
            e.n, e.alpha, e.residual, e.penalty, error, e.j_spread, e.ms
        )
        .expect("writing to a String");
    }
    out
}

fn io_error(path: &Path, e: std::io::Error) -> String {
    format!("cannot write {}: {e}", path.display())
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), String> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn summarize(spec: &RunSpec, outcome: Result<Record, String>) -> RunSummary {
    let mut summary = RunSummary {
        name: spec.dir_name(),
        method: spec.method,
        delta: spec.delta,
        seed: spec.seed,
        stop_reason: None,
        iterations: 0,
        final_residual: None,
        final_error: None,
        final_j_spread: None,
        message: None,
        error: None,
    };
    match outcome {
        Ok(record) => {
            summary.stop_reason = Some(record.stop_reason);
            summary.iterations = record.iterations();
            summary.final_residual = record.entries.last().map(|e| e.residual);
            summary.final_error = record.final_error();
            summary.final_j_spread = record.final_j_spread();
            summary.message = record.message.clone();
            if record.stop_reason == StopReason::Error {
                summary.error = Some(record.message.unwrap_or_else(|| "solver error".into()));
            }
        }
        Err(e) => summary.error = Some(e),
    }
    summary
}

/// One solver run; writes `record.csv` into its own directory.
fn execute_one(problem: &Problem, y: &DVector<f64>, cfg: &ExperimentConfig, spec: &RunSpec, root: &Path) -> RunSummary {
    let solver_cfg = cfg.solver.solver_config(spec.method);
    let outcome = make_noise(y, problem.data_space(), spec.delta, spec.seed)
        .and_then(|y_delta| solve(problem, &y_delta, spec.delta, &solver_cfg))
        .map_err(|e| e.to_string());
    let written = match &outcome {
        Ok(record) if cfg.output.csv() => write_file(&root.join(spec.dir_name()).join("record.csv"), &record_csv(record)),
        _ => Ok(()),
    };
    let mut summary = summarize(spec, outcome);
    if let Err(e) = written {
        summary.error.get_or_insert(e);
    }
    summary
}

/// Runs every spec against one shared instance, `workers` at a time, and
/// writes `summary.json` afterwards.
pub fn execute(cfg: &ExperimentConfig, specs: &[RunSpec], workers: usize, root: &Path) -> Summary {
    let mut summary = Summary {
        version: env!("CARGO_PKG_VERSION"),
        config: cfg.clone(),
        runs: Vec::new(),
        error: None,
    };
    let prepared = build_from_config(cfg).and_then(|p| {
        let y = p.exact_data()?;
        Ok((p, y))
    });
    match prepared {
        Err(e) => summary.error = Some(e.to_string()),
        Ok((problem, y)) => {
            let slots: Mutex<Vec<Option<RunSummary>>> = Mutex::new(vec![None; specs.len()]);
            let next = AtomicUsize::new(0);
            std::thread::scope(|scope| {
                for _ in 0..workers.clamp(1, specs.len().max(1)) {
                    scope.spawn(|| loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(spec) = specs.get(i) else { break };
                        let result = execute_one(&problem, &y, cfg, spec, root);
                        slots.lock().expect("no worker panicked")[i] = Some(result);
                    });
                }
            });
            summary.runs = slots
                .into_inner()
                .expect("no worker panicked")
                .into_iter()
                .map(|s| s.expect("every spec executed"))
                .collect();
        }
    }
    if cfg.output.json() {
        let json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
        if let Err(e) = write_file(&root.join("summary.json"), &json) {
            summary.error.get_or_insert(e);
        }
    }
    summary
}

/// `(delta, seed)` grid for one method.
pub fn run_specs(cfg: &ExperimentConfig, methods: &[Method]) -> Vec<RunSpec> {
    let mut specs = Vec::new();
    for &method in methods {
        for &delta in &cfg.noise.delta {
            for &seed in &cfg.noise.seed {
                specs.push(RunSpec { method, delta, seed });
            }
        }
    }
    specs
}

/// The `run` verb: one method, sequential.
pub fn run(cfg: &ExperimentConfig, root: &Path) -> Result<Summary, String> {
    let [method] = cfg.solver.methods[..] else {
        return Err("`run` takes a single method; use `sweep` for several".into());
    };
    Ok(execute(cfg, &run_specs(cfg, &[method]), 1, root))
}

/// The `sweep` verb: methods x deltas x seeds on `workers` threads.
pub fn sweep(cfg: &ExperimentConfig, root: &Path) -> Summary {
    execute(cfg, &run_specs(cfg, &cfg.solver.methods), cfg.output.workers, root)
}

pub fn print_runs(summary: &Summary) {
    if let Some(e) = &summary.error {
        eprintln!("error: {e}");
    }
    for run in &summary.runs {
        let stop = run.stop_reason.map_or("-", |s| s.name());
        let error = run.final_error.map_or("-".to_string(), |e| format!("{e:.3e}"));
        println!("{:<44} {:<12} {:>4} it  error {error}", run.name, stop, run.iterations);
        if let Some(e) = &run.error {
            eprintln!("  {}: {e}", run.name);
        }
    }
}
