//! Repeated-run benchmarks over a suite of problems and solver variants.
//!
//! A suite file lists problem files:
//!
//! ```toml
//! seed_base = 0
//!
//! [[problems]]
//! file = "problems/planar3_line.toml"
//! variants = ["full", "no-ie"]   # optional, all three by default
//! ```

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::error::{Error, Result};
use crate::explorer::{torm_solve, HistoryEntry, Problem, SolveStatus};
use crate::io;
use crate::metrics::{compute_metrics, Spread};
use crate::optimizer::{ClockKind, Variant};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteEntryFile {
    file: String,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    variants: Option<Vec<Variant>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteFile {
    #[serde(default)]
    seed_base: u64,
    problems: Vec<Spanned<SuiteEntryFile>>,
}

#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub name: String,
    pub problem: Problem,
    pub variants: Vec<Variant>,
}

#[derive(Debug, Clone)]
pub struct Suite {
    pub seed_base: u64,
    pub entries: Vec<SuiteEntry>,
}

/// Loads a suite and every problem it references. Problem paths are relative
/// to the suite file.
pub fn load_suite(path: &Path) -> Result<Suite> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: SuiteFile = toml::from_str(&text).map_err(|e| {
        let line = e.span().map_or(1, |s| text[..s.start].matches('\n').count() + 1);
        Error::schema(path, line, e.message().trim().to_string())
    })?;
    if file.problems.is_empty() {
        return Err(Error::schema(path, 1, "suite lists no problems"));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::with_capacity(file.problems.len());
    for spanned in file.problems {
        let line = text[..spanned.span().start].matches('\n').count() + 1;
        let entry = spanned.into_inner();
        let problem_path = base.join(&entry.file);
        if !problem_path.exists() {
            return Err(Error::schema(path, line, format!("problem file `{}` not found", problem_path.display())));
        }
        let problem = io::load_problem(&problem_path)?;
        let name = match entry.name {
            Some(n) => n,
            None => io::problem_name(&problem_path)?,
        };
        let variants = entry.variants.unwrap_or_else(|| Variant::ALL.to_vec());
        if variants.is_empty() {
            return Err(Error::schema(path, line, "`variants` is empty"));
        }
        entries.push(SuiteEntry { name, problem, variants });
    }
    Ok(Suite {
        seed_base: file.seed_base,
        entries,
    })
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub runs: usize,
    /// Overrides every problem's budget when set.
    pub budget: Option<f64>,
    /// Overrides every problem's clock when set.
    pub clock: Option<ClockKind>,
    /// Runs executed concurrently. Each run is itself single-threaded.
    pub jobs: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            runs: 20,
            budget: None,
            clock: None,
            jobs: 1,
        }
    }
}

/// One solver run. Metric fields are empty when the run failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub problem: String,
    pub variant: Variant,
    pub seed: u64,
    /// `solved`, `infeasible` (only constraint-violating trajectories found),
    /// `no-solution` or `error`.
    pub status: String,
    pub pose_error: Option<f64>,
    pub min_waypoint_error: Option<f64>,
    pub max_waypoint_error: Option<f64>,
    pub trajectory_length: Option<f64>,
    pub initial_solution_time: Option<f64>,
    /// Time at which the returned trajectory was found.
    pub planning_time: Option<f64>,
    pub message: String,
    #[serde(skip)]
    pub history: Vec<HistoryEntry>,
}

impl BenchRow {
    pub fn solved(&self) -> bool {
        self.status == "solved"
    }
}

/// Aggregate over the runs of one problem and variant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub problem: String,
    pub variant: Variant,
    pub runs: usize,
    pub solved: usize,
    pub pose_error_avg: Option<f64>,
    pub pose_error_min: Option<f64>,
    pub pose_error_max: Option<f64>,
    pub trajectory_length: Option<f64>,
    pub initial_solution_time: Option<f64>,
    pub planning_time: Option<f64>,
}

fn run_one(name: &str, base: &Problem, variant: Variant, seed: u64, opts: &BenchOptions) -> BenchRow {
    let mut row = BenchRow {
        problem: name.to_string(),
        variant,
        seed,
        status: "error".into(),
        pose_error: None,
        min_waypoint_error: None,
        max_waypoint_error: None,
        trajectory_length: None,
        initial_solution_time: None,
        planning_time: None,
        message: String::new(),
        history: Vec::new(),
    };
    let mut problem = base.clone();
    problem.params.variant = variant;
    problem.params.seed = seed;
    problem.params.threads = 1;
    if let Some(b) = opts.budget {
        problem.params.budget = b;
    }
    if let Some(c) = opts.clock {
        problem.params.clock = c;
    }
    let result = match torm_solve(&problem) {
        Ok(r) => r,
        Err(e) => {
            row.message = e.to_string();
            return row;
        }
    };
    row.initial_solution_time = result.initial_solution_time;
    row.planning_time = result.history.last().map(|h| h.time);
    row.history = result.history;
    let traj = match (&result.status, &result.best, &result.best_infeasible) {
        (SolveStatus::Solved, Some(best), _) => {
            row.status = "solved".into();
            best.traj.clone()
        }
        (_, _, Some((c, report))) => {
            row.status = "infeasible".into();
            row.message = format!("collision free {}, velocity {}, singularity {}, limits {}", report.collision_free, report.velocity_ok, report.singularity_ok, report.limits_ok);
            c.traj.clone()
        }
        _ => {
            row.status = "no-solution".into();
            return row;
        }
    };
    match compute_metrics(&traj, &problem.path, &problem.chain, problem.params.w_rot) {
        Ok(m) => {
            row.pose_error = Some(m.pose_error);
            row.min_waypoint_error = Some(m.min_waypoint_error);
            row.max_waypoint_error = Some(m.max_waypoint_error);
            row.trajectory_length = Some(m.trajectory_length);
        }
        Err(e) => {
            row.status = "error".into();
            row.message = e.to_string();
        }
    }
    row
}

/// Runs every problem x variant x run. Rows come back in suite order, then
/// variant, then seed, regardless of `jobs`. Failed runs are rows, not errors.
pub fn run_bench(suite: &Suite, opts: &BenchOptions) -> Result<Vec<BenchRow>> {
    if opts.runs == 0 {
        return Err(Error::InvalidArgument("runs must be at least 1".into()));
    }
    if let Some(b) = opts.budget {
        if !(b > 0.0) {
            return Err(Error::InvalidArgument("budget must be positive".into()));
        }
    }
    let mut tasks = Vec::new();
    for entry in &suite.entries {
        for &variant in &entry.variants {
            for r in 0..opts.runs {
                tasks.push((entry, variant, suite.seed_base + r as u64));
            }
        }
    }
    let rows: Vec<Mutex<Option<BenchRow>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some((entry, variant, seed)) = tasks.get(i) else {
            break;
        };
        log::info!("{} {} seed {}", entry.name, variant, seed);
        let row = run_one(&entry.name, &entry.problem, *variant, *seed, opts);
        *rows[i].lock().unwrap() = Some(row);
    };
    let jobs = opts.jobs.clamp(1, tasks.len());
    if jobs == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(work);
            }
        });
    }
    Ok(rows.into_iter().map(|m| m.into_inner().unwrap().expect("every task ran")).collect())
}

/// Groups rows by problem and variant, in first-appearance order.
pub fn summarize(rows: &[BenchRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(&str, Variant)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.problem.as_str(), r.variant)) {
            keys.push((r.problem.as_str(), r.variant));
        }
    }
    keys.into_iter()
        .map(|(problem, variant)| {
            let group: Vec<&BenchRow> = rows.iter().filter(|r| r.problem == problem && r.variant == variant).collect();
            let solved: Vec<&&BenchRow> = group.iter().filter(|r| r.solved()).collect();
            let values = |f: fn(&BenchRow) -> Option<f64>| solved.iter().filter_map(|r| f(r)).collect::<Vec<f64>>();
            let pose = Spread::of(&values(|r| r.pose_error));
            let mean = |v: Vec<f64>| Spread::of(&v).map(|s| s.avg);
            SummaryRow {
                problem: problem.to_string(),
                variant,
                runs: group.len(),
                solved: solved.len(),
                pose_error_avg: pose.map(|s| s.avg),
                pose_error_min: pose.map(|s| s.min),
                pose_error_max: pose.map(|s| s.max),
                trajectory_length: mean(values(|r| r.trajectory_length)),
                initial_solution_time: mean(values(|r| r.initial_solution_time)),
                planning_time: mean(values(|r| r.planning_time)),
            }
        })
        .collect()
}

fn to_csv<T: Serialize>(items: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for item in items {
        w.serialize(item).expect("bench rows serialize");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    to_csv(rows)
}

pub fn summary_to_csv(summary: &[SummaryRow]) -> String {
    to_csv(summary)
}

/// File name for one run's history CSV.
pub fn history_file_name(row: &BenchRow) -> PathBuf {
    let safe: String = row.problem.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    PathBuf::from(format!("{safe}_{}_seed{}.csv", row.variant, row.seed))
}

/// Writes the run rows to `out`, the summary next to it as `<stem>_summary.csv`
/// and per-run histories into `<stem>_history/`. Returns the paths written.
pub fn write_bench(rows: &[BenchRow], out: &Path) -> Result<Vec<PathBuf>> {
    let stem = out.file_stem().map_or_else(|| "bench".to_string(), |s| s.to_string_lossy().into_owned());
    let dir = out.parent().unwrap_or(Path::new(""));
    let summary = dir.join(format!("{stem}_summary.csv"));
    let history_dir = dir.join(format!("{stem}_history"));
    std::fs::write(out, rows_to_csv(rows)).map_err(|e| Error::io(out, e))?;
    std::fs::write(&summary, summary_to_csv(&summarize(rows))).map_err(|e| Error::io(&summary, e))?;
    std::fs::create_dir_all(&history_dir).map_err(|e| Error::io(&history_dir, e))?;
    let mut written = vec![out.to_path_buf(), summary];
    for row in rows {
        let p = history_dir.join(history_file_name(row));
        io::save_history(&row.history, &p)?;
        written.push(p);
    }
    Ok(written)
}
