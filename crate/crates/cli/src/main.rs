use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use torm::bench::{load_suite, run_bench, summarize, write_bench, BenchOptions};
use torm::explorer::{torm_solve_with, HistoryEntry, Problem, SolveStatus};
use torm::metrics::compute_metrics;
use torm::optimizer::{check_constraints, ClockKind, FeasibilityReport, Variant};
use torm::paths::{generate_path, generator_with_overrides, DEFAULT_SPACING};
use torm::scene::EMPTY_SCENE_DISTANCE;
use torm::{io, kinematics::DEFAULT_ROTATION_WEIGHT};

#[derive(Parser)]
#[command(name = "torm", version, about = "Trajectory optimization for Cartesian path following")]
struct Cli {
    /// Print the effective solver parameters and exit.
    #[arg(long, global = true)]
    show_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Clock {
    Wall,
    Work,
}

impl From<Clock> for ClockKind {
    fn from(c: Clock) -> Self {
        match c {
            Clock::Wall => ClockKind::Wall,
            Clock::Work => ClockKind::Work,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a trajectory for a problem file.
    Solve(SolveArgs),
    /// Run every problem of a suite with every variant, repeatedly.
    Bench(BenchArgs),
    /// Generate a built-in path and write it as CSV.
    Paths(PathsArgs),
    /// Check a trajectory against a problem's constraints. Exits 0 iff feasible.
    Check(CheckArgs),
}

#[derive(Args)]
struct SolveArgs {
    problem: PathBuf,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    threads: Option<usize>,
    /// Defaults to the deterministic work clock with one thread, wall time otherwise.
    #[arg(long, value_enum)]
    clock: Option<Clock>,
    /// Trajectory CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Improvement history CSV.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    suite: PathBuf,
    #[arg(long, default_value_t = 20)]
    runs: usize,
    /// Overrides every problem's budget.
    #[arg(long)]
    budget: Option<f64>,
    /// Runs executed concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Defaults to the work clock so results are reproducible.
    #[arg(long, value_enum, default_value = "work")]
    clock: Clock,
    /// Per-run CSV; the summary and histories are written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PathsArgs {
    /// line, square, s-curve, polyline or rotation.
    kind: String,
    /// Generator parameter in TOML syntax, e.g. `--set side=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_SPACING)]
    spacing: f64,
    #[arg(long, default_value_t = DEFAULT_ROTATION_WEIGHT)]
    w_rot: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    problem: PathBuf,
    trajectory: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(args) => solve(args, cli.show_config),
        Command::Bench(args) => bench(args, cli.show_config),
        Command::Paths(args) => paths(args),
        Command::Check(args) => check(args, cli.show_config),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

type CliResult = Result<ExitCode, Box<dyn std::error::Error>>;

fn show(problem: &Problem) {
    print!("{}", io::params_to_toml(&problem.params));
}

fn solve(args: SolveArgs, show_config: bool) -> CliResult {
    let mut problem = io::load_problem(&args.problem)?;
    let p = &mut problem.params;
    if let Some(b) = args.budget {
        p.budget = b;
    }
    if let Some(s) = args.seed {
        p.seed = s;
    }
    if let Some(v) = args.variant {
        p.variant = v;
    }
    if let Some(t) = args.threads {
        p.threads = t;
    }
    p.clock = match args.clock {
        Some(c) => c.into(),
        None if p.threads == 1 => ClockKind::Work,
        None => ClockKind::Wall,
    };
    p.validate()?;
    if show_config {
        show(&problem);
        return Ok(ExitCode::SUCCESS);
    }

    let progress = |h: &HistoryEntry| log::info!("t = {:.3} s  cost {:.6e}  pose error {:.3e}", h.time, h.cost, h.pose_error);
    let result = torm_solve_with(&problem, Some(&progress))?;
    if let Some(path) = &args.history {
        io::save_history(&result.history, path)?;
    }
    let Some(best) = result.best.as_ref().filter(|_| result.status == SolveStatus::Solved) else {
        println!("no feasible trajectory within {:.2} s ({} rounds, {} failed seeds)", result.elapsed, result.rounds, result.failed_seeds);
        if let Some((c, report)) = &result.best_infeasible {
            println!("best infeasible candidate: pose error {:.3e}", c.pose_error);
            print_report(report);
        }
        return Ok(ExitCode::from(2));
    };
    if let Some(path) = &args.out {
        io::save_trajectory(&best.traj, path)?;
    }
    let m = compute_metrics(&best.traj, &problem.path, &problem.chain, problem.params.w_rot)?;
    println!("status: solved ({} rounds, {} failed seeds)", result.rounds, result.failed_seeds);
    println!("waypoints: {}", problem.path.len());
    println!("pose error: {:.6e} (min {:.3e}, max {:.3e})", m.pose_error, m.min_waypoint_error, m.max_waypoint_error);
    println!("trajectory length: {:.4} rad", m.trajectory_length);
    println!("initial solution time: {:.3} s", result.initial_solution_time.unwrap_or(f64::NAN));
    println!("planning time: {:.3} s", result.history.last().map_or(f64::NAN, |h| h.time));
    if let Some(report) = &result.report {
        print_report(report);
    }
    Ok(ExitCode::SUCCESS)
}

fn print_report(r: &FeasibilityReport) {
    let mark = |ok: bool| if ok { "ok" } else { "VIOLATED" };
    let collisions = r.clearance.colliding_waypoints();
    println!("collision: {} ({} waypoints in collision, {} self-collisions)", mark(r.collision_free), collisions.len(), r.clearance.self_collisions.len());
    if let Some(w) = r.clearance.worst.as_ref().filter(|w| w.clearance < 0.5 * EMPTY_SCENE_DISTANCE) {
        println!("  min clearance {:.4} m at waypoint {} sphere {}", w.clearance, w.waypoint, w.sphere);
    }
    println!("velocity: {}", mark(r.velocity_ok));
    if let Some(v) = &r.worst_velocity {
        println!("  max speed ratio {:.3} at waypoint {} joint {}", v.speed / v.limit, v.waypoint, v.joint);
    }
    println!(
        "singularity: {} (min manipulability {:.4e} at waypoint {})",
        mark(r.singularity_ok),
        r.min_manipulability,
        r.min_manipulability_waypoint
    );
    println!("joint limits: {}", mark(r.limits_ok));
}

fn bench(args: BenchArgs, show_config: bool) -> CliResult {
    let suite = load_suite(&args.suite)?;
    if show_config {
        for entry in &suite.entries {
            println!("# {}", entry.name);
            show(&entry.problem);
        }
        return Ok(ExitCode::SUCCESS);
    }
    let opts = BenchOptions {
        runs: args.runs,
        budget: args.budget,
        clock: Some(args.clock.into()),
        jobs: args.jobs,
    };
    let rows = run_bench(&suite, &opts)?;
    write_bench(&rows, &args.out)?;
    println!("{:<24} {:<8} {:>6} {:>12} {:>12} {:>12} {:>9} {:>8} {:>8}", "problem", "variant", "solved", "pose avg", "pose min", "pose max", "TL (rad)", "IST (s)", "PT (s)");
    let opt = |v: Option<f64>, prec: usize, sci: bool| match v {
        Some(x) if sci => format!("{x:.prec$e}"),
        Some(x) => format!("{x:.prec$}"),
        None => "-".into(),
    };
    for s in summarize(&rows) {
        println!(
            "{:<24} {:<8} {:>6} {:>12} {:>12} {:>12} {:>9} {:>8} {:>8}",
            s.problem,
            s.variant.name(),
            format!("{}/{}", s.solved, s.runs),
            opt(s.pose_error_avg, 3, true),
            opt(s.pose_error_min, 3, true),
            opt(s.pose_error_max, 3, true),
            opt(s.trajectory_length, 3, false),
            opt(s.initial_solution_time, 3, false),
            opt(s.planning_time, 3, false)
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn paths(args: PathsArgs) -> CliResult {
    let overrides = args
        .set
        .iter()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| format!("`--set {kv}` is not KEY=VALUE"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let gen = generator_with_overrides(&args.kind, &overrides)?;
    let path = generate_path(&gen, args.spacing, args.w_rot)?;
    io::save_path_csv(&path, &args.out)?;
    println!("{} waypoints (n = {}) written to {}", path.len(), path.n(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn check(args: CheckArgs, show_config: bool) -> CliResult {
    let problem = io::load_problem(&args.problem)?;
    if show_config {
        show(&problem);
        return Ok(ExitCode::SUCCESS);
    }
    let traj = io::load_trajectory(&args.trajectory)?;
    if traj.len() != problem.path.len() {
        return Err(format!("{}: {} waypoints, but the path has {}", display(&args.trajectory), traj.len(), problem.path.len()).into());
    }
    let report = check_constraints(&traj, &problem.chain, &problem.scene, &problem.gate()?)?;
    let m = compute_metrics(&traj, &problem.path, &problem.chain, problem.params.w_rot)?;
    println!("pose error: {:.6e} (max {:.3e})", m.pose_error, m.max_waypoint_error);
    print_report(&report);
    if report.feasible() {
        println!("feasible");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("infeasible");
        Ok(ExitCode::FAILURE)
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
