//! End-to-end acceptance checks. Runs without the libtest harness and prints
//! one PASS/FAIL line per criterion; exits non-zero if any fails.
//!
//! Criterion 7 runs 60 solves of 30 s each and dominates the runtime.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use torm::bench::{run_bench, BenchOptions, Suite, SuiteEntry};
use torm::explorer::{torm_solve, HistoryEntry, Problem, SolveResult, SolveStatus};
use torm::io;
use torm::kinematics::{fk, Chain, JointVector};
use torm::metrics::compute_metrics;
use torm::objective::*;
use torm::optimizer::{check_constraints, manipulability_threshold, smooth_projection, ClockKind, ConstraintGate, TormParams, Variant};
use torm::robots;
use torm::scene::{check_trajectory_collision, Primitive, Scene};

type Outcome = Result<String, String>;

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn flatten(traj: &Trajectory) -> DVector<f64> {
    DVector::from_iterator(traj.len() * traj.dof(), traj.configs.iter().flat_map(|q| q.iter().cloned()))
}

fn unflatten(x: &DVector<f64>, like: &Trajectory) -> Trajectory {
    let d = like.dof();
    Trajectory::new((0..like.len()).map(|i| x.rows(i * d, d).into_owned()).collect(), like.dt).unwrap()
}

fn central_difference(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let mut p = x.clone();
        let mut m = x.clone();
        p[i] += h;
        m[i] -= h;
        (f(&p) - f(&m)) / (2.0 * h)
    })
}

fn random_config<R: Rng>(chain: &Chain, rng: &mut R) -> JointVector {
    JointVector::from_iterator(chain.dof(), chain.joints().iter().map(|j| rng.gen_range(j.lower..j.upper)))
}

fn random_walk<R: Rng>(chain: &Chain, n: usize, dt: f64, rng: &mut R) -> Trajectory {
    let mut configs = vec![random_config(chain, rng)];
    for _ in 0..n {
        let mut q = configs.last().unwrap() + JointVector::from_fn(chain.dof(), |_, _| rng.gen_range(-0.1..0.1));
        chain.clamp(&mut q);
        configs.push(q);
    }
    Trajectory::new(configs, dt).unwrap()
}

/// World position of a point `x` metres along link `link`'s x axis.
fn link_point(chain: &Chain, q: &JointVector, link: usize, x: f64) -> Vector3<f64> {
    (chain.state(q).unwrap().link_frame(link) * Point3::new(x, 0.0, 0.0)).coords
}

fn objective<'a>(chain: &'a Chain, scene: &'a Scene, path: &'a PathSpec, fixed_start: bool) -> Objective<'a> {
    Objective {
        chain,
        scene,
        path,
        weights: ObjectiveWeights::defaults_for(path.len()),
        w_rot: 0.17,
        fixed_start,
    }
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let chain = robots::planar3();
    let scene = Scene::default();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst_pose, mut worst_smooth) = (0.0f64, 0.0f64);
    for instance in 0..20 {
        let traj = random_walk(&chain, 10, 1.0, &mut rng);
        let poses = traj.configs.iter().map(|q| fk(&chain, &(q + JointVector::from_fn(3, |_, _| rng.gen_range(-0.3..0.3)))).unwrap()).collect();
        let path = PathSpec::new(poses).unwrap();
        let fixed = instance % 2 == 0;
        let obj = objective(&chain, &scene, &path, fixed);
        let x = flatten(&traj);

        // grad_pose is the descent direction J^T r, the negative gradient of f_pose.
        let g = obj.grad_pose(&traj).unwrap();
        let mut fd = central_difference(|x| obj.f_pose(&unflatten(x, &traj)).unwrap(), &x, 1e-6);
        if fixed {
            fd.rows_mut(0, 3).fill(0.0);
        }
        let analytic = -DVector::from_iterator(x.len(), (0..traj.len()).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| g[(i, j)]));
        worst_pose = worst_pose.max((&analytic - &fd).norm() / fd.norm());

        let form = build_smoothness(10, 3, traj.dt, fixed.then(|| &traj.configs[0])).unwrap();
        let gs = grad_smooth(&traj, &form).unwrap();
        let fd = central_difference(|x| f_smooth(&unflatten(x, &traj), &form).unwrap(), &x, 1e-6);
        let first = form.first_free();
        let fd_free = fd.rows(first * 3, gs.nrows() * 3).into_owned();
        let analytic = DVector::from_iterator(gs.nrows() * 3, (0..gs.nrows()).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| gs[(i, j)]));
        worst_smooth = worst_smooth.max((&analytic - &fd_free).norm() / fd_free.norm());
    }
    let secs = started.elapsed().as_secs_f64();
    let detail = format!("20 instances, worst relative error grad_pose {worst_pose:.2e}, grad_smooth {worst_smooth:.2e}, {secs:.2} s");
    if worst_pose < 1e-4 && worst_smooth < 1e-4 && secs < 5.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for k in 0..100 {
        let n = rng.gen_range(1..=20);
        let d = rng.gen_range(1..=7);
        let dt = TormParams::default().dt;
        let configs: Vec<JointVector> = (0..=n).map(|_| JointVector::from_fn(d, |_, _| rng.gen_range(-3.0..3.0))).collect();
        let traj = Trajectory::new(configs, dt).unwrap();
        // Direct sum of squared finite-difference velocities.
        let direct: f64 = traj.configs.windows(2).map(|w| 0.5 * ((&w[1] - &w[0]) / dt).norm_squared()).sum();
        let start = (k % 2 == 0).then(|| &traj.configs[0]);
        let form = build_smoothness(n, d, dt, start).unwrap();
        let free = form.free_block(&traj).unwrap();
        let quad = 0.5 * (free.transpose() * form.a() * &free).trace() + (free.transpose() * form.b()).trace() + form.c0();
        worst = worst.max((quad - direct).abs());
    }
    let detail = format!("100 trajectories, worst |quadratic form - direct sum| = {worst:.2e}");
    if worst <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_3() -> Outcome {
    let chain = robots::planar3();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut decreased = 0;
    let mut smallest_drop = f64::INFINITY;
    for _ in 0..20 {
        let traj = random_walk(&chain, 10, 1.0, &mut rng);
        let elbow = link_point(&chain, &traj.configs[5], 2, 0.15);
        let scene = Scene::new(vec![Primitive::Sphere { center: elbow, radius: rng.gen_range(0.05..0.12) }], 0.2).unwrap();
        let in_collision = !check_trajectory_collision(&scene, &chain, &traj.configs).unwrap().collision_free();
        if !in_collision {
            return Err("constructed instance is not in collision".into());
        }
        let path = PathSpec::new(traj.configs.iter().map(|q| fk(&chain, q).unwrap()).collect()).unwrap();
        let obj = objective(&chain, &scene, &path, false);
        let before = obj.f_obs(&traj).unwrap();
        let g: DMatrix<f64> = obj.grad_obs(&traj).unwrap();
        if g.norm() == 0.0 {
            continue;
        }
        let mut stepped = traj.clone();
        stepped.add_rows(&g, -1e-4 / g.norm(), 0);
        let after = obj.f_obs(&stepped).unwrap();
        if after < before {
            decreased += 1;
            smallest_drop = smallest_drop.min(before - after);
        }
    }
    let detail = format!("{decreased}/20 in-collision instances decreased, smallest drop {smallest_drop:.2e}");
    if decreased == 20 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn first_time_below(history: &[HistoryEntry], threshold: f64) -> Option<f64> {
    history.iter().find(|h| h.pose_error < threshold).map(|h| h.time)
}

fn solve_file(rel: &str, clock: ClockKind, budget: f64, seed: u64) -> Result<(Problem, SolveResult), String> {
    let mut problem = io::load_problem(&data(rel)).map_err(|e| e.to_string())?;
    problem.params.clock = clock;
    problem.params.budget = budget;
    problem.params.seed = seed;
    problem.params.threads = 1;
    let result = torm_solve(&problem).map_err(|e| e.to_string())?;
    Ok((problem, result))
}

fn criterion_4(histories: &mut Vec<Vec<HistoryEntry>>) -> Outcome {
    let (problem, result) = solve_file("problems/planar3_line.toml", ClockKind::Wall, 10.0, 0)?;
    let p = &problem.params;
    let weights = p.weights(problem.path.len());
    let defaults = problem.path.n() == 100
        && weights.lambda1 == 1.8
        && weights.lambda2 == 5.0 / 101.0
        && p.eta1 == 0.03
        && p.eta2 == 1.0
        && p.tsgd_iterations == 60
        && p.variant == Variant::Full
        && problem.scene.is_empty();
    histories.push(result.history.clone());
    if !defaults {
        return Err("problem does not use the required setup".into());
    }
    let best = result.best.as_ref().ok_or("no trajectory found")?;
    let m = compute_metrics(&best.traj, &problem.path, &problem.chain, p.w_rot).map_err(|e| e.to_string())?;
    let reached = first_time_below(&result.history, 1e-4);
    let detail = format!("n = 100, final pose error {:.3e}, below 1e-4 after {:.3} s (wall)", m.pose_error, reached.unwrap_or(f64::NAN));
    match reached {
        Some(t) if t <= 10.0 && m.pose_error < 1e-4 => Ok(detail),
        _ => Err(detail),
    }
}

fn criterion_5(histories: &mut Vec<Vec<HistoryEntry>>) -> Outcome {
    let (problem, result) = solve_file("problems/fetch_square_obstacles.toml", ClockKind::Wall, 60.0, 0)?;
    histories.push(result.history.clone());
    let has_table = problem.scene.obstacles.iter().any(|o| matches!(o, Primitive::HalfSpace { .. }));
    let has_box = problem.scene.obstacles.iter().any(|o| matches!(o, Primitive::Box { .. }));
    if problem.chain.dof() != 7 || !has_table || !has_box {
        return Err("problem is not the 7-DoF table and box scene".into());
    }
    if result.status != SolveStatus::Solved {
        return Err(format!("no feasible trajectory within 60 s ({} rounds)", result.rounds));
    }
    let best = result.best.as_ref().unwrap();
    let report = result.report.as_ref().unwrap();
    let m = compute_metrics(&best.traj, &problem.path, &problem.chain, problem.params.w_rot).map_err(|e| e.to_string())?;
    let colliding = report.clearance.colliding_waypoints().len();
    let detail = format!(
        "n = {}, pose error {:.3e}, {} colliding waypoints, velocity {}, singularity {}, min clearance {:.3} m, found at {:.2} s",
        problem.path.n(),
        m.pose_error,
        colliding,
        report.velocity_ok,
        report.singularity_ok,
        report.clearance.worst.map_or(f64::NAN, |w| w.clearance),
        result.history.last().map_or(f64::NAN, |h| h.time)
    );
    if colliding == 0 && report.feasible() && m.pose_error < 1e-3 && result.history.last().is_some_and(|h| h.time <= 60.0) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn non_increasing(history: &[HistoryEntry]) -> bool {
    history.windows(2).all(|w| w[1].cost <= w[0].cost && w[1].pose_error <= w[0].pose_error && w[1].time >= w[0].time)
}

fn criterion_6(mut histories: Vec<Vec<HistoryEntry>>) -> Outcome {
    for (rel, variant, threads, clock) in [
        ("problems/planar3_line.toml", Variant::Full, 1, ClockKind::Work),
        ("problems/planar3_line.toml", Variant::NoTsgd, 1, ClockKind::Work),
        ("problems/planar3_line.toml", Variant::NoIe, 1, ClockKind::Work),
        ("problems/planar3_line.toml", Variant::Full, 3, ClockKind::Wall),
        ("problems/fetch_s_curve.toml", Variant::Full, 1, ClockKind::Work),
        ("problems/fetch_rotation.toml", Variant::NoIe, 1, ClockKind::Work),
        ("problems/fetch_hello.toml", Variant::Full, 2, ClockKind::Wall),
    ] {
        let mut problem = io::load_problem(&data(rel)).map_err(|e| e.to_string())?;
        problem.params.variant = variant;
        problem.params.threads = threads;
        problem.params.clock = clock;
        problem.params.budget = 4.0;
        histories.push(torm_solve(&problem).map_err(|e| e.to_string())?.history);
    }
    let entries: usize = histories.iter().map(Vec::len).sum();
    let bad = histories.iter().filter(|h| !non_increasing(h)).count();
    let detail = format!("{} solves, {entries} history entries, {bad} non-monotone", histories.len());
    if bad == 0 && entries > 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_7() -> Outcome {
    let problem = io::load_problem(&data("problems/planar3_line.toml")).map_err(|e| e.to_string())?;
    let suite = Suite {
        seed_base: 0,
        entries: vec![SuiteEntry {
            name: "line".into(),
            problem,
            variants: Variant::ALL.to_vec(),
        }],
    };
    let opts = BenchOptions {
        runs: 20,
        budget: Some(30.0),
        clock: Some(ClockKind::Work),
        jobs: 1,
    };
    let rows = run_bench(&suite, &opts).map_err(|e| e.to_string())?;
    let error = |variant: Variant, seed: u64| {
        rows.iter()
            .find(|r| r.variant == variant && r.seed == seed && r.solved())
            .and_then(|r| r.pose_error)
            .unwrap_or(f64::INFINITY)
    };
    let (mut beats_tsgd, mut beats_ie) = (0, 0);
    for seed in 0..20 {
        let full = error(Variant::Full, seed);
        beats_tsgd += (full.is_finite() && full <= error(Variant::NoTsgd, seed)) as usize;
        beats_ie += (full.is_finite() && full <= error(Variant::NoIe, seed)) as usize;
    }
    let mean = |v: Variant| (0..20).map(|s| error(v, s)).sum::<f64>() / 20.0;
    let detail = format!(
        "full <= no-tsgd in {beats_tsgd}/20, full <= no-ie in {beats_ie}/20 (mean pose error full {:.3e}, no-tsgd {:.3e}, no-ie {:.3e}; 30 s work-clock budget)",
        mean(Variant::Full),
        mean(Variant::NoTsgd),
        mean(Variant::NoIe)
    );
    if beats_tsgd >= 15 && beats_ie >= 15 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_8() -> Outcome {
    let chain = robots::planar3();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let gate = ConstraintGate {
        velocity_check: true,
        manipulability_threshold: manipulability_threshold(&chain, &mut rng, 1000).map_err(|e| e.to_string())?,
    };
    let empty = Scene::default();
    let traj = |configs: Vec<[f64; 3]>| Trajectory::new(configs.into_iter().map(|q| JointVector::from_row_slice(&q)).collect(), 1.0).unwrap();
    let bent = [0.3, 1.0, 0.8];
    let mut failures = Vec::new();

    // (a) joint 0 crosses its upper limit of pi in small steps.
    let limits = traj((0..=10).map(|i| [2.9 + 0.5 * (1.0 - ((i as f64 - 5.0) / 5.0).abs()), 1.0, 0.8]).collect());
    let r = check_constraints(&limits, &chain, &empty, &gate).map_err(|e| e.to_string())?;
    if r.limits_ok || !(r.collision_free && r.velocity_ok && r.singularity_ok) {
        failures.push("a");
    }
    let form = build_smoothness(limits.n(), 3, 1.0, None).map_err(|e| e.to_string())?;
    let projected = smooth_projection(&limits, &chain, &form, 1.0, 10).map_err(|e| e.to_string())?;
    if !check_constraints(&projected, &chain, &empty, &gate).map_err(|e| e.to_string())?.feasible() {
        failures.push("a (after projection)");
    }

    // (b) joint 0 jumps 2.5 rad in one 1 s step; its limit is 2 rad/s.
    let velocity = traj(vec![bent, bent, [2.8, 1.0, 0.8], [2.8, 1.0, 0.8]]);
    let r = check_constraints(&velocity, &chain, &empty, &gate).map_err(|e| e.to_string())?;
    if r.velocity_ok || !(r.collision_free && r.limits_ok && r.singularity_ok) {
        failures.push("b");
    }

    // (c) elbow and wrist straighten fully mid-trajectory.
    let singular = traj((0..=20).map(|i| {
        let s = ((i as f64 - 10.0) / 10.0).abs();
        [0.3, s * 1.0, s * 0.8]
    }).collect());
    let r = check_constraints(&singular, &chain, &empty, &gate).map_err(|e| e.to_string())?;
    if r.singularity_ok || r.min_manipulability_waypoint != 10 || !(r.collision_free && r.limits_ok && r.velocity_ok) {
        failures.push("c");
    }

    // (d) a sphere placed on the forearm at the middle waypoint.
    let moving = traj((0..=10).map(|i| [0.3 + 0.05 * i as f64, 1.0, 0.8]).collect());
    let at = link_point(&chain, &moving.configs[5], 2, 0.15);
    let scene = Scene::new(vec![Primitive::Sphere { center: at, radius: 0.05 }], 0.2).unwrap();
    let r = check_constraints(&moving, &chain, &scene, &gate).map_err(|e| e.to_string())?;
    if r.collision_free || !r.clearance.colliding_waypoints().contains(&5) || !(r.velocity_ok && r.limits_ok && r.singularity_ok) {
        failures.push("d");
    }

    if failures.is_empty() {
        Ok(format!("limit, velocity, singularity and collision cases each rejected by their own flag (threshold {:.3e})", gate.manipulability_threshold))
    } else {
        Err(format!("wrong verdict for case(s) {}", failures.join(", ")))
    }
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let problem = data("problems/planar3_line.toml");
    let mut outputs = Vec::new();
    for run in 0..2 {
        let traj = dir.path().join(format!("traj{run}.csv"));
        let hist = dir.path().join(format!("hist{run}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_torm"))
            .arg("solve")
            .arg(&problem)
            .args(["--seed", "7", "--threads", "1", "--out"])
            .arg(&traj)
            .arg("--history")
            .arg(&hist)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!("solve failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        outputs.push((std::fs::read(&traj).map_err(|e| e.to_string())?, std::fs::read(&hist).map_err(|e| e.to_string())?));
    }
    let detail = format!("trajectory {} bytes, history {} bytes", outputs[0].0.len(), outputs[0].1.len());
    if outputs[0] == outputs[1] && !outputs[0].0.is_empty() {
        Ok(format!("byte-identical: {detail}"))
    } else {
        Err(format!("outputs differ: {detail}"))
    }
}

fn report(n: usize, name: &str, outcome: Outcome, failed: &mut Vec<usize>) {
    match outcome {
        Ok(detail) => println!("criterion {n} PASS  {name}: {detail}"),
        Err(detail) => {
            println!("criterion {n} FAIL  {name}: {detail}");
            failed.push(n);
        }
    }
}

fn main() {
    let mut failed = Vec::new();
    let mut histories = Vec::new();
    report(1, "gradient correctness", criterion_1(), &mut failed);
    report(2, "smoothness quadratic form", criterion_2(), &mut failed);
    report(3, "obstacle descent", criterion_3(), &mut failed);
    report(4, "desk-scale accuracy", criterion_4(&mut histories), &mut failed);
    report(5, "obstacle scene", criterion_5(&mut histories), &mut failed);
    report(6, "anytime monotonicity", criterion_6(histories), &mut failed);
    report(7, "ablation trend", criterion_7(), &mut failed);
    report(8, "constraint gate", criterion_8(), &mut failed);
    report(9, "determinism", criterion_9(), &mut failed);
    if failed.is_empty() {
        println!("acceptance: all 9 criteria pass");
    } else {
        println!("acceptance: failed {:?}", failed);
        std::process::exit(1);
    }
}
