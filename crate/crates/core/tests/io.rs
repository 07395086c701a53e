use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use torm::io;
use torm::objective::Trajectory;

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

#[test]
fn exported_problems_load_back_identically() {
    for name in ["planar3_line", "fetch_square_obstacles"] {
        let problem = io::load_problem(&data(&format!("problems/{name}.toml"))).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join(format!("{name}.toml"));
        io::save_problem(&problem, &file).unwrap();
        let back = io::load_problem(&file).unwrap();
        assert_eq!(back, problem, "{name}");
    }
}

#[test]
fn trajectory_csv_round_trip_is_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let configs = (0..40).map(|_| DVector::from_fn(7, |_, _| rng.gen_range(-3.0..3.0))).collect();
    let traj = Trajectory::new(configs, 0.1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("t.csv");
    io::save_trajectory(&traj, &file).unwrap();
    let back = io::load_trajectory(&file).unwrap();
    assert_eq!(back.len(), traj.len());
    for (a, b) in back.configs.iter().zip(&traj.configs) {
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    assert_eq!(back.dt.to_bits(), traj.dt.to_bits());
}

#[test]
fn schema_errors_name_the_line() {
    let text = "name = \"bad\"\nchain_file = \"chains/planar3.toml\"\n\n[params]\nbudget = 1.0\nbugdet = 2.0\n";
    let err = io::parse_problem(text, Path::new("bad.toml"), &data("")).unwrap_err().to_string();
    assert!(err.starts_with("bad.toml:6:"), "{err}");
}

#[test]
fn missing_path_section_is_rejected() {
    let text = "name = \"nopath\"\nchain_file = \"chains/planar3.toml\"\n";
    assert!(io::parse_problem(text, Path::new("nopath.toml"), &data("")).is_err());
}
