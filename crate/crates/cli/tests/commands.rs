use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_safenav"));
    c.env("SAFENAV_LOG", "quiet");
    c
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// Copies a shipped scenario into `dir` with its world path made absolute,
/// applying `edit` to the text.
fn scenario_copy(dir: &Path, name: &str, edit: impl Fn(String) -> String) -> PathBuf {
    let text = fs::read_to_string(scenarios().join(name)).unwrap();
    let worlds = scenarios().join("worlds").canonicalize().unwrap();
    let text = text.replace("\"worlds/", &format!("\"{}/", worlds.display()));
    let path = dir.join(name);
    fs::write(&path, edit(text)).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn run_ground_static_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let scenario = scenarios().join("ground_static.cfg");
    let o = run(&["run", "--scenario", scenario.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "7"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = read_json(&out.join("metrics.json"));
    assert_eq!(m["reached"], Value::Bool(true));
    assert_eq!(m["collided"], Value::Bool(false));
    for key in ["settling_time_s", "rms_u", "min_psi0"] {
        assert!(m.get(key).is_some(), "missing {key}");
    }
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,x1,x2,x3,x4,ud1,ud2,u1,u2,psi0,psi1,lambda,mu,omega,d,clearance,k\n"));
    assert_eq!(csv.lines().count(), 1 + 2001);
}

#[test]
fn metrics_round_trip_through_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let scenario = scenarios().join("ground_fov120.cfg");
    let o = run(&["run", "--scenario", scenario.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let log = safenav::sim::TrajectoryLog::read_csv(fs::File::open(out.join("trajectory.csv")).unwrap(), vec![13.0, 5.0]).unwrap();
    let recomputed = serde_json::to_value(safenav::sim::compute_metrics(&log)).unwrap();
    assert_eq!(recomputed, read_json(&out.join("metrics.json")));
}

#[test]
fn start_inside_an_obstacle_is_a_precondition_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario_copy(dir.path(), "ground_static.cfg", |t| {
        t.replace("x0 = [5.0, 2.0, 0.0, 0.0]", "x0 = [8.5, 2.8, 0.0, 0.0]")
    });
    let out = dir.path().join("out");
    let o = run(&["run", "--scenario", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("psi0(0,x0) = -"), "{err}");
}

#[test]
fn unbounded_mover_collides() {
    let dir = tempfile::tempdir().unwrap();
    let world = dir.path().join("ram.toml");
    fs::write(
        &world,
        "dim = 2\n[bounds]\nmin = [-2.0, -2.0]\nmax = [20.0, 20.0]\n\
         [[dynamic]]\nradius = 1.0\nwaypoints = [[9.0, 2.0], [-1.0, 2.0]]\nspeed = 6.0\n",
    )
    .unwrap();
    let cfg = scenario_copy(dir.path(), "ground_static.cfg", |t| {
        t.lines()
            .map(|l| if l.starts_with("world =") { format!("world = {:?}", world.display().to_string()) } else { l.to_string() })
            .collect::<Vec<_>>()
            .join("\n")
            .replace("x0 = [5.0, 2.0, 0.0, 0.0]", "x0 = [2.0, 2.0, 0.0, 0.0]")
            .replace("duration = 20.0", "duration = 4.0")
    });
    let out = dir.path().join("out");
    let o = run(&["run", "--scenario", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(read_json(&out.join("metrics.json"))["collided"], Value::Bool(true));
}

#[test]
fn missing_and_malformed_inputs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["run", "--scenario", "no/such/file.cfg", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no/such/file.cfg"));

    let cfg = scenario_copy(dir.path(), "ground_static.cfg", |t| t.replace("beams = 100", "beams = \"many\""));
    let o = run(&["run", "--scenario", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("beams") && err.contains("line"), "{err}");

    assert_eq!(code(&run(&["run", "--scenario", "x.cfg"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["verify", "--suite", "nonsense"])), 1);
    let s = scenarios().join("ground_dynamic.cfg");
    let s = s.to_str().unwrap();
    assert_eq!(code(&run(&["montecarlo", "--scenario", s, "--obstacles", "3..1", "--trials", "2", "--out", "o"])), 1);
    assert_eq!(code(&run(&["montecarlo", "--scenario", s, "--obstacles", "3", "--trials", "0", "--out", "o"])), 1);
    assert_eq!(code(&run(&["montecarlo", "--scenario", s, "--obstacles", "3", "--trials", "2", "--jobs", "0", "--out", "o"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn montecarlo_output_is_independent_of_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenarios().join("ground_dynamic.cfg");
    let mut files = Vec::new();
    for jobs in ["1", "3"] {
        let out = dir.path().join(format!("jobs{jobs}"));
        let o = run(&[
            "montecarlo", "--scenario", s.to_str().unwrap(), "--obstacles", "5..7", "--trials", "6", "--jobs", jobs,
            "--seed", "11", "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        files.push((fs::read(out.join("table2.json")).unwrap(), fs::read(out.join("boxstats.json")).unwrap()));
    }
    assert_eq!(files[0], files[1]);
    let table: Value = serde_json::from_slice(&files[0].0).unwrap();
    let rows = table["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for (row, n) in rows.iter().zip(5..) {
        assert_eq!(row["n_obstacles"], n);
        for key in ["percent_safe", "percent_successful"] {
            let p = row[key].as_f64().unwrap();
            assert!((0.0..=100.0).contains(&p));
        }
    }
}

#[test]
fn montecarlo_rejects_the_quadrotor() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenarios().join("quadrotor_static.cfg");
    let o = run(&[
        "montecarlo", "--scenario", s.to_str().unwrap(), "--obstacles", "1", "--trials", "1",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn verify_softmath_passes_and_is_repeatable() {
    let a = run(&["verify", "--suite", "softmath", "--seed", "3"]);
    let b = run(&["verify", "--suite", "softmath", "--seed", "3"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stdout));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8_lossy(&a.stdout);
    assert!(text.contains("PASS softmath/soft-min/max bounds (10000 cases)"));
}

#[test]
fn verify_controller_passes() {
    let o = run(&["verify", "--suite", "controller"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}
