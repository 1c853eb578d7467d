use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gvf3d::scenario::{BuiltinPath, PathSpec, Scenario, SystemName};
use gvf3d::{load_scenario, RunMetadata};

fn scenario_file(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn gvf3d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gvf3d"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn simulate(name: &str, dir: &Path) -> RunMetadata {
    let file = scenario_file(name);
    let out = gvf3d(&["simulate", file.to_str().unwrap(), "-o", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    serde_json::from_str(&fs::read_to_string(dir.join("metadata.json")).unwrap()).unwrap()
}

#[test]
fn shipped_scenarios_load_with_expected_values() {
    let s1 = load_scenario(&scenario_file("scenario1.toml")).unwrap();
    assert_eq!(
        s1.path,
        PathSpec::Builtin(BuiltinPath::CylinderIntersection {
            a: 0.0,
            b: 1.5,
            big_r: 2.0,
            r: 1.0
        })
    );
    assert_eq!((s1.field.k1(), s1.field.k2()), (2.0, 2.0));
    assert_eq!(s1.system.kind, SystemName::Aircraft);
    assert_eq!(s1.initial.state, vec![1.8, 1.0, 2.0, std::f64::consts::FRAC_PI_4, 0.0]);

    let s2 = load_scenario(&scenario_file("scenario2.toml")).unwrap();
    assert_eq!(s2.path, PathSpec::Builtin(BuiltinPath::Helix));
    assert_eq!((s2.field.k1(), s2.field.k2()), (1.0, 1.0));
    assert_eq!(s2.initial.state, vec![0.1, 0.0, -5.0, std::f64::consts::PI, 0.0]);

    load_scenario(&scenario_file("perturbed_twisted.toml")).unwrap();
}

#[test]
fn scenario_round_trips_through_toml() {
    for name in ["scenario1.toml", "scenario2.toml", "perturbed_twisted.toml"] {
        let s = load_scenario(&scenario_file(name)).unwrap();
        let again = Scenario::from_toml(&s.to_toml()).unwrap();
        assert_eq!(s, again, "{name}");
        assert_eq!(s.content_hash(), again.content_hash());
    }
}

#[test]
fn builtin_and_expressions_together_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario_file("scenario2.toml"))
        .unwrap()
        .replace("[path.builtin]", "[path]\nphi1 = \"x\"\nphi2 = \"y\"\n[path.builtin]");
    let file = dir.path().join("both.toml");
    fs::write(&file, text).unwrap();
    assert!(load_scenario(&file).is_err());
    let out = gvf3d(&["simulate", file.to_str().unwrap(), "-o", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("not both"), "{}", stderr(&out));
}

#[test]
fn unknown_keys_and_bad_gains_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let base = fs::read_to_string(scenario_file("scenario2.toml")).unwrap();
    for (tag, text) in [
        ("typo", base.replace("t_end", "t_ned")),
        ("gain", base.replace("k1 = 1.0", "k1 = -1.0")),
        ("state", base.replace("3.141592653589793, 0.0]", "3.141592653589793]")),
    ] {
        let file = dir.path().join(format!("{tag}.toml"));
        fs::write(&file, text).unwrap();
        let out = gvf3d(&["simulate", file.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(4), "{tag}: {}", stderr(&out));
    }
}

#[test]
fn shipped_aircraft_runs_converge() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["scenario1.toml", "scenario2.toml"] {
        let meta = simulate(name, &dir.path().join(name));
        assert_eq!(meta.exit_code, 0);
        assert!(meta.final_error < 0.05, "{name}: final error {}", meta.final_error);
        assert!((meta.t_final - 60.0).abs() < 1e-9);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    simulate("scenario2.toml", &a);
    simulate("scenario2.toml", &b);
    for f in ["trajectory.csv", "metadata.json", "trajectory.svg", "error.svg"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn metadata_matches_schema() {
    let schema_text =
        fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/run_metadata.schema.json")).unwrap();
    let schema: serde_json::Value = serde_json::from_str(&schema_text).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for name in ["scenario1.toml", "perturbed_twisted.toml"] {
        let out = dir.path().join(name);
        simulate(name, &out);
        let meta: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
        let errors: Vec<String> = validator.iter_errors(&meta).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{name}: {errors:?}");
    }
}

#[test]
fn several_scenarios_run_in_parallel_into_subdirectories() {
    let dir = tempfile::tempdir().unwrap();
    let s1 = scenario_file("scenario1.toml");
    let s2 = scenario_file("scenario2.toml");
    let out = gvf3d(&[
        "simulate",
        s1.to_str().unwrap(),
        s2.to_str().unwrap(),
        "-o",
        dir.path().to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for sub in ["scenario1", "scenario2"] {
        assert!(dir.path().join(sub).join("trajectory.csv").is_file());
    }
}

#[test]
fn find_singular_reports_three_points_for_cylinders() {
    let file = scenario_file("scenario1.toml");
    let out = gvf3d(&["find-singular", file.to_str().unwrap(), "--box", "-4:4", "--grid", "40"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 3, "{text}");
    let mut zs: Vec<f64> = rows
        .iter()
        .map(|r| r.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    zs.sort_by(f64::total_cmp);
    assert!((zs[0] - 1.5).abs() < 1e-9 && (zs[1] - 1.5).abs() < 1e-9);
    assert!((zs[2] - 2.046288).abs() < 1e-5);
}

#[test]
fn plotting_an_empty_trajectory_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("empty.csv");
    fs::write(&csv, "t,x,y,z,e1,e2,e_norm,V,nke_norm\n").unwrap();
    let svg = dir.path().join("p.svg");
    let out = gvf3d(&["plot", csv.to_str().unwrap(), "--kind", "error", "-o", svg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("no samples"), "{}", stderr(&out));
    assert!(!svg.exists());
}

#[test]
fn plots_are_self_contained_svg() {
    let dir = tempfile::tempdir().unwrap();
    simulate("scenario2.toml", dir.path());
    let csv = dir.path().join("trajectory.csv");
    let scen = scenario_file("scenario2.toml");
    for extra in [
        vec!["--kind", "traj3d", "--view", "-60,20", "--scenario", scen.to_str().unwrap()],
        vec!["--kind", "traj3d", "--axes", "xz"],
        vec!["--kind", "error", "--log"],
    ] {
        let svg = dir.path().join("p.svg");
        let mut args = vec!["plot", csv.to_str().unwrap(), "-o", svg.to_str().unwrap()];
        args.extend(extra.iter().copied());
        let out = gvf3d(&args);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        let text = fs::read_to_string(&svg).unwrap();
        assert!(text.starts_with("<svg") && text.trim_end().ends_with("</svg>"));
        assert!(!text.contains("href"), "external reference in {extra:?}");
        assert!(!text.contains("<script"));
    }
}

#[test]
fn iss_sweep_bounds_grow_with_amplitude() {
    let file = scenario_file("scenario2.toml");
    let out = gvf3d(&["iss-sweep", file.to_str().unwrap(), "--amplitudes", "0.01,0.05,0.1", "--t-end", "20"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let bounds: Vec<f64> = stdout(&out)
        .lines()
        .skip(1)
        .map(|r| r.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(bounds.len(), 3);
    assert!(bounds.windows(2).all(|w| w[0] <= w[1]), "{bounds:?}");
    assert!(stderr(&out).contains("non-decreasing"));
}

#[test]
fn analyze_fits_a_rate_no_slower_than_the_bound() {
    let dir = tempfile::tempdir().unwrap();
    let scen = scenario_file("perturbed_twisted.toml");
    let text = fs::read_to_string(&scen)
        .unwrap()
        .replace("kind = \"perturbed\"", "kind = \"raw\"")
        .replace("[system.disturbance]\nkind = \"sinusoid\"\namplitude = [0.02, 0.02, 0.0]\nfrequency = [1.0, 0.5, 0.0]\nphase = [0.0, 1.5707963267948966, 0.0]\n", "");
    let file = dir.path().join("raw.toml");
    fs::write(&file, text).unwrap();
    let out = gvf3d(&["simulate", file.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let json = dir.path().join("fit.json");
    let csv = dir.path().join("trajectory.csv");
    let out = gvf3d(&[
        "analyze",
        csv.to_str().unwrap(),
        "--fit-rate",
        "--scenario",
        file.to_str().unwrap(),
        "--json",
        json.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(json).unwrap()).unwrap();
    let fit = &v["rate_fit"];
    assert!(fit["fitted_rate"].as_f64().unwrap() >= fit["theoretical_rate"].as_f64().unwrap());
    assert_eq!(fit["violations"].as_u64(), Some(0));
}

#[test]
fn fit_rate_without_scenario_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    simulate("scenario2.toml", dir.path());
    let csv = dir.path().join("trajectory.csv");
    let out = gvf3d(&["analyze", csv.to_str().unwrap(), "--fit-rate"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn exit_codes_for_usage() {
    assert_eq!(gvf3d(&["--help"]).status.code(), Some(0));
    assert_eq!(gvf3d(&["--version"]).status.code(), Some(0));
    assert_eq!(gvf3d(&["frobnicate"]).status.code(), Some(4));
    let file = scenario_file("scenario1.toml");
    let out = gvf3d(&["find-singular", file.to_str().unwrap(), "--box", "3:-3"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn normalized_run_into_a_singular_point_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
t_end = 5.0
[path.builtin]
name = "cylinder_intersection"
a = 0.0
b = 1.5
big_r = 2.0
r = 1.0
[field]
k1 = 2.0
k2 = 2.0
[system]
kind = "normalized"
[initial]
state = [0.0, 0.0, 2.296288036245159]
"#;
    let file = dir.path().join("s.toml");
    fs::write(&file, text).unwrap();
    let out_dir = dir.path().join("o");
    let out = gvf3d(&["simulate", file.to_str().unwrap(), "-o", out_dir.to_str().unwrap()]);
    let meta: RunMetadata =
        serde_json::from_str(&fs::read_to_string(out_dir.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(out.status.code(), Some(meta.exit_code));
    assert_eq!(meta.exit_code, 2, "{:?}", meta.events);
}
