//! Black-box tests of the `sif` binary: argument handling, file formats,
//! stdout contract, and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sif_core::{extract, Element64, Template, TriangleMesh, Vec3, Vec3d};
use sif_core::vec3::Aabb;

fn sif() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sif"))
}

/// Fresh scratch directory per test.
fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("sif-cli-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_cube(dir: &Path) -> PathBuf {
    let path = dir.join("cube.obj");
    TriangleMesh::<f64>::axis_box(Aabb::new(Vec3::splat(-0.4), Vec3::splat(0.4)))
        .save_obj(&path)
        .unwrap();
    path
}

fn two_blob_template() -> Template<f64> {
    Template::new(
        vec![
            Element64::new(-1.0, Vec3d::new(-0.2, 0.0, 0.0), Vec3::splat(0.15)).unwrap(),
            Element64::new(-0.8, Vec3d::new(0.2, 0.05, 0.0), Vec3::splat(0.18)).unwrap(),
        ],
        -0.07,
    )
    .unwrap()
}

fn assert_code(output: &Output, expected: i32) {
    assert_eq!(
        output.status.code(),
        Some(expected),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn eval_prints_the_score_and_nothing_else() {
    let dir = scratch("eval-self");
    let cube = write_cube(&dir);
    let output = sif()
        .args(["eval"])
        .arg(&cube)
        .arg(&cube)
        .args(["--samples", "2000"])
        .output()
        .unwrap();
    assert_code(&output, 0);
    assert_eq!(String::from_utf8_lossy(&output.stdout), "100.00\n");
}

#[test]
fn sample_fit_extract_round_trip_in_text_mode() {
    let dir = scratch("round-trip");
    let cube = write_cube(&dir);
    let out = dir.join("samples");

    let output = sif()
        .arg("sample")
        .arg(&cube)
        .arg(&out)
        .args(["--resolution", "16", "--count", "300", "--seed", "3", "--text"])
        .output()
        .unwrap();
    assert_code(&output, 0);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["count"], 300);
    assert_eq!(manifest["text"], true);
    assert_eq!(manifest["leaked"], false);

    let uniform = std::fs::read_to_string(out.join("uniform.txt")).unwrap();
    let first = uniform.lines().next().unwrap();
    assert_eq!(first.split_whitespace().count(), 4, "x y z label");
    assert_eq!(uniform.lines().count(), 300);

    let template_path = dir.join("t.json");
    let trace_path = dir.join("trace.csv");
    let output = sif()
        .arg("fit")
        .arg(&out)
        .arg("--out")
        .arg(&template_path)
        .arg("--trace")
        .arg(&trace_path)
        .args(["--elements", "2", "--steps", "20"])
        .args(["--batch-uniform", "64", "--batch-surface", "64", "--log-every", "5"])
        .output()
        .unwrap();
    assert_code(&output, 0);
    Template::<f64>::load(&template_path).unwrap();
    let trace = std::fs::read_to_string(&trace_path).unwrap();
    assert!(trace.starts_with("step,total,l_u,l_s,l_c,accuracy\n"));
    assert!(trace.lines().count() > 1);

    let mesh_path = dir.join("m.obj");
    let output = sif()
        .arg("extract")
        .arg(&template_path)
        .arg("--out")
        .arg(&mesh_path)
        .args(["--res", "24"])
        .output()
        .unwrap();
    assert_code(&output, 0);
    let obj = std::fs::read_to_string(&mesh_path).unwrap();
    assert!(obj.starts_with("v "));
    assert!(obj.contains("\nf "));
}

#[test]
fn interpolate_endpoint_weight_clones_the_input_file() {
    let dir = scratch("interp");
    let a_path = dir.join("a.json");
    let b_path = dir.join("b.json");
    two_blob_template().save(&a_path).unwrap();
    Template::new(
        vec![
            Element64::new(-0.5, Vec3::zero(), Vec3::splat(0.1)).unwrap(),
            Element64::new(-1.2, Vec3d::new(0.1, -0.1, 0.2), Vec3::splat(0.2)).unwrap(),
        ],
        -0.07,
    )
    .unwrap()
    .save(&b_path)
    .unwrap();

    let c_path = dir.join("c.json");
    let output = sif()
        .arg("interpolate")
        .arg(&a_path)
        .arg(&b_path)
        .args(["--weights", "1,0"])
        .arg("--out")
        .arg(&c_path)
        .output()
        .unwrap();
    assert_code(&output, 0);
    assert_eq!(std::fs::read(&a_path).unwrap(), std::fs::read(&c_path).unwrap());
}

#[test]
fn correspond_writes_the_expected_csv() {
    let dir = scratch("correspond");
    let template = two_blob_template();
    let mesh = extract(&template, 24, 1e-3, 0.0);
    let mesh_path = dir.join("m.obj");
    mesh.save_obj(&mesh_path).unwrap();
    let template_path = dir.join("t.json");
    template.save(&template_path).unwrap();

    let csv_path = dir.join("corr.csv");
    let output = sif()
        .arg("correspond")
        .arg(&mesh_path)
        .arg(&template_path)
        .arg(&mesh_path)
        .arg(&template_path)
        .arg("--out")
        .arg(&csv_path)
        .output()
        .unwrap();
    assert_code(&output, 0);
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("src_index,dst_index,cos_distance"));
    assert_eq!(lines.next(), Some("0,0,0"));
    assert_eq!(csv.lines().count(), mesh.vertices.len() + 1);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = scratch("config");
    let cube = write_cube(&dir);
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, "count = 50\nresolution = 8\n").unwrap();

    let out1 = dir.join("from-config");
    let output = sif()
        .arg("sample")
        .arg(&cube)
        .arg(&out1)
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert_code(&output, 0);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out1.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["count"], 50);
    assert_eq!(manifest["resolution"], 8);

    let out2 = dir.join("flag-wins");
    let output = sif()
        .arg("sample")
        .arg(&cube)
        .arg(&out2)
        .arg("--config")
        .arg(&cfg)
        .args(["--count", "60"])
        .output()
        .unwrap();
    assert_code(&output, 0);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out2.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["count"], 60);
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    let dir = scratch("exit-codes");

    // 3: file system problems.
    let output = sif().args(["extract", "missing.json"]).output().unwrap();
    assert_code(&output, 3);

    // 4: present but malformed input file.
    let bad = dir.join("bad.json");
    std::fs::write(&bad, "not json").unwrap();
    let output = sif()
        .arg("extract")
        .arg(&bad)
        .arg("--out")
        .arg(dir.join("m.obj"))
        .output()
        .unwrap();
    assert_code(&output, 4);

    // 4: config file with an unknown key.
    let cfg = dir.join("bad.cfg");
    std::fs::write(&cfg, "bogus = 1\n").unwrap();
    let output = sif()
        .args(["extract", "irrelevant.json", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_code(&output, 4);

    // 2: structurally fine inputs that make no sense together.
    let a = dir.join("a.json");
    two_blob_template().save(&a).unwrap();
    let output = sif()
        .arg("interpolate")
        .arg(&a)
        .args(["--weights", "0.5,0.5", "--out"])
        .arg(dir.join("out.json"))
        .output()
        .unwrap();
    assert_code(&output, 2);

    // 2: config value that fails to parse as its flag's type.
    let cfg = dir.join("type.cfg");
    std::fs::write(&cfg, "res = abc\n").unwrap();
    let output = sif()
        .args(["extract", "irrelevant.json", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_code(&output, 2);

    // 2: clap usage errors.
    let output = sif().arg("--bogus-flag").output().unwrap();
    assert_code(&output, 2);
}
