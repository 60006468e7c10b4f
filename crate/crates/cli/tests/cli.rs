use std::path::Path;
use std::process::{Command, Output};

use depthguide::io::read_pfm;

fn depthguide(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_depthguide"))
        .args(args)
        .args(["--out", out.to_str().unwrap(), "--profile", "desk64"])
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\n{}", o.status.code(), String::from_utf8_lossy(&o.stderr));
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn render_lr_writes_four_maps_and_a_manifest_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&depthguide(out, &["render-lr", "--scene", "sphere", "--seed", "4"]));
    }
    for f in ["color.png", "depth.pfm", "normal.pfm", "alpha.pfm"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(read_pfm(a.join("depth.pfm")).unwrap().dims(), (64, 64));
    let m = json(&a.join("render_lr.manifest.json"));
    assert_eq!(m["schema_version"], 1);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 4);
    assert_eq!(m["config_sha256"], json(&b.join("render_lr.manifest.json"))["config_sha256"]);
    assert!(m["timings_ms"]["render_lr"].as_f64().unwrap() > 0.0);
}

#[test]
fn bad_scene_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let o = depthguide(&out, &["render-lr", "--scene", "/no/such/scene.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    assert_eq!(depthguide(&out, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(depthguide(&out, &["render-lr", "--profile", "desk32"]).status.code(), Some(2));
}

#[test]
fn staged_pipeline_through_the_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(&depthguide(out, &["render-lr", "--scene", "two-sphere"]));
    ok(&depthguide(out, &["build-depth", "--scene", "two-sphere"]));
    let md = read_pfm(out.join("multi_depth.pfm")).unwrap();
    assert_eq!((md.dims(), md.channels()), ((256, 256), 3));
    assert!(md.data().chunks(3).all(|p| p[0] <= p[1] && p[1] <= p[2]));
    let manifest = json(&out.join("build_depth.manifest.json"));
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 3);

    let o = depthguide(out, &["render-hr", "--scene", "two-sphere", "--report", "json"]);
    ok(&o);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["budget"]["queries_per_foreground_pixel"], 3.0);
    assert_eq!(
        report["budget"]["field_queries"].as_u64().unwrap(),
        3 * report["budget"]["foreground_pixels"].as_u64().unwrap()
    );
    assert!(out.join("hr_color.png").exists() && out.join("budget.json").exists());
}

#[test]
fn broken_stage_inputs_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(&depthguide(out, &["render-lr"]));
    // missing normals
    std::fs::rename(out.join("normal.pfm"), out.join("moved.pfm")).unwrap();
    assert_eq!(depthguide(out, &["build-depth"]).status.code(), Some(3));
    // resolution mismatch
    let small = depthguide::Raster::new(8, 8, 3);
    depthguide::io::write_pfm(out.join("normal.pfm"), &small).unwrap();
    assert_eq!(depthguide(out, &["build-depth"]).status.code(), Some(3));
    // unsorted multi-depth
    let bad = depthguide::Raster::from_fn(4, 4, |x, _| x as f32);
    let unsorted = depthguide::Raster::stack(&[&bad.map(|v| v + 2.0), &bad, &bad]).unwrap();
    depthguide::io::write_pfm(out.join("multi_depth.pfm"), &unsorted).unwrap();
    depthguide::io::write_pfm(out.join("hr_mask.pfm"), &depthguide::Raster::filled(4, 4, 1, 1.0)).unwrap();
    assert_eq!(depthguide(out, &["render-hr"]).status.code(), Some(3));
    // no multi-depth at all
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert_eq!(depthguide(&empty, &["render-hr"]).status.code(), Some(3));
}

#[test]
fn aggregate_only_keeps_constant_depth() {
    let dir = tempfile::tempdir().unwrap();
    let depth = dir.path().join("disc.pfm");
    depthguide::io::write_pfm(&depth, &depthguide::Raster::filled(9, 7, 1, 2.25)).unwrap();
    ok(&depthguide(dir.path(), &["build-depth", "--aggregate-only", "--depth", depth.to_str().unwrap()]));
    let agg = read_pfm(dir.path().join("aggregated.pfm")).unwrap();
    assert_eq!(agg.channels(), 3);
    assert!(agg.data().iter().all(|v| *v == 2.25));
}

#[test]
fn full_pipeline_with_oracle_scores() {
    let dir = tempfile::tempdir().unwrap();
    let o = depthguide(dir.path(), &["render-hr", "--full-pipeline", "--oracle", "--report", "json", "--seed", "9"]);
    ok(&o);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["oracle"]["psnr"].as_f64().unwrap() > 25.0);
    assert_eq!(report["oracle"]["dense"]["queries_per_pixel"], 72.0);
    assert!(dir.path().join("oracle_color.png").exists());
}

#[test]
fn bench_appends_rows_with_run_ids() {
    let dir = tempfile::tempdir().unwrap();
    for _ in 0..2 {
        ok(&depthguide(dir.path(), &["bench", "--suite", "sphere,tilted-plane", "--runs", "1"]));
    }
    let csv = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("run_id,scene,"));
    assert_eq!(lines.len(), 5);
    let header: Vec<&str> = lines[0].split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    for (i, line) in lines[1..].iter().enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[0], if i < 2 { "1" } else { "2" });
        let (dense, guided, speedup): (f64, f64, f64) =
            (f[col("dense_ms")].parse().unwrap(), f[col("guided_ms")].parse().unwrap(), f[col("speedup")].parse().unwrap());
        assert!((speedup - dense / guided).abs() < 0.01 * speedup + 0.01);
    }
    assert!(dir.path().join("bench_run2.json").exists());
}

#[test]
fn sweep_accepts_typeset_minus_and_rejects_bad_specs() {
    let dir = tempfile::tempdir().unwrap();
    ok(&depthguide(dir.path(), &["sweep", "--yaw", "\u{2212}0.2:0.2:2", "--images"]));
    let rep = json(&dir.path().join("sweep.json"));
    assert_eq!(rep["views"].as_array().unwrap().len(), 2);
    assert_eq!(rep["yaws"][0], -0.2);
    assert!(dir.path().join("view01_oracle.png").exists());
    assert_eq!(std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap().lines().count(), 3);
    let bad = dir.path().join("bad");
    assert_eq!(depthguide(&bad, &["sweep", "--yaw", "-0.4:0.4"]).status.code(), Some(2));
    assert!(!bad.exists());
}
