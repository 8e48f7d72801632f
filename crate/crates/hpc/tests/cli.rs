use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hpc::ply::read_ply_data;
use hpc::tables::read_label_csv;

fn hpc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hpc"))
        .args(args)
        .current_dir(dir)
        .env_remove("HPC_THREADS")
        .output()
        .expect("run hpc")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL_SCENE: &str = r#"{"extent": 1.5, "poles": 2, "spheres": 1, "clutter_points": 100}"#;
const SMALL_NET: &str = r#"{"depth": 2, "base_channels": 4, "kernel_points": 7}"#;

fn small_scene(dir: &Path, name: &str, seed: u64) -> PathBuf {
    std::fs::write(dir.join("scene.json"), SMALL_SCENE).unwrap();
    ok(&hpc(
        &[
            "--quiet",
            "--seed",
            &seed.to_string(),
            "synth",
            "--spec",
            "scene.json",
            "--out",
            name,
        ],
        dir,
    ));
    dir.join(name)
}

#[test]
fn gen_kernels_writes_unit_sphere_points() {
    let dir = tempfile::tempdir().unwrap();
    ok(&hpc(
        &["gen-kernels", "--shape", "sphere", "--n", "15", "--out", "k.ply"],
        dir.path(),
    ));
    let data = read_ply_data(dir.path().join("k.ply")).unwrap();
    assert_eq!(data.cloud.len(), 15);
    for p in data.cloud.points() {
        assert!((p.norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    ok(&hpc(
        &["--quiet", "gen-kernels", "--shape", "line", "--out", "k.ply"],
        dir.path(),
    ));
    let out = hpc(
        &[
            "respond", "--cloud", "k.ply", "--kernel", "line", "--radius", "0", "--out", "r.ply",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let out = hpc(
        &[
            "respond", "--cloud", "k.ply", "--kernel", "wobble", "--radius", "1", "--out", "r.ply",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let out = hpc(&["ablate", "--axis", "colour", "--out", "a.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_exits_with_one_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = hpc(
        &[
            "respond",
            "--cloud",
            "absent.ply",
            "--kernel",
            "line",
            "--radius",
            "0.1",
            "--out",
            "r.ply",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("absent.ply"), "{}", stderr(&out));
}

#[test]
fn respond_writes_colored_ply_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let scene = small_scene(dir.path(), "s.ply", 0);
    let n = read_ply_data(&scene).unwrap().cloud.len();
    ok(&hpc(
        &[
            "--quiet", "respond", "--cloud", "s.ply", "--kernel", "plane", "--radius", "0.1", "--f", "sum", "--out",
            "r.ply",
        ],
        dir.path(),
    ));
    let data = read_ply_data(dir.path().join("r.ply")).unwrap();
    assert_eq!(data.feature_names, ["red", "green", "blue", "response"]);
    assert_eq!(data.cloud.len(), n);
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("index,x,y,z,response"));
    assert_eq!(lines.count(), n);
}

#[test]
fn synth_is_deterministic_and_writes_the_spec() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_scene(dir.path(), "a.ply", 5);
    let b = small_scene(dir.path(), "b.ply", 5);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    let spec = std::fs::read_to_string(dir.path().join("a.json")).unwrap();
    assert!(spec.contains("\"seed\": 5"), "{spec}");
}

#[test]
fn train_eval_export_and_thread_independence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_scene(d, "s.ply", 1);
    std::fs::write(d.join("net.json"), SMALL_NET).unwrap();
    let train = |threads: &str, out: &str| {
        ok(&hpc(
            &[
                "--quiet",
                "--threads",
                threads,
                "--seed",
                "2",
                "train",
                "--config",
                "net.json",
                "--data",
                "s.ply",
                "--epochs",
                "3",
                "--out",
                out,
                "--no-timing",
            ],
            d,
        ))
    };
    train("1", "one.hpcw");
    train("3", "three.hpcw");
    let log1 = std::fs::read(d.join("one.csv")).unwrap();
    assert_eq!(log1, std::fs::read(d.join("three.csv")).unwrap());
    assert_eq!(
        std::fs::read(d.join("one.hpcw")).unwrap(),
        std::fs::read(d.join("three.hpcw")).unwrap()
    );
    let log = String::from_utf8(log1).unwrap();
    assert!(log.starts_with("epoch,loss,miou\n"));
    assert_eq!(log.lines().count(), 4);

    let out = hpc(&["eval", "--checkpoint", "one.hpcw", "--data", "s.ply"], d);
    ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    for key in ["floor", "pole", "sphere", "clutter", "miou", "accuracy"] {
        assert!(text.contains(key), "{text}");
    }

    ok(&hpc(
        &[
            "--quiet",
            "export-features",
            "--checkpoint",
            "one.hpcw",
            "--cloud",
            "s.ply",
            "--out",
            "f.ply",
        ],
        d,
    ));
    let f = read_ply_data(d.join("f.ply")).unwrap();
    assert_eq!(f.feature_names.len(), 8 + 1);
    assert_eq!(f.feature_names.last().map(String::as_str), Some("prediction"));

    ok(&hpc(
        &[
            "eval",
            "--checkpoint",
            "one.hpcw",
            "--data",
            "s.ply",
            "--predictions",
            "pred.csv",
        ],
        d,
    ));
    let file = std::io::BufReader::new(std::fs::File::open(d.join("pred.csv")).unwrap());
    let predicted = read_label_csv(file).unwrap();
    let feats = f.cloud.features().unwrap();
    let exported: Vec<i32> = (0..feats.rows())
        .map(|r| feats.get(r, feats.cols() - 1) as i32)
        .collect();
    assert_eq!(predicted, exported);
}

#[test]
fn timed_log_has_seconds_column() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_scene(d, "s.ply", 1);
    std::fs::write(d.join("net.json"), SMALL_NET).unwrap();
    ok(&hpc(
        &[
            "--quiet", "train", "--config", "net.json", "--data", "s.ply", "--epochs", "1", "--out", "m.hpcw",
        ],
        d,
    ));
    let log = std::fs::read_to_string(d.join("m.csv")).unwrap();
    assert!(log.starts_with("epoch,loss,miou,seconds\n"));
}

#[test]
fn eval_rejects_corrupted_magic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_scene(d, "s.ply", 1);
    std::fs::write(d.join("net.json"), SMALL_NET).unwrap();
    ok(&hpc(
        &[
            "--quiet", "train", "--config", "net.json", "--data", "s.ply", "--epochs", "1", "--out", "m.hpcw",
        ],
        d,
    ));
    let mut bytes = std::fs::read(d.join("m.hpcw")).unwrap();
    bytes[..4].copy_from_slice(b"JUNK");
    std::fs::write(d.join("bad.hpcw"), bytes).unwrap();
    let out = hpc(&["eval", "--checkpoint", "bad.hpcw", "--data", "s.ply"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("HPCW"), "{}", stderr(&out));
}

#[test]
fn ablate_kernel_shape_has_one_row_per_shape() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("scene.json"), SMALL_SCENE).unwrap();
    std::fs::write(d.join("net.json"), SMALL_NET).unwrap();
    ok(&hpc(
        &[
            "--quiet",
            "ablate",
            "--config",
            "net.json",
            "--scene",
            "scene.json",
            "--axis",
            "kernel-shape",
            "--seeds",
            "1",
            "--epochs",
            "1",
            "--train-scenes",
            "1",
            "--out",
            "ab.csv",
        ],
        d,
    ));
    let csv = std::fs::read_to_string(d.join("ab.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    for (row, shape) in rows.iter().zip(["sphere", "plane", "line", "center-point"]) {
        assert!(row.starts_with(&format!("{shape},")), "{row}");
    }
    let text = std::fs::read_to_string(d.join("ab.txt")).unwrap();
    assert_eq!(text.lines().count(), 6);
}
