use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn lrtl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrtl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(config: &str, out: &Path) -> Output {
    let o = lrtl(&[
        "synth",
        "--config",
        path(&configs().join(config)),
        "--out",
        path(out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    o
}

/// Every file under `dir` with its bytes, sorted by relative path.
fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_writes_a_scene_with_n_times_t_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let o = synth("synth_minimal.json", tmp.path());
    let line = stdout(&o);
    assert!(
        line.contains("T=8") && line.contains("K_gt=2") && line.contains("mode=planar2d"),
        "{line}"
    );
    let n: usize = line
        .split_whitespace()
        .find_map(|w| w.strip_prefix("N="))
        .unwrap()
        .parse()
        .unwrap();
    let rows = fs::read_to_string(tmp.path().join("trajectories.csv"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(rows, n * 8 + 1);
    assert!(tmp.path().join("manifest.json").exists());
    assert!(tmp.path().join("masks").read_dir().unwrap().count() == 8);
    assert!(tmp.path().join("flows").read_dir().unwrap().count() == 7);
}

#[test]
fn synth_is_byte_identical_across_runs_and_seed_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (
        tmp.path().join("a"),
        tmp.path().join("b"),
        tmp.path().join("c"),
    );
    synth("synth_minimal.json", &a);
    synth("synth_minimal.json", &b);
    assert_eq!(snapshot(&a), snapshot(&b));
    let cfg = configs().join("synth_minimal.json");
    let o = lrtl(&[
        "synth",
        "--config",
        path(&cfg),
        "--out",
        path(&c),
        "--seed",
        "7",
    ]);
    assert_eq!(code(&o), 0);
    assert_ne!(snapshot(&a), snapshot(&c));
}

#[test]
fn affine_synth_reports_the_rank_check() {
    let tmp = tempfile::tempdir().unwrap();
    let line = stdout(&synth("synth_affine3.json", tmp.path()));
    assert!(line.contains("rank_check=pass"), "{line}");
}

#[test]
fn config_and_io_errors_have_distinct_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"mode":"planar2d","num_objects":2,"frames":8,"grid":[32,32],"points_per_object":20,"motion_seed":0,"colour":1}"#).unwrap();
    let o = lrtl(&["synth", "--config", path(&bad), "--out", path(tmp.path())]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));

    let invalid = tmp.path().join("invalid.json");
    fs::write(&invalid, r#"{"mode":"planar2d","num_objects":0,"frames":8,"grid":[32,32],"points_per_object":20,"motion_seed":0}"#).unwrap();
    assert_eq!(
        code(&lrtl(&[
            "synth",
            "--config",
            path(&invalid),
            "--out",
            path(tmp.path())
        ])),
        3
    );

    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let cfg = configs().join("synth_minimal.json");
    let o = lrtl(&[
        "synth",
        "--config",
        path(&cfg),
        "--out",
        path(&blocker.join("sub")),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("file"), "{}", stderr(&o));

    let o = lrtl(&[
        "segment",
        "--scene",
        path(&tmp.path().join("missing")),
        "--out",
        path(&tmp.path().join("o")),
    ]);
    assert_eq!(code(&o), 2);
    assert_eq!(code(&lrtl(&["unknown-command"])), 3);
    assert_eq!(code(&lrtl(&["--help"])), 0);
}

#[test]
fn kmeans_on_two_blobs_writes_labels_and_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    let line = stdout(&synth("synth_two_blobs.json", &scene));
    let n: usize = line
        .split_whitespace()
        .find_map(|w| w.strip_prefix("N="))
        .unwrap()
        .parse()
        .unwrap();
    let out = tmp.path().join("out");
    let cfg = configs().join("segment_kmeans.json");
    let o = lrtl(&[
        "segment",
        "--config",
        path(&cfg),
        "--scene",
        path(&scene),
        "--out",
        path(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let labels = fs::read_to_string(out.join("labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), n + 1);
    assert!(labels.starts_with("track_id,label\n"));
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    let ari = m["ari"].as_f64().unwrap();
    assert!((-1.0..=1.0).contains(&ari));
    assert!(m.get("fg_ari").is_some());
    assert_eq!(m["best_k"], 2);

    let csv_out = tmp.path().join("csv");
    let o = lrtl(&[
        "segment",
        "--config",
        path(&cfg),
        "--scene",
        path(&scene),
        "--out",
        path(&csv_out),
        "--format",
        "csv",
    ]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(csv_out.join("metrics.csv")).unwrap();
    assert!(
        csv.starts_with("method,best_k,ari,fg_ari,jaccard,k_pred,k_true\nkmeans,2,"),
        "{csv}"
    );
}

#[test]
fn ssc_recovers_the_two_subspace_scene() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth("synth_two_subspaces.json", &scene);
    let out = tmp.path().join("out");
    let cfg = configs().join("segment_ssc.json");
    let o = lrtl(&[
        "segment",
        "--config",
        path(&cfg),
        "--scene",
        path(&scene),
        "--out",
        path(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["ari"].as_f64().unwrap(), 1.0);
}

#[test]
fn lrtl_segment_is_deterministic_and_writes_a_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth("synth_minimal.json", &scene);
    let cfg = tmp.path().join("seg.json");
    fs::write(
        &cfg,
        r#"{"method": "lrtl", "optim": {"k": 4, "steps": 40}}"#,
    )
    .unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = lrtl(&[
            "segment",
            "--config",
            path(&cfg),
            "--scene",
            path(&scene),
            "--out",
            path(&out),
            "--seed",
            "3",
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        out
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(snapshot(&a), snapshot(&b));
    let trace = fs::read_to_string(a.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 41);
    assert!(trace.starts_with("step,loss_total,l_f,l_t,l_tau\n"));

    fs::write(&cfg, r#"{"method": "lrtl", "optim": {"k": 1}}"#).unwrap();
    let o = lrtl(&[
        "segment",
        "--config",
        path(&cfg),
        "--scene",
        path(&scene),
        "--out",
        path(&tmp.path().join("c")),
    ]);
    assert_eq!(code(&o), 3);
}

fn small_sweep(tmp: &Path) -> PathBuf {
    let cfg = tmp.join("sweep.json");
    fs::write(
        &cfg,
        r#"{"eta": [0.0, 0.5, 1.0], "s": [-1, 0, 1], "tau": [0.01, 20.0], "trials": 3, "seed": 4}"#,
    )
    .unwrap();
    cfg
}

#[test]
fn sweep_is_deterministic_and_atomic() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth("synth_landscape4.json", &scene);
    let cfg = small_sweep(tmp.path());
    let run = |out: &Path| {
        lrtl(&[
            "sweep",
            "--config",
            path(&cfg),
            "--scene",
            path(&scene),
            "--out",
            path(out),
        ])
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&run(&a)), 0);
    assert_eq!(code(&run(&b)), 0);
    assert_eq!(snapshot(&a), snapshot(&b));
    let csv = fs::read_to_string(a.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3 * 3 * 2 + 1);
    assert!(csv.starts_with("eta,s,tau,trials,loss_mean,loss_std"));

    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let bad = blocker.join("out");
    assert_eq!(code(&run(&bad)), 2);
    assert!(!bad.join("sweep.csv").exists());
}

#[test]
fn default_sweep_on_the_bundled_scene_passes_its_checks() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth("synth_landscape4.json", &scene);
    let out = tmp.path().join("out");
    let cfg = configs().join("sweep_default.json");
    let o = lrtl(&[
        "sweep",
        "--config",
        path(&cfg),
        "--scene",
        path(&scene),
        "--out",
        path(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5 * 9 * 4 + 1);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(summary["violations"].as_array().unwrap().len(), 0);
}

#[test]
fn violated_landscape_check_exits_one_naming_the_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let scene_cfg = tmp.path().join("persp.json");
    fs::write(
        &scene_cfg,
        r#"{"mode":"rigid3d_perspective","num_objects":4,"frames":10,"grid":[64,64],"points_per_object":40,"motion_seed":5}"#,
    )
    .unwrap();
    let scene = tmp.path().join("scene");
    assert_eq!(
        code(&lrtl(&[
            "synth",
            "--config",
            path(&scene_cfg),
            "--out",
            path(&scene)
        ])),
        0
    );
    let cfg = tmp.path().join("sweep.json");
    fs::write(
        &cfg,
        r#"{"eta": [0.0], "s": [0, 1], "tau": [0.01], "trials": 3,
            "checks": {"eta_monotone": false, "tau_monotone": false, "asymmetry": false, "minimum_at_truth": true}}"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = lrtl(&[
        "sweep",
        "--config",
        path(&cfg),
        "--scene",
        path(&scene),
        "--out",
        path(&out),
    ]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(
        err.contains("(eta=0, s=0, tau=0.01)") && err.contains("(eta=0, s=1, tau=0.01)"),
        "{err}"
    );
    assert!(out.join("sweep.csv").exists());
}

#[test]
fn gradcheck_passes_skips_degenerate_and_is_reproducible() {
    let cfg = configs().join("gradcheck.json");
    let a = lrtl(&["gradcheck", "--config", path(&cfg), "--seed", "2"]);
    let b = lrtl(&["gradcheck", "--config", path(&cfg), "--seed", "2"]);
    assert_eq!(code(&a), 0, "{}", stdout(&a));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(
        text.contains("traj_loss_lt: max rel_error") && text.contains("flow_loss: max rel_error")
    );
    assert!(stderr(&a).contains("warning") && stderr(&a).contains("skipped"));

    let tmp = tempfile::tempdir().unwrap();
    let o = lrtl(&["gradcheck", "--out", path(tmp.path()), "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(tmp.path().join("gradcheck.csv")).unwrap();
    assert_eq!(csv.lines().count(), 101);
}
