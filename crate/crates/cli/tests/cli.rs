use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dip3d::eval::{EvalReport, ResultDocument};
use dip3d::sim::GroundTruth;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn dip3d(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dip3d"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn simulate(dir: &Path, out: &str, count: &str, seed: &str) -> Output {
    let spec = data("pool_scene.json");
    dip3d(
        &[
            "simulate",
            spec.to_str().unwrap(),
            "--count",
            count,
            "--seed",
            seed,
            "--out",
            out,
        ],
        dir,
    )
}

fn listing(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_writes_frame_and_truth_pairs_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let a = simulate(tmp.path(), "a", "10", "7");
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(code(&simulate(tmp.path(), "b", "10", "7")), 0);
    let files = listing(&tmp.path().join("a"));
    assert_eq!(files.len(), 20);
    assert_eq!(
        files.iter().filter(|(n, _)| n.ends_with(".frame")).count(),
        10
    );
    assert_eq!(files, listing(&tmp.path().join("b")));
    assert_ne!(listing(&tmp.path().join("a")), {
        simulate(tmp.path(), "c", "10", "8");
        listing(&tmp.path().join("c"))
    });
}

#[test]
fn simulate_refuses_non_empty_output_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&simulate(tmp.path(), "out", "2", "1")), 0);
    let again = simulate(tmp.path(), "out", "2", "1");
    assert_eq!(code(&again), 1);
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
    let spec = data("pool_scene.json");
    let forced = dip3d(
        &[
            "simulate",
            spec.to_str().unwrap(),
            "--count",
            "2",
            "--out",
            "out",
            "--force",
        ],
        tmp.path(),
    );
    assert_eq!(code(&forced), 0);
}

#[test]
fn simulate_rejects_bad_spec() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.json"), "{\"rig\": 3}").unwrap();
    let o = dip3d(&["simulate", "bad.json", "--out", "out"], tmp.path());
    assert_eq!(code(&o), 1);
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn resolve_selects_intended_object() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&simulate(tmp.path(), "frames", "3", "7")), 0);
    let calib = data("calibration.json");
    let o = dip3d(
        &[
            "resolve",
            "--calib",
            calib.to_str().unwrap(),
            "--out",
            "results",
            "frames",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for i in 0..3 {
        let id = format!("pool_{i:05}");
        let doc = fs::read_to_string(tmp.path().join(format!("results/{id}.result"))).unwrap();
        let truth = fs::read_to_string(tmp.path().join(format!("frames/{id}.truth"))).unwrap();
        let truth = GroundTruth::from_document(&truth).unwrap();
        let ResultDocument::Resolved { object_2d_left, .. } =
            ResultDocument::from_document(&doc).unwrap()
        else {
            panic!("{id} rejected");
        };
        let p = truth.true_left_pixels[1];
        assert_eq!(truth.true_selection, 1);
        assert!((object_2d_left[0] - p.x).hypot(object_2d_left[1] - p.y) < 1e-6);
    }
}

#[test]
fn resolve_reports_rejection_with_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&simulate(tmp.path(), "frames", "1", "7")), 0);
    let calib = data("calibration.json");
    let o = dip3d(
        &[
            "resolve",
            "--calib",
            calib.to_str().unwrap(),
            "--z-gap-max",
            "0.001",
            "frames",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 2);
    let doc = ResultDocument::from_document(&String::from_utf8(o.stdout).unwrap()).unwrap();
    let ResultDocument::Rejected { stage, reason, .. } = doc else {
        panic!("not rejected")
    };
    assert_eq!(
        (stage.as_str(), reason.as_str()),
        ("pose", "InfeasiblePose")
    );
    assert!(String::from_utf8_lossy(&o.stderr).contains("pose stage"));
}

#[test]
fn flag_beats_config_file_beats_default() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&simulate(tmp.path(), "frames", "1", "7")), 0);
    fs::write(
        tmp.path().join("strict.toml"),
        "[pointing]\nz_gap_max = 0.001\n",
    )
    .unwrap();
    let calib = data("calibration.json");
    let c = calib.to_str().unwrap();
    assert_eq!(
        code(&dip3d(&["resolve", "--calib", c, "frames"], tmp.path())),
        0
    );
    assert_eq!(
        code(&dip3d(
            &["resolve", "--calib", c, "--config", "strict.toml", "frames"],
            tmp.path()
        )),
        2
    );
    let o = dip3d(
        &[
            "resolve",
            "--calib",
            c,
            "--config",
            "strict.toml",
            "--z-gap-max",
            "0.5",
            "frames",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0);
}

#[test]
fn resolve_fails_on_missing_calibration_or_bad_config() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&simulate(tmp.path(), "frames", "1", "7")), 0);
    let o = dip3d(
        &["resolve", "--calib", "missing.json", "frames"],
        tmp.path(),
    );
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("calibration"));
    fs::write(
        tmp.path().join("bad.toml"),
        "[matching]\nratio_threshold = 2.0\n",
    )
    .unwrap();
    let calib = data("calibration.json");
    let o = dip3d(
        &[
            "resolve",
            "--calib",
            calib.to_str().unwrap(),
            "--config",
            "bad.toml",
            "frames",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 1);
}

#[test]
fn resolve_refuses_to_overwrite_results() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&simulate(tmp.path(), "frames", "1", "7")), 0);
    let calib = data("calibration.json");
    let args = [
        "resolve",
        "--calib",
        calib.to_str().unwrap(),
        "--out",
        "results",
        "frames",
    ];
    assert_eq!(code(&dip3d(&args, tmp.path())), 0);
    assert_eq!(code(&dip3d(&args, tmp.path())), 1);
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(code(&dip3d(&forced, tmp.path())), 0);
}

fn pipeline(dir: &Path, jobs: &str) -> Vec<u8> {
    let calib = data("calibration.json");
    let sub = |s: &str| format!("{jobs}_{s}");
    let (frames, results, report) = (sub("frames"), sub("results"), sub("report"));
    assert_eq!(code(&simulate(dir, &frames, "25", "3")), 0);
    let r = dip3d(
        &[
            "resolve",
            "--calib",
            calib.to_str().unwrap(),
            "--jobs",
            jobs,
            "--out",
            &results,
            &frames,
        ],
        dir,
    );
    assert!(code(&r) == 0 || code(&r) == 2);
    let e = dip3d(
        &["evaluate", &results, &frames, "--out", &report, "--plots"],
        dir,
    );
    assert_eq!(code(&e), 0, "{}", String::from_utf8_lossy(&e.stderr));
    fs::read(dir.join(&report).join("report.json")).unwrap()
}

#[test]
fn full_pipeline_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let one = pipeline(tmp.path(), "1");
    let four = pipeline(tmp.path(), "4");
    assert_eq!(one, four);
    let report = EvalReport::from_document(std::str::from_utf8(&one).unwrap()).unwrap();
    assert_eq!(report.summary.count, 25);
    assert_eq!(report.summary.accuracy, 1.0);
    for f in ["table.txt", "histogram.svg"] {
        assert!(tmp.path().join("1_report").join(f).exists());
    }
}

#[test]
fn evaluate_rejects_mismatched_or_empty_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&simulate(tmp.path(), "frames", "3", "7")), 0);
    let calib = data("calibration.json");
    dip3d(
        &[
            "resolve",
            "--calib",
            calib.to_str().unwrap(),
            "--out",
            "results",
            "frames",
        ],
        tmp.path(),
    );
    fs::remove_file(tmp.path().join("frames/pool_00001.truth")).unwrap();
    let o = dip3d(
        &["evaluate", "results", "frames", "--out", "report"],
        tmp.path(),
    );
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("IdMismatch") && err.contains("pool_00001"),
        "{err}"
    );

    fs::create_dir_all(tmp.path().join("e1")).unwrap();
    fs::create_dir_all(tmp.path().join("e2")).unwrap();
    assert_eq!(
        code(&dip3d(&["evaluate", "e1", "e2", "--out", "r"], tmp.path())),
        1
    );
}

#[test]
fn sweep_writes_table_report_and_plots() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = data("pool_scene.json");
    let o = dip3d(
        &[
            "sweep",
            spec.to_str().unwrap(),
            "--depths",
            "2,4",
            "--sigmas",
            "0,1",
            "--n",
            "20",
            "--seed",
            "1",
            "--out",
            "sweep",
            "--plots",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(tmp.path().join("sweep/sweep.txt")).unwrap();
    assert_eq!(table.lines().count(), 5);
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("sweep/sweep.json")).unwrap())
            .unwrap();
    assert_eq!(doc["cells"].as_array().unwrap().len(), 4);
    // Noise-free cells are perfect.
    assert_eq!(doc["cells"][0]["summary"]["accuracy"], 1.0);
    assert_eq!(
        listing(&tmp.path().join("sweep"))
            .iter()
            .filter(|(n, _)| n.ends_with(".svg"))
            .count(),
        4
    );
}
