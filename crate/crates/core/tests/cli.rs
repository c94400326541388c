use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use geomotion::cli::{eval, run, Cli, EvalArgs};
use geomotion::io::load_trajectory;

fn geomotion(args: &[&str]) -> geomotion::Result<()> {
    let cli = Cli::try_parse_from(std::iter::once("geomotion").chain(args.iter().copied()))
        .expect("arguments parse");
    run(cli)
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small toy dataset and a quickly trained checkpoint in `dir`.
fn tiny_checkpoint(dir: &Path) -> (PathBuf, PathBuf) {
    let data = dir.join("toy.json");
    let ckpt = dir.join("model.json");
    geomotion(&[
        "gen-data",
        "--kind",
        "toy-jc",
        "--out",
        path_str(&data),
        "--seed",
        "4",
    ])
    .unwrap();
    geomotion(&[
        "train",
        "--data",
        path_str(&data),
        "--out",
        path_str(&ckpt),
        "--epochs",
        "20",
        "--head-epochs",
        "5",
        "--hidden",
        "16,8",
        "--rbf-k",
        "20",
        "--seed",
        "4",
    ])
    .unwrap();
    (data, ckpt)
}

#[test]
fn gen_data_is_a_function_of_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    for (name, seed) in [("a.json", "7"), ("b.json", "7"), ("c.json", "8")] {
        geomotion(&[
            "gen-data",
            "--kind",
            "pouring",
            "--out",
            path_str(&p(name)),
            "--seed",
            seed,
        ])
        .unwrap();
    }
    let read = |name: &str| fs::read(p(name)).unwrap();
    assert_eq!(read("a.json"), read("b.json"));
    assert_ne!(read("a.json"), read("c.json"));
}

#[test]
fn train_then_eval_reconstructs_the_toy_set() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy.json");
    let ckpt = dir.path().join("model.json");
    geomotion(&["gen-data", "--kind", "toy-jc", "--out", path_str(&data)]).unwrap();
    geomotion(&[
        "train",
        "--data",
        path_str(&data),
        "--out",
        path_str(&ckpt),
        "--epochs",
        "300",
        "--head-epochs",
        "50",
        "--hidden",
        "64,32",
        "--rbf-k",
        "100",
    ])
    .unwrap();
    let report = eval(&EvalArgs {
        ckpt,
        data,
        seed: 0,
    })
    .unwrap();
    assert_eq!(report.poses, 500);
    assert!(
        report.position_rmse <= 0.05 * report.position_diagonal,
        "{report:?}"
    );
    assert!(report.orientation_error_deg <= 10.0, "{report:?}");
    assert!(report.neg_elbo.is_finite() && report.kl >= 0.0);
}

#[test]
fn plan_with_equal_endpoints_writes_one_pose() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ckpt) = tiny_checkpoint(dir.path());
    let out = dir.path().join("traj.csv");
    let pose = "0.5,2;0,1,0";
    geomotion(&[
        "plan",
        "--ckpt",
        path_str(&ckpt),
        "--grid",
        "20",
        "--start",
        pose,
        "--goal",
        pose,
        "--out",
        path_str(&out),
    ])
    .unwrap();
    assert_eq!(load_trajectory(&out).unwrap().len(), 1);

    geomotion(&[
        "plan",
        "--ckpt",
        path_str(&ckpt),
        "--grid",
        "20",
        "--start",
        pose,
        "--goal",
        "-0.5,0.5;1,0,0",
        "--obstacle",
        "0.5,1,0.2,50",
        "--refine",
        "--samples",
        "30",
        "--out",
        path_str(&out),
    ])
    .unwrap();
    assert_eq!(load_trajectory(&out).unwrap().len(), 30);
}

#[test]
fn simulate_writes_ticks_and_timing() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ckpt) = tiny_checkpoint(dir.path());
    let script = dir.path().join("script.json");
    fs::write(
        &script,
        r#"{"tick_rate_hz": 100, "total_ticks": 4,
            "timeline": [{"tick": 0, "obstacles": []},
                         {"tick": 2, "obstacles": [{"center": [0.5, 1.0], "radius": 0.2, "strength": 50}]}],
            "goal": {"position": [-0.5, 0.5], "orientation": [1, 0, 0]}}"#,
    )
    .unwrap();
    let out = dir.path().join("sim");
    geomotion(&[
        "simulate",
        "--ckpt",
        path_str(&ckpt),
        "--grid",
        "20",
        "--script",
        path_str(&script),
        "--start",
        "0.5,2;0,1,0",
        "--out",
        path_str(&out),
    ])
    .unwrap();
    for k in 0..4 {
        assert!(out.join(format!("tick_{k:05}.csv")).exists());
    }
    let timing: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("timing.json")).unwrap()).unwrap();
    assert_eq!(timing["ticks"], 4);
    assert!(timing["median_ms"].as_f64().unwrap() > 0.0);
    assert!(timing["p95_ms"].as_f64().unwrap() >= timing["median_ms"].as_f64().unwrap());

    let err = geomotion(&[
        "simulate",
        "--ckpt",
        path_str(&ckpt),
        "--grid",
        "20",
        "--script",
        path_str(&script),
        "--out",
        path_str(&out),
    ])
    .unwrap_err();
    assert!(err.to_string().contains("start"), "{err}");
}

#[test]
fn plot_writes_svg_with_paths() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ckpt) = tiny_checkpoint(dir.path());
    let traj = dir.path().join("traj.csv");
    geomotion(&[
        "plan",
        "--ckpt",
        path_str(&ckpt),
        "--grid",
        "20",
        "--start",
        "0.5,2;0,1,0",
        "--goal",
        "-0.5,0.5;1,0,0",
        "--out",
        path_str(&traj),
    ])
    .unwrap();
    for mode in ["magnification", "variance"] {
        let svg = dir.path().join(format!("{mode}.svg"));
        geomotion(&[
            "plot",
            "--ckpt",
            path_str(&ckpt),
            "--mode",
            mode,
            "--cells",
            "10",
            "--path",
            path_str(&traj),
            "--obstacle",
            "0.5,1,0.2,50",
            "--grid",
            "20",
            "--out",
            path_str(&svg),
        ])
        .unwrap();
        let text = fs::read_to_string(&svg).unwrap();
        assert_eq!(text.matches("<rect").count(), 100);
        assert_eq!(text.matches("<polyline").count(), 1);
    }
}

#[test]
fn malformed_files_name_the_offending_field() {
    let dir = tempfile::tempdir().unwrap();
    let (data, ckpt) = tiny_checkpoint(dir.path());
    let text = fs::read_to_string(&ckpt).unwrap();
    let broken = dir.path().join("broken.json");
    fs::write(&broken, text.replacen("\"gamma\"", "\"gama\"", 1)).unwrap();
    let err = geomotion(&[
        "eval",
        "--ckpt",
        path_str(&broken),
        "--data",
        path_str(&data),
    ])
    .unwrap_err()
    .to_string();
    assert!(
        err.contains("position_precision") && err.contains("gamma"),
        "{err}"
    );

    let script = dir.path().join("script.json");
    fs::write(
        &script,
        r#"{"tick_rate_hz": "fast", "total_ticks": 1, "timeline": []}"#,
    )
    .unwrap();
    let err = geomotion(&[
        "simulate",
        "--ckpt",
        path_str(&ckpt),
        "--script",
        path_str(&script),
        "--out",
        path_str(dir.path()),
    ])
    .unwrap_err()
    .to_string();
    assert!(err.contains("tick_rate_hz"), "{err}");

    let data_text = fs::read_to_string(&data).unwrap();
    fs::write(&broken, data_text.replacen("\"positions\"", "\"posit\"", 1)).unwrap();
    let err = geomotion(&[
        "eval",
        "--ckpt",
        path_str(&ckpt),
        "--data",
        path_str(&broken),
    ])
    .unwrap_err()
    .to_string();
    assert!(err.contains("positions"), "{err}");
}

#[test]
fn bad_pose_syntax_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ckpt) = tiny_checkpoint(dir.path());
    let err = geomotion(&[
        "plan",
        "--ckpt",
        path_str(&ckpt),
        "--grid",
        "10",
        "--start",
        "1,2",
        "--goal",
        "1,2;1,0,0",
        "--out",
        path_str(&dir.path().join("x.csv")),
    ])
    .unwrap_err();
    assert!(err.to_string().contains("pose"), "{err}");
}
