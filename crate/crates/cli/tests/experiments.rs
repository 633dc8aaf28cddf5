use std::process::Command;

use rts_cli::config::{ExperimentConfig, ExperimentKind, OptimizerKind};
use rts_cli::experiments::{implicit, mesh_fit, pose, spline};
use rts_cli::scenes::{value_and_grad, Problem};
use rts_core::io::save_obj;
use rts_core::scene::TriangleMesh;

fn small(kind: ExperimentKind, dir: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::for_kind(kind);
    cfg.width = 64;
    cfg.height = 64;
    cfg.out = dir.to_path_buf();
    cfg
}

#[test]
fn pose_at_the_truth_stays_there() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(ExperimentKind::Pose, dir.path());
    cfg.pose.rotation_deg = 0.0;
    cfg.pose.translation_fraction = 0.0;
    cfg.iterations = 3;
    let r = pose::run(&cfg).unwrap();
    assert!(r.log.records[0].loss < 1e-24);
    assert!(r.rotation_error_deg < 1e-9 && r.translation_error < 1e-9);
}

#[test]
fn fast_path_matches_full_mesh_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(ExperimentKind::Pose, dir.path());
    let (mut p, _, initial) = pose::problem(&cfg).unwrap();
    let x = initial.to_array();
    p.fast_path = true;
    let fast = p.render(&x).unwrap();
    let (lf, gf) = value_and_grad(&p, &x).unwrap();
    p.fast_path = false;
    let full = p.render(&x).unwrap();
    let (ls, gs) = value_and_grad(&p, &x).unwrap();
    for (a, b) in fast.pixels.iter().zip(&full.pixels) {
        for c in 0..4 {
            assert!((a[c] - b[c]).abs() < 1e-12);
        }
    }
    assert!((lf - ls).abs() < 1e-12);
    for (a, b) in gf.iter().zip(&gs) {
        assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn lm_beats_gradient_descent_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(ExperimentKind::Pose, dir.path());
    cfg.iterations = 5;
    let lm = pose::run(&cfg).unwrap();
    cfg.optimizer.kind = OptimizerKind::Gd;
    cfg.optimizer.learning_rate = 1.0;
    let gd = pose::run(&cfg).unwrap();
    assert!(lm.log.last_loss().unwrap() < gd.log.last_loss().unwrap());
}

#[test]
fn spline_at_the_target_has_zero_loss_and_gradient() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(ExperimentKind::SplineFit, dir.path());
    let p = spline::problem(&cfg).unwrap();
    let (loss, g) = value_and_grad(&p, &cfg.spline.target_radii).unwrap();
    assert!(loss < 1e-24);
    assert!(g.iter().all(|v| v.abs() < 1e-12), "{g:?}");
    // A wider profile point has a positive radius gradient.
    let mut x = cfg.spline.target_radii.clone();
    x[3] += 0.1;
    let (_, g) = value_and_grad(&p, &x).unwrap();
    assert!(g[3] > 0.0, "{g:?}");
}

#[test]
fn spline_radii_stay_positive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(ExperimentKind::SplineFit, dir.path());
    let p = spline::problem(&cfg).unwrap();
    let mut x = vec![-1.0, 0.5, 0.0, 0.3];
    p.project(&mut x);
    assert!(x.iter().all(|&r| r > 0.0));
}

#[test]
fn swept_sphere_recovers_the_torus() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(ExperimentKind::ImplicitFit, dir.path());
    cfg.implicit.parameterization = "swept-sphere".into();
    cfg.iterations = 60;
    let r = implicit::run(&cfg).unwrap();
    assert!(r.final_loss < 0.1 * r.initial_loss);
    let [ring, tube] = [r.estimate[0], r.estimate[1]];
    assert!((ring - 0.8).abs() < 0.05 && (tube - 0.3).abs() < 0.05, "ring {ring}, tube {tube}");
    assert_eq!(r.final_holes, 1);
}

#[test]
fn empty_isosurface_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(ExperimentKind::ImplicitFit, dir.path());
    cfg.implicit.parameterization = "swept-sphere".into();
    cfg.implicit.target_tube_radius = 1e-3;
    let err = implicit::problem(&cfg).err().expect("no surface to render");
    assert!(err.to_string().contains("empty"), "{err}");
}

#[test]
fn color_only_mesh_fit_learns_colors() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(ExperimentKind::MeshFit, dir.path());
    cfg.mesh_fit.colors_only = true;
    cfg.iterations = 40;
    cfg.optimizer.learning_rate = 0.05;
    let r = mesh_fit::run(&cfg).unwrap();
    assert!(r.final_image_loss < 0.2 * r.initial_image_loss);
    assert!(r.final_color_error < 0.6 * r.initial_color_error);
    assert!(dir.path().join("fitted.obj").is_file());
}

#[test]
fn mesh_fit_reduces_image_loss() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(ExperimentKind::MeshFit, dir.path());
    cfg.iterations = 30;
    let r = mesh_fit::run(&cfg).unwrap();
    assert!(r.final_image_loss < 0.5 * r.initial_image_loss);
}

fn rts() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rts"))
}

#[test]
fn cli_runs_a_configured_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("spline.toml");
    std::fs::write(&config, "width = 48\nheight = 48\nout = \"run\"\n[spline]\nsegments = 8\n").unwrap();
    let status = rts()
        .args(["fit-spline", "--iters", "3", "--threads", "2", "--config"])
        .arg(&config)
        .current_dir(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let loss = std::fs::read_to_string(dir.path().join("run/loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 1 + 4);
    for f in ["timing.csv", "radii.csv", "final.png", "overlap_final.png"] {
        assert!(dir.path().join("run").join(f).is_file(), "{f}");
    }
}

#[test]
fn cli_resolves_mesh_paths_against_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    std::fs::create_dir(&scene).unwrap();
    save_obj(&TriangleMesh::subdivided_box([0.5, 0.4, 0.3], 2), &scene.join("box.obj")).unwrap();
    std::fs::write(scene.join("render.toml"), "[render]\nmesh = \"box.obj\"\ndump_samples = true\n").unwrap();
    let out = dir.path().join("out");
    let status = rts()
        .args(["render", "--config"])
        .arg(scene.join("render.toml"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("render.png").is_file() && out.join("alpha.pfm").is_file());
    assert!(std::fs::read_dir(&out).unwrap().count() > 2, "sample layers dumped");
}

#[test]
fn cli_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[camera]\nfov = 30.0\n").unwrap();
    let out = rts().args(["fit-pose", "--config"]).arg(&config).output().unwrap();
    assert!(!out.status.success());
    std::fs::write(&config, "experiment = \"spline-fit\"\n").unwrap();
    let out = rts().args(["fit-pose", "--config"]).arg(&config).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("SplineFit"));
}
