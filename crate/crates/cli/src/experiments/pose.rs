//! Six-DOF pose recovery from a silhouette.

use std::path::Path;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rts_core::autodiff::{Scalar, Tape};
use rts_core::evaluator::{evaluate_mesh, evaluate_positions, GBuffer};
use rts_core::io::load_obj;
use rts_core::math::{Mat3, Vec3};
use rts_core::optim::{loss_l2, LevenbergMarquardt, Residual};
use rts_core::sampler::{rasterize_mesh, sample_positions_for_pose, PositionSample, SampleBuffer};
use rts_core::scene::{rotation_error, Camera, PoseParams, TriangleMesh};
use rts_core::shading::shade_silhouette;
use rts_core::Image;

use crate::config::{ExperimentConfig, OptimizerKind};
use crate::output::{overlap_image, png, prepare_dir, LossLog};
use crate::scenes::{descend, orbit_camera, over_background, splat, Problem};

/// Ground-truth orientation of the test object: three faces visible.
const TRUE_ROTATION: [f64; 3] = [0.35, 0.6, 0.15];

/// The default convex test object: a box with unequal sides.
pub fn default_mesh() -> TriangleMesh<f64> {
    TriangleMesh::subdivided_box([0.6, 0.45, 0.3], 20)
}

pub struct PoseProblem {
    pub mesh: TriangleMesh<f64>,
    pub camera: Camera,
    pub layers: usize,
    pub target: Image<f64>,
    pub fast_path: bool,
}

impl PoseProblem {
    /// Silhouette rendered at pose `x = [rx, ry, rz, tx, ty, tz]`.
    pub fn render<S: Scalar>(&self, x: &[S]) -> Result<Image<S>> {
        let pose = PoseParams::from_slice(x);
        let at = pose.value();
        let g: GBuffer<S> = if self.fast_path {
            let samples = sample_positions_for_pose(&self.mesh, &self.camera, Some(&at), self.layers)?;
            evaluate_positions(&samples)
        } else {
            let samples = rasterize_mesh(&self.mesh, &self.camera, Some(&at), self.layers)?;
            evaluate_mesh(&self.mesh.map_scalar(S::constant), &samples)?
        };
        splat(&g, &shade_silhouette(&g), &self.camera, Some(&pose), None)
    }

    /// Mean squared alpha difference; equals the L₂ image loss because a
    /// silhouette has identical channels.
    pub fn loss_value(&self, x: &[f64]) -> Result<f64> {
        let r = Residual::residuals(self, x)?;
        Ok(r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64)
    }
}

impl Residual for PoseProblem {
    fn residuals<S: Scalar>(&self, x: &[S]) -> rts_core::Result<Vec<S>> {
        let img = self
            .render(x)
            .map_err(|e| rts_core::Error::Invalid { what: "pose render", why: e.to_string() })?;
        Ok(img.pixels.iter().zip(&self.target.pixels).map(|(r, t)| r[3] - t[3]).collect())
    }
}

impl Problem for PoseProblem {
    fn loss<S: Scalar>(&self, x: &[S]) -> Result<S> {
        Ok(loss_l2(&self.render(x)?, &self.target)?)
    }
}

pub struct PoseReport {
    pub truth: PoseParams,
    pub initial: PoseParams,
    pub estimate: PoseParams,
    pub rotation_error_deg: f64,
    /// Translation error as a fraction of the mesh extent.
    pub translation_error: f64,
    pub log: LossLog,
    /// First iteration whose loss is below the configured target.
    pub iterations_to_target: Option<usize>,
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vec3<f64> {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v.scale(1.0 / n);
        }
    }
}

/// Ground truth and seeded perturbation: a rotation of `rotation_deg` about a
/// random axis and a translation of `translation_fraction · extent` in a
/// random direction.
pub fn perturbed_pose(cfg: &ExperimentConfig, extent: f64) -> (PoseParams, PoseParams) {
    let truth = PoseParams {
        rotation: Vec3::new(TRUE_ROTATION[0], TRUE_ROTATION[1], TRUE_ROTATION[2]),
        translation: Vec3::zero(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let axis = unit_vector(&mut rng);
    let delta = Mat3::from_axis_angle(axis.scale(cfg.pose.rotation_deg.to_radians()));
    let rotation = delta.mul_mat(&truth.matrix()).to_axis_angle();
    let shift = unit_vector(&mut rng).scale(cfg.pose.translation_fraction * extent);
    let initial = PoseParams {
        rotation,
        translation: truth.translation + shift,
    };
    (truth, initial)
}

pub fn problem(cfg: &ExperimentConfig) -> Result<(PoseProblem, PoseParams, PoseParams)> {
    let mesh = match &cfg.pose.mesh {
        Some(p) => load_obj(p).with_context(|| format!("loading {}", p.display()))?,
        None => default_mesh(),
    };
    let camera = orbit_camera(cfg, 0.0)?;
    let (truth, initial) = perturbed_pose(cfg, mesh.extent());
    let mut p = PoseProblem {
        mesh,
        camera,
        layers: cfg.layers,
        target: Image::new(cfg.width, cfg.height),
        fast_path: cfg.pose.fast_path,
    };
    p.target = p.render(&truth.to_array())?;
    Ok((p, truth, initial))
}

/// Levenberg-Marquardt on the silhouette residuals. Stops early once no
/// damped step reduces the loss.
pub fn fit_lm(p: &PoseProblem, x: &mut [f64], iterations: usize, log: &mut LossLog) -> Result<()> {
    let initial = p.loss_value(x)?;
    log.push(0, initial, x);
    let mut lm = LevenbergMarquardt::default();
    let m = p.target.pixels.len() as f64;
    for it in 1..=iterations {
        match lm.step::<6, _>(p, x) {
            Ok(step) => {
                log.push(it, step.loss / m, x);
                if !step.accepted || step.loss == 0.0 {
                    break;
                }
            }
            Err(rts_core::Error::Singular { lambda }) => {
                log::info!("LM stopped at iteration {it}: no descent step up to λ = {lambda:e}");
                break;
            }
            Err(e) => return Err(e.into()),
        }
        if log.last_loss().is_some_and(|l| l > 10.0 * initial && initial > 0.0) {
            anyhow::bail!("diverged at iteration {it}");
        }
    }
    Ok(())
}

pub fn run(cfg: &ExperimentConfig) -> Result<PoseReport> {
    cfg.validate()?;
    let out = prepare_dir(&cfg.out)?;
    let (p, truth, initial) = problem(cfg)?;
    let extent = p.mesh.extent();
    let mut x = initial.to_array().to_vec();
    let mut log = LossLog::new();
    let result = match cfg.optimizer.kind {
        OptimizerKind::Lm => fit_lm(&p, &mut x, cfg.iterations, &mut log),
        kind => descend(&p, &mut x, kind, cfg.optimizer.learning_rate, cfg.iterations, &mut log),
    };
    log.write(&out)?;
    result?;
    let estimate = PoseParams::from_slice(&x);
    write_images(&p, &initial, &estimate, cfg.background, &out)?;
    let report = PoseReport {
        truth,
        initial,
        estimate,
        rotation_error_deg: rotation_error(&estimate, &truth).to_degrees(),
        translation_error: (estimate.translation - truth.translation).norm() / extent,
        iterations_to_target: log.first_below(cfg.pose.target_loss),
        log,
    };
    write_summary(&report, &out)?;
    Ok(report)
}

fn write_images(p: &PoseProblem, initial: &PoseParams, estimate: &PoseParams, bg: [f64; 3], out: &Path) -> Result<()> {
    let first = p.render(&initial.to_array())?;
    let last = p.render(&estimate.to_array())?;
    png(&over_background(&p.target, bg), out, "target.png")?;
    png(&over_background(&first, bg), out, "initial.png")?;
    png(&over_background(&last, bg), out, "final.png")?;
    png(&overlap_image(&first, &p.target), out, "overlap_initial.png")?;
    png(&overlap_image(&last, &p.target), out, "overlap_final.png")?;
    Ok(())
}

fn write_summary(r: &PoseReport, out: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_path(out.join("pose.csv"))?;
    w.write_record(["pose", "rx", "ry", "rz", "tx", "ty", "tz"])?;
    for (name, pose) in [("truth", &r.truth), ("initial", &r.initial), ("final", &r.estimate)] {
        let mut row = vec![name.to_string()];
        row.extend(pose.to_array().iter().map(|v| format!("{v:e}")));
        w.write_record(row)?;
    }
    w.write_record(["rotation_error_deg".to_string(), format!("{:e}", r.rotation_error_deg)])?;
    w.write_record(["translation_error_fraction".to_string(), format!("{:e}", r.translation_error)])?;
    w.flush()?;
    Ok(())
}

/// Median wall time of the differentiable stage (evaluation, projection,
/// shading, splatting, loss and reverse sweep) of the pose fast path, over
/// `repeats` runs on fixed samples.
pub fn differentiable_stage_time(
    samples: &SampleBuffer<PositionSample>,
    camera: &Camera,
    pose: &PoseParams,
    target: &Image<f64>,
    repeats: usize,
) -> Result<Duration> {
    let x = pose.to_array();
    let mut times: Vec<Duration> = (0..repeats)
        .map(|_| {
            let start = Instant::now();
            let tape = Tape::with_capacity(1 << 20);
            let v = tape.vars(&x);
            let pose = PoseParams::from_slice(&v);
            let g = evaluate_positions(samples);
            let img = splat(&g, &shade_silhouette(&g), camera, Some(&pose), None)?;
            let loss = loss_l2(&img, target)?;
            let grad = tape.gradient(loss).wrt_all(&v);
            std::hint::black_box(grad);
            Ok(start.elapsed())
        })
        .collect::<Result<_>>()?;
    times.sort();
    Ok(times[times.len() / 2])
}
