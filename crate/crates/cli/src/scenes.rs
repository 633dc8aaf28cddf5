//! Cameras, render pipelines and the first-order optimization driver
//! shared by the experiments.

use anyhow::{bail, Result};
use rts_core::autodiff::{Scalar, Tape};
use rts_core::evaluator::{build_position_buffer, GBuffer};
use rts_core::math::Vec3;
use rts_core::optim::{step_gd, Adam};
use rts_core::scene::{Camera, PoseParams};
use rts_core::shading::ShadedLayer;
use rts_core::splat::{composite_over, splat_multilayer};
use rts_core::Image;

use crate::config::{ExperimentConfig, OptimizerKind};
use crate::output::LossLog;

/// Camera looking at the origin from `distance`, raised by `elevation_deg`
/// and turned by `azimuth_deg` about the vertical axis.
pub fn orbit_camera(cfg: &ExperimentConfig, azimuth_deg: f64) -> Result<Camera> {
    let c = &cfg.camera;
    let (e, a) = (c.elevation_deg.to_radians(), azimuth_deg.to_radians());
    let eye = Vec3::new(-c.distance * e.cos() * a.sin(), c.distance * e.sin(), -c.distance * e.cos() * a.cos());
    Ok(Camera::look_at(
        eye,
        Vec3::zero(),
        Vec3::new(0.0, 1.0, 0.0),
        c.fov_deg.to_radians(),
        cfg.width,
        cfg.height,
        c.near,
        c.far,
    )?)
}

/// Camera at the origin looking down +z.
pub fn axis_camera(cfg: &ExperimentConfig) -> Result<Camera> {
    let c = &cfg.camera;
    Ok(Camera::new(
        Vec3::zero(),
        Vec3::zero(),
        c.fov_deg.to_radians(),
        cfg.width,
        cfg.height,
        c.near,
        c.far,
    )?)
}

/// Projects the G-buffer, splats the shaded layers and composites over `background`.
pub fn splat<S: Scalar>(
    g: &GBuffer<S>,
    shaded: &ShadedLayer<S>,
    camera: &Camera,
    pose: Option<&PoseParams<S>>,
    background: Option<[f64; 3]>,
) -> Result<Image<S>> {
    let positions = build_position_buffer(g, camera, pose);
    Ok(splat_multilayer(shaded, &positions, background)?)
}

/// Premultiplied image composited over an opaque color, for display.
pub fn over_background(img: &Image<f64>, bg: [f64; 3]) -> Image<f64> {
    let b = [bg[0], bg[1], bg[2], 1.0];
    Image {
        width: img.width,
        height: img.height,
        pixels: img.pixels.iter().map(|&p| composite_over(p, b)).collect(),
    }
}

/// A differentiable scalar objective over a flat parameter vector.
pub trait Problem {
    fn loss<S: Scalar>(&self, x: &[S]) -> Result<S>;

    /// Projects parameters back onto their feasible set after a step.
    fn project(&self, _x: &mut [f64]) {}
}

/// Loss and reverse-mode gradient.
pub fn value_and_grad<P: Problem>(p: &P, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let tape = Tape::with_capacity(1 << 20);
    let vars = tape.vars(x);
    let out = p.loss(&vars)?;
    if let Some(node) = tape.first_non_finite() {
        bail!("non-finite value at tape node {node}");
    }
    let g = tape.gradient(out).wrt_all(&vars);
    Ok((out.value(), g))
}

/// Runs `iterations` first-order steps, logging the loss at every iterate
/// (iteration 0 is the initialization). Aborts when the loss exceeds ten
/// times its initial value; the log keeps the records up to that point.
pub fn descend<P: Problem>(
    p: &P,
    x: &mut [f64],
    optimizer: OptimizerKind,
    lr: f64,
    iterations: usize,
    log: &mut LossLog,
) -> Result<()> {
    let mut adam = Adam::new(x.len(), lr);
    let mut initial = None;
    for it in 0..=iterations {
        let (loss, g) = value_and_grad(p, x)?;
        log.push(it, loss, x);
        let first = *initial.get_or_insert(loss);
        if loss > 10.0 * first && first > 0.0 {
            bail!("diverged at iteration {it}: loss {loss:e} > 10 × initial {first:e}");
        }
        if it == iterations {
            break;
        }
        match optimizer {
            OptimizerKind::Adam => adam.step(x, &g),
            OptimizerKind::Gd => step_gd(x, &g, lr),
            OptimizerKind::Lm => bail!("Levenberg-Marquardt needs a residual formulation"),
        }
        p.project(x);
        if log::log_enabled!(log::Level::Debug) && it % 10 == 0 {
            log::debug!("iteration {it}: loss {loss:e}");
        }
    }
    Ok(())
}

/// Four-connected flood fill of the background from the image border;
/// returns the number of enclosed background components (holes) with at
/// least `min_size` pixels.
pub fn count_holes(mask: &[bool], width: usize, height: usize, min_size: usize) -> usize {
    let mut label = vec![0u32; mask.len()];
    let mut holes = 0;
    let mut next = 1u32;
    for start in 0..mask.len() {
        if mask[start] || label[start] != 0 {
            continue;
        }
        let mut stack = vec![start];
        label[start] = next;
        let (mut size, mut touches_border) = (0, false);
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y) = (i % width, i / width);
            if x == 0 || y == 0 || x + 1 == width || y + 1 == height {
                touches_border = true;
            }
            let mut visit = |j: usize| {
                if !mask[j] && label[j] == 0 {
                    label[j] = next;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < width {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - width);
            }
            if y + 1 < height {
                visit(i + width);
            }
        }
        if !touches_border && size >= min_size {
            holes += 1;
        }
        next += 1;
    }
    holes
}
