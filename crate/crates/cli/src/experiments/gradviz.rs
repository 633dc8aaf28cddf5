//! Image derivatives with respect to an object translation, compared against
//! finite differences of full re-renders.

use anyhow::{bail, Result};
use rts_core::autodiff::{Dual, Scalar};
use rts_core::evaluator::evaluate_mesh;
use rts_core::math::Vec3;
use rts_core::optim::loss_l2;
use rts_core::sampler::{rasterize_mesh, MeshSample, SampleBuffer};
use rts_core::scene::{Camera, TriangleMesh};
use rts_core::shading::shade_vertex_color;
use rts_core::Image;

use crate::config::ExperimentConfig;
use crate::output::{derivative_image, png, prepare_dir};
use crate::scenes::{axis_camera, over_background, splat};

const OBJECT_COLOR: [f64; 3] = [1.0, 0.15, 0.1];
const OCCLUDER_COLOR: [f64; 3] = [0.1, 0.8, 0.2];

/// A moving object and an optional static occluder, combined in one mesh.
/// Vertices below `object_vertices` and triangles below `object_triangles`
/// belong to the object.
pub struct GradScene {
    pub mesh: TriangleMesh<f64>,
    pub object_vertices: usize,
    pub object_triangles: usize,
    pub camera: Camera,
    /// World translation that moves the object by one pixel on screen.
    pub pixel_step: f64,
}

fn colored(mut m: TriangleMesh<f64>, c: [f64; 3]) -> TriangleMesh<f64> {
    m.colors = Some(vec![Vec3::from(c); m.positions.len()]);
    m
}

/// Rotates a mesh about the view axis through its centroid.
fn rotated(mut m: TriangleMesh<f64>, angle: f64) -> TriangleMesh<f64> {
    let n = m.positions.len() as f64;
    let c = m.positions.iter().fold(Vec3::zero(), |a, &p| a + p).scale(1.0 / n);
    let (s, co) = angle.sin_cos();
    for p in &mut m.positions {
        let d = *p - c;
        *p = c + Vec3::new(co * d.x - s * d.y, s * d.x + co * d.y, d.z);
    }
    m
}

fn append(a: &mut TriangleMesh<f64>, b: TriangleMesh<f64>) {
    let base = a.positions.len() as u32;
    a.positions.extend(b.positions);
    if let (Some(ca), Some(cb)) = (a.colors.as_mut(), b.colors) {
        ca.extend(cb);
    }
    a.triangles.extend(b.triangles.iter().map(|t| t.map(|i| i + base)));
    a.normals = None;
    a.uvs = None;
}

impl GradScene {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let camera = axis_camera(cfg)?;
        const DEPTH: f64 = 4.0;
        let (mut mesh, occluder) = match cfg.gradviz.scene.as_str() {
            "square" => (TriangleMesh::quad([0.0, 0.0], [0.5, 0.5], DEPTH), None),
            "disk" => (TriangleMesh::disk([0.0, 0.0], 0.55, 96, DEPTH), None),
            "tilted" => (rotated(TriangleMesh::quad([0.0, 0.0], [0.5, 0.5], DEPTH), 0.4), None),
            // The object's left part hides behind a nearer square.
            "occluder" => (
                TriangleMesh::quad([0.35, 0.0], [0.5, 0.5], DEPTH),
                Some(TriangleMesh::quad([-0.3, 0.05], [0.5, 0.6], 3.0)),
            ),
            other => bail!("unknown gradviz scene {other:?} (square | occluder)"),
        };
        mesh = colored(mesh, OBJECT_COLOR);
        let (object_vertices, object_triangles) = (mesh.positions.len(), mesh.triangles.len());
        if let Some(o) = occluder {
            append(&mut mesh, colored(o, OCCLUDER_COLOR));
        }
        Ok(Self {
            mesh,
            object_vertices,
            object_triangles,
            pixel_step: DEPTH / camera.focal(),
            camera,
        })
    }

    /// The scene with the object moved by `t` along world x.
    pub fn moved<S: Scalar>(&self, t: S) -> TriangleMesh<S> {
        let mut m = self.mesh.map_scalar(S::constant);
        for p in &mut m.positions[..self.object_vertices] {
            p.x += t;
        }
        m
    }

    pub fn sample(&self, t: f64, layers: usize) -> Result<SampleBuffer<MeshSample>> {
        Ok(rasterize_mesh(&self.moved(t), &self.camera, None, layers)?)
    }

    /// RtS image of the scene moved by `t`, from samples taken beforehand.
    pub fn render<S: Scalar>(&self, t: S, samples: &SampleBuffer<MeshSample>) -> Result<Image<S>> {
        let g = evaluate_mesh(&self.moved(t), samples)?;
        splat(&g, &shade_vertex_color(&g), &self.camera, None, None)
    }

    /// Front layer of shaded colors without splatting.
    pub fn render_unsplatted<S: Scalar>(&self, t: S, samples: &SampleBuffer<MeshSample>) -> Result<Image<S>> {
        let g = evaluate_mesh(&self.moved(t), samples)?;
        Ok(shade_vertex_color(&g).layer_image(0))
    }

    /// Full re-render, sampling included.
    pub fn resampled(&self, t: f64, layers: usize) -> Result<Image<f64>> {
        self.render(t, &self.sample(t, layers)?)
    }

    fn is_object(&self, s: Option<&rts_core::sampler::Sample<MeshSample>>) -> Option<bool> {
        s.map(|s| (s.record.triangle as usize) < self.object_triangles)
    }
}

/// Per-pixel sum of the color-channel derivatives.
fn pixel_derivative(img: &Image<Dual<1>>) -> Vec<f64> {
    img.pixels.iter().map(|p| p[..3].iter().map(|c| c.d[0]).sum()).collect()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

fn energy(values: &[f64], mask: &[bool]) -> f64 {
    values.iter().zip(mask).filter(|(_, &m)| m).map(|(v, _)| v * v).sum()
}

#[derive(Clone, Debug)]
pub struct GradvizReport {
    /// `∂L/∂t` of the L₂ loss against a shifted target, by autodiff.
    pub loss_grad: f64,
    /// Central finite difference of the same loss, re-rendering at `±1 px`.
    pub loss_grad_fd: f64,
    pub loss_grad_relative_error: f64,
    /// Pixelwise correlation of derivative images with finite differences.
    pub correlation_multilayer: f64,
    pub correlation_single_layer: f64,
    /// Pixels where the occluder is in front of the object.
    pub occluded_pixels: usize,
    pub occluded_energy_multilayer: f64,
    pub occluded_energy_single_layer: f64,
    /// Pixels within two pixels of the object's visible outline.
    pub boundary_pixels: usize,
    pub boundary_energy_multilayer: f64,
    pub boundary_energy_unsplatted: f64,
}

/// Masks `(occluded, boundary)` from two-layer samples at the rest pose.
fn regions(scene: &GradScene, samples: &SampleBuffer<MeshSample>) -> (Vec<bool>, Vec<bool>) {
    let (w, h) = (samples.width, samples.height);
    let mut occluded = vec![false; w * h];
    let mut visible = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let front = scene.is_object(samples.get(0, x, y));
            let behind = scene.is_object(samples.get(1, x, y));
            occluded[y * w + x] = front == Some(false) && behind == Some(true);
            visible[y * w + x] = front == Some(true);
        }
    }
    let boundary = (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            let v = visible[i];
            (-2..=2).any(|dy| {
                (-2..=2).any(|dx| {
                    let (qx, qy) = (x + dx, y + dy);
                    qx >= 0 && qy >= 0 && qx < w as i64 && qy < h as i64 && visible[qy as usize * w + qx as usize] != v
                })
            })
        })
        .collect();
    (occluded, boundary)
}

pub fn run(cfg: &ExperimentConfig) -> Result<GradvizReport> {
    cfg.validate()?;
    let out = prepare_dir(&cfg.out)?;
    let report = analyze(cfg, Some(&out))?;
    let mut w = csv::Writer::from_path(out.join("gradviz.csv"))?;
    w.write_record(["metric", "value"])?;
    let r = &report;
    for (k, v) in [
        ("loss_grad", r.loss_grad),
        ("loss_grad_fd", r.loss_grad_fd),
        ("loss_grad_relative_error", r.loss_grad_relative_error),
        ("correlation_multilayer", r.correlation_multilayer),
        ("correlation_single_layer", r.correlation_single_layer),
        ("occluded_pixels", r.occluded_pixels as f64),
        ("occluded_energy_multilayer", r.occluded_energy_multilayer),
        ("occluded_energy_single_layer", r.occluded_energy_single_layer),
        ("boundary_pixels", r.boundary_pixels as f64),
        ("boundary_energy_multilayer", r.boundary_energy_multilayer),
        ("boundary_energy_unsplatted", r.boundary_energy_unsplatted),
    ] {
        w.write_record([k.to_string(), format!("{v:e}")])?;
    }
    w.flush()?;
    Ok(report)
}

/// Derivative images and loss gradients; images are written when `out` is given.
pub fn analyze(cfg: &ExperimentConfig, out: Option<&std::path::Path>) -> Result<GradvizReport> {
    let scene = GradScene::build(cfg)?;
    let d = scene.pixel_step;
    let (w, h) = (cfg.width, cfg.height);
    let layers = cfg.layers.max(2);
    let t = Dual::<1>::seed(0.0, 0);

    let multi = scene.sample(0.0, layers)?;
    let single = scene.sample(0.0, 1)?;
    let img_multi = scene.render(t, &multi)?;
    let d_multi = pixel_derivative(&img_multi);
    let d_single = pixel_derivative(&scene.render(t, &single)?);
    let d_plain = pixel_derivative(&scene.render_unsplatted(t, &multi)?);

    let (plus, minus) = (scene.resampled(d, layers)?, scene.resampled(-d, layers)?);
    let d_fd: Vec<f64> = plus
        .pixels
        .iter()
        .zip(&minus.pixels)
        .map(|(p, m)| (0..3).map(|c| (p[c] - m[c]) / (2.0 * d)).sum())
        .collect();

    // Loss against a target with the object shifted.
    let target = scene.resampled(cfg.gradviz.target_offset_px * d, layers)?;
    let loss_grad = loss_l2(&img_multi, &target)?.d[0];
    let loss_at = |s: f64| -> Result<f64> { Ok(loss_l2(&scene.resampled(s, layers)?, &target)?) };
    let loss_grad_fd = (loss_at(d)? - loss_at(-d)?) / (2.0 * d);

    let (occluded, boundary) = regions(&scene, &multi);
    if let Some(dir) = out {
        png(&over_background(&img_multi.value(), cfg.background), dir, "render.png")?;
        derivative_image(&d_fd, w, h, dir, "d_finite_difference")?;
        derivative_image(&d_multi, w, h, dir, "d_multilayer")?;
        derivative_image(&d_single, w, h, dir, "d_single_layer")?;
        derivative_image(&d_plain, w, h, dir, "d_unsplatted")?;
    }
    Ok(GradvizReport {
        loss_grad,
        loss_grad_fd,
        loss_grad_relative_error: (loss_grad - loss_grad_fd).abs() / loss_grad_fd.abs(),
        correlation_multilayer: pearson(&d_multi, &d_fd),
        correlation_single_layer: pearson(&d_single, &d_fd),
        occluded_pixels: occluded.iter().filter(|&&m| m).count(),
        occluded_energy_multilayer: energy(&d_multi, &occluded),
        occluded_energy_single_layer: energy(&d_single, &occluded),
        boundary_pixels: boundary.iter().filter(|&&m| m).count(),
        boundary_energy_multilayer: energy(&d_multi, &boundary),
        boundary_energy_unsplatted: energy(&d_plain, &boundary),
    })
}
