//! Multi-view fit of mesh vertex positions and colors to renders of a
//! colored ellipsoid.

use anyhow::{ensure, Context, Result};
use rts_core::autodiff::Scalar;
use rts_core::evaluator::evaluate_mesh;
use rts_core::io::{load_obj, save_obj};
use rts_core::math::Vec3;
use rts_core::optim::{laplacian_energy, loss_l2};
use rts_core::sampler::rasterize_mesh;
use rts_core::scene::{Camera, TriangleMesh};
use rts_core::shading::shade_vertex_color;
use rts_core::Image;

use crate::config::ExperimentConfig;
use crate::output::{png, prepare_dir, LossLog};
use crate::scenes::{descend, orbit_camera, splat, Problem};

/// Opaque backdrop color, used when the backdrop is enabled.
pub const BACKDROP: [f64; 3] = [0.35, 0.35, 0.4];
const TEMPLATE_RADIUS: f64 = 0.8;
const TEMPLATE_COLOR: f64 = 0.5;

/// Smooth color pattern of the target, by unit direction.
fn target_color(n: Vec3<f64>) -> Vec3<f64> {
    Vec3::new(0.5 + 0.4 * n.x, 0.5 + 0.4 * n.y, 0.5 - 0.3 * n.z)
}

pub fn template(cfg: &ExperimentConfig) -> Result<TriangleMesh<f64>> {
    let mut m = match &cfg.mesh_fit.template {
        Some(p) => load_obj(p).with_context(|| format!("loading {}", p.display()))?,
        None => {
            let mut m = TriangleMesh::uv_sphere(12, 18);
            for p in &mut m.positions {
                *p = p.scale(TEMPLATE_RADIUS);
            }
            m
        }
    };
    m.normals = None;
    m.uvs = None;
    m.colors = Some(vec![Vec3::splat(TEMPLATE_COLOR); m.positions.len()]);
    Ok(m)
}

/// Ellipsoid with the template's connectivity and a smooth color pattern.
pub fn target_mesh(template: &TriangleMesh<f64>, axes: [f64; 3]) -> TriangleMesh<f64> {
    let mut m = template.clone();
    let dirs: Vec<Vec3<f64>> = template.positions.iter().map(|p| p.normalized(1e-12)).collect();
    m.positions = dirs.iter().map(|d| Vec3::new(d.x * axes[0], d.y * axes[1], d.z * axes[2])).collect();
    m.colors = Some(dirs.iter().map(|&d| target_color(d)).collect());
    m
}

pub struct MeshFitProblem {
    pub template: TriangleMesh<f64>,
    pub neighbors: Vec<Vec<u32>>,
    pub cameras: Vec<Camera>,
    pub targets: Vec<Image<f64>>,
    pub layers: usize,
    pub background: Option<[f64; 3]>,
    pub laplacian_weight: f64,
    pub colors_only: bool,
}

impl MeshFitProblem {
    /// Parameters: positions then colors, or colors alone.
    pub fn params_of(&self, m: &TriangleMesh<f64>) -> Vec<f64> {
        let mut x = Vec::new();
        if !self.colors_only {
            x.extend(m.positions.iter().flat_map(|p| p.to_array()));
        }
        x.extend(m.colors.as_ref().expect("colored mesh").iter().flat_map(|c| c.to_array()));
        x
    }

    pub fn mesh<S: Scalar>(&self, x: &[S]) -> TriangleMesh<S> {
        let vec3 = |c: &[S]| Vec3::new(c[0], c[1], c[2]);
        let mut m = self.template.map_scalar(S::constant);
        let colors = if self.colors_only {
            x
        } else {
            let (pos, col) = x.split_at(3 * m.positions.len());
            m.positions = pos.chunks(3).map(vec3).collect();
            col
        };
        m.colors = Some(colors.chunks(3).map(vec3).collect());
        m
    }

    pub fn render_mesh<S: Scalar>(&self, m: &TriangleMesh<S>, camera: &Camera) -> Result<Image<S>> {
        let samples = rasterize_mesh(&m.value(), camera, None, self.layers)?;
        let g = evaluate_mesh(m, &samples)?;
        splat(&g, &shade_vertex_color(&g), camera, None, self.background)
    }

    /// Mean image L₂ over the views.
    pub fn image_loss<S: Scalar>(&self, m: &TriangleMesh<S>) -> Result<S> {
        let mut total = S::zero();
        for (cam, target) in self.cameras.iter().zip(&self.targets) {
            total += loss_l2(&self.render_mesh(m, cam)?, target)?;
        }
        Ok(total * (1.0 / self.cameras.len() as f64))
    }
}

impl Problem for MeshFitProblem {
    fn loss<S: Scalar>(&self, x: &[S]) -> Result<S> {
        let m = self.mesh(x);
        let mut loss = self.image_loss(&m)?;
        if !self.colors_only && self.laplacian_weight > 0.0 {
            loss += laplacian_energy(&m.positions, &self.neighbors) * self.laplacian_weight;
        }
        Ok(loss)
    }

    fn project(&self, x: &mut [f64]) {
        let start = if self.colors_only { 0 } else { 3 * self.template.positions.len() };
        for c in &mut x[start..] {
            *c = c.clamp(0.0, 1.0);
        }
    }
}

pub struct MeshFitReport {
    pub initial_image_loss: f64,
    pub final_image_loss: f64,
    /// Mean absolute per-channel vertex color error against the target.
    pub initial_color_error: f64,
    pub final_color_error: f64,
    pub log: LossLog,
}

pub fn problem(cfg: &ExperimentConfig) -> Result<(MeshFitProblem, TriangleMesh<f64>)> {
    ensure!(cfg.mesh_fit.views >= 1, "need at least one view");
    let template = template(cfg)?;
    let mut target = target_mesh(&template, cfg.mesh_fit.target_axes);
    if cfg.mesh_fit.colors_only {
        // Only colors are free, so the geometry must already match.
        target.positions = template.positions.clone();
    }
    let start = if cfg.mesh_fit.colors_only { target.positions.clone() } else { template.positions.clone() };
    let cameras = (0..cfg.mesh_fit.views)
        .map(|v| orbit_camera(cfg, 360.0 * v as f64 / cfg.mesh_fit.views as f64))
        .collect::<Result<Vec<_>>>()?;
    let mut p = MeshFitProblem {
        neighbors: template.vertex_neighbors(),
        template: TriangleMesh { positions: start, ..template },
        cameras,
        targets: Vec::new(),
        layers: cfg.layers,
        background: cfg.mesh_fit.backdrop.then_some(BACKDROP),
        laplacian_weight: cfg.mesh_fit.laplacian_weight,
        colors_only: cfg.mesh_fit.colors_only,
    };
    p.targets = p.cameras.iter().map(|c| p.render_mesh(&target, c)).collect::<Result<_>>()?;
    Ok((p, target))
}

fn color_error(m: &TriangleMesh<f64>, target: &TriangleMesh<f64>) -> f64 {
    let (a, b) = (m.colors.as_ref().unwrap(), target.colors.as_ref().unwrap());
    let sum: f64 = a.iter().zip(b).map(|(p, q)| (0..3).map(|k| (p[k] - q[k]).abs()).sum::<f64>()).sum();
    sum / (3 * a.len()) as f64
}

pub fn run(cfg: &ExperimentConfig) -> Result<MeshFitReport> {
    cfg.validate()?;
    let out = prepare_dir(&cfg.out)?;
    let (p, target) = problem(cfg)?;
    let initial_mesh = p.template.clone();
    let mut x = p.params_of(&initial_mesh);
    let mut log = LossLog::new();
    let result = descend(&p, &mut x, cfg.optimizer.kind, cfg.optimizer.learning_rate, cfg.iterations, &mut log);
    log.write(&out)?;
    result?;
    let fitted = p.mesh(&x);
    for (v, (cam, t)) in p.cameras.iter().zip(&p.targets).enumerate() {
        png(t, &out, &format!("target_{v}.png"))?;
        png(&p.render_mesh(&initial_mesh, cam)?, &out, &format!("initial_{v}.png"))?;
        png(&p.render_mesh(&fitted, cam)?, &out, &format!("final_{v}.png"))?;
    }
    save_obj(&fitted, &out.join("fitted.obj"))?;
    Ok(MeshFitReport {
        initial_image_loss: p.image_loss(&initial_mesh)?,
        final_image_loss: p.image_loss(&fitted)?,
        initial_color_error: color_error(&initial_mesh, &target),
        final_color_error: color_error(&fitted, &target),
        log,
    })
}
