//! Forward render of a mesh, with optional sample-layer dumps.

use anyhow::{Context, Result};
use rts_core::evaluator::evaluate_mesh;
use rts_core::io::{load_obj, write_pfm_gray};
use rts_core::math::Vec3;
use rts_core::sampler::rasterize_mesh;
use rts_core::scene::TriangleMesh;
use rts_core::shading::shade_vertex_color;
use rts_core::Image;

use crate::config::ExperimentConfig;
use crate::output::{png, prepare_dir};
use crate::scenes::{orbit_camera, splat};

pub fn run(cfg: &ExperimentConfig) -> Result<Image<f64>> {
    cfg.validate()?;
    let out = prepare_dir(&cfg.out)?;
    let mut mesh = match &cfg.render.mesh {
        Some(p) => load_obj(p).with_context(|| format!("loading {}", p.display()))?,
        None => TriangleMesh::uv_sphere(32, 48),
    };
    if mesh.colors.is_none() {
        mesh.colors = Some(vec![Vec3::from(cfg.render.color); mesh.positions.len()]);
    }
    let camera = orbit_camera(cfg, 0.0)?;
    let samples = rasterize_mesh(&mesh, &camera, None, cfg.layers)?;
    let g = evaluate_mesh(&mesh, &samples)?;
    let img = splat(&g, &shade_vertex_color(&g), &camera, None, Some(cfg.background))?;
    png(&img, &out, "render.png")?;
    let alpha: Vec<f32> = splat(&g, &shade_vertex_color(&g), &camera, None, None)?
        .alpha()
        .iter()
        .map(|&a| a as f32)
        .collect();
    write_pfm_gray(&out.join("alpha.pfm"), img.width, img.height, &alpha)?;
    if cfg.render.dump_samples {
        samples.dump_pfm(&out, "samples")?;
    }
    Ok(img)
}
