//! The sampling oracle: per-pixel, per-layer surface parameters found by
//! rasterization in plain `f64` arithmetic.
//!
//! Nothing here is differentiated. The evaluator re-derives differentiable
//! attributes from the recorded parameters.

mod marching;
mod mc_tables;
mod raster;

use std::path::Path;

use crate::math::{Mat3, Vec3};
use crate::scene::{BSplineSurface, Camera, ImplicitGrid, PoseParams, TriangleMesh};
use crate::{Error, Result};

pub use marching::{degeneracy_epsilon, edge_alpha, extract as marching_cubes, McTriangle};
pub use raster::PEEL_EPSILON;

use raster::{Fragment, RasterTri};

/// Micro-quad cap per patch side when tessellating splines.
pub const MAX_SPLINE_SUBDIVISION: usize = 64;

/// Triangle id and perspective-correct barycentrics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshSample {
    pub triangle: u32,
    pub bary: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplineSample {
    pub patch: u32,
    pub uv: [f64; 2],
}

/// Three lattice edges `(v1, v2), (v3, v4), (v5, v6)` and the barycentrics
/// of the marching-cubes triangle spanned by their crossing points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImplicitSample {
    pub lattice: [u32; 6],
    pub beta: [f64; 3],
    /// Degenerate-edge threshold in force when this sample was taken.
    pub eps: f64,
}

/// Object-space position for the pose-only fast path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PositionSample {
    pub position: Vec3<f64>,
}

/// A recorded sample: parameters plus the non-differentiable depth used for
/// layer pairing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample<R> {
    pub record: R,
    pub depth: f64,
}

/// Three floats per record for debug dumps.
pub trait DebugChannels {
    fn channels(&self) -> [f32; 3];
}

impl DebugChannels for MeshSample {
    fn channels(&self) -> [f32; 3] {
        self.bary.map(|b| b as f32)
    }
}

impl DebugChannels for SplineSample {
    fn channels(&self) -> [f32; 3] {
        [self.uv[0] as f32, self.uv[1] as f32, self.patch as f32]
    }
}

impl DebugChannels for ImplicitSample {
    fn channels(&self) -> [f32; 3] {
        self.beta.map(|b| b as f32)
    }
}

impl DebugChannels for PositionSample {
    fn channels(&self) -> [f32; 3] {
        self.position.to_array().map(|c| c as f32)
    }
}

/// `K` layers of optional samples, layer-major then row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBuffer<R> {
    pub width: usize,
    pub height: usize,
    pub layers: usize,
    pub samples: Vec<Option<Sample<R>>>,
}

impl<R: Copy> SampleBuffer<R> {
    pub fn empty(width: usize, height: usize, layers: usize) -> Self {
        Self {
            width,
            height,
            layers,
            samples: vec![None; width * height * layers],
        }
    }

    pub fn get(&self, layer: usize, x: usize, y: usize) -> Option<&Sample<R>> {
        self.samples[(layer * self.height + y) * self.width + x].as_ref()
    }

    pub fn layer(&self, layer: usize) -> &[Option<Sample<R>>] {
        let n = self.width * self.height;
        &self.samples[layer * n..(layer + 1) * n]
    }

    pub fn valid_count(&self) -> usize {
        self.samples.iter().filter(|s| s.is_some()).count()
    }

    /// Per-pixel depths of one layer, `+∞` where invalid.
    pub fn depths(&self, layer: usize) -> Vec<f64> {
        self.layer(layer)
            .iter()
            .map(|s| s.map_or(f64::INFINITY, |s| s.depth))
            .collect()
    }

    fn from_fragments(
        width: usize,
        height: usize,
        layers: usize,
        frags: Vec<Option<Fragment>>,
        record: impl Fn(&Fragment) -> Option<R>,
    ) -> Self {
        let samples = frags
            .iter()
            .map(|f| {
                f.as_ref().and_then(|f| {
                    record(f).map(|record| Sample {
                        record,
                        depth: f.depth,
                    })
                })
            })
            .collect();
        Self {
            width,
            height,
            layers,
            samples,
        }
    }
}

impl<R: Copy + DebugChannels> SampleBuffer<R> {
    /// Writes one layer as a 4-channel PFM-ready image: three record
    /// channels and depth, NaN where invalid. Rows run top to bottom.
    pub fn debug_channels(&self, layer: usize) -> Vec<[f32; 4]> {
        self.layer(layer)
            .iter()
            .map(|s| match s {
                Some(s) => {
                    let [a, b, c] = s.record.channels();
                    [a, b, c, s.depth as f32]
                }
                None => [f32::NAN; 4],
            })
            .collect()
    }

    /// Dumps every layer as `prefix_L{k}_{channels,depth}.pfm`.
    pub fn dump_pfm(&self, dir: &Path, prefix: &str) -> Result<()> {
        for k in 0..self.layers {
            let px = self.debug_channels(k);
            let rgb: Vec<[f32; 3]> = px.iter().map(|p| [p[0], p[1], p[2]]).collect();
            let depth: Vec<f32> = px.iter().map(|p| p[3]).collect();
            crate::io::write_pfm_rgb(&dir.join(format!("{prefix}_L{k}_channels.pfm")), self.width, self.height, &rgb)?;
            crate::io::write_pfm_gray(&dir.join(format!("{prefix}_L{k}_depth.pfm")), self.width, self.height, &depth)?;
        }
        Ok(())
    }
}

fn check_layers(layers: usize) -> Result<()> {
    if layers == 0 {
        return Err(Error::invalid("sampler", "need at least one layer"));
    }
    Ok(())
}

/// Object-to-view transform with the pose rotation evaluated once.
struct ObjectToView<'a> {
    camera: &'a Camera,
    pose: Option<(Mat3<f64>, Vec3<f64>)>,
}

impl<'a> ObjectToView<'a> {
    fn new(camera: &'a Camera, pose: Option<&PoseParams<f64>>) -> Self {
        Self {
            camera,
            pose: pose.map(|p| (p.matrix(), p.translation)),
        }
    }

    fn apply(&self, p: Vec3<f64>) -> Vec3<f64> {
        let p = match &self.pose {
            Some((m, t)) => m.mul_vec(p) + *t,
            None => p,
        };
        self.camera.to_view(p)
    }
}

const IDENTITY_BARY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn mesh_triangles(
    mesh: &TriangleMesh<f64>,
    camera: &Camera,
    pose: Option<&PoseParams<f64>>,
    attr: impl Fn(&[u32; 3]) -> [[f64; 3]; 3],
) -> Result<Vec<RasterTri>> {
    mesh.validate()?;
    let xf = ObjectToView::new(camera, pose);
    let view: Vec<Vec3<f64>> = mesh.positions.iter().map(|&p| xf.apply(p)).collect();
    let mut tris = Vec::with_capacity(mesh.triangles.len());
    for (i, t) in mesh.triangles.iter().enumerate() {
        let v = t.map(|k| view[k as usize]);
        raster::push_triangle(camera, v, attr(t), i as u32, &mut tris);
    }
    Ok(tris)
}

/// Clamps roundoff out of interpolated barycentrics.
fn clean_bary(b: [f64; 3]) -> [f64; 3] {
    let b = b.map(|x| x.max(0.0));
    let s = b[0] + b[1] + b[2];
    b.map(|x| x / s)
}

/// Front-most `layers` triangle hits per pixel, back faces included.
pub fn rasterize_mesh(
    mesh: &TriangleMesh<f64>,
    camera: &Camera,
    pose: Option<&PoseParams<f64>>,
    layers: usize,
) -> Result<SampleBuffer<MeshSample>> {
    check_layers(layers)?;
    let tris = mesh_triangles(mesh, camera, pose, |_| IDENTITY_BARY)?;
    let frags = raster::peel(&tris, camera.width, camera.height, layers);
    Ok(SampleBuffer::from_fragments(camera.width, camera.height, layers, frags, |f| {
        Some(MeshSample {
            triangle: f.prim,
            bary: clean_bary(f.attr),
        })
    }))
}

/// Like [`rasterize_mesh`] but records interpolated object-space positions,
/// so later evaluation needs only the pose.
pub fn sample_positions_for_pose(
    mesh: &TriangleMesh<f64>,
    camera: &Camera,
    pose: Option<&PoseParams<f64>>,
    layers: usize,
) -> Result<SampleBuffer<PositionSample>> {
    check_layers(layers)?;
    let tris = mesh_triangles(mesh, camera, pose, |t| t.map(|k| mesh.positions[k as usize].to_array()))?;
    let frags = raster::peel(&tris, camera.width, camera.height, layers);
    Ok(SampleBuffer::from_fragments(camera.width, camera.height, layers, frags, |f| {
        Some(PositionSample {
            position: Vec3::from(f.attr),
        })
    }))
}

/// Screen-space extent of a patch's control hull, or `None` if part of it is
/// not in front of the camera.
fn patch_extent(
    surface: &BSplineSurface<f64>,
    patch: usize,
    xf: &ObjectToView,
) -> Result<Option<f64>> {
    let camera = xf.camera;
    let idx = surface.patch_indices(patch)?;
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for &i in idx.iter().flatten() {
        let Some(s) = camera.project_view(xf.apply(surface.control[i])) else {
            return Ok(None);
        };
        lo = [lo[0].min(s.x), lo[1].min(s.y)];
        hi = [hi[0].max(s.x), hi[1].max(s.y)];
    }
    Ok(Some((hi[0] - lo[0]).max(hi[1] - lo[1])))
}

/// Tessellates each patch into uniform micro-quads of about a pixel and
/// records `(patch, u, v)`.
pub fn rasterize_spline(
    surface: &BSplineSurface<f64>,
    camera: &Camera,
    pose: Option<&PoseParams<f64>>,
    layers: usize,
) -> Result<SampleBuffer<SplineSample>> {
    check_layers(layers)?;
    let xf = ObjectToView::new(camera, pose);
    let mut tris = Vec::new();
    let mut capped = 0;
    for patch in 0..surface.patch_count() {
        let extent = patch_extent(surface, patch, &xf)?;
        let wanted = extent.map_or(usize::MAX, |e| e.ceil().max(1.0) as usize);
        if wanted > MAX_SPLINE_SUBDIVISION {
            capped += 1;
        }
        let n = wanted.min(MAX_SPLINE_SUBDIVISION);
        let mut grid = Vec::with_capacity((n + 1) * (n + 1));
        for a in 0..=n {
            for b in 0..=n {
                let (u, v) = (a as f64 / n as f64, b as f64 / n as f64);
                let p = surface.evaluate(patch, u, v)?;
                grid.push((xf.apply(p), [u, v, 0.0]));
            }
        }
        let at = |a: usize, b: usize| grid[a * (n + 1) + b];
        for a in 0..n {
            for b in 0..n {
                for quad in [[(a, b), (a + 1, b), (a + 1, b + 1)], [(a, b), (a + 1, b + 1), (a, b + 1)]] {
                    let v = quad.map(|(i, j)| at(i, j));
                    raster::push_triangle(camera, v.map(|v| v.0), v.map(|v| v.1), patch as u32, &mut tris);
                }
            }
        }
    }
    if capped > 0 {
        log::warn!(
            "{capped} spline patches exceed {MAX_SPLINE_SUBDIVISION}² micro-quads; tessellation is coarser than one pixel"
        );
    }
    let frags = raster::peel(&tris, camera.width, camera.height, layers);
    Ok(SampleBuffer::from_fragments(camera.width, camera.height, layers, frags, |f| {
        Some(SplineSample {
            patch: f.prim,
            uv: [f.attr[0].clamp(0.0, 1.0), f.attr[1].clamp(0.0, 1.0)],
        })
    }))
}

/// Marching cubes at the grid's isovalue, then depth peeling of the
/// extracted triangles. Records the three crossed lattice edges per sample.
pub fn rasterize_implicit(
    grid: &ImplicitGrid<f64>,
    camera: &Camera,
    pose: Option<&PoseParams<f64>>,
    layers: usize,
) -> Result<SampleBuffer<ImplicitSample>> {
    check_layers(layers)?;
    if grid.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("implicit grid", "non-finite lattice value"));
    }
    let eps = degeneracy_epsilon(grid);
    let mc = marching::extract(grid, eps);
    let xf = ObjectToView::new(camera, pose);
    let mut tris = Vec::with_capacity(mc.len());
    for (i, t) in mc.iter().enumerate() {
        let v = t.positions.map(|p| xf.apply(p));
        raster::push_triangle(camera, v, IDENTITY_BARY, i as u32, &mut tris);
    }
    let frags = raster::peel(&tris, camera.width, camera.height, layers);
    Ok(SampleBuffer::from_fragments(camera.width, camera.height, layers, frags, |f| {
        let e = mc[f.prim as usize].edges;
        Some(ImplicitSample {
            lattice: [e[0][0], e[0][1], e[1][0], e[1][1], e[2][0], e[2][1]],
            beta: clean_bary(f.attr),
            eps,
        })
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn camera(w: usize, h: usize) -> Camera {
        Camera::new(Vec3::zero(), Vec3::zero(), 60f64.to_radians(), w, h, 0.1, 100.0).unwrap()
    }

    #[test]
    fn full_viewport_triangle() {
        let cam = camera(16, 12);
        let mesh = TriangleMesh::new(
            vec![Vec3::new(-100.0, -100.0, 5.0), Vec3::new(300.0, -100.0, 5.0), Vec3::new(-100.0, 300.0, 5.0)],
            vec![[0, 1, 2]],
        );
        let buf = rasterize_mesh(&mesh, &cam, None, 2).unwrap();
        for y in 0..12 {
            for x in 0..16 {
                assert_eq!(buf.get(0, x, y).unwrap().record.triangle, 0);
                assert!(buf.get(1, x, y).is_none());
            }
        }
    }

    #[test]
    fn vertex_pixel_has_unit_barycentric() {
        let cam = camera(32, 32);
        let f = cam.focal();
        let [cx, cy] = cam.center();
        // A fan around the vertex projecting onto pixel (20, 10), so some
        // triangle owns that pixel whatever the fill rule decides.
        let d = 4.0;
        let at = |x: f64, y: f64| Vec3::new((x - cx) * d / f, (y - cy) * d / f, d);
        let mesh = TriangleMesh::new(
            vec![at(20.0, 10.0), at(14.0, 4.0), at(27.0, 5.0), at(26.0, 18.0), at(13.0, 16.0)],
            vec![[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 1]],
        );
        let buf = rasterize_mesh(&mesh, &cam, None, 1).unwrap();
        let s = buf.get(0, 20, 10).expect("vertex pixel covered");
        let t = mesh.triangles[s.record.triangle as usize];
        let k = t.iter().position(|&i| i == 0).unwrap();
        assert_abs_diff_eq!(s.record.bary[k], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn stacked_quads_peel_in_depth_order() {
        let cam = camera(24, 24);
        let mut mesh = TriangleMesh::quad([0.0, 0.0], [1.0, 1.0], 6.0);
        let near = TriangleMesh::quad([0.0, 0.0], [1.0, 1.0], 3.0);
        mesh.positions.extend(near.positions);
        mesh.triangles.extend(near.triangles.iter().map(|t| t.map(|i| i + 4)));
        mesh.uvs = None;
        mesh.normals = None;
        let buf = rasterize_mesh(&mesh, &cam, None, 2).unwrap();
        let mut covered = 0;
        for y in 0..24 {
            for x in 0..24 {
                if let Some(s0) = buf.get(0, x, y) {
                    covered += 1;
                    assert!(s0.record.triangle >= 2, "front layer is the near quad");
                    if let Some(s1) = buf.get(1, x, y) {
                        assert!(s1.record.triangle < 2);
                        assert!(s1.depth > s0.depth);
                    }
                }
            }
        }
        assert!(covered > 0);
    }

    #[test]
    fn behind_camera_is_empty() {
        let cam = camera(16, 16);
        let mesh = TriangleMesh::quad([0.0, 0.0], [1.0, 1.0], -3.0);
        assert_eq!(rasterize_mesh(&mesh, &cam, None, 2).unwrap().valid_count(), 0);
    }

    #[test]
    fn zero_layers_rejected() {
        let cam = camera(4, 4);
        assert!(rasterize_mesh(&TriangleMesh::default(), &cam, None, 0).is_err());
    }

    #[test]
    fn empty_mesh_gives_invalid_positions() {
        let cam = camera(8, 8);
        let buf = sample_positions_for_pose(&TriangleMesh::default(), &cam, None, 2).unwrap();
        assert_eq!(buf.samples.len(), 8 * 8 * 2);
        assert_eq!(buf.valid_count(), 0);
    }
}
