//! Differentiable attribute evaluation at sampled surface parameters.
//!
//! Sample parameters are constants; derivatives reach the output only
//! through the referenced vertices, control points or lattice values.

use crate::autodiff::Scalar;
use crate::math::Vec3;
use crate::sampler::{ImplicitSample, MeshSample, PositionSample, SampleBuffer, SplineSample};
use crate::scene::{basis_weights, project, BSplineSurface, Camera, LatticeSource, PoseParams, TriangleMesh};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GSample<S> {
    pub position: Vec3<S>,
    pub normal: Option<Vec3<S>>,
    pub uv: Option<[S; 2]>,
    pub color: Option<Vec3<S>>,
}

impl<S: Scalar> GSample<S> {
    fn at(position: Vec3<S>) -> Self {
        Self {
            position,
            normal: None,
            uv: None,
            color: None,
        }
    }

    pub fn value(&self) -> GSample<f64> {
        GSample {
            position: self.position.value(),
            normal: self.normal.map(|n| n.value()),
            uv: self.uv.map(|t| t.map(|c| c.value())),
            color: self.color.map(|c| c.value()),
        }
    }
}

impl GSample<f64> {
    pub fn lift<S: Scalar>(&self) -> GSample<S> {
        GSample {
            position: Vec3::constant(self.position),
            normal: self.normal.map(Vec3::constant),
            uv: self.uv.map(|t| t.map(S::constant)),
            color: self.color.map(Vec3::constant),
        }
    }
}

/// Per-layer G-buffer, laid out like [`SampleBuffer`].
#[derive(Clone, Debug, PartialEq)]
pub struct GBuffer<S> {
    pub width: usize,
    pub height: usize,
    pub layers: usize,
    pub samples: Vec<Option<GSample<S>>>,
}

impl<S: Scalar> GBuffer<S> {
    pub fn get(&self, layer: usize, x: usize, y: usize) -> Option<&GSample<S>> {
        self.samples[(layer * self.height + y) * self.width + x].as_ref()
    }

    pub fn valid_count(&self) -> usize {
        self.samples.iter().filter(|s| s.is_some()).count()
    }

    pub fn value(&self) -> GBuffer<f64> {
        GBuffer {
            width: self.width,
            height: self.height,
            layers: self.layers,
            samples: self.samples.iter().map(|s| s.map(|s| s.value())).collect(),
        }
    }
}

impl GBuffer<f64> {
    pub fn lift<S: Scalar>(&self) -> GBuffer<S> {
        GBuffer {
            width: self.width,
            height: self.height,
            layers: self.layers,
            samples: self.samples.iter().map(|s| s.map(|s| s.lift())).collect(),
        }
    }
}

fn map_samples<R: Copy, S>(
    samples: &SampleBuffer<R>,
    mut f: impl FnMut(&R) -> Result<Option<GSample<S>>>,
) -> Result<GBuffer<S>> {
    let out = samples
        .samples
        .iter()
        .map(|s| match s {
            Some(s) => f(&s.record),
            None => Ok(None),
        })
        .collect::<Result<_>>()?;
    Ok(GBuffer {
        width: samples.width,
        height: samples.height,
        layers: samples.layers,
        samples: out,
    })
}

fn interpolate<S: Scalar>(v: [Vec3<S>; 3], b: [f64; 3]) -> Vec3<S> {
    v[0].scale_f(b[0]) + v[1].scale_f(b[1]) + v[2].scale_f(b[2])
}

/// `Σᵢ Bᵢ · attr(vertex i)` for every attribute the mesh carries.
pub fn evaluate_mesh<S: Scalar>(
    mesh: &TriangleMesh<S>,
    samples: &SampleBuffer<MeshSample>,
) -> Result<GBuffer<S>> {
    let nv = mesh.positions.len();
    map_samples(samples, |s| {
        let t = *mesh.triangles.get(s.triangle as usize).ok_or(Error::IndexOutOfRange {
            index: s.triangle as usize,
            len: mesh.triangles.len(),
        })?;
        if let Some(&i) = t.iter().find(|&&i| i as usize >= nv) {
            return Err(Error::IndexOutOfRange {
                index: i as usize,
                len: nv,
            });
        }
        let b = s.bary;
        let pick = |attr: &[Vec3<S>]| interpolate(t.map(|i| attr[i as usize]), b);
        let mut g = GSample::at(pick(&mesh.positions));
        g.normal = mesh.normals.as_deref().map(pick);
        g.color = mesh.colors.as_deref().map(pick);
        g.uv = mesh.uvs.as_deref().map(|uv| {
            let [p, q, r] = t.map(|i| uv[i as usize]);
            [0, 1].map(|k| p[k] * b[0] + q[k] * b[1] + r[k] * b[2])
        });
        Ok(Some(g))
    })
}

/// Surface point `U · M · P · Mᵀ · Vᵀ` at each sample's patch parameters.
pub fn evaluate_spline<S: Scalar>(
    surface: &BSplineSurface<S>,
    samples: &SampleBuffer<SplineSample>,
) -> Result<GBuffer<S>> {
    map_samples(samples, |s| {
        let idx = surface.patch_indices(s.patch as usize)?;
        let (wu, wv) = (basis_weights(s.uv[0]), basis_weights(s.uv[1]));
        let mut p = Vec3::zero();
        for a in 0..4 {
            for b in 0..4 {
                p = p + surface.control[idx[a][b]].scale_f(wu[a] * wv[b]);
            }
        }
        let mut g = GSample::at(p);
        g.uv = Some([S::constant(s.uv[0]), S::constant(s.uv[1])]);
        Ok(Some(g))
    })
}

/// Marching-cubes surface point from the current lattice values.
///
/// Samples whose edges have become nearly flat since sampling are dropped.
pub fn evaluate_implicit<S: Scalar>(
    grid: &impl LatticeSource<S>,
    samples: &SampleBuffer<ImplicitSample>,
) -> Result<GBuffer<S>> {
    let lattice = *grid.lattice();
    let iso = grid.iso();
    map_samples(samples, |s| {
        if let Some(&i) = s.lattice.iter().find(|&&i| i as usize >= lattice.len()) {
            return Err(Error::IndexOutOfRange {
                index: i as usize,
                len: lattice.len(),
            });
        }
        let mut x = Vec3::zero();
        for e in 0..3 {
            let (a, b) = (s.lattice[2 * e] as usize, s.lattice[2 * e + 1] as usize);
            let (fa, fb) = (grid.value_at(a), grid.value_at(b));
            let df = fb - fa;
            if !(df.value().abs() >= s.eps) {
                return Ok(None);
            }
            let alpha = (S::constant(iso) - fa) / df;
            let pa = Vec3::constant(lattice.position(a));
            let pb = Vec3::constant(lattice.position(b));
            x = x + (pa + (pb - pa) * alpha).scale_f(s.beta[e]);
        }
        Ok(Some(GSample::at(x)))
    })
}

/// Constant object-space positions of the pose fast path.
pub fn evaluate_positions<S: Scalar>(samples: &SampleBuffer<PositionSample>) -> GBuffer<S> {
    map_samples(samples, |s| Ok(Some(GSample::at(Vec3::constant(s.position)))))
        .expect("infallible")
}

/// Screen-space `(x, y, depth)` per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionBuffer<S> {
    pub width: usize,
    pub height: usize,
    pub layers: usize,
    pub points: Vec<Option<Vec3<S>>>,
}

impl<S: Scalar> PositionBuffer<S> {
    pub fn get(&self, layer: usize, x: usize, y: usize) -> Option<&Vec3<S>> {
        self.points[(layer * self.height + y) * self.width + x].as_ref()
    }
}

/// Projects `pose(position)` for every valid sample; points that end up in
/// front of the near plane are invalidated.
pub fn build_position_buffer<S: Scalar>(
    gbuffer: &GBuffer<S>,
    camera: &Camera,
    pose: Option<&PoseParams<S>>,
) -> PositionBuffer<S> {
    let xf = pose.map(|p| (p.matrix(), p.translation));
    let points = gbuffer
        .samples
        .iter()
        .map(|g| {
            let g = g.as_ref()?;
            let p = match &xf {
                Some((m, t)) => m.mul_vec(g.position) + *t,
                None => g.position,
            };
            project(p, camera)
        })
        .collect();
    PositionBuffer {
        width: gbuffer.width,
        height: gbuffer.height,
        layers: gbuffer.layers,
        points,
    }
}
