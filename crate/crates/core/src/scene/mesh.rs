use std::collections::BTreeSet;
use std::f64::consts::PI;

use crate::autodiff::Scalar;
use crate::math::Vec3;
use crate::{Error, Result};

/// Indexed triangle mesh with optional per-vertex attributes.
#[derive(Clone, Debug, Default)]
pub struct TriangleMesh<S = f64> {
    pub positions: Vec<Vec3<S>>,
    pub normals: Option<Vec<Vec3<S>>>,
    pub uvs: Option<Vec<[S; 2]>>,
    pub colors: Option<Vec<Vec3<S>>>,
    pub triangles: Vec<[u32; 3]>,
}

impl<S: Scalar> TriangleMesh<S> {
    pub fn new(positions: Vec<Vec3<S>>, triangles: Vec<[u32; 3]>) -> Self {
        Self {
            positions,
            normals: None,
            uvs: None,
            colors: None,
            triangles,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    /// Checks index ranges, attribute lengths and finiteness.
    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        for t in &self.triangles {
            for &i in t {
                if i as usize >= n {
                    return Err(Error::IndexOutOfRange {
                        index: i as usize,
                        len: n,
                    });
                }
            }
        }
        let check_len = |what: &'static str, len: Option<usize>| match len {
            Some(l) if l != n => Err(Error::Shape(format!("{what}: {l} entries for {n} vertices"))),
            _ => Ok(()),
        };
        check_len("normals", self.normals.as_ref().map(Vec::len))?;
        check_len("uvs", self.uvs.as_ref().map(Vec::len))?;
        check_len("colors", self.colors.as_ref().map(Vec::len))?;
        if self
            .positions
            .iter()
            .any(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
        {
            return Err(Error::invalid("mesh", "non-finite vertex position"));
        }
        Ok(())
    }

    /// Converts every attribute to another scalar type.
    pub fn map_scalar<T: Scalar>(&self, f: impl Fn(S) -> T) -> TriangleMesh<T> {
        let v3 = |v: &Vec3<S>| Vec3::new(f(v.x), f(v.y), f(v.z));
        TriangleMesh {
            positions: self.positions.iter().map(v3).collect(),
            normals: self.normals.as_ref().map(|n| n.iter().map(v3).collect()),
            uvs: self
                .uvs
                .as_ref()
                .map(|u| u.iter().map(|t| [f(t[0]), f(t[1])]).collect()),
            colors: self.colors.as_ref().map(|c| c.iter().map(v3).collect()),
            triangles: self.triangles.clone(),
        }
    }

    pub fn value(&self) -> TriangleMesh<f64> {
        self.map_scalar(|s| s.value())
    }
}

impl TriangleMesh<f64> {
    /// Area-weighted vertex normals.
    pub fn compute_normals(&mut self) {
        let mut normals = vec![Vec3::<f64>::zero(); self.positions.len()];
        for t in &self.triangles {
            let [a, b, c] = t.map(|i| self.positions[i as usize]);
            let n = (b - a).cross(c - a);
            for &i in t {
                normals[i as usize] = normals[i as usize] + n;
            }
        }
        self.normals = Some(normals.into_iter().map(|n| n.normalized(1e-300)).collect());
    }

    pub fn translate(&mut self, by: Vec3<f64>) {
        for p in &mut self.positions {
            *p = *p + by;
        }
    }

    pub fn bounds(&self) -> (Vec3<f64>, Vec3<f64>) {
        let mut lo = Vec3::splat(f64::INFINITY);
        let mut hi = Vec3::splat(f64::NEG_INFINITY);
        for p in &self.positions {
            lo = Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
            hi = Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
        }
        (lo, hi)
    }

    /// Length of the bounding-box diagonal.
    pub fn extent(&self) -> f64 {
        let (lo, hi) = self.bounds();
        (hi - lo).norm()
    }

    /// Axis-aligned rectangle in the plane `z = depth`, facing +z.
    pub fn quad(center: [f64; 2], half: [f64; 2], depth: f64) -> Self {
        let [cx, cy] = center;
        let [hx, hy] = half;
        let mut m = Self::new(
            vec![
                Vec3::new(cx - hx, cy - hy, depth),
                Vec3::new(cx + hx, cy - hy, depth),
                Vec3::new(cx + hx, cy + hy, depth),
                Vec3::new(cx - hx, cy + hy, depth),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        );
        m.uvs = Some(vec![[0.0, 1.0], [1.0, 1.0], [1.0, 0.0], [0.0, 0.0]]);
        m.normals = Some(vec![Vec3::new(0.0, 0.0, 1.0); 4]);
        m
    }

    /// Regular `segments`-gon fan in the plane `z = depth`.
    pub fn disk(center: [f64; 2], radius: f64, segments: usize, depth: f64) -> Self {
        let mut positions = vec![Vec3::new(center[0], center[1], depth)];
        let mut triangles = Vec::with_capacity(segments);
        for i in 0..segments {
            let a = 2.0 * PI * i as f64 / segments as f64;
            positions.push(Vec3::new(
                center[0] + radius * a.cos(),
                center[1] + radius * a.sin(),
                depth,
            ));
            triangles.push([0, 1 + i as u32, 1 + ((i + 1) % segments) as u32]);
        }
        Self::new(positions, triangles)
    }

    /// Latitude/longitude sphere of unit radius at the origin.
    pub fn uv_sphere(rings: usize, segments: usize) -> Self {
        assert!(rings >= 2 && segments >= 3);
        let mut positions = vec![Vec3::new(0.0, 1.0, 0.0)];
        for r in 1..rings {
            let phi = PI * r as f64 / rings as f64;
            for s in 0..segments {
                let theta = 2.0 * PI * s as f64 / segments as f64;
                positions.push(Vec3::new(
                    phi.sin() * theta.cos(),
                    phi.cos(),
                    phi.sin() * theta.sin(),
                ));
            }
        }
        positions.push(Vec3::new(0.0, -1.0, 0.0));
        let bottom = positions.len() as u32 - 1;
        let ring = |r: usize, s: usize| (1 + (r - 1) * segments + s % segments) as u32;
        let mut triangles = Vec::new();
        for s in 0..segments {
            triangles.push([0, ring(1, s + 1), ring(1, s)]);
        }
        for r in 1..rings - 1 {
            for s in 0..segments {
                let (a, b) = (ring(r, s), ring(r, s + 1));
                let (c, d) = (ring(r + 1, s), ring(r + 1, s + 1));
                triangles.push([a, b, d]);
                triangles.push([a, d, c]);
            }
        }
        for s in 0..segments {
            triangles.push([bottom, ring(rings - 1, s), ring(rings - 1, s + 1)]);
        }
        let mut m = Self::new(positions, triangles);
        m.compute_normals();
        m
    }

    /// Box `[-hx, hx] × [-hy, hy] × [-hz, hz]` whose faces are split into
    /// `n × n` grids (`12 n²` triangles, shared corner vertices duplicated per face).
    pub fn subdivided_box(half: [f64; 3], n: usize) -> Self {
        assert!(n >= 1);
        let mut positions = Vec::new();
        let mut triangles = Vec::new();
        // (normal axis, sign, u axis, v axis)
        let faces = [
            (0, 1.0, 1, 2),
            (0, -1.0, 2, 1),
            (1, 1.0, 2, 0),
            (1, -1.0, 0, 2),
            (2, 1.0, 0, 1),
            (2, -1.0, 1, 0),
        ];
        for (axis, sign, ua, va) in faces {
            let base = positions.len() as u32;
            for j in 0..=n {
                for i in 0..=n {
                    let mut p = [0.0; 3];
                    p[axis] = sign * half[axis];
                    p[ua] = half[ua] * (2.0 * i as f64 / n as f64 - 1.0);
                    p[va] = half[va] * (2.0 * j as f64 / n as f64 - 1.0);
                    positions.push(Vec3::from(p));
                }
            }
            let idx = |i: usize, j: usize| base + (j * (n + 1) + i) as u32;
            for j in 0..n {
                for i in 0..n {
                    triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                    triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
                }
            }
        }
        Self::new(positions, triangles)
    }

    /// Sorted 1-ring neighbour lists derived from triangle edges.
    pub fn vertex_neighbors(&self) -> Vec<Vec<u32>> {
        let mut sets = vec![BTreeSet::new(); self.positions.len()];
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                if a != b {
                    sets[a as usize].insert(b);
                    sets[b as usize].insert(a);
                }
            }
        }
        sets.into_iter().map(|s| s.into_iter().collect()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_catches_bad_index() {
        let m = TriangleMesh::new(vec![Vec3::<f64>::zero(); 3], vec![[0, 1, 3]]);
        assert!(matches!(m.validate(), Err(Error::IndexOutOfRange { index: 3, len: 3 })));
    }

    #[test]
    fn box_triangle_count() {
        let m = TriangleMesh::subdivided_box([1.0, 0.5, 0.25], 3);
        assert_eq!(m.triangles.len(), 12 * 9);
        m.validate().unwrap();
    }

    #[test]
    fn sphere_is_closed_and_unit() {
        let m = TriangleMesh::uv_sphere(8, 12);
        m.validate().unwrap();
        for p in &m.positions {
            assert!((p.norm() - 1.0).abs() < 1e-12);
        }
        // Closed 2-manifold: every edge shared by exactly two triangles.
        let mut edges = std::collections::HashMap::new();
        for t in &m.triangles {
            for k in 0..3 {
                let (a, b) = (t[k].min(t[(k + 1) % 3]), t[k].max(t[(k + 1) % 3]));
                *edges.entry((a, b)).or_insert(0) += 1;
            }
        }
        assert!(edges.values().all(|&c| c == 2));
    }

    #[test]
    fn sphere_normals_point_outward() {
        let m = TriangleMesh::uv_sphere(6, 8);
        for (p, n) in m.positions.iter().zip(m.normals.as_ref().unwrap()) {
            assert!(p.dot(*n) > 0.9);
        }
    }
}
