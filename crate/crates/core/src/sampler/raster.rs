//! Scanline-free half-space rasterizer with exact depth peeling.
//!
//! Every primitive is reduced to view-space triangles carrying a 3-vector
//! attribute per vertex. Attributes are interpolated perspective-correctly,
//! so barycentrics, patch parameters and object positions all come out of
//! the same code.

use rayon::prelude::*;

use crate::math::Vec3;
use crate::scene::Camera;

/// Minimum normalized-depth gap between consecutive layers.
pub const PEEL_EPSILON: f64 = 1e-6;

const BAND_ROWS: usize = 8;

#[derive(Clone, Copy, Debug)]
pub(crate) struct RasterTri {
    xy: [[f64; 2]; 3],
    z: [f64; 3],
    /// Reciprocal view depth per vertex.
    w: [f64; 3],
    attr: [[f64; 3]; 3],
    area: f64,
    pub prim: u32,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Fragment {
    pub prim: u32,
    pub attr: [f64; 3],
    pub depth: f64,
}

#[derive(Clone, Copy)]
struct ViewVertex {
    p: Vec3<f64>,
    attr: [f64; 3],
}

/// Clips a view-space triangle against the near plane, projects it and
/// appends the resulting screen triangles.
pub(crate) fn push_triangle(
    camera: &Camera,
    view: [Vec3<f64>; 3],
    attr: [[f64; 3]; 3],
    prim: u32,
    out: &mut Vec<RasterTri>,
) {
    let near = camera.near;
    let inside = view.map(|v| v.z >= near);
    if !inside.iter().any(|&b| b) {
        return;
    }
    let verts = [0, 1, 2].map(|i| ViewVertex {
        p: view[i],
        attr: attr[i],
    });
    if inside.iter().all(|&b| b) {
        emit(camera, &verts, prim, out);
        return;
    }
    let mut poly: Vec<ViewVertex> = Vec::with_capacity(4);
    for i in 0..3 {
        let (a, b) = (verts[i], verts[(i + 1) % 3]);
        let (ia, ib) = (a.p.z >= near, b.p.z >= near);
        if ia {
            poly.push(a);
        }
        if ia != ib {
            let t = (near - a.p.z) / (b.p.z - a.p.z);
            let mut p = a.p.lerp(b.p, t);
            p.z = near;
            let attr = [0, 1, 2].map(|k| a.attr[k] + t * (b.attr[k] - a.attr[k]));
            poly.push(ViewVertex { p, attr });
        }
    }
    for k in 1..poly.len() - 1 {
        emit(camera, &[poly[0], poly[k], poly[k + 1]], prim, out);
    }
}

fn emit(camera: &Camera, v: &[ViewVertex; 3], prim: u32, out: &mut Vec<RasterTri>) {
    let mut xy = [[0.0; 2]; 3];
    let mut z = [0.0; 3];
    let mut w = [0.0; 3];
    for i in 0..3 {
        let Some(s) = camera.project_view(v[i].p) else {
            return;
        };
        xy[i] = [s.x, s.y];
        z[i] = s.z;
        w[i] = 1.0 / v[i].p.z;
    }
    let mut attr = [v[0].attr, v[1].attr, v[2].attr];
    let mut area = cross(xy[0], xy[1], xy[2]);
    if !area.is_finite() || area.abs() < 1e-12 {
        return;
    }
    if area < 0.0 {
        xy.swap(1, 2);
        z.swap(1, 2);
        w.swap(1, 2);
        attr.swap(1, 2);
        area = -area;
    }
    out.push(RasterTri {
        xy,
        z,
        w,
        attr,
        area,
        prim,
    });
}

/// Edge function of `p` relative to the directed edge `a → b`.
fn cross(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

fn top_left(a: [f64; 2], b: [f64; 2]) -> bool {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    dy < 0.0 || (dy == 0.0 && dx > 0.0)
}

impl RasterTri {
    /// Screen-space barycentrics of pixel center `p`, or `None` if uncovered.
    fn coverage(&self, p: [f64; 2]) -> Option<[f64; 3]> {
        let [a, b, c] = self.xy;
        let mut s = [0.0; 3];
        for (k, (e0, e1)) in [(b, c), (c, a), (a, b)].into_iter().enumerate() {
            let e = cross(e0, e1, p);
            if e < 0.0 || (e == 0.0 && !top_left(e0, e1)) {
                return None;
            }
            s[k] = e / self.area;
        }
        Some(s)
    }

    fn depth(&self, s: [f64; 3]) -> f64 {
        s[0] * self.z[0] + s[1] * self.z[1] + s[2] * self.z[2]
    }

    fn fragment(&self, p: [f64; 2]) -> Option<Fragment> {
        let s = self.coverage(p)?;
        let q = [0, 1, 2].map(|i| s[i] * self.w[i]);
        let norm = q[0] + q[1] + q[2];
        let attr = [0, 1, 2].map(|k| {
            (q[0] * self.attr[0][k] + q[1] * self.attr[1][k] + q[2] * self.attr[2][k]) / norm
        });
        Some(Fragment {
            prim: self.prim,
            attr,
            depth: self.depth(s),
        })
    }

    fn rows(&self, height: usize) -> Option<(usize, usize)> {
        let lo = self.xy.iter().map(|v| v[1]).fold(f64::INFINITY, f64::min).ceil();
        let hi = self.xy.iter().map(|v| v[1]).fold(f64::NEG_INFINITY, f64::max).floor();
        let lo = lo.max(0.0);
        let hi = hi.min(height as f64 - 1.0);
        (lo <= hi).then_some((lo as usize, hi as usize))
    }

    fn cols(&self, width: usize) -> Option<(usize, usize)> {
        let lo = self.xy.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min).ceil();
        let hi = self.xy.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max).floor();
        let lo = lo.max(0.0);
        let hi = hi.min(width as f64 - 1.0);
        (lo <= hi).then_some((lo as usize, hi as usize))
    }
}

/// Peels `layers` depth layers. The result is layer-major, row-major.
///
/// Layer `k` holds, per pixel, the front-most fragment deeper than layer
/// `k - 1` by more than [`PEEL_EPSILON`]; ties go to the lower triangle index.
pub(crate) fn peel(
    tris: &[RasterTri],
    width: usize,
    height: usize,
    layers: usize,
) -> Vec<Option<Fragment>> {
    let bands = height.div_ceil(BAND_ROWS);
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); bands];
    for (i, t) in tris.iter().enumerate() {
        if t.cols(width).is_none() {
            continue;
        }
        if let Some((r0, r1)) = t.rows(height) {
            for bin in &mut bins[r0 / BAND_ROWS..=r1 / BAND_ROWS] {
                bin.push(i as u32);
            }
        }
    }
    let per_band: Vec<Vec<Option<Fragment>>> = bins
        .par_iter()
        .enumerate()
        .map(|(b, bin)| {
            let y0 = b * BAND_ROWS;
            let y1 = (y0 + BAND_ROWS).min(height);
            peel_band(tris, bin, width, y0, y1, layers)
        })
        .collect();
    let n = width * height;
    let mut out = vec![None; n * layers];
    for (b, band) in per_band.into_iter().enumerate() {
        let y0 = b * BAND_ROWS;
        let rows = band.len() / (layers * width);
        for layer in 0..layers {
            let src = &band[layer * rows * width..(layer + 1) * rows * width];
            let dst = layer * n + y0 * width;
            out[dst..dst + rows * width].copy_from_slice(src);
        }
    }
    out
}

fn peel_band(
    tris: &[RasterTri],
    bin: &[u32],
    width: usize,
    y0: usize,
    y1: usize,
    layers: usize,
) -> Vec<Option<Fragment>> {
    let n = (y1 - y0) * width;
    let mut out = vec![None; n * layers];
    let mut prev = vec![f64::NEG_INFINITY; n];
    let mut best = vec![(f64::INFINITY, u32::MAX); n];
    for layer in 0..layers {
        best.fill((f64::INFINITY, u32::MAX));
        for &ti in bin {
            let t = &tris[ti as usize];
            let (Some((r0, r1)), Some((c0, c1))) = (t.rows(y1), t.cols(width)) else {
                continue;
            };
            for y in r0.max(y0)..=r1 {
                for x in c0..=c1 {
                    let Some(s) = t.coverage([x as f64, y as f64]) else {
                        continue;
                    };
                    let d = t.depth(s);
                    let p = (y - y0) * width + x;
                    if d > prev[p] + PEEL_EPSILON && (d, ti) < best[p] {
                        best[p] = (d, ti);
                    }
                }
            }
        }
        let mut any = false;
        for p in 0..n {
            let (d, ti) = best[p];
            if ti == u32::MAX {
                prev[p] = f64::INFINITY;
                continue;
            }
            let (x, y) = (p % width, y0 + p / width);
            out[layer * n + p] = tris[ti as usize].fragment([x as f64, y as f64]);
            prev[p] = d;
            any = true;
        }
        if !any {
            break;
        }
    }
    out
}
