//! Marching-cubes extraction that keeps track of the lattice edges each
//! output vertex was interpolated on.

use rayon::prelude::*;

use super::mc_tables::{CORNERS, EDGES, TRIANGLES};
use crate::math::Vec3;
use crate::scene::ImplicitGrid;

#[derive(Clone, Copy, Debug)]
pub struct McTriangle {
    /// Lattice index pairs `(a, b)` of the three crossed edges.
    pub edges: [[u32; 2]; 3],
    pub positions: [Vec3<f64>; 3],
}

/// Degenerate-edge threshold: a fixed fraction of the grid's value range.
pub fn degeneracy_epsilon(grid: &ImplicitGrid<f64>) -> f64 {
    let (lo, hi) = grid
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo > hi {
        0.0
    } else {
        1e-4 * (hi - lo)
    }
}

/// Edge vertex parameter `α = (τ - f_a) / (f_b - f_a)`.
pub fn edge_alpha(fa: f64, fb: f64, iso: f64) -> f64 {
    (iso - fa) / (fb - fa)
}

/// Triangulates every cell, in lattice order. Cells with a crossed edge whose
/// value difference is below `eps` are dropped entirely.
pub fn extract(grid: &ImplicitGrid<f64>, eps: f64) -> Vec<McTriangle> {
    let lat = &grid.lattice;
    let [nx, ny, nz] = lat.dims;
    (0..nz - 1)
        .into_par_iter()
        .map(|k| {
            let mut out = Vec::new();
            for j in 0..ny - 1 {
                for i in 0..nx - 1 {
                    cell(grid, [i, j, k], eps, &mut out);
                }
            }
            out
        })
        .collect::<Vec<_>>()
        .concat()
}

fn cell(grid: &ImplicitGrid<f64>, at: [usize; 3], eps: f64, out: &mut Vec<McTriangle>) {
    let lat = &grid.lattice;
    let corner = CORNERS.map(|o| lat.index(at[0] + o[0], at[1] + o[1], at[2] + o[2]));
    let f = corner.map(|c| grid.values[c]);
    let case = (0..8).fold(0usize, |acc, c| acc | (((f[c] < grid.iso) as usize) << c));
    let row = &TRIANGLES[case];
    if row[0] < 0 {
        return;
    }
    for e in row.iter().take_while(|&&e| e >= 0) {
        let [a, b] = EDGES[*e as usize];
        if (f[b] - f[a]).abs() < eps {
            return;
        }
    }
    let vertex = |e: usize| {
        let [a, b] = EDGES[e];
        let t = edge_alpha(f[a], f[b], grid.iso);
        let p = lat.position(corner[a]).lerp(lat.position(corner[b]), t);
        ([corner[a] as u32, corner[b] as u32], p)
    };
    for tri in row.chunks_exact(3).take_while(|t| t[0] >= 0) {
        let v = [0, 1, 2].map(|k| vertex(tri[k] as usize));
        out.push(McTriangle {
            edges: v.map(|(e, _)| e),
            positions: v.map(|(_, p)| p),
        });
    }
}
