//! Bicubic uniform B-spline surfaces.

use std::f64::consts::PI;

use crate::autodiff::Scalar;
use crate::math::Vec3;
use crate::{Error, Result};

/// Uniform cubic B-spline basis matrix; row `k` holds the coefficients of `t^k`.
pub const BASIS: [[f64; 4]; 4] = [
    [1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0, 0.0],
    [-3.0 / 6.0, 0.0, 3.0 / 6.0, 0.0],
    [3.0 / 6.0, -6.0 / 6.0, 3.0 / 6.0, 0.0],
    [-1.0 / 6.0, 3.0 / 6.0, -3.0 / 6.0, 1.0 / 6.0],
];

/// Blending weights `(1, t, t², t³) · BASIS` of the four control points,
/// written out per weight so they stay non-negative at the ends.
pub fn basis_weights(t: f64) -> [f64; 4] {
    let s = 1.0 - t;
    let t2 = t * t;
    let t3 = t2 * t;
    [
        s * s * s / 6.0,
        (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
        (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
        t3 / 6.0,
    ]
}

/// How the control grid continues past its ends in one direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wrap {
    /// No continuation: `M - 3` patches.
    Open,
    /// Closed loop: `M` patches.
    Periodic,
    /// End control points replicated twice so the surface reaches them: `M + 1` patches.
    Clamped,
}

impl Wrap {
    fn patch_count(self, m: usize) -> usize {
        match self {
            Wrap::Open => m - 3,
            Wrap::Periodic => m,
            Wrap::Clamped => m + 1,
        }
    }

    /// Control index for position `k` of the (possibly padded) sequence.
    fn control_index(self, k: usize, m: usize) -> usize {
        match self {
            Wrap::Open => k,
            Wrap::Periodic => k % m,
            Wrap::Clamped => k.saturating_sub(2).min(m - 1),
        }
    }
}

/// Grid of `rows × cols` control points. The `u` parameter runs along rows,
/// `v` along columns; patch `(i, j)` has id `i * col_patches + j`.
#[derive(Clone, Debug)]
pub struct BSplineSurface<S = f64> {
    pub rows: usize,
    pub cols: usize,
    pub control: Vec<Vec3<S>>,
    pub wrap_u: Wrap,
    pub wrap_v: Wrap,
}

impl<S: Scalar> BSplineSurface<S> {
    pub fn new(
        rows: usize,
        cols: usize,
        control: Vec<Vec3<S>>,
        wrap_u: Wrap,
        wrap_v: Wrap,
    ) -> Result<Self> {
        if rows < 4 || cols < 4 {
            return Err(Error::invalid("spline", format!("control grid {rows}×{cols} smaller than 4×4")));
        }
        if control.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} control points for a {rows}×{cols} grid",
                control.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            control,
            wrap_u,
            wrap_v,
        })
    }

    pub fn patch_grid(&self) -> (usize, usize) {
        (
            self.wrap_u.patch_count(self.rows),
            self.wrap_v.patch_count(self.cols),
        )
    }

    pub fn patch_count(&self) -> usize {
        let (a, b) = self.patch_grid();
        a * b
    }

    /// The 4×4 control indices of a patch.
    pub fn patch_indices(&self, patch: usize) -> Result<[[usize; 4]; 4]> {
        let (pu, pv) = self.patch_grid();
        if patch >= pu * pv {
            return Err(Error::IndexOutOfRange {
                index: patch,
                len: pu * pv,
            });
        }
        let (i, j) = (patch / pv, patch % pv);
        let mut idx = [[0; 4]; 4];
        for (a, row) in idx.iter_mut().enumerate() {
            let r = self.wrap_u.control_index(i + a, self.rows);
            for (b, slot) in row.iter_mut().enumerate() {
                *slot = r * self.cols + self.wrap_v.control_index(j + b, self.cols);
            }
        }
        Ok(idx)
    }

    /// `U · M · P · Mᵀ · Vᵀ` for one patch.
    pub fn evaluate(&self, patch: usize, u: f64, v: f64) -> Result<Vec3<S>> {
        let idx = self.patch_indices(patch)?;
        let (wu, wv) = (basis_weights(u), basis_weights(v));
        let mut acc = Vec3::zero();
        for a in 0..4 {
            let mut row = Vec3::zero();
            for b in 0..4 {
                row = row + self.control[idx[a][b]].scale_f(wv[b]);
            }
            acc = acc + row.scale_f(wu[a]);
        }
        Ok(acc)
    }

    pub fn value(&self) -> BSplineSurface<f64> {
        BSplineSurface {
            rows: self.rows,
            cols: self.cols,
            control: self.control.iter().map(|p| p.value()).collect(),
            wrap_u: self.wrap_u,
            wrap_v: self.wrap_v,
        }
    }

    /// Approximate surface of revolution about the y axis.
    ///
    /// Profile control point `i` sits at height `heights[i]` with radius
    /// `radii[i]`; each ring has `segments` control points. The profile is
    /// clamped at both ends, the rings are periodic.
    pub fn revolution(radii: &[S], heights: &[f64], segments: usize) -> Result<Self> {
        if radii.len() != heights.len() {
            return Err(Error::Shape(format!(
                "{} radii for {} heights",
                radii.len(),
                heights.len()
            )));
        }
        let mut control = Vec::with_capacity(radii.len() * segments);
        for (&r, &h) in radii.iter().zip(heights) {
            for s in 0..segments {
                let a = 2.0 * PI * s as f64 / segments as f64;
                control.push(Vec3::new(r * a.cos(), S::constant(h), r * a.sin()));
            }
        }
        Self::new(radii.len(), segments, control, Wrap::Clamped, Wrap::Periodic)
    }
}

/// Radius of the curve traced by a periodic uniform cubic B-spline whose
/// control points form a regular `segments`-gon of circumradius 1, measured
/// at a knot.
pub fn revolution_knot_radius(segments: usize) -> f64 {
    (4.0 + 2.0 * (2.0 * PI / segments as f64).cos()) / 6.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(rows: usize, cols: usize, f: impl Fn(usize, usize) -> Vec3<f64>) -> Vec<Vec3<f64>> {
        (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| f(i, j))
            .collect()
    }

    #[test]
    fn weights_at_zero() {
        let w = basis_weights(0.0);
        assert_abs_diff_eq!(w[0], 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], 4.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[2], 1.0 / 6.0, epsilon = 1e-15);
        assert_eq!(w[3], 0.0);
    }

    #[test]
    fn weights_match_basis_matrix() {
        for t in [0.0, 0.2, 0.5, 0.77, 1.0] {
            let powers = [1.0, t, t * t, t * t * t];
            let w = basis_weights(t);
            for (j, wj) in w.iter().enumerate() {
                let m: f64 = (0..4).map(|k| powers[k] * BASIS[k][j]).sum();
                assert_abs_diff_eq!(*wj, m, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn weights_partition_unity() {
        for t in [0.0, 0.1, 0.5, 0.93, 1.0] {
            let w = basis_weights(t);
            assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
            assert!(w.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn constant_control_net_evaluates_to_constant() {
        let c = Vec3::new(0.3, -2.0, 7.0);
        let s = BSplineSurface::new(4, 4, vec![c; 16], Wrap::Open, Wrap::Open).unwrap();
        for (u, v) in [(0.0, 0.0), (0.3, 0.8), (1.0, 0.5)] {
            let p = s.evaluate(0, u, v).unwrap();
            assert_abs_diff_eq!((p - c).norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn planar_net_stays_on_plane() {
        // Plane 2x - y + 3z = 1.
        let ctrl = grid(6, 5, |i, j| {
            let (x, y) = (i as f64 * 0.7 - 1.0, j as f64 * 1.3 + 0.2 * i as f64);
            Vec3::new(x, y, (1.0 - 2.0 * x + y) / 3.0)
        });
        let s = BSplineSurface::new(6, 5, ctrl, Wrap::Open, Wrap::Open).unwrap();
        assert_eq!(s.patch_count(), 3 * 2);
        for patch in 0..s.patch_count() {
            for (u, v) in [(0.0, 0.0), (0.25, 0.75), (1.0, 1.0), (0.6, 0.1)] {
                let p = s.evaluate(patch, u, v).unwrap();
                assert_abs_diff_eq!(2.0 * p.x - p.y + 3.0 * p.z, 1.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn patch_counts_per_wrap_mode() {
        let ctrl = vec![Vec3::<f64>::zero(); 5 * 6];
        let open = BSplineSurface::new(5, 6, ctrl.clone(), Wrap::Open, Wrap::Open).unwrap();
        assert_eq!(open.patch_grid(), (2, 3));
        let per = BSplineSurface::new(5, 6, ctrl.clone(), Wrap::Open, Wrap::Periodic).unwrap();
        assert_eq!(per.patch_grid(), (2, 6));
        let cl = BSplineSurface::new(5, 6, ctrl, Wrap::Clamped, Wrap::Periodic).unwrap();
        assert_eq!(cl.patch_grid(), (6, 6));
        assert!(cl.patch_indices(36).is_err());
    }

    #[test]
    fn clamped_ends_interpolate_end_rows() {
        let radii = [0.5, 0.6, 0.3, 0.7];
        let heights = [-1.0, -0.3, 0.3, 1.0];
        let s = BSplineSurface::revolution(&radii, &heights, 8).unwrap();
        let (pu, pv) = s.patch_grid();
        let first = s.evaluate(0, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(first.y, -1.0, epsilon = 1e-14);
        let last = s.evaluate((pu - 1) * pv, 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(last.y, 1.0, epsilon = 1e-14);
        let k = revolution_knot_radius(8);
        assert_abs_diff_eq!((first.x * first.x + first.z * first.z).sqrt(), 0.5 * k, epsilon = 1e-14);
    }

    #[test]
    fn rejects_small_grid() {
        assert!(BSplineSurface::new(3, 4, vec![Vec3::<f64>::zero(); 12], Wrap::Open, Wrap::Open).is_err());
    }
}
