//! Lattice-sampled implicit surfaces and analytic sphere-based fields.

use std::cell::RefCell;

use crate::autodiff::Scalar;
use crate::math::Vec3;
use crate::{Error, Result};

/// Shape and placement of a value lattice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lattice {
    pub dims: [usize; 3],
    pub origin: Vec3<f64>,
    pub spacing: f64,
}

impl Lattice {
    pub fn new(dims: [usize; 3], origin: Vec3<f64>, spacing: f64) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::invalid("lattice", format!("dimensions {dims:?} need at least 2 points per axis")));
        }
        if !(spacing > 0.0) {
            return Err(Error::invalid("lattice", format!("spacing {spacing} must be positive")));
        }
        Ok(Self {
            dims,
            origin,
            spacing,
        })
    }

    /// `n³` lattice covering the cube `[-half, half]³`.
    pub fn cube(n: usize, half: f64) -> Result<Self> {
        Self::new([n; 3], Vec3::splat(-half), 2.0 * half / (n.max(2) - 1) as f64)
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let [x, y, _] = self.dims;
        [idx % x, (idx / x) % y, idx / (x * y)]
    }

    pub fn position(&self, idx: usize) -> Vec3<f64> {
        let [i, j, k] = self.coords(idx);
        self.origin + Vec3::new(i as f64, j as f64, k as f64).scale_f(self.spacing)
    }
}

/// Values of `f` on a lattice; the surface is the level set `f = iso`.
#[derive(Clone, Debug)]
pub struct ImplicitGrid<S = f64> {
    pub lattice: Lattice,
    pub values: Vec<S>,
    pub iso: f64,
}

impl<S: Scalar> ImplicitGrid<S> {
    pub fn new(lattice: Lattice, values: Vec<S>, iso: f64) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::Shape(format!(
                "{} values for a lattice of {}",
                values.len(),
                lattice.len()
            )));
        }
        Ok(Self {
            lattice,
            values,
            iso,
        })
    }

    pub fn value(&self) -> ImplicitGrid<f64> {
        ImplicitGrid {
            lattice: self.lattice,
            values: self.values.iter().map(|v| v.value()).collect(),
            iso: self.iso,
        }
    }
}

/// Differentiable access to individual lattice values.
///
/// The evaluator only touches the handful of lattice points that samples
/// reference, so sources may compute values lazily.
pub trait LatticeSource<S> {
    fn lattice(&self) -> &Lattice;
    fn iso(&self) -> f64;
    fn value_at(&self, idx: usize) -> S;
}

impl<S: Scalar> LatticeSource<S> for ImplicitGrid<S> {
    fn lattice(&self) -> &Lattice {
        &self.lattice
    }
    fn iso(&self) -> f64 {
        self.iso
    }
    fn value_at(&self, idx: usize) -> S {
        self.values[idx]
    }
}

/// Analytic signed distance fields built from spheres.
#[derive(Clone, Debug)]
pub enum SphereField<S = f64> {
    /// A sphere of radius `tube_radius` swept along a circle of radius
    /// `ring_radius` around `axis` (a torus).
    SweptSphere {
        ring_radius: S,
        tube_radius: S,
        center: Vec3<S>,
        axis: Vec3<f64>,
    },
    /// Union (pointwise minimum) of spheres.
    SphereUnion {
        centers: Vec<Vec3<S>>,
        radii: Vec<S>,
    },
}

/// Guard added under square roots of squared distances.
const SQRT_GUARD: f64 = 1e-24;

impl<S: Scalar> SphereField<S> {
    /// Spheres whose 2-D centers lie in the plane spanned by `e1`, `e2` through `origin`.
    pub fn planar_union(
        centers: &[[S; 2]],
        radii: Vec<S>,
        origin: Vec3<f64>,
        e1: Vec3<f64>,
        e2: Vec3<f64>,
    ) -> Self {
        let centers = centers
            .iter()
            .map(|c| Vec3::constant(origin) + Vec3::constant(e1).scale(c[0]) + Vec3::constant(e2).scale(c[1]))
            .collect();
        SphereField::SphereUnion { centers, radii }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            SphereField::SweptSphere {
                ring_radius,
                tube_radius,
                ..
            } => ring_radius.value() >= 0.0 && tube_radius.value() > 0.0,
            SphereField::SphereUnion { centers, radii } => {
                if centers.len() != radii.len() {
                    return Err(Error::Shape(format!("{} centers, {} radii", centers.len(), radii.len())));
                }
                radii.iter().all(|r| r.value() > 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("sphere field", "radii must be positive"))
        }
    }

    fn sphere_sdf(p: Vec3<f64>, center: Vec3<S>, radius: S) -> S {
        let d = Vec3::constant(p) - center;
        (d.norm_squared() + SQRT_GUARD).sqrt() - radius
    }

    /// Signed distance at `p`.
    pub fn sdf(&self, p: Vec3<f64>) -> S {
        match self {
            SphereField::SweptSphere {
                ring_radius,
                tube_radius,
                center,
                axis,
            } => {
                let d = Vec3::constant(p) - *center;
                let a = Vec3::constant(*axis);
                let h = d.dot(a);
                let radial = d - a.scale(h);
                let rho = (radial.norm_squared() + SQRT_GUARD).sqrt();
                let q = rho - *ring_radius;
                (q * q + h * h + SQRT_GUARD).sqrt() - *tube_radius
            }
            SphereField::SphereUnion { centers, radii } => {
                // Pointwise minimum; only the selected sphere carries derivatives.
                let k = self.nearest_sphere(p);
                Self::sphere_sdf(p, centers[k], radii[k])
            }
        }
    }

    /// Index of the sphere attaining the union minimum at `p` (first on ties).
    fn nearest_sphere(&self, p: Vec3<f64>) -> usize {
        match self {
            SphereField::SphereUnion { centers, radii } => {
                let mut best = (f64::INFINITY, 0);
                for (k, (c, r)) in centers.iter().zip(radii).enumerate() {
                    let d = (p - c.value()).norm_squared() + SQRT_GUARD;
                    let v = d.sqrt() - r.value();
                    if v < best.0 {
                        best = (v, k);
                    }
                }
                best.1
            }
            SphereField::SweptSphere { .. } => 0,
        }
    }

    /// Plain-arithmetic signed distance.
    pub fn sdf_value(&self, p: Vec3<f64>) -> f64 {
        match self {
            SphereField::SweptSphere { .. } => self.sdf(p).value(),
            SphereField::SphereUnion { centers, radii } => centers
                .iter()
                .zip(radii)
                .map(|(c, r)| ((p - c.value()).norm_squared() + SQRT_GUARD).sqrt() - r.value())
                .fold(f64::INFINITY, f64::min),
        }
    }
}

/// Evaluates the field at every lattice point (surface at `iso = 0`).
pub fn field_to_grid<S: Scalar>(field: &SphereField<S>, lattice: Lattice) -> ImplicitGrid<S> {
    let values = (0..lattice.len())
        .map(|i| field.sdf(lattice.position(i)))
        .collect();
    ImplicitGrid {
        lattice,
        values,
        iso: 0.0,
    }
}

/// Plain-arithmetic lattice values of a field, for the sampling stage.
pub fn field_to_grid_values<S: Scalar>(field: &SphereField<S>, lattice: Lattice) -> ImplicitGrid<f64> {
    use rayon::prelude::*;
    let plain = match field {
        SphereField::SweptSphere {
            ring_radius,
            tube_radius,
            center,
            axis,
        } => SphereField::SweptSphere {
            ring_radius: ring_radius.value(),
            tube_radius: tube_radius.value(),
            center: center.value(),
            axis: *axis,
        },
        SphereField::SphereUnion { centers, radii } => SphereField::SphereUnion {
            centers: centers.iter().map(|c| c.value()).collect(),
            radii: radii.iter().map(|r| r.value()).collect(),
        },
    };
    let values = (0..lattice.len())
        .into_par_iter()
        .map(|i| plain.sdf_value(lattice.position(i)))
        .collect();
    ImplicitGrid {
        lattice,
        values,
        iso: 0.0,
    }
}

/// Lattice values of a field computed on demand and cached.
pub struct LazyFieldGrid<'a, S> {
    field: &'a SphereField<S>,
    lattice: Lattice,
    cache: RefCell<std::collections::HashMap<usize, S>>,
}

impl<'a, S: Scalar> LazyFieldGrid<'a, S> {
    pub fn new(field: &'a SphereField<S>, lattice: Lattice) -> Self {
        Self {
            field,
            lattice,
            cache: RefCell::new(Default::default()),
        }
    }

    pub fn evaluated_count(&self) -> usize {
        self.cache.borrow().len()
    }
}

impl<S: Scalar> LatticeSource<S> for LazyFieldGrid<'_, S> {
    fn lattice(&self) -> &Lattice {
        &self.lattice
    }
    fn iso(&self) -> f64 {
        0.0
    }
    fn value_at(&self, idx: usize) -> S {
        if let Some(v) = self.cache.borrow().get(&idx) {
            return *v;
        }
        let v = self.field.sdf(self.lattice.position(idx));
        self.cache.borrow_mut().insert(idx, v);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{check_gradient, Objective};
    use approx::assert_abs_diff_eq;

    fn unit_sphere() -> SphereField<f64> {
        SphereField::SphereUnion {
            centers: vec![Vec3::zero()],
            radii: vec![1.0],
        }
    }

    #[test]
    fn sphere_sdf_center_and_surface() {
        let f = unit_sphere();
        assert_abs_diff_eq!(f.sdf(Vec3::zero()), -1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(f.sdf(Vec3::new(0.0, 1.0, 0.0)), 0.0, epsilon = 1e-12);
        let lat = Lattice::new([3, 3, 3], Vec3::splat(-1.0), 1.0).unwrap();
        let g = field_to_grid(&f, lat);
        assert_abs_diff_eq!(g.values[lat.index(1, 1, 1)], -1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(g.values[lat.index(1, 1, 2)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn union_is_min_of_members() {
        let f = SphereField::SphereUnion {
            centers: vec![Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.5, 0.0, 0.0)],
            radii: vec![0.5, 1.0],
        };
        for p in [Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.2, 0.7, -0.3), Vec3::new(-2.0, 1.0, 0.0)] {
            let a = (p - Vec3::new(-1.0, 0.0, 0.0)).norm() - 0.5;
            let b = (p - Vec3::new(1.5, 0.0, 0.0)).norm() - 1.0;
            assert_abs_diff_eq!(f.sdf(p), a.min(b), epsilon = 1e-9);
            assert_abs_diff_eq!(f.sdf_value(p), a.min(b), epsilon = 1e-9);
        }
    }

    #[test]
    fn swept_sphere_tube_center() {
        let f = SphereField::SweptSphere {
            ring_radius: 0.8,
            tube_radius: 0.3,
            center: Vec3::new(0.1, 0.2, 0.3),
            axis: Vec3::new(0.0, 1.0, 0.0),
        };
        let p = Vec3::new(0.1 + 0.8, 0.2, 0.3);
        assert_abs_diff_eq!(f.sdf(p), -0.3, epsilon = 1e-9);
        let q = Vec3::new(0.1, 0.2, 0.3 - 0.8);
        assert_abs_diff_eq!(f.sdf(q), -0.3, epsilon = 1e-9);
    }

    struct GridValue {
        idx: usize,
        swept: bool,
    }

    impl Objective for GridValue {
        fn eval<S: Scalar>(&self, x: &[S]) -> S {
            let lat = Lattice::cube(6, 1.0).unwrap();
            let field = if self.swept {
                SphereField::SweptSphere {
                    ring_radius: x[0],
                    tube_radius: x[1],
                    center: Vec3::new(x[2], S::zero(), S::zero()),
                    axis: Vec3::new(0.0, 0.0, 1.0),
                }
            } else {
                SphereField::SphereUnion {
                    centers: vec![Vec3::new(x[2], S::zero(), S::zero()), Vec3::new(S::constant(0.5), x[3], S::zero())],
                    radii: vec![x[0], x[1]],
                }
            };
            field_to_grid(&field, lat).values[self.idx]
        }
    }

    #[test]
    fn grid_gradients_match_finite_differences() {
        let lat = Lattice::cube(6, 1.0).unwrap();
        for swept in [true, false] {
            for idx in 0..lat.len() {
                let f = GridValue { idx, swept };
                let x = [0.55, 0.3, 0.05, -0.1];
                let err = check_gradient(&f, &x, 1e-6);
                assert!(err < 1e-5, "swept={swept} idx={idx} err={err}");
            }
        }
    }

    #[test]
    fn lazy_grid_matches_full_grid() {
        let field = SphereField::planar_union(
            &[[0.1, 0.2], [-0.3, 0.0], [0.25, -0.4]],
            vec![0.3, 0.4, 0.2],
            Vec3::zero(),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        );
        let lat = Lattice::cube(8, 1.0).unwrap();
        let full = field_to_grid(&field, lat);
        let plain = field_to_grid_values(&field, lat);
        let lazy = LazyFieldGrid::new(&field, lat);
        for i in (0..lat.len()).step_by(7) {
            assert_eq!(lazy.value_at(i), full.values[i]);
            assert_eq!(plain.values[i], full.values[i]);
        }
    }

    #[test]
    fn lattice_validation() {
        assert!(Lattice::new([1, 4, 4], Vec3::zero(), 1.0).is_err());
        assert!(Lattice::new([4, 4, 4], Vec3::zero(), 0.0).is_err());
        let l = Lattice::new([3, 4, 5], Vec3::zero(), 0.5).unwrap();
        assert_eq!(l.coords(l.index(2, 3, 4)), [2, 3, 4]);
    }
}
