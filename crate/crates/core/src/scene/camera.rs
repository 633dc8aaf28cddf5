//! Pinhole camera, rigid object pose and the screen-space projection.
//!
//! View space looks down +z with x to the right and y down, so pixel (i, j)
//! has its center at screen coordinates (i, j). Depth is stored as
//! `(1/near - 1/d) / (1/near - 1/far)`, which is affine in screen space.

use crate::autodiff::Scalar;
use crate::math::{Mat3, Vec3};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct Camera {
    /// World-to-view rotation as an axis-angle vector.
    pub rotation: Vec3<f64>,
    /// World-to-view translation.
    pub translation: Vec3<f64>,
    /// Vertical field of view in radians.
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
    matrix: Mat3<f64>,
}

impl Camera {
    pub fn new(
        rotation: Vec3<f64>,
        translation: Vec3<f64>,
        fov_y: f64,
        width: usize,
        height: usize,
        near: f64,
        far: f64,
    ) -> Result<Self> {
        if !(fov_y > 0.0 && fov_y < std::f64::consts::PI) {
            return Err(Error::invalid("camera", format!("field of view {fov_y} outside (0, π)")));
        }
        if !(near > 0.0 && near < far) {
            return Err(Error::invalid("camera", format!("need 0 < near < far, got {near}, {far}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("camera", "image size must be at least 1×1"));
        }
        Ok(Self {
            rotation,
            translation,
            fov_y,
            width,
            height,
            near,
            far,
            matrix: Mat3::from_axis_angle(rotation),
        })
    }

    /// Camera at `eye` looking at `target`, with `up` pointing up in the image.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        eye: Vec3<f64>,
        target: Vec3<f64>,
        up: Vec3<f64>,
        fov_y: f64,
        width: usize,
        height: usize,
        near: f64,
        far: f64,
    ) -> Result<Self> {
        let forward = (target - eye).normalized(0.0);
        let right = forward.cross(up);
        if right.norm() < 1e-12 {
            return Err(Error::invalid("camera", "up vector parallel to viewing direction"));
        }
        let right = right.normalized(0.0);
        let down = forward.cross(right);
        let matrix = Mat3 {
            rows: [right, down, forward],
        };
        let translation = -matrix.mul_vec(eye);
        Self::new(matrix.to_axis_angle(), translation, fov_y, width, height, near, far)
    }

    /// Focal length in pixels.
    pub fn focal(&self) -> f64 {
        0.5 * self.height as f64 / (0.5 * self.fov_y).tan()
    }

    /// Principal point; the optical axis hits the middle of the image.
    pub fn center(&self) -> [f64; 2] {
        [0.5 * self.width as f64 - 0.5, 0.5 * self.height as f64 - 0.5]
    }

    pub fn rotation_matrix(&self) -> &Mat3<f64> {
        &self.matrix
    }

    pub fn eye(&self) -> Vec3<f64> {
        -self.matrix.transpose().mul_vec(self.translation)
    }

    pub fn to_view<S: Scalar>(&self, p: Vec3<S>) -> Vec3<S> {
        let r = &self.matrix.rows;
        let t = self.translation;
        Vec3::new(
            p.x * r[0].x + p.y * r[0].y + p.z * r[0].z + t.x,
            p.x * r[1].x + p.y * r[1].y + p.z * r[1].z + t.y,
            p.x * r[2].x + p.y * r[2].y + p.z * r[2].z + t.z,
        )
    }

    /// Normalized depth of a view-space distance along the optical axis.
    pub fn normalized_depth<S: Scalar>(&self, d: S) -> S {
        let inv_near = 1.0 / self.near;
        let scale = 1.0 / (inv_near - 1.0 / self.far);
        (S::constant(inv_near) - S::one() / d) * scale
    }

    /// Screen position of a view-space point; `None` in front of the near plane.
    pub fn project_view<S: Scalar>(&self, v: Vec3<S>) -> Option<Vec3<S>> {
        if !(v.z.value() >= self.near) {
            return None;
        }
        let f = self.focal();
        let [cx, cy] = self.center();
        let inv = S::one() / v.z;
        Some(Vec3::new(
            v.x * inv * f + cx,
            v.y * inv * f + cy,
            self.normalized_depth(v.z),
        ))
    }
}

/// Screen-space position `(x, y, depth)` of a world point.
///
/// Returns `None` for points in front of the near plane; such samples are
/// excluded from splatting.
pub fn project<S: Scalar>(point: Vec3<S>, camera: &Camera) -> Option<Vec3<S>> {
    camera.project_view(camera.to_view(point))
}

/// Rigid transform of an object: rotation (axis-angle) followed by translation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseParams<S = f64> {
    pub rotation: Vec3<S>,
    pub translation: Vec3<S>,
}

impl<S: Scalar> PoseParams<S> {
    pub fn identity() -> Self {
        Self {
            rotation: Vec3::zero(),
            translation: Vec3::zero(),
        }
    }

    /// From `[rx, ry, rz, tx, ty, tz]`.
    pub fn from_slice(p: &[S]) -> Self {
        assert_eq!(p.len(), 6, "pose has six parameters");
        Self {
            rotation: Vec3::new(p[0], p[1], p[2]),
            translation: Vec3::new(p[3], p[4], p[5]),
        }
    }

    pub fn to_array(&self) -> [S; 6] {
        let (r, t) = (self.rotation, self.translation);
        [r.x, r.y, r.z, t.x, t.y, t.z]
    }

    pub fn value(&self) -> PoseParams<f64> {
        PoseParams {
            rotation: self.rotation.value(),
            translation: self.translation.value(),
        }
    }

    pub fn matrix(&self) -> Mat3<S> {
        Mat3::from_axis_angle(self.rotation)
    }

    pub fn apply(&self, p: Vec3<S>) -> Vec3<S> {
        self.matrix().mul_vec(p) + self.translation
    }

    /// Pose undoing `self`.
    pub fn inverse(&self) -> Self {
        let rotation = -self.rotation;
        let translation = -Mat3::from_axis_angle(rotation).mul_vec(self.translation);
        Self {
            rotation,
            translation,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Applies `pose` to every point.
pub fn rigid_transform<S: Scalar>(points: &[Vec3<S>], pose: &PoseParams<S>) -> Vec<Vec3<S>> {
    let r = pose.matrix();
    points.iter().map(|&p| r.mul_vec(p) + pose.translation).collect()
}

/// Angle in radians of the relative rotation between two poses.
pub fn rotation_error(a: &PoseParams<f64>, b: &PoseParams<f64>) -> f64 {
    let rel = a.matrix().mul_mat(&b.matrix().transpose());
    rel.to_axis_angle().norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{check_gradient, Objective};
    use approx::assert_abs_diff_eq;

    fn camera() -> Camera {
        Camera::look_at(
            Vec3::new(0.0, 0.0, 5.0),
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            0.8,
            64,
            48,
            0.5,
            20.0,
        )
        .unwrap()
    }

    #[test]
    fn optical_axis_maps_to_image_center() {
        let cam = camera();
        let p = project(Vec3::new(0.0, 0.0, 0.0), &cam).unwrap();
        assert_abs_diff_eq!(p.x, 31.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 23.5, epsilon = 1e-12);
        assert!(p.z > 0.0 && p.z < 1.0);
    }

    #[test]
    fn image_axes_are_right_and_down() {
        let cam = camera();
        let right = project(Vec3::new(1.0, 0.0, 0.0), &cam).unwrap();
        let up = project(Vec3::new(0.0, 1.0, 0.0), &cam).unwrap();
        assert!(right.x > 31.5);
        assert!(up.y < 23.5);
    }

    #[test]
    fn rigid_motion_of_camera_and_point_is_invisible() {
        let a = Vec3::new(0.7, -1.3, 2.2);
        let cam = camera();
        let moved = Camera::look_at(
            Vec3::new(0.0, 0.0, 5.0) + a,
            a,
            Vec3::new(0.0, 1.0, 0.0),
            0.8,
            64,
            48,
            0.5,
            20.0,
        )
        .unwrap();
        let p = Vec3::new(0.3, 0.2, -0.4);
        let s0 = project(p, &cam).unwrap();
        let s1 = project(p + a, &moved).unwrap();
        assert_abs_diff_eq!((s0 - s1).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn near_plane_has_zero_depth_and_far_plane_unit_depth() {
        let cam = camera();
        let near = project(Vec3::new(0.0, 0.0, 4.5), &cam).unwrap();
        assert_abs_diff_eq!(near.z, 0.0, epsilon = 1e-12);
        let far = project(Vec3::new(0.0, 0.0, -15.0), &cam).unwrap();
        assert_abs_diff_eq!(far.z, 1.0, epsilon = 1e-12);
        assert!(project(Vec3::new(0.0, 0.0, 4.6), &cam).is_none());
    }

    #[test]
    fn depth_is_monotonic() {
        let cam = camera();
        let zs: Vec<f64> = (0..10)
            .map(|i| project(Vec3::new(0.1, 0.0, 4.0 - i as f64), &cam).unwrap().z)
            .collect();
        assert!(zs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn zero_pose_is_identity() {
        let p = [Vec3::new(1.0, 2.0, 3.0), Vec3::new(-0.5, 0.0, 4.0)];
        assert_eq!(rigid_transform(&p, &PoseParams::identity()), p.to_vec());
    }

    #[test]
    fn half_turn_about_z() {
        let pose = PoseParams {
            rotation: Vec3::new(0.0, 0.0, std::f64::consts::PI),
            translation: Vec3::zero(),
        };
        let q = pose.apply(Vec3::new(1.0, 0.0, 0.0));
        assert_abs_diff_eq!((q - Vec3::new(-1.0, 0.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn pose_then_inverse_is_identity() {
        let pose = PoseParams::from_slice(&[0.4, -1.1, 0.3, 2.0, -0.5, 1.5]);
        let inv = pose.inverse();
        for p in [Vec3::new(1.0, 2.0, 3.0), Vec3::new(-4.0, 0.1, 0.0)] {
            let back = inv.apply(pose.apply(p));
            assert_abs_diff_eq!((back - p).norm(), 0.0, epsilon = 1e-12);
        }
    }

    struct ProjectCoord {
        cam: Camera,
        axis: usize,
    }

    impl Objective for ProjectCoord {
        // x = [px, py, pz, rx, ry, rz, tx, ty, tz]
        fn eval<S: Scalar>(&self, x: &[S]) -> S {
            let pose = PoseParams::from_slice(&x[3..9]);
            let p = pose.apply(Vec3::new(x[0], x[1], x[2]));
            project(p, &self.cam).unwrap()[self.axis]
        }
    }

    #[test]
    fn projection_gradients_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let x: Vec<f64> = (0..9)
                .map(|i| {
                    let r = if i < 3 { 1.0 } else if i < 6 { 0.5 } else { 0.3 };
                    rng.gen_range(-r..r)
                })
                .collect();
            for axis in 0..3 {
                let f = ProjectCoord { cam: camera(), axis };
                let err = check_gradient(&f, &x, 1e-6);
                assert!(err < 1e-5, "axis {axis} err {err} at {x:?}");
            }
        }
    }

    #[test]
    fn pose_gradient_is_finite_at_identity() {
        let f = ProjectCoord { cam: camera(), axis: 0 };
        let x = [0.5, 0.2, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let err = check_gradient(&f, &x, 1e-6);
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn rejects_bad_intrinsics() {
        let z = Vec3::zero();
        assert!(Camera::new(z, z, 0.0, 4, 4, 0.1, 1.0).is_err());
        assert!(Camera::new(z, z, 1.0, 4, 4, 1.0, 1.0).is_err());
        assert!(Camera::new(z, z, 1.0, 0, 4, 0.1, 1.0).is_err());
    }
}
