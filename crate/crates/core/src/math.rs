//! Small fixed-size vector algebra over any [`Scalar`].

use std::ops::{Add, Index, Mul, Neg, Sub};

use crate::autodiff::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec3<S> {
    pub x: S,
    pub y: S,
    pub z: S,
}

impl<S> Vec3<S> {
    pub const fn new(x: S, y: S, z: S) -> Self {
        Self { x, y, z }
    }
}

impl<S: Copy> Vec3<S> {
    pub fn to_array(self) -> [S; 3] {
        [self.x, self.y, self.z]
    }

    pub fn map<T>(self, f: impl Fn(S) -> T) -> Vec3<T> {
        Vec3::new(f(self.x), f(self.y), f(self.z))
    }
}

impl<S: Copy> From<[S; 3]> for Vec3<S> {
    fn from(a: [S; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl<S> Index<usize> for Vec3<S> {
    type Output = S;
    fn index(&self, i: usize) -> &S {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl<S: Scalar> Vec3<S> {
    pub fn splat(v: S) -> Self {
        Self::new(v, v, v)
    }

    pub fn zero() -> Self {
        Self::splat(S::zero())
    }

    pub fn constant(v: Vec3<f64>) -> Self {
        v.map(S::constant)
    }

    pub fn value(&self) -> Vec3<f64> {
        Vec3::new(self.x.value(), self.y.value(), self.z.value())
    }

    pub fn dot(self, o: Self) -> S {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn scale(self, s: S) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn scale_f(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn norm_squared(self) -> S {
        self.dot(self)
    }

    pub fn norm(self) -> S {
        self.norm_squared().sqrt()
    }

    /// Unit vector; `guard` is added to the squared length before the root.
    pub fn normalized(self, guard: f64) -> Self {
        let inv = S::one() / (self.norm_squared() + guard).sqrt();
        self.scale(inv)
    }

    pub fn lerp(self, o: Self, t: S) -> Self {
        self + (o - self).scale(t)
    }
}

impl<S: Scalar> Add for Vec3<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<S: Scalar> Sub for Vec3<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<S: Scalar> Neg for Vec3<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<S: Scalar> Mul<S> for Vec3<S> {
    type Output = Self;
    fn mul(self, s: S) -> Self {
        self.scale(s)
    }
}

/// Row-major 3×3 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3<S> {
    pub rows: [Vec3<S>; 3],
}

impl<S: Scalar> Mat3<S> {
    pub fn identity() -> Self {
        let (o, z) = (S::one(), S::zero());
        Self {
            rows: [Vec3::new(o, z, z), Vec3::new(z, o, z), Vec3::new(z, z, o)],
        }
    }

    pub fn from_rows(rows: [[S; 3]; 3]) -> Self {
        Self {
            rows: rows.map(Vec3::from),
        }
    }

    pub fn mul_vec(&self, v: Vec3<S>) -> Vec3<S> {
        Vec3::new(self.rows[0].dot(v), self.rows[1].dot(v), self.rows[2].dot(v))
    }

    pub fn transpose(&self) -> Self {
        let r = &self.rows;
        Self::from_rows([
            [r[0].x, r[1].x, r[2].x],
            [r[0].y, r[1].y, r[2].y],
            [r[0].z, r[1].z, r[2].z],
        ])
    }

    pub fn mul_mat(&self, o: &Self) -> Self {
        let t = o.transpose();
        let row = |r: Vec3<S>| [r.dot(t.rows[0]), r.dot(t.rows[1]), r.dot(t.rows[2])];
        Self::from_rows([row(self.rows[0]), row(self.rows[1]), row(self.rows[2])])
    }

    pub fn value(&self) -> Mat3<f64> {
        Mat3 {
            rows: self.rows.map(|r| r.value()),
        }
    }

    /// Rotation matrix of an axis-angle vector (Rodrigues' formula).
    ///
    /// Near the identity the coefficients use their Taylor series in θ² so
    /// derivatives stay finite at zero rotation.
    pub fn from_axis_angle(w: Vec3<S>) -> Self {
        let theta2 = w.norm_squared();
        let (a, b) = if theta2.value() < 1e-6 {
            let t4 = theta2 * theta2;
            (
                S::one() - theta2 / 6.0 + t4 / 120.0,
                S::constant(0.5) - theta2 / 24.0 + t4 / 720.0,
            )
        } else {
            let theta = theta2.sqrt();
            (theta.sin() / theta, (S::one() - theta.cos()) / theta2)
        };
        // R = I + a [w]x + b [w]x^2
        let (x, y, z) = (w.x, w.y, w.z);
        let (xx, yy, zz) = (x * x, y * y, z * z);
        let (xy, xz, yz) = (x * y, x * z, y * z);
        let one = S::one();
        Self::from_rows([
            [one - b * (yy + zz), b * xy - a * z, b * xz + a * y],
            [b * xy + a * z, one - b * (xx + zz), b * yz - a * x],
            [b * xz - a * y, b * yz + a * x, one - b * (xx + yy)],
        ])
    }
}

impl Mat3<f64> {
    /// Axis-angle vector of a rotation matrix (inverse of [`Mat3::from_axis_angle`]).
    pub fn to_axis_angle(&self) -> Vec3<f64> {
        let r = &self.rows;
        let trace = r[0].x + r[1].y + r[2].z;
        let cos = ((trace - 1.0) * 0.5).clamp(-1.0, 1.0);
        let theta = cos.acos();
        let skew = Vec3::new(r[2].y - r[1].z, r[0].z - r[2].x, r[1].x - r[0].y);
        if theta < 1e-7 {
            return skew.scale_f(0.5);
        }
        if std::f64::consts::PI - theta > 1e-6 {
            return skew.scale_f(theta / (2.0 * theta.sin()));
        }
        // Near π: axis from the diagonal of (R + I) / 2 = a aᵀ.
        let diag = [r[0].x, r[1].y, r[2].z];
        let k = (0..3)
            .max_by(|&i, &j| diag[i].total_cmp(&diag[j]))
            .unwrap_or(0);
        let mut axis = [0.0; 3];
        axis[k] = ((diag[k] + 1.0) * 0.5).max(0.0).sqrt();
        for j in 0..3 {
            if j != k {
                let rkj = [r[k].x, r[k].y, r[k].z][j];
                axis[j] = rkj * 0.5 / axis[k];
            }
        }
        let a = Vec3::from(axis).normalized(0.0);
        a.scale_f(theta)
    }
}

/// Pixel-space 2-vector.
pub type Vec2<S> = [S; 2];
