use crate::autodiff::Scalar;
use crate::math::Vec3;
use crate::{Error, Result};

/// RGB texel grid with clamp-to-edge addressing.
///
/// Texel `(i, j)` (column, row) has its center at
/// `((i + 0.5) / width, (j + 0.5) / height)` in uv space; row 0 is `v = 0`.
#[derive(Clone, Debug)]
pub struct Texture<S = f64> {
    pub width: usize,
    pub height: usize,
    pub texels: Vec<Vec3<S>>,
}

impl<S: Scalar> Texture<S> {
    pub fn new(width: usize, height: usize, texels: Vec<Vec3<S>>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("texture", "needs at least one texel"));
        }
        if texels.len() != width * height {
            return Err(Error::Shape(format!(
                "{} texels for {width}×{height}",
                texels.len()
            )));
        }
        if texels.iter().any(|t| !(t.x.is_finite() && t.y.is_finite() && t.z.is_finite())) {
            return Err(Error::invalid("texture", "non-finite texel"));
        }
        Ok(Self {
            width,
            height,
            texels,
        })
    }

    pub fn texel(&self, i: usize, j: usize) -> Vec3<S> {
        self.texels[j * self.width + i]
    }

    /// Bilinear fetch, differentiable w.r.t. texels and coordinates.
    pub fn sample(&self, u: S, v: S) -> Vec3<S> {
        let (ix, fx) = Self::axis(u, self.width);
        let (iy, fy) = Self::axis(v, self.height);
        let row = |j: usize| {
            let a = self.texel(ix.0, j);
            let b = self.texel(ix.1, j);
            a.lerp(b, fx)
        };
        row(iy.0).lerp(row(iy.1), fy)
    }

    /// Neighbouring texel indices and interpolation fraction along one axis.
    fn axis(t: S, n: usize) -> ((usize, usize), S) {
        if n == 1 {
            return ((0, 0), S::zero());
        }
        let x = (t * n as f64 - 0.5)
            .max(S::zero())
            .min(S::constant((n - 1) as f64));
        let i0 = (x.floor_const() as usize).min(n - 2);
        ((i0, i0 + 1), x - i0 as f64)
    }
}
