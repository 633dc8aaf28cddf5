//! Deferred shading of G-buffer layers into premultiplied RGBA.

use crate::autodiff::Scalar;
use crate::evaluator::{GBuffer, GSample};
use crate::math::Vec3;
use crate::scene::Texture;
use crate::{Error, Result};

/// Guard added to squared normal length before renormalizing.
pub const NORMAL_GUARD: f64 = 1e-12;

/// Premultiplied RGBA per pixel and layer; `None` where no surface was hit.
#[derive(Clone, Debug, PartialEq)]
pub struct ShadedLayer<S> {
    pub width: usize,
    pub height: usize,
    pub layers: usize,
    pub rgba: Vec<Option<[S; 4]>>,
}

impl<S: Scalar> ShadedLayer<S> {
    pub fn get(&self, layer: usize, x: usize, y: usize) -> [S; 4] {
        self.rgba[(layer * self.height + y) * self.width + x].unwrap_or([S::zero(); 4])
    }

    /// Layer `k` as an image, zero where invalid.
    pub fn layer_image(&self, layer: usize) -> crate::Image<S> {
        let n = self.width * self.height;
        let pixels = self.rgba[layer * n..(layer + 1) * n]
            .iter()
            .map(|c| c.unwrap_or([S::zero(); 4]))
            .collect();
        crate::Image {
            width: self.width,
            height: self.height,
            pixels,
        }
    }
}

fn shade<S: Scalar>(g: &GBuffer<S>, mut f: impl FnMut(&GSample<S>) -> [S; 4]) -> ShadedLayer<S> {
    ShadedLayer {
        width: g.width,
        height: g.height,
        layers: g.layers,
        rgba: g.samples.iter().map(|s| s.as_ref().map(&mut f)).collect(),
    }
}

fn opaque<S: Scalar>(c: Vec3<S>) -> [S; 4] {
    [c.x, c.y, c.z, S::one()]
}

pub fn shade_silhouette<S: Scalar>(g: &GBuffer<S>) -> ShadedLayer<S> {
    shade(g, |_| [S::one(); 4])
}

pub fn shade_flat<S: Scalar>(g: &GBuffer<S>, color: Vec3<S>) -> ShadedLayer<S> {
    shade(g, |_| opaque(color))
}

/// Interpolated vertex colors; samples without colors shade black.
pub fn shade_vertex_color<S: Scalar>(g: &GBuffer<S>) -> ShadedLayer<S> {
    shade(g, |s| opaque(s.color.unwrap_or_else(Vec3::zero)))
}

/// `albedo · (ambient + light · max(0, n̂·l̂))` with a bilinear texture fetch.
pub fn shade_diffuse_textured<S: Scalar>(
    g: &GBuffer<S>,
    texture: &Texture<S>,
    light_dir: Vec3<f64>,
    light_color: Vec3<S>,
    ambient: Vec3<S>,
) -> Result<ShadedLayer<S>> {
    let l = light_dir.normalized(0.0);
    let mut missing = None;
    let out = shade(g, |s| {
        let (Some(n), Some(uv)) = (s.normal, s.uv) else {
            missing = Some(());
            return [S::zero(); 4];
        };
        let n = n.scale(S::one() / (n.norm_squared() + NORMAL_GUARD).sqrt());
        let lambert = n.dot(Vec3::constant(l)).max(S::zero());
        let albedo = texture.sample(uv[0], uv[1]);
        let light = ambient + light_color * lambert;
        opaque(Vec3::new(albedo.x * light.x, albedo.y * light.y, albedo.z * light.z))
    });
    if missing.is_some() {
        return Err(Error::invalid("diffuse shading", "G-buffer lacks normals or texture coordinates"));
    }
    Ok(out)
}

/// Applies `f` to every valid sample. Non-finite output is reported with the
/// offending pixel.
pub fn shade_custom<S: Scalar>(
    g: &GBuffer<S>,
    mut f: impl FnMut(&GSample<S>) -> [S; 4],
) -> Result<ShadedLayer<S>> {
    let out = shade(g, &mut f);
    let n = g.width * g.height;
    for (i, c) in out.rgba.iter().enumerate() {
        if let Some(c) = c {
            if c.iter().any(|v| !v.is_finite()) {
                let p = i % n;
                return Err(Error::NonFinitePixel {
                    x: p % g.width,
                    y: p / g.width,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gbuf(valid: &[bool]) -> GBuffer<f64> {
        GBuffer {
            width: valid.len(),
            height: 1,
            layers: 1,
            samples: valid
                .iter()
                .map(|&v| {
                    v.then_some(GSample {
                        position: Vec3::new(0.5, 0.25, 2.0),
                        normal: Some(Vec3::new(0.0, 0.0, 2.0)),
                        uv: Some([0.5, 0.5]),
                        color: Some(Vec3::new(0.1, 0.2, 0.3)),
                    })
                })
                .collect(),
        }
    }

    #[test]
    fn silhouette_alpha_is_mask() {
        let mask = [true, false, true, true, false];
        let s = shade_silhouette(&gbuf(&mask));
        for (x, &m) in mask.iter().enumerate() {
            assert_eq!(s.get(0, x, 0)[3], if m { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn flat_color_only_where_valid() {
        let s = shade_flat(&gbuf(&[true, false]), Vec3::new(0.0, 1.0, 0.0));
        assert_eq!(s.get(0, 0, 0), [0.0, 1.0, 0.0, 1.0]);
        assert_eq!(s.get(0, 1, 0), [0.0; 4]);
    }

    #[test]
    fn diffuse_facing_and_grazing() {
        let white = Texture::new(1, 1, vec![Vec3::new(1.0, 1.0, 1.0)]).unwrap();
        let g = gbuf(&[true]);
        let s = shade_diffuse_textured(&g, &white, Vec3::new(0.0, 0.0, 1.0), Vec3::splat(1.0), Vec3::zero()).unwrap();
        for c in &s.get(0, 0, 0)[..3] {
            assert!((c - 1.0).abs() < 1e-12);
        }
        let amb = Vec3::new(0.1, 0.2, 0.3);
        let s = shade_diffuse_textured(&g, &white, Vec3::new(1.0, 0.0, 0.0), Vec3::splat(1.0), amb).unwrap();
        assert_eq!(&s.get(0, 0, 0)[..3], &[0.1, 0.2, 0.3]);
    }

    #[test]
    fn custom_reports_nan_pixel() {
        let g = gbuf(&[true, false, true]);
        let mut k = 0;
        let r = shade_custom(&g, |_| {
            k += 1;
            if k == 2 {
                [f64::NAN; 4]
            } else {
                [0.0; 4]
            }
        });
        assert!(matches!(r, Err(Error::NonFinitePixel { x: 2, y: 0 })));
    }
}
