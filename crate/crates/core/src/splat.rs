//! Differentiable splatting of shaded samples with depth-aware layer
//! accumulation.
//!
//! Each sample becomes a 3×3 Gaussian splat centered at its screen position.
//! Splat weights are normalized so that a pixel-centered splat sums to
//! `1 + ε`; accumulated colors are divided by `max(1, Σw)`.

use crate::autodiff::Scalar;
use crate::evaluator::PositionBuffer;
use crate::imagebuf::Image;
use crate::shading::ShadedLayer;
use crate::{Error, Result};

pub const SIGMA: f64 = 0.5;
pub const EPSILON: f64 = 0.05;

/// Pixel whose 3×3 neighbourhood a splat covers: the pixel nearest to `p`.
pub fn splat_center<S: Scalar>(p: [S; 2]) -> [i64; 2] {
    p.map(|v| (v.value() + 0.5).floor() as i64)
}

/// Unnormalized Gaussian factors along one axis for offsets -1, 0, 1.
fn axis_factors<S: Scalar>(c: i64, p: S) -> [S; 3] {
    let k = -1.0 / (2.0 * SIGMA * SIGMA);
    [-1, 0, 1].map(|o| {
        let d = S::constant((c + o) as f64) - p;
        (d * d * k).exp()
    })
}

/// Kernel normalization `W_p`: the 3×3 sum of unadjusted weights.
pub fn normalization<S: Scalar>(p: [S; 2]) -> S {
    let c = splat_center(p);
    let gx = axis_factors(c[0], p[0]);
    let gy = axis_factors(c[1], p[1]);
    (gx[0] + gx[1] + gx[2]) * (gy[0] + gy[1] + gy[2])
}

/// The nine weights of a splat, `w[dy + 1][dx + 1]` for pixel `center + (dx, dy)`.
pub fn splat_kernel<S: Scalar>(p: [S; 2]) -> ([i64; 2], [[S; 3]; 3]) {
    let c = splat_center(p);
    let gx = axis_factors(c[0], p[0]);
    let gy = axis_factors(c[1], p[1]);
    let total = (gx[0] + gx[1] + gx[2]) * (gy[0] + gy[1] + gy[2]);
    let scale = S::constant(1.0 + EPSILON) / total;
    let w = gy.map(|y| {
        let s = scale * y;
        gx.map(|x| s * x)
    });
    (c, w)
}

/// Weight of the splat centered at `p` on pixel `q`; zero outside its 3×3 support.
pub fn splat_weight<S: Scalar>(p: [S; 2], q: [i64; 2]) -> S {
    let (c, w) = splat_kernel(p);
    let (dx, dy) = (q[0] - c[0], q[1] - c[1]);
    if dx.abs() > 1 || dy.abs() > 1 {
        return S::zero();
    }
    w[(dy + 1) as usize][(dx + 1) as usize]
}

/// Premultiplied over operator.
pub fn composite_over<S: Scalar>(front: [S; 4], back: [S; 4]) -> [S; 4] {
    let t = S::one() - front[3];
    [0, 1, 2, 3].map(|k| front[k] + t * back[k])
}

/// Accumulation buffer a splat layer contributes to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Accumulator {
    /// In front of the surface seen at the target pixel.
    Front,
    /// The surface seen at the target pixel.
    Center,
    /// Behind it.
    Back,
}

/// Pairs the sample layers at a source pixel with those at a target pixel.
///
/// Depths are ascending per pixel; `None` marks an invalid layer. The p-layer
/// that pairs with the front-most q-layer and is closest to it in depth goes
/// to [`Accumulator::Center`] (ties to the nearer p-layer), layers in front of
/// it to `Front`, everything else to `Back`.
pub fn assign_layers(p: &[Option<f64>], q: &[Option<f64>]) -> Vec<Option<Accumulator>> {
    let Some((q0, &Some(q0_depth))) = q.iter().enumerate().find(|(_, d)| d.is_some()) else {
        return p.iter().map(|d| d.map(|_| Accumulator::Center)).collect();
    };
    let nearest_q = |dp: f64| {
        let mut best = (f64::INFINITY, usize::MAX);
        for (j, dq) in q.iter().enumerate() {
            if let Some(dq) = dq {
                let d = (dp - dq).abs();
                if d < best.0 {
                    best = (d, j);
                }
            }
        }
        best.1
    };
    let mut center = None;
    for (i, dp) in p.iter().enumerate() {
        if let Some(dp) = *dp {
            if nearest_q(dp) == q0 {
                let gap = (dp - q0_depth).abs();
                if center.map_or(true, |(g, _)| gap < g) {
                    center = Some((gap, i));
                }
            }
        }
    }
    p.iter()
        .enumerate()
        .map(|(i, d)| {
            d.map(|_| match center {
                Some((_, c)) if i < c => Accumulator::Front,
                Some((_, c)) if i == c => Accumulator::Center,
                _ => Accumulator::Back,
            })
        })
        .collect()
}

#[derive(Clone, Copy)]
struct Accum<S> {
    rgba: [S; 4],
    weight: S,
}

impl<S: Scalar> Accum<S> {
    fn add(slot: &mut Option<Self>, c: [S; 4], w: S) {
        match slot {
            Some(a) => {
                for k in 0..4 {
                    a.rgba[k] += c[k] * w;
                }
                a.weight += w;
            }
            None => {
                *slot = Some(Self {
                    rgba: c.map(|v| v * w),
                    weight: w,
                })
            }
        }
    }

    fn normalized(&self) -> [S; 4] {
        let d = self.weight.max(S::one());
        self.rgba.map(|v| v / d)
    }
}

fn check_shapes<S>(colors: &ShadedLayer<S>, positions: &PositionBuffer<S>) -> Result<()> {
    let a = (colors.width, colors.height, colors.layers);
    let b = (positions.width, positions.height, positions.layers);
    if a != b {
        return Err(Error::Shape(format!("shaded layers {a:?} vs positions {b:?}")));
    }
    Ok(())
}

/// Single-layer splatting: normalized weighted sum over the 3×3 neighbourhood.
pub fn splat_layer_single<S: Scalar>(
    colors: &ShadedLayer<S>,
    positions: &PositionBuffer<S>,
) -> Result<Image<S>> {
    if colors.layers != 1 {
        return Err(Error::Shape(format!("single-layer splatting given {} layers", colors.layers)));
    }
    splat_multilayer(colors, positions, None)
}

/// Multi-layer splatting into front/center/back accumulators, composited
/// back to front and optionally over an opaque background color.
pub fn splat_multilayer<S: Scalar>(
    colors: &ShadedLayer<S>,
    positions: &PositionBuffer<S>,
    background: Option<[f64; 3]>,
) -> Result<Image<S>> {
    check_shapes(colors, positions)?;
    let (w, h, k) = (colors.width, colors.height, colors.layers);
    let n = w * h;
    let sample = |layer: usize, pix: usize| {
        let i = layer * n + pix;
        match (&positions.points[i], &colors.rgba[i]) {
            (Some(p), Some(c)) => Some((p, c)),
            _ => None,
        }
    };
    let depths: Vec<Option<f64>> = (0..k * n)
        .map(|i| {
            let (layer, pix) = (i / n, i % n);
            sample(layer, pix).map(|(p, _)| p.z.value())
        })
        .collect();
    let depth_column = |pix: usize| -> Vec<Option<f64>> { (0..k).map(|l| depths[l * n + pix]).collect() };
    let mut acc: Vec<[Option<Accum<S>>; 3]> = vec![[None; 3]; n];

    for pix in 0..n {
        let pd = depth_column(pix);
        if pd.iter().all(Option::is_none) {
            continue;
        }
        let kernels: Vec<Option<_>> = (0..k)
            .map(|l| sample(l, pix).map(|(p, c)| (splat_kernel([p.x, p.y]), *c)))
            .collect();
        for (l, kern) in kernels.iter().enumerate() {
            let Some(((c, wts), color)) = kern else { continue };
            for (dy, row) in wts.iter().enumerate() {
                let qy = c[1] + dy as i64 - 1;
                if qy < 0 || qy >= h as i64 {
                    continue;
                }
                for (dx, &wt) in row.iter().enumerate() {
                    let qx = c[0] + dx as i64 - 1;
                    if qx < 0 || qx >= w as i64 {
                        continue;
                    }
                    let q = qy as usize * w + qx as usize;
                    let target = if k == 1 {
                        Accumulator::Center
                    } else {
                        assign_layers(&pd, &depth_column(q))[l].expect("valid layer")
                    };
                    Accum::add(&mut acc[q][target as usize], *color, wt);
                }
            }
        }
    }

    let bg = background.map(|c| [S::constant(c[0]), S::constant(c[1]), S::constant(c[2]), S::one()]);
    let pixels = acc
        .iter()
        .map(|a| {
            let [front, center, back] = a.map(|b| b.map(|b| b.normalized()));
            let mut out: Option<[S; 4]> = back;
            for layer in [center, front].into_iter().flatten() {
                out = Some(match out {
                    Some(b) => composite_over(layer, b),
                    None => layer,
                });
            }
            match (out, bg) {
                (Some(o), Some(b)) => composite_over(o, b),
                (Some(o), None) => o,
                (None, Some(b)) => b,
                (None, None) => [S::zero(); 4],
            }
        })
        .collect();
    Ok(Image {
        width: w,
        height: h,
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn kernel_constants() {
        let p = [5.0, 5.0];
        let expected_w = 1.0 + 4.0 * (-2.0f64).exp() + 4.0 * (-4.0f64).exp();
        assert_abs_diff_eq!(normalization(p), expected_w, epsilon = 1e-15);
        assert_abs_diff_eq!(splat_weight(p, [5, 5]), 1.05 / expected_w, epsilon = 1e-15);
        assert_abs_diff_eq!(splat_weight(p, [6, 5]), 1.05 / expected_w * (-2.0f64).exp(), epsilon = 1e-15);
        assert_eq!(splat_weight(p, [7, 5]), 0.0);
    }

    #[test]
    fn weights_sum_to_one_plus_epsilon_anywhere() {
        for p in [[5.0, 5.0], [5.3, 4.8], [0.49, 0.51], [-2.2, 7.0]] {
            let (_, w) = splat_kernel(p);
            let s: f64 = w.iter().flatten().sum();
            assert_abs_diff_eq!(s, 1.05, epsilon = 1e-12);
        }
    }

    #[test]
    fn over_operator() {
        assert_eq!(composite_over([0.5, 0.0, 0.0, 0.5], [0.0, 0.5, 0.0, 0.5]), [0.5, 0.25, 0.0, 0.75]);
        let back = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(composite_over([0.0; 4], back), back);
        let front = [0.3, 0.2, 0.1, 1.0];
        assert_eq!(composite_over(front, back), front);
    }

    #[test]
    fn pairing_examples() {
        use Accumulator::*;
        let a = assign_layers(&[Some(1.0), Some(3.0)], &[Some(1.01), Some(2.9)]);
        assert_eq!(a, vec![Some(Center), Some(Back)]);
        let a = assign_layers(&[Some(0.5), Some(1.0)], &[Some(1.0), None]);
        assert_eq!(a, vec![Some(Front), Some(Center)]);
        let a = assign_layers(&[Some(0.7)], &[Some(0.2)]);
        assert_eq!(a, vec![Some(Center)]);
        let a = assign_layers(&[Some(0.5), None], &[None, None]);
        assert_eq!(a, vec![Some(Center), None]);
    }

    #[test]
    fn pairing_tie_goes_to_nearer_layer() {
        use Accumulator::*;
        let a = assign_layers(&[Some(0.25), Some(0.75)], &[Some(0.5)]);
        assert_eq!(a, vec![Some(Center), Some(Back)]);
    }
}
