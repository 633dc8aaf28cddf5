use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rts_core::autodiff::{grad, Objective, Scalar, GRADIENT_CHECK_FLOOR};
use rts_core::evaluator::{build_position_buffer, evaluate_mesh, evaluate_positions, PositionBuffer};
use rts_core::math::Vec3;
use rts_core::sampler::{rasterize_mesh, sample_positions_for_pose, PositionSample, SampleBuffer};
use rts_core::scene::{Camera, PoseParams, TriangleMesh};
use rts_core::shading::{shade_flat, shade_silhouette, shade_vertex_color, ShadedLayer};
use rts_core::splat::{splat_center, splat_layer_single, splat_multilayer, splat_weight};

fn camera(n: usize) -> Camera {
    Camera::new(Vec3::zero(), Vec3::zero(), 50f64.to_radians(), n, n, 0.5, 20.0).unwrap()
}

/// One layer of samples sitting exactly on pixel centers.
fn grid_layer(w: usize, h: usize, valid: impl Fn(usize, usize) -> Option<[f64; 4]>) -> (ShadedLayer<f64>, PositionBuffer<f64>) {
    let mut rgba = Vec::new();
    let mut points = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let c = valid(x, y);
            rgba.push(c);
            points.push(c.map(|_| Vec3::new(x as f64, y as f64, 0.5)));
        }
    }
    (
        ShadedLayer {
            width: w,
            height: h,
            layers: 1,
            rgba,
        },
        PositionBuffer {
            width: w,
            height: h,
            layers: 1,
            points,
        },
    )
}

#[test]
fn isolated_splat_is_not_renormalized() {
    let (c, p) = grid_layer(7, 7, |x, y| (x == 3 && y == 3).then_some([1.0; 4]));
    let img = splat_layer_single(&c, &p).unwrap();
    assert_abs_diff_eq!(img.get(3, 3)[3], 0.650315, epsilon = 1e-6);
    assert_abs_diff_eq!(img.get(4, 3)[3], 0.088010, epsilon = 1e-6);
    assert_eq!(img.get(5, 3), [0.0; 4]);
}

#[test]
fn uniform_interior_preserves_color() {
    let c = [0.2, 0.5, 0.7, 1.0];
    let (col, pos) = grid_layer(9, 9, |_, _| Some(c));
    let img = splat_layer_single(&col, &pos).unwrap();
    for y in 1..8 {
        for x in 1..8 {
            for k in 0..4 {
                assert_abs_diff_eq!(img.get(x, y)[k], c[k], epsilon = 1e-15);
            }
        }
    }
}

#[test]
fn empty_input_gives_empty_image() {
    let (c, p) = grid_layer(5, 4, |_, _| None);
    assert!(splat_layer_single(&c, &p).unwrap().pixels.iter().all(|px| *px == [0.0; 4]));
    let bg = splat_multilayer(&c, &p, Some([0.1, 0.2, 0.3])).unwrap();
    assert!(bg.pixels.iter().all(|px| *px == [0.1, 0.2, 0.3, 1.0]));
}

proptest! {
    #[test]
    fn weights_have_hard_three_by_three_support(px in -20.0..20.0f64, py in -20.0..20.0f64) {
        let c = splat_center([px, py]);
        let mut total = 0.0;
        for dy in -2..=2i64 {
            for dx in -2..=2i64 {
                let w = splat_weight([px, py], [c[0] + dx, c[1] + dy]);
                if dx.abs() <= 1 && dy.abs() <= 1 {
                    prop_assert!(w > 0.0);
                    total += w;
                } else {
                    prop_assert_eq!(w, 0.0);
                }
            }
        }
        prop_assert!((total - 1.05).abs() < 1e-12);
        prop_assert!((px - c[0] as f64).abs() <= 0.5 && (py - c[1] as f64).abs() <= 0.5);
    }
}

fn sphere(at: Vec3<f64>, r: f64) -> TriangleMesh<f64> {
    let mut m = TriangleMesh::uv_sphere(16, 32);
    for p in &mut m.positions {
        *p = p.scale_f(r) + at;
    }
    m
}

/// Pixels whose whole 5×5 neighbourhood is covered in layer 0.
fn interior(buf: &SampleBuffer<impl Copy>, x: usize, y: usize) -> bool {
    let (w, h) = (buf.width as i64, buf.height as i64);
    (-2..=2i64).all(|dy| {
        (-2..=2i64).all(|dx| {
            let (qx, qy) = (x as i64 + dx, y as i64 + dy);
            qx >= 0 && qy >= 0 && qx < w && qy < h && buf.get(0, qx as usize, qy as usize).is_some()
        })
    })
}

#[test]
fn forward_fidelity_on_interior_pixels() {
    let mesh = sphere(Vec3::new(0.0, 0.0, 4.0), 1.0);
    let cam = camera(48);
    let samples = rasterize_mesh(&mesh, &cam, None, 2).unwrap();
    let g = evaluate_mesh(&mesh, &samples).unwrap();
    let shaded = shade_flat(&g, Vec3::new(0.1, 0.8, 0.3));
    let img = splat_multilayer(&shaded, &build_position_buffer(&g, &cam, None), None).unwrap();
    let mut n = 0;
    for y in 0..48 {
        for x in 0..48 {
            if interior(&samples, x, y) {
                let want = shaded.get(0, x, y);
                for k in 0..4 {
                    assert_abs_diff_eq!(img.get(x, y)[k], want[k], epsilon = 1e-6);
                }
                n += 1;
            }
        }
    }
    assert!(n > 200, "{n} interior pixels");
}

#[test]
fn one_layer_scene_matches_single_layer_splatting_bitwise() {
    let mut mesh = TriangleMesh::quad([0.1, -0.2], [0.8, 0.6], 3.0);
    mesh.colors = Some(vec![
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(0.0, 0.0, 1.0),
        Vec3::new(0.5, 0.5, 0.5),
    ]);
    let cam = camera(32);
    let shade = |k: usize| {
        let samples = rasterize_mesh(&mesh, &cam, None, k).unwrap();
        let g = evaluate_mesh(&mesh, &samples).unwrap();
        (shade_vertex_color(&g), build_position_buffer(&g, &cam, None))
    };
    let (c1, p1) = shade(1);
    let (c2, p2) = shade(2);
    assert!(c2.rgba[32 * 32..].iter().all(Option::is_none));
    let single = splat_layer_single(&c1, &p1).unwrap();
    assert_eq!(single, splat_multilayer(&c1, &p1, None).unwrap());
    assert_eq!(single, splat_multilayer(&c2, &p2, None).unwrap());
}

/// Occluder quad at depth 3 in front of a smaller quad at depth 5 whose x
/// offset is the single parameter.
struct Occluded {
    layers: usize,
    shift: f64,
}

impl Occluded {
    fn mesh<S: Scalar>(&self, t: S) -> TriangleMesh<S> {
        let front = TriangleMesh::quad([0.0, 0.0], [1.0, 1.0], 3.0);
        let back = TriangleMesh::quad([self.shift, 0.0], [0.4, 0.4], 5.0);
        let mut positions: Vec<Vec3<S>> = front.positions.iter().map(|&p| Vec3::constant(p)).collect();
        positions.extend(back.positions.iter().map(|&p| Vec3::constant(p) + Vec3::new(t, S::zero(), S::zero())));
        let mut triangles = front.triangles.clone();
        triangles.extend(back.triangles.iter().map(|t| t.map(|i| i + 4)));
        let mut m = TriangleMesh::new(positions, triangles);
        let red = Vec3::constant(Vec3::new(1.0, 0.0, 0.0));
        let green = Vec3::constant(Vec3::new(0.0, 1.0, 0.0));
        m.colors = Some((0..8).map(|i| if i < 4 { red } else { green }).collect());
        m
    }

    /// Per-pixel derivative of the green channel with respect to the offset.
    fn derivative(&self, cam: &Camera) -> Vec<f64> {
        let samples = rasterize_mesh(&self.mesh(0.0), cam, None, self.layers).unwrap();
        let n = cam.width * cam.height;
        (0..n)
            .map(|q| {
                grad(
                    |t| {
                        let g = evaluate_mesh(&self.mesh(t[0]), &samples).unwrap();
                        let img = splat_multilayer(&shade_vertex_color(&g), &build_position_buffer(&g, cam, None), None)
                            .unwrap();
                        img.pixels[q][1]
                    },
                    &[0.0],
                )
                .unwrap()[0]
            })
            .collect()
    }
}

#[test]
fn hidden_surfaces_do_not_leak_derivatives_through_occluders() {
    let cam = camera(32);
    let front = rasterize_mesh(&Occluded { layers: 1, shift: 0.0 }.mesh(0.0), &cam, None, 1).unwrap();
    let inside = |q: usize| interior(&front, q % 32, q / 32);

    // Fully hidden: the second layer sees it, but the opaque occluder masks it.
    let hidden = Occluded { layers: 2, shift: 0.0 }.derivative(&cam);
    assert!(hidden.iter().all(|d| d.abs() < 1e-12), "max {}", hidden.iter().fold(0.0f64, |a, d| a.max(d.abs())));

    // Peeking out to the right: derivatives appear at the exposed edge only.
    let peek = Occluded { layers: 2, shift: 1.2 }.derivative(&cam);
    let (mut inner, mut outer): (f64, f64) = (0.0, 0.0);
    for (q, d) in peek.iter().enumerate() {
        if inside(q) {
            inner = inner.max(d.abs());
        } else {
            outer = outer.max(d.abs());
        }
    }
    assert!(inner < 1e-12, "occluder interior derivative {inner}");
    assert!(outer > 1e-3, "exposed edge derivative {outer}");
}

struct PosePixel<'a> {
    samples: &'a SampleBuffer<PositionSample>,
    camera: &'a Camera,
    pixel: usize,
}

impl Objective for PosePixel<'_> {
    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        let pose = PoseParams::from_slice(x);
        let g = evaluate_positions::<S>(self.samples);
        let img = splat_multilayer(&shade_silhouette(&g), &build_position_buffer(&g, self.camera, Some(&pose)), None)
            .unwrap();
        img.pixels[self.pixel][3]
    }
}

#[test]
fn splatted_pose_gradients_match_finite_differences() {
    let mut mesh = TriangleMesh::subdivided_box([0.6, 0.5, 0.4], 3);
    let cam = camera(40);
    let pose = PoseParams {
        rotation: Vec3::new(0.3, 0.5, 0.1),
        translation: Vec3::new(0.1, 0.0, 4.0),
    };
    let samples = sample_positions_for_pose(&mesh, &cam, Some(&pose), 2).unwrap();
    let x = pose.to_array();
    // Pixels where the image depends on the pose: near the silhouette.
    let mut active: Vec<usize> = (0..40 * 40)
        .filter(|&q| {
            let g = grad(
                |v| PosePixel { samples: &samples, camera: &cam, pixel: q }.eval(v),
                &x,
            )
            .unwrap();
            g.iter().any(|d| d.abs() > 1e-6)
        })
        .collect();
    assert!(active.len() >= 100, "{} active pixels", active.len());
    active.shuffle(&mut ChaCha8Rng::seed_from_u64(5));
    for &q in &active[..100] {
        let o = PosePixel { samples: &samples, camera: &cam, pixel: q };
        let g = grad(|v| o.eval(v), &x).unwrap();
        for i in 0..6 {
            let h = 1e-6;
            let mut p = x;
            p[i] += h;
            let mut m = x;
            m[i] -= h;
            let fd = (o.eval(&p) - o.eval::<f64>(&m)) / (2.0 * h);
            let err = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(GRADIENT_CHECK_FLOOR);
            assert!(err < 1e-4, "pixel {q} param {i}: {} vs {fd}", g[i]);
        }
    }
}
