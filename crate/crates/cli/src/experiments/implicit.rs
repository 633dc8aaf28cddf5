//! Fitting a marching-cubes isosurface to a torus, including a change of
//! topology when a union of spheres opens a hole.

use anyhow::{bail, ensure, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rts_core::autodiff::Scalar;
use rts_core::evaluator::evaluate_implicit;
use rts_core::math::Vec3;
use rts_core::optim::loss_l1;
use rts_core::sampler::rasterize_implicit;
use rts_core::scene::{field_to_grid_values, Camera, Lattice, LazyFieldGrid, SphereField};
use rts_core::shading::shade_custom;
use rts_core::Image;

use crate::config::ExperimentConfig;
use crate::output::{png, prepare_dir, LossLog};
use crate::scenes::{count_holes, descend, orbit_camera, splat, Problem};

/// Half-width of the cubic lattice domain.
pub const DOMAIN_HALF: f64 = 1.3;
const MIN_RADIUS: f64 = 0.01;
/// Enclosed background regions smaller than this are not counted as holes.
pub const MIN_HOLE_PIXELS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parameterization {
    /// `[x₀, y₀, …, x_{n-1}, y_{n-1}, r₀, …, r_{n-1}]`: spheres centered in the ring plane.
    SphereUnion,
    /// `[ring radius, tube radius]`.
    SweptSphere,
}

impl Parameterization {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "sphere-union" => Self::SphereUnion,
            "swept-sphere" => Self::SweptSphere,
            other => bail!("unknown implicit parameterization {other:?} (sphere-union | swept-sphere)"),
        })
    }
}

/// Torus whose ring lies in the z = 0 plane.
pub fn torus<S: Scalar>(ring: S, tube: S) -> SphereField<S> {
    SphereField::SweptSphere {
        ring_radius: ring,
        tube_radius: tube,
        center: Vec3::zero(),
        axis: Vec3::new(0.0, 0.0, 1.0),
    }
}

pub struct ImplicitProblem {
    pub kind: Parameterization,
    pub lattice: Lattice,
    pub camera: Camera,
    pub layers: usize,
    pub background: [f64; 3],
    pub target: Image<f64>,
}

impl ImplicitProblem {
    pub fn field<S: Scalar>(&self, x: &[S]) -> SphereField<S> {
        match self.kind {
            Parameterization::SweptSphere => torus(x[0], x[1]),
            Parameterization::SphereUnion => {
                let n = x.len() / 3;
                let centers: Vec<[S; 2]> = (0..n).map(|i| [x[2 * i], x[2 * i + 1]]).collect();
                SphereField::planar_union(
                    &centers,
                    x[2 * n..].to_vec(),
                    Vec3::zero(),
                    Vec3::new(1.0, 0.0, 0.0),
                    Vec3::new(0.0, 1.0, 0.0),
                )
            }
        }
    }

    /// Renders a field shaded by object-space depth, `c = 0.5 − z`.
    pub fn render_field<S: Scalar>(&self, field: &SphereField<S>) -> Result<Image<S>> {
        field.validate()?;
        let grid = field_to_grid_values(field, self.lattice);
        let samples = rasterize_implicit(&grid, &self.camera, None, self.layers)?;
        if samples.valid_count() == 0 {
            bail!("the isosurface is empty or outside the view");
        }
        let lazy = LazyFieldGrid::new(field, self.lattice);
        let g = evaluate_implicit(&lazy, &samples)?;
        let shaded = shade_custom(&g, |s| {
            let c = -s.position.z + 0.5;
            [c, c, c, S::one()]
        })?;
        splat(&g, &shaded, &self.camera, None, Some(self.background))
    }

    pub fn render<S: Scalar>(&self, x: &[S]) -> Result<Image<S>> {
        self.render_field(&self.field(x))
    }
}

impl Problem for ImplicitProblem {
    fn loss<S: Scalar>(&self, x: &[S]) -> Result<S> {
        Ok(loss_l1(&self.render(x)?, &self.target)?)
    }

    fn project(&self, x: &mut [f64]) {
        let radii = match self.kind {
            Parameterization::SweptSphere => &mut x[..],
            Parameterization::SphereUnion => {
                let n = x.len() / 3;
                &mut x[2 * n..]
            }
        };
        for r in radii {
            *r = r.max(MIN_RADIUS);
        }
    }
}

pub struct ImplicitReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub target_holes: usize,
    pub initial_holes: usize,
    pub final_holes: usize,
    pub estimate: Vec<f64>,
    pub log: LossLog,
}

pub fn holes(img: &Image<f64>, background: [f64; 3]) -> usize {
    // The render is opaque; the object is wherever it differs from the background.
    let mask: Vec<bool> = img
        .pixels
        .iter()
        .map(|p| (0..3).any(|c| (p[c] - background[c]).abs() > 0.05))
        .collect();
    count_holes(&mask, img.width, img.height, MIN_HOLE_PIXELS)
}

pub fn problem(cfg: &ExperimentConfig) -> Result<ImplicitProblem> {
    ensure!(cfg.implicit.grid >= 4, "the lattice needs at least 4 points per side");
    let mut p = ImplicitProblem {
        kind: Parameterization::parse(&cfg.implicit.parameterization)?,
        lattice: Lattice::cube(cfg.implicit.grid, DOMAIN_HALF)?,
        camera: orbit_camera(cfg, 0.0)?,
        layers: cfg.layers,
        background: cfg.background,
        target: Image::new(cfg.width, cfg.height),
    };
    p.target = p.render_field(&torus(cfg.implicit.target_ring_radius, cfg.implicit.target_tube_radius))?;
    Ok(p)
}

/// Seeded initialization. The union starts as a disc of overlapping
/// spheres without a hole; the swept sphere starts as a thick tube on a small ring.
pub fn initial_params(cfg: &ExperimentConfig, kind: Parameterization) -> Vec<f64> {
    match kind {
        Parameterization::SweptSphere => vec![0.5, 0.42],
        Parameterization::SphereUnion => {
            let n = cfg.implicit.spheres;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut x = Vec::with_capacity(3 * n);
            for _ in 0..n {
                let r = 0.9 * rng.gen::<f64>().sqrt();
                let t = rng.gen_range(0.0..std::f64::consts::TAU);
                x.extend([r * t.cos(), r * t.sin()]);
            }
            x.extend((0..n).map(|_| rng.gen_range(0.2..0.3)));
            x
        }
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<ImplicitReport> {
    cfg.validate()?;
    let out = prepare_dir(&cfg.out)?;
    let p = problem(cfg)?;
    let mut x = initial_params(cfg, p.kind);
    let first = p.render(&x)?;
    let mut log = LossLog::new();
    let result = descend(&p, &mut x, cfg.optimizer.kind, cfg.optimizer.learning_rate, cfg.iterations, &mut log);
    log.write(&out)?;
    result?;
    let last = p.render(&x)?;
    png(&p.target, &out, "target.png")?;
    png(&first, &out, "initial.png")?;
    png(&last, &out, "final.png")?;
    let report = ImplicitReport {
        initial_loss: log.records.first().map_or(f64::NAN, |r| r.loss),
        final_loss: log.last_loss().unwrap_or(f64::NAN),
        target_holes: holes(&p.target, cfg.background),
        initial_holes: holes(&first, cfg.background),
        final_holes: holes(&last, cfg.background),
        estimate: x,
        log,
    };
    let mut w = csv::Writer::from_path(out.join("topology.csv"))?;
    w.write_record(["image", "holes"])?;
    for (name, n) in [("target", report.target_holes), ("initial", report.initial_holes), ("final", report.final_holes)] {
        w.write_record([name.to_string(), n.to_string()])?;
    }
    w.flush()?;
    Ok(report)
}
