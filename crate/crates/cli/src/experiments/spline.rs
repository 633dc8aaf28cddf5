//! Profile-radius fit of a B-spline surface of revolution to a silhouette.

use anyhow::{ensure, Result};
use rts_core::autodiff::Scalar;
use rts_core::evaluator::evaluate_spline;
use rts_core::optim::loss_l2;
use rts_core::sampler::rasterize_spline;
use rts_core::scene::{BSplineSurface, Camera};
use rts_core::shading::shade_silhouette;
use rts_core::Image;

use crate::config::ExperimentConfig;
use crate::output::{overlap_image, png, prepare_dir, LossLog};
use crate::scenes::{descend, orbit_camera, over_background, splat, Problem};

/// Smallest radius a step may leave a profile point at.
const MIN_RADIUS: f64 = 0.02;

pub struct SplineProblem {
    pub heights: Vec<f64>,
    pub segments: usize,
    pub camera: Camera,
    pub layers: usize,
    pub target: Image<f64>,
}

impl SplineProblem {
    pub fn surface<S: Scalar>(&self, radii: &[S]) -> Result<BSplineSurface<S>> {
        Ok(BSplineSurface::revolution(radii, &self.heights, self.segments)?)
    }

    pub fn render<S: Scalar>(&self, radii: &[S]) -> Result<Image<S>> {
        let plain: Vec<f64> = radii.iter().map(|r| r.value()).collect();
        let samples = rasterize_spline(&self.surface(&plain)?, &self.camera, None, self.layers)?;
        let g = evaluate_spline(&self.surface(radii)?, &samples)?;
        splat(&g, &shade_silhouette(&g), &self.camera, None, None)
    }
}

impl Problem for SplineProblem {
    fn loss<S: Scalar>(&self, x: &[S]) -> Result<S> {
        Ok(loss_l2(&self.render(x)?, &self.target)?)
    }

    fn project(&self, x: &mut [f64]) {
        for r in x {
            *r = r.max(MIN_RADIUS);
        }
    }
}

pub struct SplineReport {
    pub target: Vec<f64>,
    pub initial: Vec<f64>,
    pub estimate: Vec<f64>,
    /// Largest relative radius error.
    pub max_relative_error: f64,
    /// First iteration at which every radius is within 2% of its target.
    pub iterations_to_two_percent: Option<usize>,
    pub log: LossLog,
}

pub fn problem(cfg: &ExperimentConfig) -> Result<SplineProblem> {
    let n = cfg.spline.target_radii.len();
    ensure!(n >= 4, "a profile needs at least 4 radii");
    let h = cfg.spline.height;
    let heights = (0..n).map(|i| -0.5 * h + h * i as f64 / (n - 1) as f64).collect();
    let mut p = SplineProblem {
        heights,
        segments: cfg.spline.segments,
        camera: orbit_camera(cfg, 0.0)?,
        layers: cfg.layers,
        target: Image::new(cfg.width, cfg.height),
    };
    p.target = p.render(&cfg.spline.target_radii)?;
    Ok(p)
}

fn max_relative_error(x: &[f64], truth: &[f64]) -> f64 {
    x.iter().zip(truth).map(|(a, b)| ((a - b) / b).abs()).fold(0.0, f64::max)
}

pub fn run(cfg: &ExperimentConfig) -> Result<SplineReport> {
    cfg.validate()?;
    let out = prepare_dir(&cfg.out)?;
    let p = problem(cfg)?;
    let truth = cfg.spline.target_radii.clone();
    let initial = vec![cfg.spline.initial_radius; truth.len()];
    let mut x = initial.clone();
    let mut log = LossLog::new();

    // Track the radius error per iterate alongside the loss.
    struct Tracked<'a> {
        inner: &'a SplineProblem,
        truth: &'a [f64],
        errors: std::cell::RefCell<Vec<f64>>,
    }
    impl Problem for Tracked<'_> {
        fn loss<S: Scalar>(&self, x: &[S]) -> Result<S> {
            let plain: Vec<f64> = x.iter().map(|v| v.value()).collect();
            self.errors.borrow_mut().push(max_relative_error(&plain, self.truth));
            self.inner.loss(x)
        }
        fn project(&self, x: &mut [f64]) {
            self.inner.project(x)
        }
    }
    let tracked = Tracked {
        inner: &p,
        truth: &truth,
        errors: Default::default(),
    };
    let result = descend(&tracked, &mut x, cfg.optimizer.kind, cfg.optimizer.learning_rate, cfg.iterations, &mut log);
    log.write(&out)?;
    result?;

    let first = p.render(&initial)?;
    let last = p.render(&x)?;
    png(&over_background(&p.target, cfg.background), &out, "target.png")?;
    png(&over_background(&first, cfg.background), &out, "initial.png")?;
    png(&over_background(&last, cfg.background), &out, "final.png")?;
    png(&overlap_image(&first, &p.target), &out, "overlap_initial.png")?;
    png(&overlap_image(&last, &p.target), &out, "overlap_final.png")?;

    let mut w = csv::Writer::from_path(out.join("radii.csv"))?;
    w.write_record(["index", "target", "initial", "final"])?;
    for i in 0..truth.len() {
        w.write_record([i.to_string(), format!("{:e}", truth[i]), format!("{:e}", initial[i]), format!("{:e}", x[i])])?;
    }
    w.flush()?;

    let errors = tracked.errors.into_inner();
    Ok(SplineReport {
        max_relative_error: max_relative_error(&x, &truth),
        iterations_to_two_percent: errors.iter().position(|&e| e < 0.02),
        target: truth,
        initial,
        estimate: x,
        log,
    })
}
