use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rts_cli::config::{ExperimentConfig, ExperimentKind, OptimizerKind};
use rts_cli::experiments::{gradviz, implicit, mesh_fit, pose, render, spline};

/// Differentiable rasterize-then-splat renderer: experiments and renders.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a mesh (OBJ) to PNG, optionally dumping sample layers.
    Render(Common),
    /// Derivative images against finite differences.
    Gradviz(Common),
    /// Six-DOF pose recovery from a silhouette.
    FitPose(Common),
    /// Vertex position and color fit from multiple views.
    FitMesh(Common),
    /// Profile radii of a spline surface of revolution.
    FitSpline(Common),
    /// Isosurface fit to a torus.
    FitImplicit(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config; missing keys take the experiment's defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of depth layers to sample.
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerKind>,
    #[arg(long)]
    iters: Option<usize>,
    /// Worker threads (all cores by default). Outputs do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn config(&self, kind: ExperimentKind) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(kind, p)?,
            None => ExperimentConfig::for_kind(kind),
        };
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.layers {
            cfg.layers = v;
        }
        if let Some(v) = self.optimizer {
            cfg.optimizer.kind = v;
        }
        if let Some(v) = self.iters {
            cfg.iterations = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (common, kind) = match &cli.command {
        Command::Render(c) => (c, ExperimentKind::Render),
        Command::Gradviz(c) => (c, ExperimentKind::DerivativeViz),
        Command::FitPose(c) => (c, ExperimentKind::Pose),
        Command::FitMesh(c) => (c, ExperimentKind::MeshFit),
        Command::FitSpline(c) => (c, ExperimentKind::SplineFit),
        Command::FitImplicit(c) => (c, ExperimentKind::ImplicitFit),
    };
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let cfg = common.config(kind)?;
    log::info!("{kind:?}: writing to {}", cfg.out.display());
    match kind {
        ExperimentKind::Render => {
            render::run(&cfg)?;
        }
        ExperimentKind::DerivativeViz => {
            let r = gradviz::run(&cfg)?;
            println!(
                "dL/dt autodiff {:.6e}, finite difference {:.6e} (relative error {:.3})",
                r.loss_grad, r.loss_grad_fd, r.loss_grad_relative_error
            );
            println!(
                "derivative-image correlation: multi-layer {:.4}, single-layer {:.4}",
                r.correlation_multilayer, r.correlation_single_layer
            );
        }
        ExperimentKind::Pose => {
            let r = pose::run(&cfg)?;
            println!(
                "rotation error {:.4}°, translation error {:.4}% of extent, iterations to target {:?}",
                r.rotation_error_deg,
                100.0 * r.translation_error,
                r.iterations_to_target
            );
        }
        ExperimentKind::MeshFit => {
            let r = mesh_fit::run(&cfg)?;
            println!(
                "image loss {:.4e} -> {:.4e}, color error {:.4} -> {:.4}",
                r.initial_image_loss, r.final_image_loss, r.initial_color_error, r.final_color_error
            );
        }
        ExperimentKind::SplineFit => {
            let r = spline::run(&cfg)?;
            println!(
                "max relative radius error {:.4}%, within 2% from iteration {:?}",
                100.0 * r.max_relative_error,
                r.iterations_to_two_percent
            );
        }
        ExperimentKind::ImplicitFit => {
            let r = implicit::run(&cfg)?;
            println!(
                "L1 loss {:.4e} -> {:.4e}; holes: target {}, initial {}, final {}",
                r.initial_loss, r.final_loss, r.target_holes, r.initial_holes, r.final_holes
            );
        }
    }
    Ok(())
}
