//! Experiment configuration.
//!
//! A config file is TOML. Every key is optional; missing keys take the
//! defaults of the experiment kind, and command-line flags override both.
//!
//! ```toml
//! seed = 7
//! layers = 2
//! width = 128
//! height = 128
//! iterations = 40
//! out = "runs/pose"
//!
//! [camera]
//! fov_deg = 40.0
//! near = 0.1
//! far = 100.0
//! distance = 4.0
//!
//! [optimizer]
//! kind = "lm"            # adam | gd | lm
//! learning_rate = 0.01
//!
//! [pose]
//! mesh = "box.obj"       # optional; a subdivided box otherwise
//! rotation_deg = 10.0
//! translation_fraction = 0.05
//! fast_path = true
//! target_loss = 1e-4
//! ```
//!
//! The `[render]`, `[gradviz]`, `[mesh_fit]`, `[spline]` and `[implicit]` tables are
//! documented on their structs below.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Render,
    DerivativeViz,
    Pose,
    MeshFit,
    SplineFit,
    ImplicitFit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Gd,
    Lm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub fov_deg: f64,
    pub near: f64,
    pub far: f64,
    /// Distance from the camera to the object origin.
    pub distance: f64,
    /// Camera elevation above the object's equator, in degrees.
    pub elevation_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseConfig {
    pub mesh: Option<PathBuf>,
    pub rotation_deg: f64,
    /// Translation perturbation as a fraction of the mesh extent.
    pub translation_fraction: f64,
    /// Sample object-space positions directly (the pose-only fast path).
    pub fast_path: bool,
    pub target_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderConfig {
    /// OBJ file; a unit sphere otherwise.
    pub mesh: Option<PathBuf>,
    /// Flat color for meshes without vertex colors.
    pub color: [f64; 3],
    /// Also write the raw sample layers as PFM.
    pub dump_samples: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradvizConfig {
    /// `square`: a flat square on black; `occluder`: a square partly
    /// behind an opaque occluder.
    pub scene: String,
    /// Target offset, in pixels, for the loss-gradient comparison.
    pub target_offset_px: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshFitConfig {
    pub template: Option<PathBuf>,
    pub views: usize,
    pub laplacian_weight: f64,
    pub colors_only: bool,
    pub backdrop: bool,
    /// Ellipsoid semi-axes of the synthetic target.
    pub target_axes: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplineConfig {
    pub target_radii: Vec<f64>,
    pub initial_radius: f64,
    /// Control points per ring.
    pub segments: usize,
    pub height: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImplicitConfig {
    /// `sphere-union` or `swept-sphere`.
    pub parameterization: String,
    pub spheres: usize,
    pub grid: usize,
    pub target_ring_radius: f64,
    pub target_tube_radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub layers: usize,
    pub width: usize,
    pub height: usize,
    pub iterations: usize,
    pub out: PathBuf,
    /// Background color composited under every render.
    pub background: [f64; 3],
    pub camera: CameraConfig,
    pub optimizer: OptimizerConfig,
    pub render: RenderConfig,
    pub pose: PoseConfig,
    pub gradviz: GradvizConfig,
    pub mesh_fit: MeshFitConfig,
    pub spline: SplineConfig,
    pub implicit: ImplicitConfig,
}

impl ExperimentConfig {
    /// Defaults for one experiment kind.
    pub fn for_kind(kind: ExperimentKind) -> Self {
        use ExperimentKind::*;
        let (size, iterations, optimizer, lr) = match kind {
            Render => (128, 0, OptimizerKind::Adam, 0.0),
            DerivativeViz => (256, 0, OptimizerKind::Adam, 0.0),
            Pose => (128, 40, OptimizerKind::Lm, 0.01),
            MeshFit => (128, 300, OptimizerKind::Adam, 0.005),
            SplineFit => (128, 200, OptimizerKind::Adam, 0.01),
            ImplicitFit => (128, 400, OptimizerKind::Adam, 0.01),
        };
        let (distance, elevation_deg) = match kind {
            SplineFit => (4.5, 15.0),
            ImplicitFit => (4.0, 30.0),
            _ => (4.0, 0.0),
        };
        Self {
            experiment: kind,
            seed: 0,
            layers: 2,
            width: size,
            height: size,
            iterations,
            out: PathBuf::from("out"),
            background: [0.0; 3],
            camera: CameraConfig {
                fov_deg: 40.0,
                near: 0.1,
                far: 100.0,
                distance,
                elevation_deg,
            },
            optimizer: OptimizerConfig {
                kind: optimizer,
                learning_rate: lr,
            },
            render: RenderConfig {
                mesh: None,
                color: [0.8, 0.5, 0.2],
                dump_samples: false,
            },
            pose: PoseConfig {
                mesh: None,
                rotation_deg: 10.0,
                translation_fraction: 0.05,
                fast_path: true,
                target_loss: 1e-4,
            },
            gradviz: GradvizConfig {
                scene: "square".into(),
                target_offset_px: 4.0,
            },
            mesh_fit: MeshFitConfig {
                template: None,
                views: 3,
                laplacian_weight: 1.0,
                colors_only: false,
                backdrop: true,
                target_axes: [1.0, 0.7, 0.8],
            },
            spline: SplineConfig {
                target_radii: vec![0.6, 0.55, 0.3, 0.22, 0.3, 0.45, 0.25, 0.12],
                initial_radius: 0.4,
                segments: 12,
                height: 2.2,
            },
            implicit: ImplicitConfig {
                parameterization: "sphere-union".into(),
                spheres: 200,
                grid: 50,
                target_ring_radius: 0.8,
                target_tube_radius: 0.3,
            },
        }
    }

    /// Defaults for `kind` overridden by the keys present in `text`.
    pub fn from_toml(kind: ExperimentKind, text: &str) -> Result<Self> {
        let mut base = toml::Value::try_from(Self::for_kind(kind))?;
        let user: toml::Value = toml::from_str(text).context("config is not valid TOML")?;
        if let Some(k) = user.get("experiment") {
            let named: ExperimentKind = k.clone().try_into().context("unknown experiment kind")?;
            ensure!(named == kind, "config is for {named:?}, but the {kind:?} subcommand was run");
        }
        merge(&mut base, user);
        let cfg: Self = base.try_into().context("invalid config")?;
        Ok(cfg)
    }

    pub fn load(kind: ExperimentKind, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml(kind, &text).with_context(|| format!("in {}", path.display()))?;
        // Relative scene paths are relative to the config file.
        let dir = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.render.mesh, &mut cfg.pose.mesh, &mut cfg.mesh_fit.template].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.width >= 16 && self.height >= 16, "image size must be at least 16×16");
        ensure!(self.layers >= 1, "need at least one layer");
        ensure!(
            self.camera.near > 0.0 && self.camera.near < self.camera.far,
            "need 0 < near < far"
        );
        ensure!(self.camera.fov_deg > 0.0 && self.camera.fov_deg < 180.0, "fov out of range");
        for p in [&self.render.mesh, &self.pose.mesh, &self.mesh_fit.template].into_iter().flatten() {
            if !p.is_file() {
                bail!("scene file {} does not exist", p.display());
            }
        }
        if self.experiment == ExperimentKind::SplineFit {
            ensure!(self.spline.target_radii.len() >= 4, "a profile needs at least 4 radii");
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_overrides_defaults() {
        let cfg = ExperimentConfig::from_toml(
            ExperimentKind::Pose,
            "seed = 3\n[camera]\nfov_deg = 30.0\n[optimizer]\nkind = \"adam\"\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.camera.fov_deg, 30.0);
        assert_eq!(cfg.camera.near, 0.1);
        assert_eq!(cfg.optimizer.kind, OptimizerKind::Adam);
        assert_eq!(cfg.iterations, 40);
    }

    #[test]
    fn unknown_keys_and_mismatched_kind_are_rejected() {
        assert!(ExperimentConfig::from_toml(ExperimentKind::Pose, "sede = 3").is_err());
        assert!(ExperimentConfig::from_toml(ExperimentKind::Pose, "[camera]\nfov = 3.0").is_err());
        assert!(ExperimentConfig::from_toml(ExperimentKind::Pose, "experiment = \"spline-fit\"").is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = ExperimentConfig::for_kind(ExperimentKind::Render);
        cfg.validate().unwrap();
        cfg.width = 8;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::for_kind(ExperimentKind::Pose);
        cfg.pose.mesh = Some("/definitely/not/here.obj".into());
        assert!(cfg.validate().is_err());
    }
}
