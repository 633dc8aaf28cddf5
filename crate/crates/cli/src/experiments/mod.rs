//! One module per experiment; each `run` writes its outputs under `cfg.out`.

pub mod gradviz;
pub mod implicit;
pub mod mesh_fit;
pub mod pose;
pub mod render;
pub mod spline;
