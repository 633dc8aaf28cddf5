//! Differentiable surface rendering by rasterize-then-splat.
//!
//! The pipeline is split into a non-differentiable sampling stage that finds
//! per-pixel surface parameters ([`sampler`]) and a differentiable stage that
//! re-evaluates attributes from those parameters ([`evaluator`]), shades them
//! ([`shading`]) and splats them with depth-aware compositing ([`splat`]).
//! Every differentiable stage is generic over [`autodiff::Scalar`].

pub mod autodiff;
mod error;
pub mod evaluator;
mod imagebuf;
pub mod io;
pub mod math;
pub mod optim;
pub mod sampler;
pub mod scene;
pub mod shading;
pub mod splat;

pub use error::{Error, Result};
pub use imagebuf::Image;
