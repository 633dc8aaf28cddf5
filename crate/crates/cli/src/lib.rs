//! Experiments and command-line plumbing for the rasterize-then-splat renderer.

pub mod config;
pub mod experiments;
pub mod output;
pub mod scenes;
