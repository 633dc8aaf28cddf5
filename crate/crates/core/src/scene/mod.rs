//! Differentiable scene parameters: surfaces, cameras, poses and textures.

mod camera;
mod implicit;
mod mesh;
mod spline;
mod texture;

pub use camera::{project, rigid_transform, rotation_error, Camera, PoseParams};
pub use implicit::{
    field_to_grid, field_to_grid_values, ImplicitGrid, Lattice, LatticeSource, LazyFieldGrid,
    SphereField,
};
pub use mesh::TriangleMesh;
pub use spline::{basis_weights, revolution_knot_radius, BSplineSurface, Wrap, BASIS};
pub use texture::Texture;
