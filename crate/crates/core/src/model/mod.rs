//! Meshes, CDF grids with explicit atoms, control densities and kernel
//! segmentation.

mod control;
mod grid;
mod mesh;
mod segment;

pub use control::{integrate_control, sup_control, ControlDensity, CUMULATIVE_CELLS};
pub use grid::{Atom, CdfGrid, ATOM_PRUNE, GRID_TOL};
pub use mesh::{Mesh, TimeGrid};
pub use segment::{segment_kernel, KernelClass, KernelSegment, Sign, FLAT_TOL};
