//! Exact state algebra for multimode bosonic pure states.

mod density;
mod registry;
mod state;
mod transform;

pub use density::{kron2, pair_index, pauli, phi_plus_vector, reduce_to_polarization_dm, PolarizationDensityMatrix};
pub use registry::{make_registry, ModeKey, ModeRegistry, Polarization, SpatialSpec, Temporal};
pub use state::{occupation, FockState, Occupation, DEFAULT_CUTOFF, DEFAULT_PRUNE};
pub use transform::{ModeTransform, ISOMETRY_TOLERANCE};
