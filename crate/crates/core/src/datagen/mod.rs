//! Volumes, coordinate grids and the synthetic cardiac phantom.

mod grid;
mod io;
mod phantom;
mod volume;

pub use grid::{make_grid, GridSpec};
pub use io::{load_volume, read_volume, save_volume, write_volume, NFV_MAGIC};
pub use phantom::{contraction, phantom, phantom_with, PhantomGeometry};
pub use volume::{normalize_intensity, normalize_sequence, Volume, VolumeData, VolumeKind};
