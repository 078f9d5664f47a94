//! Boundary-integral solver for nested smooth interfaces.

mod gpt;
mod properties;
mod spectrum;
mod system;

pub use gpt::{cgpt, gpt, CgptBlock, GptTable};
pub use properties::{
    check_positivity, check_symmetry, disk_layer_energies, layer_energies, symmetry_of_table, PositivityReport,
    SymmetryReport,
};
pub use spectrum::{np_spectrum, spectrum_bounds, SpectrumBounds};
pub use system::{assemble, far_field_eval, solve_densities, BlockNpSystem, DensityField};
