//! Dense linear algebra, eigendecomposition and seeded randomness.

pub mod matrix;
pub mod rng;
pub mod spectrum;

pub use matrix::{mat_mul, Matrix};
pub use rng::{child_seed, SeededRng};
pub use spectrum::{
    condition_number, decompose, matrix_lth_root, planted_spectrum, random_diagonalizable,
    random_with_basis, spectral_norm, spectral_radius, EigenBasis, Spectrum,
};
