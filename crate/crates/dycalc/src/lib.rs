//! Dyadic calculus on finite, randomly shifted grids.
//!
//! The crate works with vector-valued step functions at a fixed finest
//! scale and provides:
//!
//! * [`lattice`]: shifted dyadic grids, good/bad cubes, sub-lattices.
//! * [`haar`]: Haar functions, martingale differences, expansion.
//! * [`spaces`]: finite-dimensional normed spaces, contractions,
//!   Rademacher norms and R-boundedness estimators.
//! * [`multilinear`]: dense multilinear operators.
//! * [`model_ops`]: dyadic shifts, paraproducts, multi-parameter shifts
//!   and the doubly indexed lift of shift families.
//! * [`sparse`]: stopping times, sparse collections and sparse forms.
//! * [`rmf`]: multilinear and classic Rademacher maximal functions.
//! * [`represent`]: discretized singular integral forms and their exact
//!   decomposition into model operators.
//!
//! All randomness is driven by explicit `u64` seeds through [`rng`].

pub mod error;
pub mod haar;
pub mod lattice;
pub mod model_ops;
pub mod multilinear;
pub mod represent;
pub mod rmf;
pub mod sparse;
pub mod spaces;

pub use error::{Error, Result};

use rand::SeedableRng;

/// The pseudo-random generator used throughout the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate's generator from a seed.
pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Derives an independent seed for sub-task `index` of a run seeded with `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the combined word
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
