//! Self-organizing fuzzy rule generation and tuning.
//!
//! The pipeline turns labeled numeric vectors into a compact set of Gaussian
//! fuzzy rules and then sharpens those rules against the training data:
//!
//! 1. [`sofm`] trains a one-dimensional self-organizing feature map whose
//!    weight vectors seed the class prototypes.
//! 2. [`prototype`] labels the map nodes by majority vote of the samples they
//!    win and repairs the set by deleting, splitting, and merging prototypes.
//! 3. [`rulebase`] converts each surviving prototype into one fuzzy rule with
//!    a Gaussian membership function per feature.
//! 4. [`inference`] classifies points by the rule with the strongest firing,
//!    under product, soft-minimum, or hard-minimum conjunction.
//! 5. [`tuning`] runs gradient-style passes that move rule centers, spreads,
//!    and soft-minimum exponents to reduce a per-sample contrast error, with
//!    epoch-level rollback when an update makes things worse.
//! 6. [`eval`] and [`pgm`] report accuracy and render classified images.
//!
//! All randomness is drawn from explicitly seeded generators so every run is
//! reproducible bit for bit.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod inference;
pub mod pgm;
pub mod prototype;
pub mod rulebase;
pub mod sofm;
pub mod tuning;

pub use error::{Error, Result};

/// Deterministic RNG used everywhere randomness is needed.
pub type SeedRng = rand_chacha::ChaCha8Rng;

/// Builds the crate's RNG from a user-supplied seed.
pub fn seeded_rng(seed: u64) -> SeedRng {
    use rand::SeedableRng;
    SeedRng::seed_from_u64(seed)
}
