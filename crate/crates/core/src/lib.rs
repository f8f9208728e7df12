//! Physics- and geometry-informed operator network for 2-D acoustic
//! scattering by rigid NURBS-shaped bodies, with finite-difference and
//! analytical reference solvers.

pub mod dataset;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod net;
pub mod operator;
pub mod oracle;
pub mod physics;
pub mod training;

pub use error::{Error, Result};
pub use geometry::{NurbsCurve, ShapeVector, Vec2};
pub use metrics::ComplexField;
pub use num_complex::Complex64;
pub use operator::{ComplexJet, OperatorParams};
pub use physics::PhysicsConfig;

use rand::SeedableRng;

/// SplitMix64 combination of two seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(0x6a09_e667_f3bc_c909);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn seeded_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
