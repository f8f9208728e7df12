//! Shared fixtures for the benchmarks.

use scatter_core::dataset::{generate_dataset, DatasetOptions, DatasetRole, PointCounts, ShapeDataset};
use scatter_core::physics::LossBatch;
use scatter_core::training::standard_operator;
use scatter_core::{seeded_rng, OperatorParams, PhysicsConfig};

pub const SEED: u64 = 0xbe4c;

pub fn operator() -> OperatorParams {
    standard_operator(PhysicsConfig::default(), &mut seeded_rng(SEED)).expect("standard operator")
}

pub fn shapes(count: usize) -> ShapeDataset {
    generate_dataset(DatasetRole::Train, count, SEED, &DatasetOptions::default()).expect("dataset")
}

/// A loss batch small enough to time many iterations of.
pub fn batch(shapes_in_batch: usize, counts: PointCounts) -> LossBatch {
    let ds = shapes(shapes_in_batch);
    let points = ds.point_sets(&counts).expect("points");
    LossBatch::new(ds.shapes, points).expect("batch")
}
