//! Shared fixtures for the benchmarks.

use chargecorr::{CorrelationModel, SingularityKind};

pub const KINDS: [SingularityKind; 3] =
    [SingularityKind::VectorZero(2), SingularityKind::Critical2D, SingularityKind::Umbilic2D];

pub fn models() -> [CorrelationModel; 2] {
    [CorrelationModel::Ring2D, CorrelationModel::GaussianC]
}

/// Separations spanning the short-range core and the oscillating tail.
pub fn separations() -> Vec<f64> {
    (1..=40).map(|i| 0.25 * i as f64).collect()
}
