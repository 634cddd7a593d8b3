//! Deterministic random fields shared by unit and integration tests.

use crate::grid::{Field, Grid};

/// Random trigonometric polynomial with modes `1..=kmax` and unit-order amplitude.
pub fn band_limited(grid: Grid, kmax: usize, seed: u64) -> Field {
    crate::spectral::random_band_limited(grid, kmax, seed)
}
