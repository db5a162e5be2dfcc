//! Shared inputs for the benchmarks.

use std::path::PathBuf;

use obscal::UniformSpline;

/// The optimized trajectory used as a regression fixture by the core tests.
pub fn excited_spline() -> UniformSpline {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/excited.spline");
    UniformSpline::load(path).expect("fixture parses")
}
