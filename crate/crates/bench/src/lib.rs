//! Shared inputs for the benchmarks.

use vinegof::power_lab::fixtures::{study_one_model, TauLevel};
use vinegof::{CopulaSample, RVineModel};

/// The five-dimensional mixed fixture and a sample of size `n` drawn from it.
pub fn mixed_fixture(n: usize) -> (RVineModel, CopulaSample) {
    let m = study_one_model(TauLevel::Mixed);
    let x = m.simulate(n, 42).expect("fixture simulates");
    (m, x)
}
