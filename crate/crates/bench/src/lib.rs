//! Shared fixtures for the benchmarks.

use rhpert_core::{InverseTemperature, ModelParams, C64};

pub fn params(chain_len: usize) -> ModelParams {
    ModelParams::new(
        2.0,
        1.0,
        0.5,
        0.3,
        chain_len,
        InverseTemperature::new(3f64.ln()).unwrap(),
        InverseTemperature::new(2f64.ln()).unwrap(),
    )
    .unwrap()
}

pub fn vector(len: usize) -> Vec<C64> {
    (0..len).map(|k| C64::from_polar(1.0 / (1.0 + k as f64), 0.37 * k as f64)).collect()
}
