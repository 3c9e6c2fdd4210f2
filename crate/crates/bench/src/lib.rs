//! Shared inputs for the criterion benchmarks.

use std::sync::Arc;

use onepflow_core::algebra::Jacobian;
use onepflow_core::scenarios::{scenario_bingham_pipe, PipeForcing};
use onepflow_core::{build_mesh, BoxDomain, Mesh, Scenario};

/// Deterministic pseudo-random Jacobians (a small LCG keeps this crate
/// free of RNG dependencies).
pub fn jacobians(count: usize, rows: usize, cols: usize) -> Vec<Jacobian> {
    let mut state = 0x2545_f491_4f6c_dd1d_u64;
    let mut next = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
    };
    (0..count)
        .map(|_| Jacobian::from_vec(rows, cols, (0..rows * cols).map(|_| next()).collect()))
        .collect()
}

pub fn unit_square(resolution: usize) -> Arc<Mesh> {
    Arc::new(build_mesh(&BoxDomain::unit(2), &[resolution, resolution]).expect("valid mesh"))
}

/// Pipe cross-section under a constant pressure drop, starting from rest.
pub fn pipe(resolution: usize) -> Scenario {
    scenario_bingham_pipe(PipeForcing::Constant(4.0), resolution, 1e-2, 0.05)
        .expect("valid scenario")
}
