//! Shared fixtures for the benchmarks.

use macp_core::DenseMatrix;

/// Deterministic dense matrix with no exploitable structure.
pub fn matrix(rows: usize, cols: usize) -> DenseMatrix {
    let mut state: u64 = 0x2545_F491_4F6C_DD1D ^ ((rows as u64) << 32 | cols as u64);
    DenseMatrix::from_fn(rows, cols, |_, _| {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    })
    .expect("non-empty shape")
}
