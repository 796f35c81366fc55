//! Matched-budget comparison adapters.

use crate::adapter::{init_coeffs, AdapterState, InitMode};
use crate::error::{MacpError, Result};
use crate::matrix::DenseMatrix;
use crate::rng::{kaiming_uniform, stream, Stream};
use crate::selection::select_unstructured;

/// Rank-`r` update `ΔW = scale · B·A` with `A: r×d_1`, `B: d_2×r`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankState {
    a: DenseMatrix,
    b: DenseMatrix,
    scale: f64,
}

impl LowRankState {
    pub fn from_parts(a: DenseMatrix, b: DenseMatrix, scale: f64) -> Result<Self> {
        if b.cols() != a.rows() {
            return Err(MacpError::ShapeMismatch {
                expected: (b.rows(), a.rows()),
                actual: b.shape(),
            });
        }
        Ok(Self { a, b, scale })
    }

    pub fn rank(&self) -> usize {
        self.a.rows()
    }

    /// Input dimension `d_1`.
    pub fn d_in(&self) -> usize {
        self.a.cols()
    }

    /// Output dimension `d_2`.
    pub fn d_out(&self) -> usize {
        self.b.rows()
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn b(&self) -> &DenseMatrix {
        &self.b
    }

    pub fn a_mut(&mut self) -> &mut DenseMatrix {
        &mut self.a
    }

    pub fn b_mut(&mut self) -> &mut DenseMatrix {
        &mut self.b
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `r · (d_1 + d_2)`.
    pub fn num_trainable(&self) -> usize {
        self.a.len() + self.b.len()
    }
}

/// `A` Kaiming-uniform with fan-in `d_1`, `B` zero, so `ΔW = 0` at step 0.
pub fn lowrank_init(d_in: usize, d_out: usize, rank: usize, seed: u64) -> Result<LowRankState> {
    if rank == 0 || rank > d_in.min(d_out) {
        return Err(MacpError::InvalidRank {
            rank,
            rows: d_out,
            cols: d_in,
        });
    }
    let mut rng = stream(seed, Stream::LowRank);
    let a = DenseMatrix::new(rank, d_in, kaiming_uniform(d_in, rank * d_in, &mut rng))?;
    let b = DenseMatrix::zeros(d_out, rank)?;
    Ok(LowRankState { a, b, scale: 1.0 })
}

pub fn lowrank_delta(state: &LowRankState) -> DenseMatrix {
    state
        .b
        .matmul(&state.a)
        .expect("factor shapes checked at construction")
        .scale(state.scale)
}

/// Chain rule through `ΔW = s·B·A`: returns `(s·Bᵀ·G, s·G·Aᵀ)`.
pub fn lowrank_grads(state: &LowRankState, grad_delta_w: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    grad_delta_w.ensure_shape(state.d_out(), state.d_in())?;
    let grad_a = state.b.transpose().matmul(grad_delta_w)?.scale(state.scale);
    let grad_b = grad_delta_w.matmul(&state.a.transpose())?.scale(state.scale);
    Ok((grad_a, grad_b))
}

/// Spectral adapter whose coordinates are drawn uniformly over the whole grid.
pub type RandomSpectralState = AdapterState;

/// Unstructured random-spectral adapter: uniform coordinates, Kaiming
/// coefficients, otherwise the same layer as the hierarchical adapter.
pub fn random_spectral_init(d_in: usize, d_out: usize, n: usize, alpha: f64, seed: u64) -> Result<RandomSpectralState> {
    random_spectral_init_with(d_in, d_out, n, alpha, InitMode::Kaiming, seed)
}

pub fn random_spectral_init_with(
    d_in: usize,
    d_out: usize,
    n: usize,
    alpha: f64,
    init: InitMode,
    seed: u64,
) -> Result<RandomSpectralState> {
    let plan = select_unstructured(d_out, d_in, n, seed)?;
    let coeffs = init_coeffs(n, d_in, init, seed);
    AdapterState::new(plan, coeffs, alpha)
}
