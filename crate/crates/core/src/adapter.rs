//! The spectral adapter layer.
//!
//! Only `n` spectral coefficients are trainable. The weight update is
//! `ΔW = α · idct2(scatter(c))`, and since the orthonormal inverse transform is
//! the adjoint of the forward one, `∂L/∂c = α · gather(dct2(∂L/∂ΔW))`.

use crate::dct::{dct2, idct2};
use crate::error::{MacpError, Result};
use crate::matrix::DenseMatrix;
use crate::partition::PartitionScheme;
use crate::rng::{kaiming_uniform, stream, Stream};
use crate::selection::{plan_from_weights, SelectionPlan, DEFAULT_DELTA};

/// Initial values for the trainable coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMode {
    /// `U(-√(6/d_1), √(6/d_1))` with `d_1` the input dimension (columns).
    #[default]
    Kaiming,
    /// All zero, so the adapted layer starts identical to the frozen one.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdapterConfig {
    pub scheme: PartitionScheme,
    pub n: usize,
    pub delta: f64,
    pub alpha: f64,
    pub init: InitMode,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        Self {
            scheme: PartitionScheme::ThreeBand,
            n: 90,
            delta: DEFAULT_DELTA,
            alpha: 1.0,
            init: InitMode::Kaiming,
        }
    }
}

/// Trainable state of one adapted layer. The base weight is stored
/// `d_2 × d_1` (outputs × inputs) and acts on column vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterState {
    plan: SelectionPlan,
    coeffs: Vec<f64>,
    alpha: f64,
}

impl AdapterState {
    pub fn new(plan: SelectionPlan, coeffs: Vec<f64>, alpha: f64) -> Result<Self> {
        if coeffs.len() != plan.len() {
            return Err(MacpError::LengthMismatch {
                expected: plan.len(),
                actual: coeffs.len(),
            });
        }
        if !alpha.is_finite() || alpha == 0.0 {
            return Err(MacpError::InvalidConfig(format!(
                "alpha must be finite and nonzero, got {alpha}"
            )));
        }
        if let Some((index, &value)) = coeffs.iter().enumerate().find(|(_, c)| !c.is_finite()) {
            return Err(MacpError::NonFinite { index, value });
        }
        Ok(Self { plan, coeffs, alpha })
    }

    pub fn plan(&self) -> &SelectionPlan {
        &self.plan
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rows(&self) -> usize {
        self.plan.rows()
    }

    pub fn cols(&self) -> usize {
        self.plan.cols()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.plan.rows(), self.plan.cols())
    }

    /// Number of trainable scalars, always `plan.len()`.
    pub fn num_trainable(&self) -> usize {
        self.coeffs.len()
    }

    /// Same plan and scale with every coefficient set to zero.
    pub fn zeroed(&self) -> Self {
        Self {
            plan: self.plan.clone(),
            coeffs: vec![0.0; self.coeffs.len()],
            alpha: self.alpha,
        }
    }

    /// The coefficients scattered into an otherwise zero spectrum.
    pub fn spectrum(&self) -> DenseMatrix {
        let mut spectrum = vec![0.0; self.rows() * self.cols()];
        let cols = self.cols();
        for ((u, v), &c) in self.plan.coords().zip(&self.coeffs) {
            spectrum[u * cols + v] = c;
        }
        DenseMatrix::from_raw(self.rows(), cols, spectrum)
    }
}

/// Builds an adapter for `base_weight`: selection plan from the base
/// spectrum, then coefficient initialisation on an independent stream.
pub fn init_adapter(base_weight: &DenseMatrix, config: &AdapterConfig, seed: u64) -> Result<AdapterState> {
    let plan = plan_from_weights(base_weight, config.scheme, config.n, config.delta, seed)?;
    let coeffs = init_coeffs(plan.len(), base_weight.cols(), config.init, seed);
    AdapterState::new(plan, coeffs, config.alpha)
}

pub(crate) fn init_coeffs(n: usize, fan_in: usize, init: InitMode, seed: u64) -> Vec<f64> {
    match init {
        InitMode::Kaiming => kaiming_uniform(fan_in, n, &mut stream(seed, Stream::Coefficients)),
        InitMode::Zero => vec![0.0; n],
    }
}

/// `ΔW = α · idct2(scatter(c))`.
pub fn delta_weight(state: &AdapterState) -> DenseMatrix {
    idct2(&state.spectrum()).scale(state.alpha)
}

/// `(W + ΔW) · x`.
pub fn forward(state: &AdapterState, base_weight: &DenseMatrix, x: &[f64]) -> Result<Vec<f64>> {
    merge(state, base_weight)?.matvec(x)
}

/// Gradient of a loss with respect to the coefficients, given the gradient
/// with respect to `ΔW`.
pub fn grad_coeffs(state: &AdapterState, grad_delta_w: &DenseMatrix) -> Result<Vec<f64>> {
    grad_delta_w.ensure_shape(state.rows(), state.cols())?;
    let spectral = dct2(grad_delta_w);
    Ok(state
        .plan
        .coords()
        .map(|(u, v)| state.alpha * spectral.get(u, v))
        .collect())
}

/// Folds the update into the base weight: `W + ΔW`.
pub fn merge(state: &AdapterState, base_weight: &DenseMatrix) -> Result<DenseMatrix> {
    base_weight.ensure_shape(state.rows(), state.cols())?;
    // Adding +0.0 would turn -0.0 entries positive; a zero update leaves W bit-identical.
    if state.coeffs.iter().all(|&c| c == 0.0) {
        return Ok(base_weight.clone());
    }
    base_weight.add(&delta_weight(state))
}
