//! Orthonormal 2D DCT-II / DCT-III on dense matrices.
//!
//! Both directions are separable: each 1D pass is a product against a cached
//! `L×L` cosine basis `C[k][i] = s(k)·cos(π/L·(i+½)·k)` with `s(0)=√(1/L)` and
//! `s(k≥1)=√(2/L)`. The basis is orthogonal, so the inverse is its transpose
//! and `idct2` is the adjoint of `dct2`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::matrix::{matmul_into, DenseMatrix};

/// Cosine basis for one transform length, with its transpose.
struct Basis {
    forward: Vec<f64>,
    transposed: Vec<f64>,
}

impl Basis {
    fn new(len: usize) -> Self {
        let l = len as f64;
        let mut forward = vec![0.0; len * len];
        for k in 0..len {
            let scale = if k == 0 { (1.0 / l).sqrt() } else { (2.0 / l).sqrt() };
            for i in 0..len {
                forward[k * len + i] = scale * (PI / l * (i as f64 + 0.5) * k as f64).cos();
            }
        }
        let mut transposed = vec![0.0; len * len];
        for k in 0..len {
            for i in 0..len {
                transposed[i * len + k] = forward[k * len + i];
            }
        }
        Self { forward, transposed }
    }
}

fn basis(len: usize) -> Arc<Basis> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Basis>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard.entry(len).or_insert_with(|| Arc::new(Basis::new(len))).clone()
}

/// Order in which the two separable passes are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassOrder {
    RowsThenColumns,
    ColumnsThenRows,
}

/// Forward 2D DCT-II with orthonormal scaling, rows first.
pub fn dct2(spatial: &DenseMatrix) -> DenseMatrix {
    dct2_ordered(spatial, PassOrder::RowsThenColumns)
}

/// Forward 2D DCT-II with an explicit pass order. Both orders agree to
/// rounding error.
pub fn dct2_ordered(spatial: &DenseMatrix, order: PassOrder) -> DenseMatrix {
    let (m, n) = spatial.shape();
    let bm = basis(m);
    let bn = basis(n);
    // W_F = C_M · W · C_Nᵀ
    transform(spatial, &bm.forward, &bn.transposed, order)
}

/// Inverse 2D DCT (DCT-III), the exact inverse and adjoint of [`dct2`].
pub fn idct2(spectrum: &DenseMatrix) -> DenseMatrix {
    let (m, n) = spectrum.shape();
    let bm = basis(m);
    let bn = basis(n);
    // W = C_Mᵀ · W_F · C_N
    transform(spectrum, &bm.transposed, &bn.forward, PassOrder::RowsThenColumns)
}

fn transform(x: &DenseMatrix, left: &[f64], right: &[f64], order: PassOrder) -> DenseMatrix {
    let (m, n) = x.shape();
    debug_assert_eq!(left.len(), m * m);
    debug_assert_eq!(right.len(), n * n);
    let mut scratch = vec![0.0; m * n];
    let mut out = vec![0.0; m * n];
    match order {
        PassOrder::RowsThenColumns => {
            matmul_into(x.as_slice(), right, &mut scratch, m, n, n);
            matmul_into(left, &scratch, &mut out, m, m, n);
        }
        PassOrder::ColumnsThenRows => {
            matmul_into(left, x.as_slice(), &mut scratch, m, m, n);
            matmul_into(&scratch, right, &mut out, m, n, n);
        }
    }
    DenseMatrix::from_raw(m, n, out)
}

/// Elementwise squared magnitude of a spectrum.
pub fn energy_map(spectrum: &DenseMatrix) -> DenseMatrix {
    let values = spectrum.as_slice().iter().map(|v| v * v).collect();
    DenseMatrix::from_raw(spectrum.rows(), spectrum.cols(), values)
}
