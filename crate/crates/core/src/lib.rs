//! Hierarchical cosine-projection adapters.
//!
//! A frozen weight matrix is moved into the orthonormal 2D DCT domain, the
//! frequency grid is split into radial bands, and a small hybrid set of
//! coefficients (energy-ranked plus random, stratified across bands) becomes
//! the only trainable state. The update returns to weight space through the
//! inverse transform:
//!
//! ```
//! use macp_core::{adapter, AdapterConfig, DenseMatrix};
//!
//! let base = DenseMatrix::from_fn(16, 16, |i, j| ((i + 2 * j) as f64).sin()).unwrap();
//! let state = adapter::init_adapter(&base, &AdapterConfig { n: 12, ..Default::default() }, 7).unwrap();
//! assert_eq!(state.num_trainable(), 12);
//! let merged = adapter::merge(&state, &base).unwrap();
//! assert_eq!(merged.shape(), (16, 16));
//! ```
//!
//! The crate also carries the comparison baselines (rank-r low-rank and
//! unstructured random-spectral adapters), a toy classifier with hand-written
//! gradients for the synthetic benchmarks, the activation-memory model, and
//! the on-disk formats.

pub mod adapter;
pub mod baselines;
pub mod dct;
pub mod error;
pub mod io;
pub mod matrix;
pub mod memory;
pub mod partition;
pub mod rng;
pub mod selection;
pub mod synth;
pub mod trainer;

pub use adapter::{AdapterConfig, AdapterState, InitMode};
pub use baselines::{LowRankState, RandomSpectralState};
pub use dct::{dct2, energy_map, idct2};
pub use error::{IoError, MacpError};
pub use matrix::DenseMatrix;
pub use memory::{MemoryQuery, MemoryReport};
pub use partition::{build_partition, PartitionMask, PartitionScheme};
pub use selection::{Provenance, SelectionPlan, SelectionStrategy};
pub use synth::{Dataset, ExperimentConfig, SyntheticDatasetConfig};
pub use trainer::{Method, MethodConfig, RunRecord, ToyModel, TrainConfig};
