//! Radial partitioning of the frequency grid into bands.
//!
//! A cell `(u, v)` sits at distance `√(u²+v²)` from the DC corner. Bands are
//! delimited by fractions of `d_max = √((M/2)² + (N/2)²)`, with inclusive upper
//! bounds; the top band is open-ended, so corner cells beyond `d_max` land there.
//! Comparisons are done on squared distances in exact integer arithmetic so
//! that cells sitting exactly on a threshold are classified deterministically.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{MacpError, Result};

/// Named partitioning scheme.
///
/// `LowOnly` and `LowHigh` share the three-band geometry but restrict which
/// bands may receive coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionScheme {
    ThreeBand,
    LowOnly,
    LowHigh,
    FourBand,
}

impl PartitionScheme {
    pub const ALL: [PartitionScheme; 4] = [
        PartitionScheme::LowOnly,
        PartitionScheme::LowHigh,
        PartitionScheme::ThreeBand,
        PartitionScheme::FourBand,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PartitionScheme::ThreeBand => "three_band",
            PartitionScheme::LowOnly => "low_only",
            PartitionScheme::LowHigh => "low_high",
            PartitionScheme::FourBand => "four_band",
        }
    }

    /// Band thresholds as `(numerator, denominator)` fractions of `d_max`,
    /// strictly increasing in (0, 1).
    pub fn thresholds(self) -> &'static [(u32, u32)] {
        match self {
            PartitionScheme::ThreeBand | PartitionScheme::LowOnly | PartitionScheme::LowHigh => &[(1, 3), (2, 3)],
            PartitionScheme::FourBand => &[(1, 4), (2, 4), (3, 4)],
        }
    }

    pub fn num_bands(self) -> usize {
        self.thresholds().len() + 1
    }

    /// Bands that may receive selection budget, ascending.
    pub fn permitted_bands(self) -> Vec<usize> {
        match self {
            PartitionScheme::LowOnly => vec![0],
            PartitionScheme::LowHigh => vec![0, 2],
            PartitionScheme::ThreeBand | PartitionScheme::FourBand => (0..self.num_bands()).collect(),
        }
    }
}

impl fmt::Display for PartitionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PartitionScheme {
    type Err = MacpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "three_band" => Ok(PartitionScheme::ThreeBand),
            "low_only" => Ok(PartitionScheme::LowOnly),
            "low_high" => Ok(PartitionScheme::LowHigh),
            "four_band" => Ok(PartitionScheme::FourBand),
            other => Err(MacpError::UnknownScheme(other.to_string())),
        }
    }
}

/// Per-cell band labels for an `rows × cols` frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionMask {
    rows: usize,
    cols: usize,
    labels: Vec<u8>,
    scheme: PartitionScheme,
    d_max: f64,
}

/// Builds the band mask for a grid.
pub fn build_partition(rows: usize, cols: usize, scheme: PartitionScheme) -> Result<PartitionMask> {
    if rows == 0 || cols == 0 {
        return Err(MacpError::EmptyMatrix { rows, cols });
    }
    let d_max = ((rows as f64 / 2.0).powi(2) + (cols as f64 / 2.0).powi(2)).sqrt();
    // d_max² = (rows² + cols²) / 4, so d² ≤ (p/q)²·d_max²  ⇔  4q²·d² ≤ p²·(rows² + cols²).
    let extent = (rows as u128).pow(2) + (cols as u128).pow(2);
    let thresholds = scheme.thresholds();
    let mut labels = Vec::with_capacity(rows * cols);
    for u in 0..rows {
        for v in 0..cols {
            let d2 = (u as u128).pow(2) + (v as u128).pow(2);
            let band = thresholds
                .iter()
                .filter(|&&(p, q)| 4 * (q as u128).pow(2) * d2 > (p as u128).pow(2) * extent)
                .count();
            labels.push(band as u8);
        }
    }
    Ok(PartitionMask {
        rows,
        cols,
        labels,
        scheme,
        d_max,
    })
}

impl PartitionMask {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn scheme(&self) -> PartitionScheme {
        self.scheme
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    pub fn num_bands(&self) -> usize {
        self.scheme.num_bands()
    }

    #[inline]
    pub fn band(&self, u: usize, v: usize) -> usize {
        self.labels[u * self.cols + v] as usize
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Number of cells in each band; sums to `rows × cols`.
    pub fn band_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_bands()];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Cells of one band in lexicographic `(u, v)` order.
    pub fn cells_in_band(&self, band: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let cols = self.cols;
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, &l)| l as usize == band)
            .map(move |(idx, _)| (idx / cols, idx % cols))
    }
}

/// Free-function form of [`PartitionMask::band_sizes`].
pub fn band_sizes(mask: &PartitionMask) -> Vec<usize> {
    mask.band_sizes()
}
