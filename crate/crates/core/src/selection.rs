//! Stratified hybrid selection of trainable frequency coordinates.
//!
//! The total budget `n` is split across the scheme's permitted bands in
//! proportion to band size (largest-remainder rounding). Inside each band the
//! `⌊b·δ⌋` highest-energy cells are taken first, ties broken by ascending
//! `(u, v)`; the rest of the band's budget is drawn uniformly without
//! replacement from the band's remaining cells.

use std::fmt;
use std::str::FromStr;

use crate::dct::{dct2, energy_map};
use crate::error::{MacpError, Result};
use crate::matrix::DenseMatrix;
use crate::partition::{build_partition, PartitionMask, PartitionScheme};
use crate::rng::{sample_without_replacement, stream, Stream};

/// Default share of each band's budget chosen by energy.
pub const DEFAULT_DELTA: f64 = 0.7;

/// How a coordinate entered the plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Energy,
    Random,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::Energy => "energy",
            Provenance::Random => "random",
        }
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "energy" => Ok(Provenance::Energy),
            "random" => Ok(Provenance::Random),
            other => Err(format!("unknown provenance `{other}`")),
        }
    }
}

/// Which selection procedure produced a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SelectionStrategy {
    /// Band-stratified hybrid energy/random selection.
    Stratified(PartitionScheme),
    /// Uniform draw over the whole grid, ignoring bands and energy.
    Unstructured,
}

impl SelectionStrategy {
    pub fn name(self) -> &'static str {
        match self {
            SelectionStrategy::Stratified(s) => s.name(),
            SelectionStrategy::Unstructured => "unstructured",
        }
    }
}

impl fmt::Display for SelectionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SelectionStrategy {
    type Err = MacpError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "unstructured" {
            Ok(SelectionStrategy::Unstructured)
        } else {
            s.parse().map(SelectionStrategy::Stratified)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SelectedCoord {
    pub u: usize,
    pub v: usize,
    pub band: usize,
    pub provenance: Provenance,
}

/// An ordered, duplicate-free set of selected spectral coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionPlan {
    rows: usize,
    cols: usize,
    entries: Vec<SelectedCoord>,
    budgets: Vec<usize>,
    delta: f64,
    seed: u64,
    strategy: SelectionStrategy,
}

impl SelectionPlan {
    /// Reassembles a plan from persisted parts, checking grid bounds and
    /// uniqueness. Bands are recomputed from the strategy.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        coords: &[(usize, usize)],
        provenance: &[Provenance],
        delta: f64,
        seed: u64,
        strategy: SelectionStrategy,
    ) -> Result<Self> {
        if coords.len() != provenance.len() {
            return Err(MacpError::LengthMismatch {
                expected: coords.len(),
                actual: provenance.len(),
            });
        }
        check_delta(delta)?;
        let mask = match strategy {
            SelectionStrategy::Stratified(scheme) => Some(build_partition(rows, cols, scheme)?),
            SelectionStrategy::Unstructured => {
                if rows == 0 || cols == 0 {
                    return Err(MacpError::EmptyMatrix { rows, cols });
                }
                None
            }
        };
        let mut seen = vec![false; rows * cols];
        let mut entries = Vec::with_capacity(coords.len());
        for (&(u, v), &provenance) in coords.iter().zip(provenance) {
            if u >= rows || v >= cols {
                return Err(MacpError::InvalidConfig(format!(
                    "coordinate ({u}, {v}) lies outside the {rows}x{cols} grid"
                )));
            }
            if std::mem::replace(&mut seen[u * cols + v], true) {
                return Err(MacpError::InvalidConfig(format!(
                    "coordinate ({u}, {v}) selected twice"
                )));
            }
            let band = mask.as_ref().map_or(0, |m| m.band(u, v));
            entries.push(SelectedCoord { u, v, band, provenance });
        }
        let num_bands = mask.as_ref().map_or(1, |m| m.num_bands());
        let mut budgets = vec![0; num_bands];
        for e in &entries {
            budgets[e.band] += 1;
        }
        Ok(Self {
            rows,
            cols,
            entries,
            budgets,
            delta,
            seed,
            strategy,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[SelectedCoord] {
        &self.entries
    }

    pub fn coords(&self) -> impl ExactSizeIterator<Item = (usize, usize)> + '_ {
        self.entries.iter().map(|e| (e.u, e.v))
    }

    /// Per-band budgets the plan was built with; sums to `len()`.
    pub fn budgets(&self) -> &[usize] {
        &self.budgets
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn strategy(&self) -> SelectionStrategy {
        self.strategy
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&delta) {
        Ok(())
    } else {
        Err(MacpError::DeltaOutOfRange(delta))
    }
}

/// Number of energy-ranked picks for a band budget: `⌊budget·δ⌋`.
///
/// A small epsilon absorbs products such as `10 × 0.7` landing a hair below
/// the integer in binary floating point.
pub fn energy_quota(budget: usize, delta: f64) -> usize {
    ((budget as f64 * delta + 1e-9).floor() as usize).min(budget)
}

/// Splits `n` across the scheme's permitted bands in proportion to band size.
///
/// Quotas are `n·size_k / total` with the floors topped up by largest
/// remainder (ties go to the lower band). Bands that are not permitted get 0.
pub fn allocate_budgets(n: usize, mask: &PartitionMask) -> Result<Vec<usize>> {
    let sizes = mask.band_sizes();
    let permitted = mask.scheme().permitted_bands();
    let total: usize = permitted.iter().map(|&k| sizes[k]).sum();
    if n > total {
        return Err(MacpError::Capacity {
            requested: n,
            available: total,
        });
    }
    let mut budgets = vec![0usize; sizes.len()];
    if n == 0 {
        return Ok(budgets);
    }
    let (n128, total128) = (n as u128, total as u128);
    let mut remainders = Vec::with_capacity(permitted.len());
    let mut assigned = 0;
    for &k in &permitted {
        let exact = n128 * sizes[k] as u128;
        budgets[k] = (exact / total128) as usize;
        assigned += budgets[k];
        remainders.push((exact % total128, k));
    }
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, k) in remainders.iter().take(n - assigned) {
        budgets[k] += 1;
    }
    // Proportional shares never exceed a band's size, but spill any excess
    // forward to the next permitted band in case that ever changes.
    let mut carry = 0;
    for &k in &permitted {
        budgets[k] += carry;
        carry = budgets[k].saturating_sub(sizes[k]);
        budgets[k] -= carry;
    }
    debug_assert_eq!(carry, 0);
    debug_assert_eq!(budgets.iter().sum::<usize>(), n);
    Ok(budgets)
}

/// Hybrid energy/random selection of `n` coordinates against a partition.
pub fn select_coefficients(
    base_energy: &DenseMatrix,
    mask: &PartitionMask,
    n: usize,
    delta: f64,
    seed: u64,
) -> Result<SelectionPlan> {
    base_energy.ensure_shape(mask.rows(), mask.cols())?;
    check_delta(delta)?;
    let budgets = allocate_budgets(n, mask)?;
    let mut rng = stream(seed, Stream::Selection);
    let mut entries = Vec::with_capacity(n);

    for (band, &budget) in budgets.iter().enumerate() {
        if budget == 0 {
            continue;
        }
        let cells: Vec<(usize, usize)> = mask.cells_in_band(band).collect();
        let n_energy = energy_quota(budget, delta);

        let mut ranked = cells.clone();
        // Stable sort over lexicographic input keeps ties in (u, v) order.
        ranked.sort_by(|a, b| base_energy.get(b.0, b.1).total_cmp(&base_energy.get(a.0, a.1)));
        let mut taken = vec![false; cells.len()];
        for &(u, v) in &ranked[..n_energy] {
            entries.push(SelectedCoord {
                u,
                v,
                band,
                provenance: Provenance::Energy,
            });
            let idx = cells.binary_search(&(u, v)).expect("cell belongs to band");
            taken[idx] = true;
        }

        let mut pool: Vec<(usize, usize)> = cells.iter().zip(&taken).filter(|(_, &t)| !t).map(|(&c, _)| c).collect();
        for &(u, v) in sample_without_replacement(&mut pool, budget - n_energy, &mut rng) {
            entries.push(SelectedCoord {
                u,
                v,
                band,
                provenance: Provenance::Random,
            });
        }
    }

    entries.sort_by_key(|e| (e.band, e.u, e.v));
    Ok(SelectionPlan {
        rows: mask.rows(),
        cols: mask.cols(),
        entries,
        budgets,
        delta,
        seed,
        strategy: SelectionStrategy::Stratified(mask.scheme()),
    })
}

/// `dct2 → energy_map → select_coefficients` on a base weight matrix.
pub fn plan_from_weights(
    base_weight: &DenseMatrix,
    scheme: PartitionScheme,
    n: usize,
    delta: f64,
    seed: u64,
) -> Result<SelectionPlan> {
    let mask = build_partition(base_weight.rows(), base_weight.cols(), scheme)?;
    let energy = energy_map(&dct2(base_weight));
    select_coefficients(&energy, &mask, n, delta, seed)
}

/// Uniform selection of `n` distinct coordinates over the full grid.
pub fn select_unstructured(rows: usize, cols: usize, n: usize, seed: u64) -> Result<SelectionPlan> {
    if rows == 0 || cols == 0 {
        return Err(MacpError::EmptyMatrix { rows, cols });
    }
    if n > rows * cols {
        return Err(MacpError::Capacity {
            requested: n,
            available: rows * cols,
        });
    }
    let mut rng = stream(seed, Stream::Selection);
    let mut pool: Vec<(usize, usize)> = (0..rows).flat_map(|u| (0..cols).map(move |v| (u, v))).collect();
    let mut entries: Vec<SelectedCoord> = sample_without_replacement(&mut pool, n, &mut rng)
        .iter()
        .map(|&(u, v)| SelectedCoord {
            u,
            v,
            band: 0,
            provenance: Provenance::Random,
        })
        .collect();
    entries.sort_by_key(|e| (e.u, e.v));
    Ok(SelectionPlan {
        rows,
        cols,
        entries,
        budgets: vec![n],
        delta: 0.0,
        seed,
        strategy: SelectionStrategy::Unstructured,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn random_energy(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>()).unwrap()
    }

    #[test]
    fn zero_budget() {
        let mask = build_partition(16, 16, PartitionScheme::ThreeBand).unwrap();
        assert_eq!(allocate_budgets(0, &mask).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn full_budget_equals_band_sizes() {
        for scheme in [PartitionScheme::ThreeBand, PartitionScheme::FourBand] {
            let mask = build_partition(12, 9, scheme).unwrap();
            assert_eq!(allocate_budgets(108, &mask).unwrap(), mask.band_sizes());
        }
    }

    #[test]
    fn restricted_schemes() {
        let mask = build_partition(64, 64, PartitionScheme::LowOnly).unwrap();
        let sizes = mask.band_sizes();
        assert_eq!(allocate_budgets(10, &mask).unwrap(), vec![10, 0, 0]);
        assert!(matches!(
            allocate_budgets(sizes[0] + 1, &mask),
            Err(MacpError::Capacity { .. })
        ));
        let mask = build_partition(64, 64, PartitionScheme::LowHigh).unwrap();
        let b = allocate_budgets(90, &mask).unwrap();
        assert_eq!(b[1], 0);
        assert_eq!(b[0] + b[2], 90);
    }

    #[test]
    fn delta_one_single_pick_is_band_argmax() {
        let energy = random_energy(16, 16, 5);
        let mask = build_partition(16, 16, PartitionScheme::ThreeBand).unwrap();
        let plan = select_coefficients(&energy, &mask, 1, 1.0, 0).unwrap();
        let e = plan.entries()[0];
        assert_eq!(e.provenance, Provenance::Energy);
        let best = mask
            .cells_in_band(e.band)
            .map(|(u, v)| energy.get(u, v))
            .fold(f64::MIN, f64::max);
        assert_eq!(energy.get(e.u, e.v), best);
    }

    #[test]
    fn delta_zero_is_all_random_and_reproducible() {
        let energy = random_energy(16, 16, 6);
        let mask = build_partition(16, 16, PartitionScheme::ThreeBand).unwrap();
        let a = select_coefficients(&energy, &mask, 20, 0.0, 9).unwrap();
        let b = select_coefficients(&energy, &mask, 20, 0.0, 9).unwrap();
        assert!(a.entries().iter().all(|e| e.provenance == Provenance::Random));
        assert_eq!(a, b);
        let c = select_coefficients(&energy, &mask, 20, 0.0, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn constant_weight_selects_dc() {
        let w = DenseMatrix::filled(8, 8, 0.5).unwrap();
        let plan = plan_from_weights(&w, PartitionScheme::LowOnly, 1, 1.0, 0).unwrap();
        assert_eq!(plan.coords().collect::<Vec<_>>(), vec![(0, 0)]);
    }

    #[test]
    fn zero_weight_ties_break_lexicographically() {
        let w = DenseMatrix::zeros(8, 8).unwrap();
        let plan = plan_from_weights(&w, PartitionScheme::ThreeBand, 12, 1.0, 0).unwrap();
        let mask = build_partition(8, 8, PartitionScheme::ThreeBand).unwrap();
        for (band, &b) in plan.budgets().iter().enumerate() {
            let expected: Vec<_> = mask.cells_in_band(band).take(b).collect();
            let got: Vec<_> = plan
                .entries()
                .iter()
                .filter(|e| e.band == band)
                .map(|e| (e.u, e.v))
                .collect();
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let mask = build_partition(8, 8, PartitionScheme::ThreeBand).unwrap();
        let wrong = DenseMatrix::zeros(8, 7).unwrap();
        assert!(matches!(
            select_coefficients(&wrong, &mask, 3, 0.5, 0),
            Err(MacpError::ShapeMismatch { .. })
        ));
        let e = DenseMatrix::zeros(8, 8).unwrap();
        assert!(matches!(
            select_coefficients(&e, &mask, 3, 1.5, 0),
            Err(MacpError::DeltaOutOfRange(_))
        ));
        assert!(matches!(
            select_coefficients(&e, &mask, 3, f64::NAN, 0),
            Err(MacpError::DeltaOutOfRange(_))
        ));
        assert!(matches!(
            select_coefficients(&e, &mask, 65, 0.5, 0),
            Err(MacpError::Capacity { .. })
        ));
    }

    #[test]
    fn energy_quota_rounding() {
        assert_eq!(energy_quota(10, 0.7), 7);
        assert_eq!(energy_quota(3, 0.7), 2);
        assert_eq!(energy_quota(1, 0.7), 0);
        assert_eq!(energy_quota(5, 1.0), 5);
        assert_eq!(energy_quota(5, 0.0), 0);
    }

    #[test]
    fn unstructured_full_grid() {
        let plan = select_unstructured(4, 5, 20, 3).unwrap();
        let coords: Vec<_> = plan.coords().collect();
        let all: Vec<_> = (0..4).flat_map(|u| (0..5).map(move |v| (u, v))).collect();
        assert_eq!(coords, all);
        assert!(select_unstructured(4, 5, 21, 3).is_err());
    }

    #[test]
    fn from_parts_rejects_duplicates() {
        let r = SelectionPlan::from_parts(
            4,
            4,
            &[(1, 1), (1, 1)],
            &[Provenance::Energy, Provenance::Random],
            0.5,
            0,
            SelectionStrategy::Stratified(PartitionScheme::ThreeBand),
        );
        assert!(r.is_err());
    }
}
