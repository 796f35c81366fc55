//! Synthetic 8-cluster dataset and the two desk-scale experiments: the
//! three-way adapter comparison and the partition-scheme ablation.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::adapter::AdapterConfig;
use crate::error::{MacpError, Result};
use crate::partition::{build_partition, PartitionScheme};
use crate::rng::{stream, Stream};
use crate::selection::allocate_budgets;
use crate::trainer::{train, Method, MethodConfig, RunRecord, ToyModel, TrainConfig};

/// Labelled 2D points.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<[f64; 2]>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(inputs: Vec<[f64; 2]>, labels: Vec<usize>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(MacpError::LengthMismatch {
                expected: inputs.len(),
                actual: labels.len(),
            });
        }
        Ok(Self { inputs, labels })
    }

    pub fn inputs(&self) -> &[[f64; 2]] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SyntheticDatasetConfig {
    pub num_classes: usize,
    pub center_radius: f64,
    pub noise_sigma: f64,
    pub samples_per_class: usize,
    pub seed: u64,
}

impl Default for SyntheticDatasetConfig {
    fn default() -> Self {
        Self {
            num_classes: 8,
            center_radius: 3.0,
            noise_sigma: 0.3,
            samples_per_class: 200,
            seed: 0,
        }
    }
}

impl SyntheticDatasetConfig {
    /// Centre of class `k`, evenly spaced on a circle.
    pub fn center(&self, k: usize) -> [f64; 2] {
        let angle = 2.0 * PI * k as f64 / self.num_classes as f64;
        [self.center_radius * angle.cos(), self.center_radius * angle.sin()]
    }
}

/// Isotropic Gaussian clusters around evenly spaced centres, class-major order.
pub fn make_dataset(config: &SyntheticDatasetConfig) -> Result<Dataset> {
    if config.num_classes == 0 || config.samples_per_class == 0 {
        return Err(MacpError::InvalidConfig(
            "dataset needs at least one class and one sample per class".into(),
        ));
    }
    if !(config.noise_sigma > 0.0 && config.noise_sigma.is_finite()) || !config.center_radius.is_finite() {
        return Err(MacpError::InvalidConfig(format!(
            "noise sigma must be positive and finite (got {}), radius finite (got {})",
            config.noise_sigma, config.center_radius
        )));
    }
    let mut rng = stream(config.seed, Stream::Dataset);
    let total = config.num_classes * config.samples_per_class;
    let mut inputs = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for k in 0..config.num_classes {
        let [cx, cy] = config.center(k);
        for _ in 0..config.samples_per_class {
            let nx: f64 = rng.sample(StandardNormal);
            let ny: f64 = rng.sample(StandardNormal);
            inputs.push([cx + config.noise_sigma * nx, cy + config.noise_sigma * ny]);
            labels.push(k);
        }
    }
    Dataset::new(inputs, labels)
}

/// Shared settings for both experiments. Per-run seeds override the dataset
/// and training seeds; the same seed also draws the frozen model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: SyntheticDatasetConfig,
    pub train: TrainConfig,
    pub macp: AdapterConfig,
    pub lowrank_rank: usize,
    pub random_spectral_n: usize,
    /// Accuracy threshold for the convergence-speed statistic.
    pub target_accuracy: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: SyntheticDatasetConfig::default(),
            train: TrainConfig::default(),
            macp: AdapterConfig::default(),
            lowrank_rank: 1,
            random_spectral_n: 128,
            target_accuracy: 0.95,
        }
    }
}

impl ExperimentConfig {
    pub fn method_config(&self, method: Method) -> MethodConfig {
        match method {
            Method::Macp => MethodConfig::Macp(self.macp),
            Method::LowRank => MethodConfig::LowRank {
                rank: self.lowrank_rank,
            },
            Method::RandomSpectral => MethodConfig::RandomSpectral {
                n: self.random_spectral_n,
                alpha: self.macp.alpha,
                init: self.macp.init,
            },
        }
    }

    /// Dataset and frozen model for one seed; identical for every method and
    /// scheme trained under that seed.
    pub fn fixture(&self, seed: u64) -> Result<(Dataset, ToyModel)> {
        let data = make_dataset(&SyntheticDatasetConfig { seed, ..self.dataset })?;
        Ok((data, ToyModel::new(seed)))
    }

    fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig { seed, ..self.train }
    }
}

/// Median of a non-empty slice; `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub runs: usize,
    pub failed: usize,
    pub median_final_acc: Option<f64>,
    /// Median first epoch reaching the target accuracy; runs that never get
    /// there count as infinitely slow, so this is `None` when they form the
    /// median.
    pub median_epochs_to_target: Option<f64>,
}

/// Summary statistics derived purely from run records.
pub fn summarize(records: &[RunRecord], target: f64) -> Vec<MethodSummary> {
    let mut by_method: BTreeMap<Method, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        by_method.entry(r.method).or_default().push(r);
    }
    by_method
        .into_iter()
        .map(|(method, runs)| {
            let ok: Vec<&&RunRecord> = runs.iter().filter(|r| r.succeeded()).collect();
            let finals: Vec<f64> = ok.iter().filter_map(|r| r.final_accuracy()).collect();
            let speeds: Vec<f64> = ok
                .iter()
                .map(|r| r.epochs_to_reach(target).map_or(f64::INFINITY, |e| e as f64))
                .collect();
            MethodSummary {
                method: method.name().to_string(),
                runs: runs.len(),
                failed: runs.len() - ok.len(),
                median_final_acc: median(&finals),
                median_epochs_to_target: median(&speeds).filter(|m| m.is_finite()),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig3Report {
    /// Ordered by seed, then method.
    pub records: Vec<RunRecord>,
    pub summary: Vec<MethodSummary>,
    pub target_accuracy: f64,
}

impl Fig3Report {
    pub fn summary_for(&self, method: Method) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method.name())
    }

    /// Trainable parameter count per method, as observed during training.
    pub fn budgets(&self) -> BTreeMap<Method, usize> {
        self.records.iter().map(|r| (r.method, r.trainable)).collect()
    }
}

/// Trains the given methods on every seed. Runs execute in parallel; the
/// output order is fixed.
pub fn run_methods(seeds: &[u64], methods: &[Method], config: &ExperimentConfig) -> Result<Fig3Report> {
    if seeds.is_empty() {
        return Err(MacpError::InvalidConfig("at least one seed is required".into()));
    }
    let fixtures: Vec<(Dataset, ToyModel)> = seeds.par_iter().map(|&s| config.fixture(s)).collect::<Result<_>>()?;
    let tasks: Vec<(usize, Method)> = (0..seeds.len())
        .flat_map(|i| methods.iter().map(move |&m| (i, m)))
        .collect();
    let records = tasks
        .par_iter()
        .map(|&(i, method)| {
            let (data, model) = &fixtures[i];
            train(
                model,
                &config.method_config(method),
                &config.train_config(seeds[i]),
                data,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&records, config.target_accuracy);
    Ok(Fig3Report {
        records,
        summary,
        target_accuracy: config.target_accuracy,
    })
}

/// The three-way comparison: hierarchical adapter, rank-r low-rank and
/// unstructured random-spectral adapters on identical fixtures.
pub fn run_fig3(seeds: &[u64], config: &ExperimentConfig) -> Result<Fig3Report> {
    run_methods(seeds, &Method::ALL, config)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub scheme: PartitionScheme,
    pub seed: u64,
    pub final_acc: Option<f64>,
    pub budgets: Vec<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeSummary {
    pub scheme: PartitionScheme,
    pub median_final_acc: Option<f64>,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub n: usize,
    pub rows: Vec<AblationRow>,
    pub summary: Vec<SchemeSummary>,
    /// Whether the three-band median is at least the low-only median, when
    /// both were run.
    pub three_band_at_least_low_only: Option<bool>,
    pub note: String,
}

pub const ABLATION_NOTE: &str =
    "scheme comparison at fixed budget on the synthetic 8-class task, standing in for the original large-model benchmarks";

/// Per-scheme medians derived from ablation rows.
pub fn summarize_ablation(rows: &[AblationRow], schemes: &[PartitionScheme]) -> Vec<SchemeSummary> {
    schemes
        .iter()
        .map(|&scheme| {
            let mine: Vec<&AblationRow> = rows.iter().filter(|r| r.scheme == scheme).collect();
            let accs: Vec<f64> = mine.iter().filter_map(|r| r.final_acc).collect();
            SchemeSummary {
                scheme,
                median_final_acc: median(&accs),
                failed: mine.len() - accs.len(),
            }
        })
        .collect()
}

/// Trains the hierarchical adapter at fixed `config.macp.n` under each scheme.
///
/// Capacity errors (a scheme whose permitted bands cannot hold `n`) are
/// recorded on the affected rows; any other error aborts the run.
pub fn run_partition_ablation(
    schemes: &[PartitionScheme],
    seeds: &[u64],
    config: &ExperimentConfig,
) -> Result<AblationTable> {
    if seeds.is_empty() || schemes.is_empty() {
        return Err(MacpError::InvalidConfig(
            "at least one scheme and one seed are required".into(),
        ));
    }
    let fixtures: Vec<(Dataset, ToyModel)> = seeds.par_iter().map(|&s| config.fixture(s)).collect::<Result<_>>()?;
    let tasks: Vec<(PartitionScheme, usize)> = schemes
        .iter()
        .flat_map(|&sc| (0..seeds.len()).map(move |i| (sc, i)))
        .collect();
    let rows = tasks
        .par_iter()
        .map(|&(scheme, i)| {
            let (data, model) = &fixtures[i];
            let hidden = model.hidden_base();
            let mask = build_partition(hidden.rows(), hidden.cols(), scheme)?;
            let method = MethodConfig::Macp(AdapterConfig { scheme, ..config.macp });
            let row = |final_acc, budgets, error| AblationRow {
                scheme,
                seed: seeds[i],
                final_acc,
                budgets,
                error,
            };
            match allocate_budgets(config.macp.n, &mask) {
                Err(e @ MacpError::Capacity { .. }) => Ok(row(None, Vec::new(), Some(e.to_string()))),
                Err(e) => Err(e),
                Ok(budgets) => {
                    let record = train(model, &method, &config.train_config(seeds[i]), data)?;
                    let acc = record.final_accuracy().filter(|_| record.succeeded());
                    let error = (!record.succeeded()).then(|| "training diverged".to_string());
                    Ok(row(acc, budgets, error))
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let summary = summarize_ablation(&rows, schemes);
    let median_of = |s: PartitionScheme| summary.iter().find(|x| x.scheme == s).and_then(|x| x.median_final_acc);
    let three_band_at_least_low_only = match (
        median_of(PartitionScheme::ThreeBand),
        median_of(PartitionScheme::LowOnly),
    ) {
        (Some(t), Some(l)) => Some(t >= l),
        _ => None,
    };
    Ok(AblationTable {
        n: config.macp.n,
        rows,
        summary,
        three_band_at_least_low_only,
        note: ABLATION_NOTE.to_string(),
    })
}
