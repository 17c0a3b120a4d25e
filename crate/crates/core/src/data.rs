//! Shared data model: datasets, model parameters, selection configuration,
//! and the labeled/unlabeled pool bookkeeping.
//!
//! All types are immutable values after construction; mutation happens by
//! building new values, so they are safe to share across workers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label sentinel for rows whose class is unknown. Matches the `-1` used in
/// the feature CSV format.
pub const UNLABELED: i64 = -1;

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }
}

/// The universe of samples for one experiment: features plus per-row class
/// label, domain id, and the domain layout.
///
/// Domain ids are dense integers `0..=n_source_domains`; ids below
/// `n_source_domains` are source domains, the id equal to it is the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// n × d feature matrix.
    pub features: Matrix,
    /// Per-row class index in `[0, n_classes)` or [`UNLABELED`].
    pub labels: Vec<i64>,
    /// Per-row domain id in `[0, n_source_domains]`.
    pub domains: Vec<usize>,
    pub n_classes: usize,
    pub n_source_domains: usize,
}

impl Dataset {
    pub fn n_samples(&self) -> usize {
        self.features.rows
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols
    }

    /// Domain id reserved for the target domain.
    pub fn target_domain(&self) -> usize {
        self.n_source_domains
    }

    pub fn is_target(&self, row: usize) -> bool {
        self.domains[row] == self.target_domain()
    }

    /// Row ids of target-domain samples, ascending.
    pub fn target_ids(&self) -> Vec<usize> {
        (0..self.n_samples()).filter(|&i| self.is_target(i)).collect()
    }

    /// Row ids of source-domain samples, ascending.
    pub fn source_ids(&self) -> Vec<usize> {
        (0..self.n_samples()).filter(|&i| !self.is_target(i)).collect()
    }

    /// Copy of this dataset with labels installed for the given rows.
    pub fn with_labels(&self, rows: &[usize], labels: &[i64]) -> Dataset {
        assert_eq!(rows.len(), labels.len());
        let mut out = self.clone();
        for (&r, &l) in rows.iter().zip(labels) {
            out.labels[r] = l;
        }
        out
    }
}

/// Check every dataset invariant: shapes line up, source rows are labeled
/// with in-range classes, all features finite, and the domain/class counts
/// are sane.
pub fn validate_dataset(ds: &Dataset) -> Result<()> {
    let n = ds.features.rows;
    if ds.labels.len() != n || ds.domains.len() != n {
        return Err(Error::BadShape(format!(
            "{} rows but {} labels, {} domains",
            n,
            ds.labels.len(),
            ds.domains.len()
        )));
    }
    if ds.n_source_domains < 1 {
        return Err(Error::BadShape("need at least one source domain".into()));
    }
    if ds.n_classes < 2 {
        return Err(Error::BadShape("need at least two classes".into()));
    }
    if ds.features.cols < 1 {
        return Err(Error::BadShape("need at least one feature column".into()));
    }
    for (i, &v) in ds.features.data.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!(
                "feature ({}, {})",
                i / ds.features.cols,
                i % ds.features.cols
            )));
        }
    }
    for row in 0..n {
        if ds.domains[row] > ds.n_source_domains {
            return Err(Error::BadShape(format!(
                "row {} has domain {} > {}",
                row, ds.domains[row], ds.n_source_domains
            )));
        }
        let label = ds.labels[row];
        if ds.domains[row] < ds.n_source_domains {
            if label == UNLABELED {
                return Err(Error::InvalidLabel {
                    row,
                    detail: "source row is unlabeled".into(),
                });
            }
            if label < 0 || label as usize >= ds.n_classes {
                return Err(Error::InvalidLabel {
                    row,
                    detail: format!("label {} outside [0, {})", label, ds.n_classes),
                });
            }
        } else if label != UNLABELED && (label < 0 || label as usize >= ds.n_classes) {
            return Err(Error::InvalidLabel {
                row,
                detail: format!("target label {} outside [0, {})", label, ds.n_classes),
            });
        }
    }
    Ok(())
}

/// Hidden-layer nonlinearity tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
}

/// Parameters of the desk-scale classifier: an optional single hidden layer
/// followed by the last linear layer whose weights carry the gradient
/// embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    /// Optional hidden layer: d × h weights plus h biases.
    pub hidden_weights: Option<Matrix>,
    pub hidden_bias: Option<Vec<f64>>,
    pub activation: Activation,
    /// Last layer: (h or d) × C weights.
    pub last_weights: Matrix,
    /// C biases.
    pub last_bias: Vec<f64>,
}

impl ModelState {
    /// Zero-initialized model. `hidden_dim == 0` means no hidden layer.
    pub fn zeros(feature_dim: usize, hidden_dim: usize, n_classes: usize) -> Self {
        if hidden_dim == 0 {
            ModelState {
                hidden_weights: None,
                hidden_bias: None,
                activation: Activation::Relu,
                last_weights: Matrix::zeros(feature_dim, n_classes),
                last_bias: vec![0.0; n_classes],
            }
        } else {
            ModelState {
                hidden_weights: Some(Matrix::zeros(feature_dim, hidden_dim)),
                hidden_bias: Some(vec![0.0; hidden_dim]),
                activation: Activation::Relu,
                last_weights: Matrix::zeros(hidden_dim, n_classes),
                last_bias: vec![0.0; n_classes],
            }
        }
    }

    /// Width the last layer expects (hidden width, or input width when there
    /// is no hidden layer).
    pub fn embed_dim(&self) -> usize {
        self.last_weights.rows
    }

    /// Input width.
    pub fn input_dim(&self) -> usize {
        match &self.hidden_weights {
            Some(h) => h.rows,
            None => self.last_weights.rows,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.last_weights.cols
    }

    pub fn all_finite(&self) -> bool {
        let hidden_ok = self
            .hidden_weights
            .as_ref()
            .map_or(true, |m| m.data.iter().all(|v| v.is_finite()))
            && self
                .hidden_bias
                .as_ref()
                .map_or(true, |b| b.iter().all(|v| v.is_finite()));
        hidden_ok
            && self.last_weights.data.iter().all(|v| v.is_finite())
            && self.last_bias.iter().all(|v| v.is_finite())
    }
}

/// Which embedding space a pipeline stage works in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSpace {
    Gradient,
    Feature,
}

/// How the per-domain distance vector collapses to one scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    Minimum,
    Average,
}

/// Which centroid/target distance formula the local step uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    Standardized,
    MeanOnly,
    Wasserstein,
}

/// Every knob of the selection algorithm, including the ablation switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// B: samples selected per round.
    pub budget_per_round: usize,
    /// R: number of selection rounds.
    pub rounds: usize,
    /// α ∈ (0, 100]: per-cluster fraction of high-uncertainty survivors.
    pub alpha_percent: f64,
    /// Variance guard for the standardized distance.
    pub epsilon: f64,
    pub distance_mode: DistanceMode,
    pub aggregation_mode: AggregationMode,
    pub global_embedding: EmbeddingSpace,
    pub local_embedding: EmbeddingSpace,
    pub kmeans_max_iters: usize,
    /// Relative objective-decrease stopping threshold.
    pub kmeans_tol: f64,
    pub rng_seed: u64,
}

impl Default for SelectionConfig {
    /// The best configuration found by the ablations: α = 60, standardized
    /// distance, minimum aggregation, gradient space for the global step and
    /// feature space for the local step.
    fn default() -> Self {
        SelectionConfig {
            budget_per_round: 10,
            rounds: 5,
            alpha_percent: 60.0,
            epsilon: 1e-5,
            distance_mode: DistanceMode::Standardized,
            aggregation_mode: AggregationMode::Minimum,
            global_embedding: EmbeddingSpace::Gradient,
            local_embedding: EmbeddingSpace::Feature,
            kmeans_max_iters: 100,
            kmeans_tol: 1e-6,
            rng_seed: 0,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self, n_targets: usize) -> Result<()> {
        if self.budget_per_round == 0 || self.rounds == 0 {
            return Err(Error::BadConfig("budget_per_round and rounds must be positive".into()));
        }
        if !(self.alpha_percent > 0.0 && self.alpha_percent <= 100.0) {
            return Err(Error::BadConfig(format!(
                "alpha_percent {} outside (0, 100]",
                self.alpha_percent
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::BadConfig("epsilon must be positive".into()));
        }
        if self.kmeans_max_iters == 0 {
            return Err(Error::BadConfig("kmeans_max_iters must be positive".into()));
        }
        if self.kmeans_tol < 0.0 {
            return Err(Error::BadConfig("kmeans_tol must be nonnegative".into()));
        }
        let total = self.rounds * self.budget_per_round;
        if total > n_targets {
            return Err(Error::InsufficientBudgetableSamples {
                budget: total,
                available: n_targets,
            });
        }
        Ok(())
    }

    /// Total annotation budget N = R × B.
    pub fn total_budget(&self) -> usize {
        self.rounds * self.budget_per_round
    }
}

/// Which target samples have been annotated so far, and which remain.
/// `selected_ids` preserves annotation order; `remaining_ids` stays sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPool {
    pub selected_ids: Vec<usize>,
    pub remaining_ids: Vec<usize>,
}

impl LabeledPool {
    /// Fresh pool with every target id unlabeled.
    pub fn new(ds: &Dataset) -> Self {
        LabeledPool {
            selected_ids: Vec::new(),
            remaining_ids: ds.target_ids(),
        }
    }

    /// Move the given ids from remaining to selected. Panics if an id is not
    /// remaining; selections always come from the remaining pool.
    pub fn apply_selection(&mut self, ids: &[usize]) {
        for &id in ids {
            let pos = self
                .remaining_ids
                .binary_search(&id)
                .expect("selected id must be in remaining pool");
            self.remaining_ids.remove(pos);
            self.selected_ids.push(id);
        }
    }

    /// True when selected and remaining partition exactly the given id set.
    pub fn is_partition_of(&self, all_ids: &[usize]) -> bool {
        let mut union: Vec<usize> = self
            .selected_ids
            .iter()
            .chain(self.remaining_ids.iter())
            .copied()
            .collect();
        union.sort_unstable();
        let mut expected = all_ids.to_vec();
        expected.sort_unstable();
        let disjoint = self
            .selected_ids
            .iter()
            .all(|id| self.remaining_ids.binary_search(id).is_err());
        union == expected && disjoint
    }
}
