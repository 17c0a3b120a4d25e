//! Desk-scale supervised training: mini-batch SGD with momentum over the
//! labeled source rows plus the annotated target rows, and accuracy
//! evaluation against dataset labels or a held-out answer key.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabeledPool, Matrix, ModelState, UNLABELED};
use crate::embedding::forward;
use crate::error::{Error, Result};
use crate::math::{argmax, derive_seed};

/// Training schedule and optimizer knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Total epochs E.
    pub epochs: usize,
    /// Epochs at which selection rounds fire; strictly increasing, all < E.
    pub active_epochs: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// 0 for a linear model, otherwise the hidden width.
    pub hidden_dim: usize,
    /// Weight on the mean cross-entropy of the annotated target rows.
    pub target_loss_weight: f64,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            active_epochs: vec![10, 12, 14, 16, 18],
            learning_rate: 0.05,
            momentum: 0.95,
            batch_size: 64,
            hidden_dim: 0,
            target_loss_weight: 1.0,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, rounds: usize) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::BadConfig("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::BadConfig("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::BadConfig("momentum must be in [0, 1)".into()));
        }
        if self.active_epochs.len() != rounds {
            return Err(Error::BadConfig(format!(
                "{} active epochs for {} rounds",
                self.active_epochs.len(),
                rounds
            )));
        }
        for w in self.active_epochs.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::BadConfig("active_epochs must be strictly increasing".into()));
            }
        }
        if let Some(&last) = self.active_epochs.last() {
            if last >= self.epochs {
                return Err(Error::BadConfig("active epochs must lie before the final epoch".into()));
            }
        }
        Ok(())
    }
}

/// Result of a training segment.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: ModelState,
    /// Weighted training loss accumulated over each epoch's pass.
    pub epoch_losses: Vec<f64>,
}

struct Gradients {
    hidden_w: Option<Matrix>,
    hidden_b: Option<Vec<f64>>,
    last_w: Matrix,
    last_b: Vec<f64>,
}

impl Gradients {
    fn zeros_like(model: &ModelState) -> Self {
        Gradients {
            hidden_w: model
                .hidden_weights
                .as_ref()
                .map(|m| Matrix::zeros(m.rows, m.cols)),
            hidden_b: model.hidden_bias.as_ref().map(|b| vec![0.0; b.len()]),
            last_w: Matrix::zeros(model.last_weights.rows, model.last_weights.cols),
            last_b: vec![0.0; model.last_bias.len()],
        }
    }
}

/// Cross-entropy loss and parameter gradients for one row with weight
/// `coeff`, accumulated into `grads`.
fn accumulate_row(
    model: &ModelState,
    x: &[f64],
    label: usize,
    coeff: f64,
    grads: &mut Gradients,
) -> Result<f64> {
    let (feature, probs) = forward(model, x)?;
    let loss = -(probs[label].max(1e-300)).ln();

    // d loss / d logits = p − onehot(label)
    let c = probs.len();
    let mut dlogits = probs;
    dlogits[label] -= 1.0;

    for k in 0..c {
        let g = coeff * dlogits[k];
        grads.last_b[k] += g;
        for i in 0..feature.len() {
            grads.last_w.data[i * c + k] += g * feature[i];
        }
    }

    if let (Some(wh), Some(gw), Some(gb)) = (
        &model.hidden_weights,
        grads.hidden_w.as_mut(),
        grads.hidden_b.as_mut(),
    ) {
        let h = feature.len();
        let mut dfeature = vec![0.0; h];
        for j in 0..h {
            if feature[j] > 0.0 {
                let mut s = 0.0;
                for k in 0..c {
                    s += model.last_weights.get(j, k) * dlogits[k];
                }
                dfeature[j] = s;
            }
        }
        for j in 0..h {
            let g = coeff * dfeature[j];
            if g == 0.0 {
                continue;
            }
            gb[j] += g;
            for i in 0..wh.rows {
                gw.data[i * wh.cols + j] += g * x[i];
            }
        }
    }
    Ok(coeff * loss)
}

fn apply_momentum_step(param: &mut [f64], velocity: &mut [f64], grad: &[f64], lr: f64, momentum: f64) {
    for i in 0..param.len() {
        velocity[i] = momentum * velocity[i] - lr * grad[i];
        param[i] += velocity[i];
    }
}

/// Rows that participate in training: every labeled source row with weight
/// `1/n_source`, every annotated target row with weight `w_t/n_selected`.
/// Zero-weight rows are excluded entirely, so a zero target weight
/// reproduces the source-only trajectory exactly.
fn training_rows(ds: &Dataset, pool: &LabeledPool, target_weight: f64) -> Result<Vec<(usize, f64)>> {
    let source: Vec<usize> = ds
        .source_ids()
        .into_iter()
        .filter(|&i| ds.labels[i] != UNLABELED)
        .collect();
    let mut selected: Vec<usize> = pool.selected_ids.clone();
    selected.sort_unstable();
    let mut rows = Vec::with_capacity(source.len() + selected.len());
    let n_src = source.len();
    for i in source {
        rows.push((i, 1.0 / n_src as f64));
    }
    if target_weight != 0.0 && !selected.is_empty() {
        let n_sel = selected.len();
        for i in selected {
            if ds.labels[i] == UNLABELED {
                return Err(Error::InvalidLabel {
                    row: i,
                    detail: "selected target row has no annotation".into(),
                });
            }
            rows.push((i, target_weight / n_sel as f64));
        }
    }
    if rows.is_empty() {
        return Err(Error::NoLabeledData);
    }
    Ok(rows)
}

/// Train from `from_epoch` (inclusive) to `to_epoch` (exclusive). The shuffle
/// for epoch `e` depends only on the config seed and `e`, so a run split into
/// segments at the active epochs follows the same schedule as an unsplit run.
pub fn train_epochs(
    model: &ModelState,
    ds: &Dataset,
    pool: &LabeledPool,
    cfg: &TrainConfig,
    from_epoch: usize,
    to_epoch: usize,
) -> Result<TrainOutcome> {
    let rows = training_rows(ds, pool, cfg.target_loss_weight)?;
    let n_total = rows.len();
    let mut model = model.clone();
    let mut epoch_losses = Vec::new();

    let mut vel = Gradients::zeros_like(&model);

    for epoch in from_epoch..to_epoch {
        let mut order: Vec<usize> = (0..n_total).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, epoch as u64));
        for i in (1..n_total).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }

        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = Gradients::zeros_like(&model);
            for &slot in batch {
                let (row, coeff) = rows[slot];
                epoch_loss +=
                    accumulate_row(&model, ds.features.row(row), ds.labels[row] as usize, coeff, &mut grads)?;
            }
            // The per-row coefficients already encode the source/target means;
            // rescale so a full pass matches the full-batch gradient.
            let scale = n_total as f64 / batch.len() as f64;
            let lr = cfg.learning_rate * scale;
            apply_momentum_step(
                &mut model.last_weights.data,
                &mut vel.last_w.data,
                &grads.last_w.data,
                lr,
                cfg.momentum,
            );
            apply_momentum_step(
                &mut model.last_bias,
                &mut vel.last_b,
                &grads.last_b,
                lr,
                cfg.momentum,
            );
            if let (Some(w), Some(vw), Some(gw)) = (
                model.hidden_weights.as_mut(),
                vel.hidden_w.as_mut(),
                grads.hidden_w.as_ref(),
            ) {
                apply_momentum_step(&mut w.data, &mut vw.data, &gw.data, lr, cfg.momentum);
            }
            if let (Some(b), Some(vb), Some(gb)) = (
                model.hidden_bias.as_mut(),
                vel.hidden_b.as_mut(),
                grads.hidden_b.as_ref(),
            ) {
                apply_momentum_step(b, vb, gb, lr, cfg.momentum);
            }
        }
        epoch_losses.push(epoch_loss);
    }
    if !model.all_finite() {
        return Err(Error::NonFinite("training diverged".into()));
    }
    Ok(TrainOutcome { model, epoch_losses })
}

/// Seeded random initialization: small uniform weights, zero biases.
pub fn init_model(feature_dim: usize, hidden_dim: usize, n_classes: usize, seed: u64) -> ModelState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = ModelState::zeros(feature_dim, hidden_dim, n_classes);
    let mut fill = |m: &mut Matrix| {
        let scale = (1.0 / m.rows as f64).sqrt();
        for v in &mut m.data {
            *v = rng.gen_range(-scale..scale);
        }
    };
    if let Some(h) = model.hidden_weights.as_mut() {
        fill(h);
    }
    fill(&mut model.last_weights);
    model
}

/// Fraction of rows of `domain` whose argmax prediction matches the ground
/// truth. Labels come from the dataset, falling back to `answer_key` (row id
/// → class) for rows the dataset leaves unlabeled.
pub fn evaluate(
    model: &ModelState,
    ds: &Dataset,
    domain: usize,
    answer_key: Option<&BTreeMap<usize, usize>>,
) -> Result<f64> {
    let mut total = 0usize;
    let mut hits = 0usize;
    for row in 0..ds.n_samples() {
        if ds.domains[row] != domain {
            continue;
        }
        let truth = if ds.labels[row] != UNLABELED {
            Some(ds.labels[row] as usize)
        } else {
            answer_key.and_then(|k| k.get(&row).copied())
        };
        let truth = match truth {
            Some(t) => t,
            None => continue,
        };
        let (_, probs) = forward(model, ds.features.row(row))?;
        if argmax(&probs) == truth {
            hits += 1;
        }
        total += 1;
    }
    if total == 0 {
        return Err(Error::EmptyDomain(domain));
    }
    Ok(hits as f64 / total as f64)
}

/// Training loss the optimizer minimizes, evaluated at fixed parameters:
/// mean source cross-entropy plus `target_loss_weight` × mean annotated
/// target cross-entropy.
pub fn training_loss(ds: &Dataset, pool: &LabeledPool, cfg: &TrainConfig, model: &ModelState) -> Result<f64> {
    let rows = training_rows(ds, pool, cfg.target_loss_weight)?;
    let mut loss = 0.0;
    for (row, coeff) in rows {
        let (_, probs) = forward(model, ds.features.row(row))?;
        loss += coeff * -(probs[ds.labels[row] as usize].max(1e-300)).ln();
    }
    Ok(loss)
}
