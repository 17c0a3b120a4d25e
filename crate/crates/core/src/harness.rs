//! End-to-end experiment orchestration: train to the first active epoch,
//! alternate selection / annotation / continued training over the active
//! rounds, finish training, and report per-round accuracy. Also hosts the
//! ablation sweeps and the proxy domain-discrepancy diagnostic.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    AggregationMode, Dataset, DistanceMode, LabeledPool, ModelState, SelectionConfig,
};
use crate::datagen::{generate, AnswerKey, ScenarioConfig};
use crate::embedding::forward;
use crate::error::{Error, Result};
use crate::io::{atomic_write, read_answer_key_csv, read_features_csv};
use crate::math::derive_seed;
use crate::selection::{baseline_select, select_round, BaselineStrategy};
use crate::trainer::{evaluate, init_model, train_epochs, TrainConfig};

/// Seed-stream tags so data, init, training, selection, and the probe never
/// share random draws.
const TAG_DATA: u64 = 1;
const TAG_INIT: u64 = 2;
const TAG_TRAIN: u64 = 3;
const TAG_SELECT: u64 = 4;
const TAG_PROXY: u64 = 5;
const TAG_JOINT: u64 = 6;

/// Where an experiment's data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScenarioSource {
    Synthetic(ScenarioConfig),
    External {
        features: PathBuf,
        answers: Option<PathBuf>,
    },
}

/// Selection rule under comparison. `NoBudget` trains without annotations
/// and `FullTarget` trains with every target label: the lower and upper
/// anchors of the budget axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Gala,
    Random,
    Entropy,
    Margin,
    Badge,
    #[serde(rename = "none")]
    NoBudget,
    #[serde(rename = "full")]
    FullTarget,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Gala,
        Strategy::Random,
        Strategy::Entropy,
        Strategy::Margin,
        Strategy::Badge,
        Strategy::NoBudget,
        Strategy::FullTarget,
    ];

    pub fn selects(&self) -> bool {
        !matches!(self, Strategy::NoBudget | Strategy::FullTarget)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Strategy::Gala => "gala",
            Strategy::Random => "random",
            Strategy::Entropy => "entropy",
            Strategy::Margin => "margin",
            Strategy::Badge => "badge",
            Strategy::NoBudget => "none",
            Strategy::FullTarget => "full",
        };
        f.write_str(name)
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "gala" => Strategy::Gala,
            "random" => Strategy::Random,
            "entropy" => Strategy::Entropy,
            "margin" => Strategy::Margin,
            "badge" => Strategy::Badge,
            "none" => Strategy::NoBudget,
            "full" => Strategy::FullTarget,
            other => return Err(Error::BadConfig(format!("unknown strategy `{}`", other))),
        })
    }
}

/// Full description of one experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scenario: ScenarioSource,
    pub selection: SelectionConfig,
    pub training: TrainConfig,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    /// Compute the proxy domain discrepancy and the joint-hypothesis
    /// accuracy stand-in on final reports.
    pub diagnostics: bool,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::BadConfig("need at least one strategy".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::BadConfig("need at least one seed".into()));
        }
        self.training.validate(self.selection.rounds)?;
        Ok(())
    }
}

/// One report row: either a numbered selection round or the final state of a
/// run. The final row of a selecting strategy is its last round; zero-budget
/// and fully-labeled runs emit a single final row with round 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub schema: u32,
    pub strategy: Strategy,
    pub seed: u64,
    pub round: usize,
    pub selected_ids: Vec<usize>,
    /// Accuracy per domain id, target last.
    pub per_domain_accuracy: Vec<f64>,
    pub target_accuracy: f64,
    /// Annotated fraction of the target pool after this round.
    pub budget_fraction: f64,
    pub is_final: bool,
    pub proxy_a_distance: Option<f64>,
    pub joint_accuracy: Option<f64>,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Materialized data for one seed: the dataset, the target answer key, and
/// the number of target rows.
struct SeedData {
    ds: Dataset,
    key: AnswerKey,
    n_targets: usize,
}

fn load_data(scenario: &ScenarioSource, seed: u64) -> Result<SeedData> {
    match scenario {
        ScenarioSource::Synthetic(cfg) => {
            let mut cfg = cfg.clone();
            cfg.rng_seed = derive_seed(seed, TAG_DATA);
            let (ds, key) = generate(&cfg)?;
            let n_targets = key.len();
            Ok(SeedData { ds, key, n_targets })
        }
        ScenarioSource::External { features, answers } => {
            let (ds, ids) = read_features_csv(features, None)?;
            crate::data::validate_dataset(&ds)?;
            let mut key = AnswerKey::new();
            if let Some(path) = answers {
                let by_ext = read_answer_key_csv(path)?;
                for (row, ext) in ids.iter().enumerate() {
                    if let Some(&label) = by_ext.get(ext) {
                        if label >= ds.n_classes {
                            return Err(Error::Schema(format!(
                                "answer label {} outside [0, {})",
                                label, ds.n_classes
                            )));
                        }
                        key.insert(row, label);
                    }
                }
            }
            let n_targets = ds.target_ids().len();
            Ok(SeedData { ds, key, n_targets })
        }
    }
}

/// Install the answer-key labels for the given rows.
fn annotate(ds: &Dataset, ids: &[usize], key: &AnswerKey) -> Result<Dataset> {
    let mut labels = Vec::with_capacity(ids.len());
    for &id in ids {
        match key.get(&id) {
            Some(&label) => labels.push(label as i64),
            None => {
                return Err(Error::BadConfig(format!(
                    "no annotation available for sample {}",
                    id
                )))
            }
        }
    }
    Ok(ds.with_labels(ids, &labels))
}

fn accuracies(ds: &Dataset, key: &AnswerKey, model: &ModelState) -> Result<(Vec<f64>, f64)> {
    let mut per_domain = Vec::with_capacity(ds.n_source_domains + 1);
    for domain in 0..=ds.n_source_domains {
        per_domain.push(evaluate(model, ds, domain, Some(key))?);
    }
    let target = per_domain[ds.n_source_domains];
    Ok((per_domain, target))
}

/// Run a single (strategy, seed) cell. Internally serial and fully
/// deterministic: all strategies under the same seed share the data, the
/// initial model, and the training schedule.
fn run_cell(spec: &ExperimentSpec, strategy: Strategy, seed: u64, data: &SeedData) -> Result<Vec<RoundReport>> {
    let ds = &data.ds;
    let key = &data.key;
    spec.selection.validate(data.n_targets)?;

    let mut sel_cfg = spec.selection.clone();
    sel_cfg.rng_seed = derive_seed(seed, TAG_SELECT);
    let mut train_cfg = spec.training.clone();
    train_cfg.rng_seed = derive_seed(seed, TAG_TRAIN);

    let hidden = train_cfg.hidden_dim;
    let mut model = init_model(ds.feature_dim(), hidden, ds.n_classes, derive_seed(seed, TAG_INIT));

    let mut working = ds.clone();
    let mut pool = LabeledPool::new(ds);
    if strategy == Strategy::FullTarget {
        let targets = ds.target_ids();
        working = annotate(&working, &targets, key)?;
        pool.apply_selection(&targets);
    }

    // Segment boundaries: [0, a_1), [a_1, a_2), …, [a_R, E). Every strategy
    // trains the same segments so momentum restarts line up across cells.
    let mut boundaries = vec![0usize];
    boundaries.extend_from_slice(&train_cfg.active_epochs);
    boundaries.push(train_cfg.epochs);

    let rounds = spec.selection.rounds;
    let budget = spec.selection.budget_per_round;
    let mut reports = Vec::new();

    let out = train_epochs(&model, &working, &pool, &train_cfg, boundaries[0], boundaries[1])?;
    model = out.model;

    for round in 1..=rounds {
        if strategy.selects() {
            let ids = match strategy {
                Strategy::Gala => {
                    select_round(&pool, &model, &working, &sel_cfg, round)?.selected_ids
                }
                Strategy::Random | Strategy::Entropy | Strategy::Margin | Strategy::Badge => {
                    let base = match strategy {
                        Strategy::Random => BaselineStrategy::Random,
                        Strategy::Entropy => BaselineStrategy::Entropy,
                        Strategy::Margin => BaselineStrategy::Margin,
                        _ => BaselineStrategy::Badge,
                    };
                    baseline_select(
                        base,
                        &pool,
                        &model,
                        &working,
                        budget,
                        derive_seed(sel_cfg.rng_seed, round as u64),
                    )?
                }
                _ => unreachable!(),
            };
            working = annotate(&working, &ids, key)?;
            pool.apply_selection(&ids);

            let out = train_epochs(
                &model,
                &working,
                &pool,
                &train_cfg,
                boundaries[round],
                boundaries[round + 1],
            )?;
            model = out.model;

            let (per_domain, target) = accuracies(ds, key, &model)?;
            reports.push(RoundReport {
                schema: REPORT_SCHEMA_VERSION,
                strategy,
                seed,
                round,
                selected_ids: ids,
                per_domain_accuracy: per_domain,
                target_accuracy: target,
                budget_fraction: (round * budget) as f64 / data.n_targets as f64,
                is_final: round == rounds,
                proxy_a_distance: None,
                joint_accuracy: None,
            });
        } else {
            let out = train_epochs(
                &model,
                &working,
                &pool,
                &train_cfg,
                boundaries[round],
                boundaries[round + 1],
            )?;
            model = out.model;
        }
    }

    if !strategy.selects() {
        let (per_domain, target) = accuracies(ds, key, &model)?;
        reports.push(RoundReport {
            schema: REPORT_SCHEMA_VERSION,
            strategy,
            seed,
            round: 0,
            selected_ids: Vec::new(),
            per_domain_accuracy: per_domain,
            target_accuracy: target,
            budget_fraction: if strategy == Strategy::FullTarget { 1.0 } else { 0.0 },
            is_final: true,
            proxy_a_distance: None,
            joint_accuracy: None,
        });
    }

    if spec.diagnostics {
        if let Some(last) = reports.last_mut() {
            if last.is_final {
                last.proxy_a_distance =
                    Some(proxy_domain_discrepancy(ds, &model, derive_seed(seed, TAG_PROXY))?);
                last.joint_accuracy =
                    Some(joint_hypothesis_accuracy(ds, key, &pool, &train_cfg, seed)?);
            }
        }
    }

    Ok(reports)
}

/// Run the whole grid. Cells run independently (parallelizable); reports come
/// back ordered by (strategy position, seed position, round), so output is
/// identical regardless of worker count.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<RoundReport>> {
    spec.validate()?;
    let per_seed: Vec<SeedData> = spec
        .seeds
        .iter()
        .map(|&seed| load_data(&spec.scenario, seed))
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for (si, &strategy) in spec.strategies.iter().enumerate() {
        for (di, &seed) in spec.seeds.iter().enumerate() {
            cells.push((si, di, strategy, seed));
        }
    }
    let mut results: Vec<((usize, usize), Vec<RoundReport>)> = cells
        .par_iter()
        .map(|&(si, di, strategy, seed)| {
            run_cell(spec, strategy, seed, &per_seed[di]).map(|r| ((si, di), r))
        })
        .collect::<Result<_>>()?;
    results.sort_by_key(|(k, _)| *k);
    Ok(results.into_iter().flat_map(|(_, r)| r).collect())
}

/// λ stand-in: accuracy over all labelable rows of a fresh model trained on
/// the sources plus the currently annotated target rows.
fn joint_hypothesis_accuracy(
    ds: &Dataset,
    key: &AnswerKey,
    pool: &LabeledPool,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<f64> {
    let working = annotate(ds, &pool.selected_ids, key)?;
    let model = init_model(
        ds.feature_dim(),
        train_cfg.hidden_dim,
        ds.n_classes,
        derive_seed(seed, TAG_JOINT),
    );
    let out = train_epochs(&model, &working, pool, train_cfg, 0, train_cfg.epochs)?;
    let mut hits = 0usize;
    let mut total = 0usize;
    for row in 0..ds.n_samples() {
        let truth = if ds.labels[row] != crate::data::UNLABELED {
            ds.labels[row] as usize
        } else if let Some(&t) = key.get(&row) {
            t
        } else {
            continue;
        };
        let (_, probs) = forward(&out.model, ds.features.row(row))?;
        if crate::math::argmax(&probs) == truth {
            hits += 1;
        }
        total += 1;
    }
    if total == 0 {
        return Err(Error::EmptyDomain(ds.target_domain()));
    }
    Ok(hits as f64 / total as f64)
}

/// Proxy domain discrepancy: train a seeded logistic probe on the model's
/// features to tell source-union from target (classes balanced by seeded
/// subsampling, 50/50 train/test split) and return `2(1 − 2·err)` clamped to
/// [0, 2]. Near 0 when the domains are indistinguishable, near 2 when
/// disjoint.
pub fn proxy_domain_discrepancy(ds: &Dataset, model: &ModelState, seed: u64) -> Result<f64> {
    let source = ds.source_ids();
    let target = ds.target_ids();
    if source.is_empty() {
        return Err(Error::EmptyDomain(0));
    }
    if target.is_empty() {
        return Err(Error::EmptyDomain(ds.target_domain()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_side = source.len().min(target.len());
    let mut subsample = |ids: &[usize]| -> Vec<usize> {
        let mut v = ids.to_vec();
        for i in 0..per_side {
            let j = rng.gen_range(i..v.len());
            v.swap(i, j);
        }
        v.truncate(per_side);
        v
    };
    let src = subsample(&source);
    let tgt = subsample(&target);

    let mut rows: Vec<(usize, f64)> = src.iter().map(|&i| (i, 0.0)).collect();
    rows.extend(tgt.iter().map(|&i| (i, 1.0)));
    for i in (1..rows.len()).rev() {
        let j = rng.gen_range(0..=i);
        rows.swap(i, j);
    }
    let half = rows.len() / 2;
    let (train, test) = rows.split_at(half);

    let feats: BTreeMap<usize, Vec<f64>> = rows
        .iter()
        .map(|&(i, _)| Ok((i, forward(model, ds.features.row(i))?.0)))
        .collect::<Result<_>>()?;
    let dim = feats.values().next().expect("non-empty").len();

    // Standardize on the training half so the fixed step size behaves across
    // feature scales.
    let mut mean = vec![0.0; dim];
    for &(i, _) in train {
        for (j, v) in feats[&i].iter().enumerate() {
            mean[j] += v;
        }
    }
    for v in &mut mean {
        *v /= train.len() as f64;
    }
    let mut sd = vec![0.0; dim];
    for &(i, _) in train {
        for (j, v) in feats[&i].iter().enumerate() {
            sd[j] += (v - mean[j]) * (v - mean[j]);
        }
    }
    for v in &mut sd {
        *v = (*v / train.len() as f64).sqrt().max(1e-12);
    }
    let norm = |i: usize| -> Vec<f64> {
        feats[&i]
            .iter()
            .enumerate()
            .map(|(j, v)| (v - mean[j]) / sd[j])
            .collect()
    };

    // Full-batch logistic regression.
    let mut w = vec![0.0; dim + 1];
    let lr = 0.5;
    for _ in 0..300 {
        let mut grad = vec![0.0; dim + 1];
        for &(i, label) in train {
            let x = norm(i);
            let mut z = w[dim];
            for j in 0..dim {
                z += w[j] * x[j];
            }
            let p = 1.0 / (1.0 + (-z).exp());
            let g = p - label;
            for j in 0..dim {
                grad[j] += g * x[j];
            }
            grad[dim] += g;
        }
        for j in 0..=dim {
            w[j] -= lr * grad[j] / train.len() as f64;
        }
    }

    let mut errors = 0usize;
    for &(i, label) in test {
        let x = norm(i);
        let mut z = w[dim];
        for j in 0..dim {
            z += w[j] * x[j];
        }
        let predicted = if z > 0.0 { 1.0 } else { 0.0 };
        if predicted != label {
            errors += 1;
        }
    }
    let err = errors as f64 / test.len() as f64;
    Ok((2.0 * (1.0 - 2.0 * err)).clamp(0.0, 2.0))
}

/// One row of an ablation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub setting: String,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

fn final_stats(reports: &[RoundReport], strategy: Strategy) -> (f64, f64) {
    let finals: Vec<f64> = reports
        .iter()
        .filter(|r| r.strategy == strategy && r.is_final)
        .map(|r| r.target_accuracy)
        .collect();
    mean_std(&finals)
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() < 2 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    (m, var.sqrt())
}

/// One full experiment per α, gala only; rows sorted by α.
pub fn alpha_sweep(spec: &ExperimentSpec, alphas: &[f64]) -> Result<Vec<SweepRow>> {
    let mut alphas = alphas.to_vec();
    alphas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut rows = Vec::new();
    for alpha in alphas {
        if !(alpha > 0.0 && alpha <= 100.0) {
            return Err(Error::BadConfig(format!("alpha {} outside (0, 100]", alpha)));
        }
        let mut sub = spec.clone();
        sub.strategies = vec![Strategy::Gala];
        sub.selection.alpha_percent = alpha;
        sub.diagnostics = false;
        let reports = run_experiment(&sub)?;
        let (mean_accuracy, std_accuracy) = final_stats(&reports, Strategy::Gala);
        rows.push(SweepRow {
            setting: format!("{}", alpha),
            mean_accuracy,
            std_accuracy,
        });
    }
    Ok(rows)
}

/// One full experiment per distance mode, gala only.
pub fn distance_sweep(spec: &ExperimentSpec) -> Result<Vec<SweepRow>> {
    let modes = [
        (DistanceMode::Standardized, "standardized"),
        (DistanceMode::MeanOnly, "mean_only"),
        (DistanceMode::Wasserstein, "wasserstein"),
    ];
    let mut rows = Vec::new();
    for (mode, name) in modes {
        let mut sub = spec.clone();
        sub.strategies = vec![Strategy::Gala];
        sub.selection.distance_mode = mode;
        sub.diagnostics = false;
        let reports = run_experiment(&sub)?;
        let (mean_accuracy, std_accuracy) = final_stats(&reports, Strategy::Gala);
        rows.push(SweepRow {
            setting: name.to_string(),
            mean_accuracy,
            std_accuracy,
        });
    }
    Ok(rows)
}

/// One full experiment per aggregation mode, gala only.
pub fn aggregation_sweep(spec: &ExperimentSpec) -> Result<Vec<SweepRow>> {
    let modes = [
        (AggregationMode::Minimum, "minimum"),
        (AggregationMode::Average, "average"),
    ];
    let mut rows = Vec::new();
    for (mode, name) in modes {
        let mut sub = spec.clone();
        sub.strategies = vec![Strategy::Gala];
        sub.selection.aggregation_mode = mode;
        sub.diagnostics = false;
        let reports = run_experiment(&sub)?;
        let (mean_accuracy, std_accuracy) = final_stats(&reports, Strategy::Gala);
        rows.push(SweepRow {
            setting: name.to_string(),
            mean_accuracy,
            std_accuracy,
        });
    }
    Ok(rows)
}

/// Whether the reference orderings hold on this scenario: α = 60 best in its
/// sweep, standardized at least as good as mean-only, minimum at least as
/// good as average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationFlags {
    pub alpha_60_best: Option<bool>,
    pub standardized_ge_mean_only: bool,
    pub minimum_ge_average: bool,
}

/// Complete ablation comparison: α sweep, distance modes, aggregation modes,
/// plus the ordering flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub alpha_rows: Vec<SweepRow>,
    pub distance_rows: Vec<SweepRow>,
    pub aggregation_rows: Vec<SweepRow>,
    pub flags: AblationFlags,
}

pub fn ablation_report(spec: &ExperimentSpec, alphas: &[f64]) -> Result<AblationReport> {
    let alpha_rows = alpha_sweep(spec, alphas)?;
    let distance_rows = distance_sweep(spec)?;
    let aggregation_rows = aggregation_sweep(spec)?;

    let alpha_60_best = alpha_rows
        .iter()
        .find(|r| r.setting == "60")
        .map(|r60| alpha_rows.iter().all(|r| r.mean_accuracy <= r60.mean_accuracy));
    let acc = |rows: &[SweepRow], name: &str| {
        rows.iter()
            .find(|r| r.setting == name)
            .map(|r| r.mean_accuracy)
            .unwrap_or(f64::NAN)
    };
    let flags = AblationFlags {
        alpha_60_best,
        standardized_ge_mean_only: acc(&distance_rows, "standardized")
            >= acc(&distance_rows, "mean_only"),
        minimum_ge_average: acc(&aggregation_rows, "minimum") >= acc(&aggregation_rows, "average"),
    };
    Ok(AblationReport {
        alpha_rows,
        distance_rows,
        aggregation_rows,
        flags,
    })
}

/// JSON lines, one report per line.
pub fn reports_to_jsonl(reports: &[RoundReport]) -> String {
    let mut out = String::new();
    for r in reports {
        out.push_str(&serde_json::to_string(r).expect("report serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_reports_jsonl(text: &str) -> Result<Vec<RoundReport>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let r: RoundReport = serde_json::from_str(line)
            .map_err(|e| Error::Schema(format!("report line {}: {}", lineno + 1, e)))?;
        if r.schema != REPORT_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "report line {}: unknown schema {}",
                lineno + 1,
                r.schema
            )));
        }
        out.push(r);
    }
    Ok(out)
}

/// Plot-ready summary CSV: `strategy,seed,round,budget_fraction,target_accuracy`.
pub fn reports_to_summary_csv(reports: &[RoundReport]) -> String {
    let mut out = String::from("strategy,seed,round,budget_fraction,target_accuracy\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.strategy, r.seed, r.round, r.budget_fraction, r.target_accuracy
        ));
    }
    out
}

/// Write `reports.jsonl` and `summary.csv` under `out_dir`.
pub fn write_report_files(reports: &[RoundReport], out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let jsonl = out_dir.join("reports.jsonl");
    let csv = out_dir.join("summary.csv");
    atomic_write(&jsonl, reports_to_jsonl(reports).as_bytes())?;
    atomic_write(&csv, reports_to_summary_csv(reports).as_bytes())?;
    Ok((jsonl, csv))
}

/// Per-strategy mean ± std of final target accuracy, in first-appearance
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub runs: usize,
    pub mean_final_accuracy: f64,
    pub std_final_accuracy: f64,
}

pub fn summarize(reports: &[RoundReport]) -> Vec<StrategySummary> {
    let mut order: Vec<Strategy> = Vec::new();
    for r in reports {
        if r.is_final && !order.contains(&r.strategy) {
            order.push(r.strategy);
        }
    }
    order
        .into_iter()
        .map(|strategy| {
            let finals: Vec<f64> = reports
                .iter()
                .filter(|r| r.strategy == strategy && r.is_final)
                .map(|r| r.target_accuracy)
                .collect();
            let (mean, std) = mean_std(&finals);
            StrategySummary {
                strategy,
                runs: finals.len(),
                mean_final_accuracy: mean,
                std_final_accuracy: std,
            }
        })
        .collect()
}

/// Paired comparison of final accuracy per seed: (wins, ties, losses) of `a`
/// against `b` over the seeds both ran.
pub fn paired_wins(reports: &[RoundReport], a: Strategy, b: Strategy) -> (usize, usize, usize) {
    let finals = |s: Strategy| -> BTreeMap<u64, f64> {
        reports
            .iter()
            .filter(|r| r.strategy == s && r.is_final)
            .map(|r| (r.seed, r.target_accuracy))
            .collect()
    };
    let fa = finals(a);
    let fb = finals(b);
    let mut wins = 0;
    let mut ties = 0;
    let mut losses = 0;
    for (seed, acc_a) in &fa {
        if let Some(acc_b) = fb.get(seed) {
            if acc_a > acc_b {
                wins += 1;
            } else if acc_a == acc_b {
                ties += 1;
            } else {
                losses += 1;
            }
        }
    }
    (wins, ties, losses)
}
