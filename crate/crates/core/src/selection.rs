//! Sample selection: the global clustering step with its uncertainty filter,
//! the local per-cluster scoring step that trades uncertainty against domain
//! gap, the composed per-round pipeline, and the baseline strategies used in
//! comparisons.

use serde::{Deserialize, Serialize};

use crate::clustering::{assign_to_clusters, kmeans, kmeanspp_distinct_indices, ClusterModel};
use crate::data::{
    AggregationMode, Dataset, DistanceMode, EmbeddingSpace, LabeledPool, ModelState,
    SelectionConfig,
};
use crate::embedding::{embed_all, prediction_entropy, prediction_margin, EmbeddingBundle};
use crate::error::{Error, Result};
use crate::math::{derive_seed, mean, population_variance};

/// Mean local-space vector of one source domain's members inside one cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainCentroid {
    pub cluster: usize,
    pub domain: usize,
    pub mean_vec: Vec<f64>,
    pub count: usize,
}

/// Scoring record for one surviving candidate of one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub sample_id: usize,
    pub cluster: usize,
    pub uncertainty: f64,
    /// Aggregated (unnormalized) domain distance d.
    pub domain_distance: f64,
    /// uncertainty × d / max d over the round's candidates.
    pub v: f64,
}

/// Outcome of one selection round: exactly one id per cluster plus the full
/// candidate scoring table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub round: usize,
    pub selected_ids: Vec<usize>,
    pub scores: Vec<CandidateScore>,
}

/// Number of α-percent survivors for a cluster of the given size: ceiling,
/// never below one. The small bias guards against float crumbs pushing an
/// exact multiple over the next integer (20% of 5 must keep 1, not 2).
fn alpha_keep(alpha_percent: f64, cluster_size: usize) -> usize {
    let raw = alpha_percent / 100.0 * cluster_size as f64;
    ((raw - 1e-9).ceil() as usize).clamp(1, cluster_size)
}

/// Global step: cluster the configured embedding of every bundle into
/// `budget_per_round` clusters, then keep the top α% most uncertain samples
/// of each cluster (at least one). Returned candidate lists hold indices
/// into `bundles`, ascending.
pub fn global_step(
    bundles: &[EmbeddingBundle],
    cfg: &SelectionConfig,
) -> Result<(ClusterModel, Vec<Vec<usize>>)> {
    let b = cfg.budget_per_round;
    if bundles.len() < b {
        return Err(Error::TooFewTargets {
            need: b,
            have: bundles.len(),
        });
    }
    let points: Vec<Vec<f64>> = bundles
        .iter()
        .map(|bu| bu.vector(cfg.global_embedding).to_vec())
        .collect();
    let model = kmeans(&points, b, cfg.rng_seed, cfg.kmeans_max_iters, cfg.kmeans_tol)?;

    let mut candidates = Vec::with_capacity(b);
    for members in model.members() {
        let mut ranked = members.clone();
        // Total order (uncertainty desc, index asc) makes top-k sets nest as
        // α grows.
        ranked.sort_by(|&x, &y| {
            bundles[y]
                .uncertainty
                .partial_cmp(&bundles[x].uncertainty)
                .unwrap()
                .then(x.cmp(&y))
        });
        let keep = alpha_keep(cfg.alpha_percent, ranked.len());
        let mut kept: Vec<usize> = ranked[..keep].to_vec();
        kept.sort_unstable();
        candidates.push(kept);
    }
    Ok((model, candidates))
}

/// Group source vectors by (cluster, domain) and average each non-empty
/// group. Groups without members produce no centroid. Output sorted by
/// (cluster, domain).
pub fn domain_statistics(
    vectors: &[Vec<f64>],
    domains: &[usize],
    assignments: &[usize],
    n_clusters: usize,
    n_domains: usize,
) -> Vec<DomainCentroid> {
    assert_eq!(vectors.len(), domains.len());
    assert_eq!(vectors.len(), assignments.len());
    if vectors.is_empty() {
        return Vec::new();
    }
    let dim = vectors[0].len();
    let mut sums = vec![vec![0.0; dim]; n_clusters * n_domains];
    let mut counts = vec![0usize; n_clusters * n_domains];
    for i in 0..vectors.len() {
        let slot = assignments[i] * n_domains + domains[i];
        counts[slot] += 1;
        for j in 0..dim {
            sums[slot][j] += vectors[i][j];
        }
    }
    let mut out = Vec::new();
    for cluster in 0..n_clusters {
        for domain in 0..n_domains {
            let slot = cluster * n_domains + domain;
            if counts[slot] == 0 {
                continue;
            }
            let mut mean_vec = std::mem::take(&mut sums[slot]);
            for v in &mut mean_vec {
                *v /= counts[slot] as f64;
            }
            out.push(DomainCentroid {
                cluster,
                domain,
                mean_vec,
                count: counts[slot],
            });
        }
    }
    out
}

/// Distance between one source-domain centroid and one target vector, using
/// the scalar mean μ and population standard deviation σ of each vector's
/// entries. ε guards the zero-variance case of the standardized form.
pub fn pair_distance(
    centroid_vec: &[f64],
    target_vec: &[f64],
    mode: DistanceMode,
    epsilon: f64,
) -> Result<f64> {
    if centroid_vec.len() != target_vec.len() || centroid_vec.is_empty() {
        return Err(Error::DimMismatch {
            left: centroid_vec.len(),
            right: target_vec.len(),
        });
    }
    let mu_s = mean(centroid_vec);
    let mu_t = mean(target_vec);
    Ok(match mode {
        DistanceMode::MeanOnly => (mu_s - mu_t).abs(),
        DistanceMode::Standardized => {
            let var_s = population_variance(centroid_vec);
            let var_t = population_variance(target_vec);
            (mu_s / (var_s + epsilon).sqrt() - mu_t / (var_t + epsilon).sqrt()).abs()
        }
        DistanceMode::Wasserstein => {
            let sd_s = population_variance(centroid_vec).sqrt();
            let sd_t = population_variance(target_vec).sqrt();
            (mu_s - mu_t).powi(2) + (sd_s * sd_s + sd_t * sd_t - 2.0 * sd_s * sd_t)
        }
    })
}

/// Collapse per-domain distances to the domain gap scalar.
pub fn aggregate_distance(per_domain: &[f64], mode: AggregationMode) -> Result<f64> {
    if per_domain.is_empty() {
        return Err(Error::EmptyList);
    }
    Ok(match mode {
        AggregationMode::Minimum => per_domain.iter().copied().fold(f64::INFINITY, f64::min),
        AggregationMode::Average => mean(per_domain),
    })
}

/// One candidate's raw inputs to the final metric.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCandidate {
    pub sample_id: usize,
    pub cluster: usize,
    pub uncertainty: f64,
    pub domain_distance: f64,
}

/// Final metric and per-cluster argmax over already-scored candidates:
/// normalize each distance by the round-wide maximum, multiply by the
/// uncertainty, and take the highest-v candidate of every cluster (lowest
/// sample id on ties). Exposed separately so invariance can be checked with
/// injected distances.
pub fn select_by_metric(
    raw: &[RawCandidate],
    n_clusters: usize,
) -> (Vec<usize>, Vec<CandidateScore>) {
    let max_d = raw
        .iter()
        .map(|c| c.domain_distance)
        .fold(0.0f64, f64::max);
    let scores: Vec<CandidateScore> = raw
        .iter()
        .map(|c| {
            // All distances zero means no usable gap signal; treat every
            // normalized distance as 1 so selection falls back to pure
            // uncertainty.
            let normalized = if max_d > 0.0 {
                c.domain_distance / max_d
            } else {
                1.0
            };
            CandidateScore {
                sample_id: c.sample_id,
                cluster: c.cluster,
                uncertainty: c.uncertainty,
                domain_distance: c.domain_distance,
                v: c.uncertainty * normalized,
            }
        })
        .collect();
    let mut best: Vec<Option<&CandidateScore>> = vec![None; n_clusters];
    for s in &scores {
        match best[s.cluster] {
            None => best[s.cluster] = Some(s),
            Some(cur) => {
                if s.v > cur.v || (s.v == cur.v && s.sample_id < cur.sample_id) {
                    best[s.cluster] = Some(s);
                }
            }
        }
    }
    let selected = best
        .iter()
        .map(|b| b.expect("every cluster has a candidate").sample_id)
        .collect();
    (selected, scores)
}

/// Local step: score every surviving candidate against the source-domain
/// centroids of its cluster and pick one per cluster.
///
/// `candidates` holds bundle indices per cluster; `cluster_stats` the
/// per-(cluster, domain) centroids; `global_stats` the per-domain centroids
/// over all sources, used when a cluster captured no source samples at all.
#[allow(clippy::too_many_arguments)]
pub fn local_step(
    ids: &[usize],
    bundles: &[EmbeddingBundle],
    candidates: &[Vec<usize>],
    cluster_stats: &[DomainCentroid],
    global_stats: &[DomainCentroid],
    cfg: &SelectionConfig,
    round: usize,
) -> Result<SelectionResult> {
    if global_stats.is_empty() && cluster_stats.is_empty() {
        return Err(Error::NoSourceStats);
    }
    let n_clusters = candidates.len();
    let mut raw = Vec::new();
    for (cluster, members) in candidates.iter().enumerate() {
        let stats: Vec<&DomainCentroid> = {
            let own: Vec<&DomainCentroid> =
                cluster_stats.iter().filter(|s| s.cluster == cluster).collect();
            if own.is_empty() {
                global_stats.iter().collect()
            } else {
                own
            }
        };
        if stats.is_empty() {
            return Err(Error::NoSourceStats);
        }
        for &idx in members {
            let bundle = &bundles[idx];
            let target_vec = bundle.vector(cfg.local_embedding);
            let mut per_domain = Vec::with_capacity(stats.len());
            for s in &stats {
                per_domain.push(pair_distance(
                    &s.mean_vec,
                    target_vec,
                    cfg.distance_mode,
                    cfg.epsilon,
                )?);
            }
            let domain_distance = aggregate_distance(&per_domain, cfg.aggregation_mode)?;
            raw.push(RawCandidate {
                sample_id: ids[idx],
                cluster,
                uncertainty: bundle.uncertainty,
                domain_distance,
            });
        }
    }
    let (selected_ids, scores) = select_by_metric(&raw, n_clusters);
    Ok(SelectionResult {
        round,
        selected_ids,
        scores,
    })
}

/// Mean local-space vector of each cluster's target members. These bridge the
/// clustering space to the local space: source samples are assigned to the
/// cluster whose local-space centroid is nearest.
pub fn local_space_centroids(
    bundles: &[EmbeddingBundle],
    cluster_model: &ClusterModel,
    space: EmbeddingSpace,
) -> Vec<Vec<f64>> {
    let dim = bundles[0].vector(space).len();
    let mut sums = vec![vec![0.0; dim]; cluster_model.n_clusters()];
    let mut counts = vec![0usize; cluster_model.n_clusters()];
    for (i, &b) in cluster_model.assignments.iter().enumerate() {
        counts[b] += 1;
        let v = bundles[i].vector(space);
        for j in 0..dim {
            sums[b][j] += v[j];
        }
    }
    for b in 0..sums.len() {
        if counts[b] > 0 {
            for v in &mut sums[b] {
                *v /= counts[b] as f64;
            }
        }
    }
    sums
}

/// Round body over already-computed embeddings: global step on the target
/// bundles, bridge the source bundles into the clusters through local-space
/// centroids, compute domain statistics, run the local step. Deterministic
/// given the config seed and round number.
#[allow(clippy::too_many_arguments)]
pub fn select_round_with_bundles(
    target_ids: &[usize],
    target_bundles: &[EmbeddingBundle],
    source_bundles: &[EmbeddingBundle],
    source_domains: &[usize],
    n_source_domains: usize,
    cfg: &SelectionConfig,
    round: usize,
) -> Result<SelectionResult> {
    if target_bundles.len() < cfg.budget_per_round {
        return Err(Error::TooFewTargets {
            need: cfg.budget_per_round,
            have: target_bundles.len(),
        });
    }
    let mut round_cfg = cfg.clone();
    round_cfg.rng_seed = derive_seed(cfg.rng_seed, round as u64);
    let (cluster_model, candidates) = global_step(target_bundles, &round_cfg)?;

    let source_vecs: Vec<Vec<f64>> = source_bundles
        .iter()
        .map(|b| b.vector(cfg.local_embedding).to_vec())
        .collect();

    let bridge = local_space_centroids(target_bundles, &cluster_model, cfg.local_embedding);
    let source_assignments = assign_to_clusters(&source_vecs, &bridge)?;

    let k = n_source_domains;
    let b = cfg.budget_per_round;
    let cluster_stats = domain_statistics(&source_vecs, source_domains, &source_assignments, b, k);
    let global_stats = domain_statistics(
        &source_vecs,
        source_domains,
        &vec![0; source_vecs.len()],
        1,
        k,
    );

    local_step(
        target_ids,
        target_bundles,
        &candidates,
        &cluster_stats,
        &global_stats,
        cfg,
        round,
    )
}

/// One full selection round: embed the remaining targets and the sources,
/// then run the round body. The caller applies the result to the pool.
pub fn select_round(
    pool: &LabeledPool,
    model: &ModelState,
    ds: &Dataset,
    cfg: &SelectionConfig,
    round: usize,
) -> Result<SelectionResult> {
    if pool.remaining_ids.len() < cfg.budget_per_round {
        return Err(Error::TooFewTargets {
            need: cfg.budget_per_round,
            have: pool.remaining_ids.len(),
        });
    }
    let ids = &pool.remaining_ids;
    let bundles = embed_all(model, ds, ids)?;
    let source_ids = ds.source_ids();
    let source_bundles = embed_all(model, ds, &source_ids)?;
    let source_domains: Vec<usize> = source_ids.iter().map(|&i| ds.domains[i]).collect();
    select_round_with_bundles(
        ids,
        &bundles,
        &source_bundles,
        &source_domains,
        ds.n_source_domains,
        cfg,
        round,
    )
}

/// Baseline strategies for comparison tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineStrategy {
    Random,
    Entropy,
    Margin,
    Badge,
}

/// Select `budget` ids from the remaining pool with a non-clustering
/// strategy: seeded uniform draw, entropy or margin ranking, or k-means++
/// seeding over the gradient embeddings. Ranked strategies return ids in
/// rank order.
pub fn baseline_select(
    strategy: BaselineStrategy,
    pool: &LabeledPool,
    model: &ModelState,
    ds: &Dataset,
    budget: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let remaining = &pool.remaining_ids;
    if remaining.len() < budget {
        return Err(Error::TooFewTargets {
            need: budget,
            have: remaining.len(),
        });
    }
    use rand::{Rng, SeedableRng};
    match strategy {
        BaselineStrategy::Random => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut ids = remaining.clone();
            for i in 0..budget {
                let j = rng.gen_range(i..ids.len());
                ids.swap(i, j);
            }
            ids.truncate(budget);
            Ok(ids)
        }
        BaselineStrategy::Entropy | BaselineStrategy::Margin => {
            let bundles = embed_all(model, ds, remaining)?;
            let mut order: Vec<usize> = (0..remaining.len()).collect();
            match strategy {
                BaselineStrategy::Entropy => {
                    let scores: Vec<f64> =
                        bundles.iter().map(|b| prediction_entropy(&b.probs)).collect();
                    order.sort_by(|&x, &y| {
                        scores[y].partial_cmp(&scores[x]).unwrap().then(x.cmp(&y))
                    });
                }
                _ => {
                    let scores: Vec<f64> =
                        bundles.iter().map(|b| prediction_margin(&b.probs)).collect();
                    order.sort_by(|&x, &y| {
                        scores[x].partial_cmp(&scores[y]).unwrap().then(x.cmp(&y))
                    });
                }
            }
            Ok(order[..budget].iter().map(|&i| remaining[i]).collect())
        }
        BaselineStrategy::Badge => {
            let bundles = embed_all(model, ds, remaining)?;
            let points: Vec<Vec<f64>> =
                bundles.iter().map(|b| b.grad_embed.clone()).collect();
            let picks = kmeanspp_distinct_indices(&points, budget, seed)?;
            Ok(picks.iter().map(|&i| remaining[i]).collect())
        }
    }
}
