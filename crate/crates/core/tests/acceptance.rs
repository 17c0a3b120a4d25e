//! Acceptance suite. Each test prints one `criterion N: PASS` line with the
//! measured numbers; run with `cargo test --test acceptance -- --nocapture`
//! to see them.
//!
//! The brute-force oracle in this file recomputes the whole selection round
//! (embeddings, uncertainty filter, source bridging, domain statistics,
//! distances, metric, per-cluster argmax) from scratch in straight-line
//! code. Only the clustering solver itself is shared with the library; its
//! soundness has its own criterion.

use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gala_core::clustering::kmeans;
use gala_core::data::{
    AggregationMode, Dataset, DistanceMode, EmbeddingSpace, LabeledPool, Matrix, ModelState,
    SelectionConfig, UNLABELED,
};
use gala_core::datagen::ScenarioConfig;
use gala_core::embedding::{embed_all, forward, gradient_embedding};
use gala_core::harness::{
    ablation_report, paired_wins, reports_to_jsonl, run_experiment, summarize, write_report_files,
    ExperimentSpec, RoundReport, ScenarioSource, Strategy,
};
use gala_core::math::derive_seed;
use gala_core::selection::{global_step, select_by_metric, select_round, RawCandidate};
use gala_core::trainer::TrainConfig;

// ---------------------------------------------------------------------------
// criterion 1: gradient embedding vs central finite differences
// ---------------------------------------------------------------------------

fn random_model(rng: &mut ChaCha8Rng, d: usize, hidden: usize, c: usize) -> ModelState {
    let mut model = ModelState::zeros(d, hidden, c);
    if let Some(h) = model.hidden_weights.as_mut() {
        for v in &mut h.data {
            *v = rng.gen_range(-0.7..0.7);
        }
    }
    if let Some(b) = model.hidden_bias.as_mut() {
        for v in b {
            *v = rng.gen_range(0.0..0.4); // keep most rectifier units active
        }
    }
    for v in &mut model.last_weights.data {
        *v = rng.gen_range(-0.5..0.5);
    }
    for v in &mut model.last_bias {
        *v = rng.gen_range(-0.2..0.2);
    }
    model
}

/// Input entries bounded away from zero so every gradient coordinate is
/// large enough for a relative-error comparison.
fn random_input(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d)
        .map(|_| {
            let mag = rng.gen_range(0.2..2.0);
            if rng.gen_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

fn cross_entropy_at(model: &ModelState, x: &[f64], class: usize) -> f64 {
    let (_, probs) = forward(model, x).unwrap();
    -probs[class].max(1e-300).ln()
}

#[test]
fn criterion_1_gradient_correctness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for trial in 0..200 {
        let d = rng.gen_range(2..8);
        let c = rng.gen_range(2..6);
        let hidden = if trial % 2 == 0 { 0 } else { rng.gen_range(2..6) };
        let model = random_model(&mut rng, d, hidden, c);
        let x = random_input(&mut rng, d);

        let (feature, probs) = forward(&model, &x).unwrap();
        // Hidden units that landed exactly at zero would sit on the
        // rectifier kink; the bias range above keeps that from happening,
        // but feature entries can still be rectified to zero, which is fine:
        // the last-layer gradient block only sees the feature value.
        let bundle = gradient_embedding(feature.clone(), probs).unwrap();

        let y_hat = bundle.pseudo_label;
        let mut m = model.clone();
        for i in 0..m.embed_dim() {
            if feature[i] == 0.0 {
                // Zero feature ⇒ zero gradient coordinate on both routes.
                assert_eq!(bundle.grad_embed[i], 0.0);
                continue;
            }
            let orig = m.last_weights.get(i, y_hat);
            m.last_weights.set(i, y_hat, orig + h);
            let up = cross_entropy_at(&m, &x, y_hat);
            m.last_weights.set(i, y_hat, orig - h);
            let down = cross_entropy_at(&m, &x, y_hat);
            m.last_weights.set(i, y_hat, orig);
            let fd = (up - down) / (2.0 * h);
            let expect = -fd; // stored embedding is the negative-CE gradient
            let rel = (bundle.grad_embed[i] - expect).abs() / expect.abs().max(1e-12);
            worst = worst.max(rel);
            assert!(
                rel < 1e-5,
                "trial {trial} dim {i}: analytic {} vs fd {} (rel {rel})",
                bundle.grad_embed[i],
                expect
            );
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!(
        "criterion 1: PASS - 200 model/sample pairs, worst relative error {:.2e}, {:?}",
        worst, elapsed
    );
}

// ---------------------------------------------------------------------------
// criterion 2: k-means soundness
// ---------------------------------------------------------------------------

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[test]
fn criterion_2_kmeans_soundness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC2);
    for trial in 0..100u64 {
        let n = rng.gen_range(10..=200);
        let b = rng.gen_range(1..=8.min(n));
        let dim = rng.gen_range(1..=6);
        // A mix of blobby and uniform inputs.
        let blobs = rng.gen_range(1..=4);
        let centers: Vec<Vec<f64>> = (0..blobs)
            .map(|_| (0..dim).map(|_| rng.gen_range(-8.0..8.0)).collect())
            .collect();
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let c = &centers[rng.gen_range(0..blobs)];
                (0..dim).map(|j| c[j] + rng.gen_range(-1.5..1.5)).collect()
            })
            .collect();

        let model = kmeans(&points, b, derive_seed(0xC2, trial), 500, 0.0).unwrap();

        assert!(
            model.objective_history.len() < 500,
            "trial {trial}: did not converge"
        );
        for w in model.objective_history.windows(2) {
            assert!(
                w[1] <= w[0] * (1.0 + 1e-12) + 1e-12,
                "trial {trial}: objective increased {:?}",
                w
            );
        }
        // At convergence no single-point reassignment (centroids fixed, the
        // objective's own definition) lowers the objective.
        for (i, p) in points.iter().enumerate() {
            let assigned = sq_dist(p, &model.centroids[model.assignments[i]]);
            for c in &model.centroids {
                assert!(
                    sq_dist(p, c) >= assigned - 1e-12,
                    "trial {trial}: point {i} has a better cluster"
                );
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!(
        "criterion 2: PASS - 100 instances, objective monotone, locally optimal, {:?}",
        elapsed
    );
}

// ---------------------------------------------------------------------------
// criterion 3: end-to-end oracle equivalence
// ---------------------------------------------------------------------------

/// Straight-line reimplementation of one selection round. Shares only the
/// clustering solver with the library.
fn oracle_select_round(
    pool: &LabeledPool,
    model: &ModelState,
    ds: &Dataset,
    cfg: &SelectionConfig,
    round: usize,
) -> Vec<usize> {
    let d_in = ds.feature_dim();
    let c = ds.n_classes;
    let forward_naive = |x: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let feature: Vec<f64> = match (&model.hidden_weights, &model.hidden_bias) {
            (Some(wh), Some(bh)) => (0..wh.cols)
                .map(|j| {
                    let mut s = bh[j];
                    for i in 0..d_in {
                        s += x[i] * wh.get(i, j);
                    }
                    if s > 0.0 {
                        s
                    } else {
                        0.0
                    }
                })
                .collect(),
            _ => x.to_vec(),
        };
        let mut logits = vec![0.0; c];
        for k in 0..c {
            let mut s = model.last_bias[k];
            for i in 0..feature.len() {
                s += feature[i] * model.last_weights.get(i, k);
            }
            logits[k] = s;
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
        let z: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= z;
        }
        (feature, probs)
    };

    struct Row {
        feature: Vec<f64>,
        grad: Vec<f64>,
        uncertainty: f64,
    }
    let embed = |x: &[f64]| -> Row {
        let (feature, probs) = forward_naive(x);
        let mut y_hat = 0;
        for k in 1..c {
            if probs[k] > probs[y_hat] {
                y_hat = k;
            }
        }
        let scale = 1.0 - probs[y_hat];
        let grad: Vec<f64> = feature.iter().map(|&m| m * scale).collect();
        let uncertainty = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        Row {
            feature,
            grad,
            uncertainty,
        }
    };

    let ids = &pool.remaining_ids;
    let rows: Vec<Row> = ids.iter().map(|&i| embed(ds.features.row(i))).collect();
    let pick = |row: &Row, space: EmbeddingSpace| -> Vec<f64> {
        match space {
            EmbeddingSpace::Gradient => row.grad.clone(),
            EmbeddingSpace::Feature => row.feature.clone(),
        }
    };

    // Global step: shared clustering solver, oracle-side uncertainty filter.
    let points: Vec<Vec<f64>> = rows.iter().map(|r| pick(r, cfg.global_embedding)).collect();
    let b = cfg.budget_per_round;
    let cluster_model = kmeans(
        &points,
        b,
        derive_seed(cfg.rng_seed, round as u64),
        cfg.kmeans_max_iters,
        cfg.kmeans_tol,
    )
    .unwrap();

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); b];
    for (i, &a) in cluster_model.assignments.iter().enumerate() {
        members[a].push(i);
    }
    let mut candidates: Vec<Vec<usize>> = Vec::new();
    for m in &members {
        let mut ranked = m.clone();
        // selection sort by (uncertainty desc, index asc)
        for i in 0..ranked.len() {
            let mut best = i;
            for j in (i + 1)..ranked.len() {
                let better = rows[ranked[j]].uncertainty > rows[ranked[best]].uncertainty
                    || (rows[ranked[j]].uncertainty == rows[ranked[best]].uncertainty
                        && ranked[j] < ranked[best]);
                if better {
                    best = j;
                }
            }
            ranked.swap(i, best);
        }
        let raw = cfg.alpha_percent / 100.0 * m.len() as f64;
        let mut keep = (raw - 1e-9).ceil() as usize;
        if keep < 1 {
            keep = 1;
        }
        if keep > m.len() {
            keep = m.len();
        }
        let mut kept = ranked[..keep].to_vec();
        kept.sort_unstable();
        candidates.push(kept);
    }

    // Bridge centroids in the local space: mean of each cluster's members.
    let dim_local = pick(&rows[0], cfg.local_embedding).len();
    let mut bridge = vec![vec![0.0; dim_local]; b];
    for (cluster, m) in members.iter().enumerate() {
        for &i in m {
            let v = pick(&rows[i], cfg.local_embedding);
            for j in 0..dim_local {
                bridge[cluster][j] += v[j];
            }
        }
        for v in &mut bridge[cluster] {
            *v /= m.len() as f64;
        }
    }

    // Source side: embed, assign to bridge centroids, group by (cluster, domain).
    let source_ids: Vec<usize> = (0..ds.n_samples()).filter(|&i| !ds.is_target(i)).collect();
    let k = ds.n_source_domains;
    let source_rows: Vec<Row> = source_ids.iter().map(|&i| embed(ds.features.row(i))).collect();
    let mut group_sum: Vec<Vec<f64>> = vec![vec![0.0; dim_local]; b * k];
    let mut group_count = vec![0usize; b * k];
    let mut global_sum: Vec<Vec<f64>> = vec![vec![0.0; dim_local]; k];
    let mut global_count = vec![0usize; k];
    for (s, &sid) in source_ids.iter().enumerate() {
        let v = pick(&source_rows[s], cfg.local_embedding);
        let mut best = 0;
        let mut best_d = sq_dist(&v, &bridge[0]);
        for (bi, centroid) in bridge.iter().enumerate().skip(1) {
            let dd = sq_dist(&v, centroid);
            if dd < best_d {
                best_d = dd;
                best = bi;
            }
        }
        let domain = ds.domains[sid];
        let slot = best * k + domain;
        group_count[slot] += 1;
        for j in 0..dim_local {
            group_sum[slot][j] += v[j];
        }
        global_count[domain] += 1;
        for j in 0..dim_local {
            global_sum[domain][j] += v[j];
        }
    }

    let scalar_stats = |v: &[f64]| -> (f64, f64) {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
        (m, var)
    };
    let distance = |cen: &[f64], tgt: &[f64]| -> f64 {
        let (mu_s, var_s) = scalar_stats(cen);
        let (mu_t, var_t) = scalar_stats(tgt);
        match cfg.distance_mode {
            DistanceMode::MeanOnly => (mu_s - mu_t).abs(),
            DistanceMode::Standardized => {
                (mu_s / (var_s + cfg.epsilon).sqrt() - mu_t / (var_t + cfg.epsilon).sqrt()).abs()
            }
            DistanceMode::Wasserstein => {
                let sd_s = var_s.sqrt();
                let sd_t = var_t.sqrt();
                (mu_s - mu_t) * (mu_s - mu_t) + (sd_s * sd_s + sd_t * sd_t - 2.0 * sd_s * sd_t)
            }
        }
    };

    // Distances and metric per candidate, then per-cluster argmax.
    let mut d_of: BTreeMap<usize, f64> = BTreeMap::new();
    for (cluster, cand) in candidates.iter().enumerate() {
        let cluster_has_sources = (0..k).any(|dom| group_count[cluster * k + dom] > 0);
        for &i in cand {
            let tgt = pick(&rows[i], cfg.local_embedding);
            let mut per_domain = Vec::new();
            for dom in 0..k {
                let (count, sum) = if cluster_has_sources {
                    (group_count[cluster * k + dom], &group_sum[cluster * k + dom])
                } else {
                    (global_count[dom], &global_sum[dom])
                };
                if count == 0 {
                    continue;
                }
                let mean: Vec<f64> = sum.iter().map(|v| v / count as f64).collect();
                per_domain.push(distance(&mean, &tgt));
            }
            let agg = match cfg.aggregation_mode {
                AggregationMode::Minimum => per_domain.iter().cloned().fold(f64::INFINITY, f64::min),
                AggregationMode::Average => {
                    per_domain.iter().sum::<f64>() / per_domain.len() as f64
                }
            };
            d_of.insert(i, agg);
        }
    }
    let max_d = d_of.values().cloned().fold(0.0f64, f64::max);
    let mut selected = Vec::new();
    for cand in &candidates {
        let mut best: Option<(usize, f64)> = None;
        for &i in cand {
            let norm = if max_d > 0.0 { d_of[&i] / max_d } else { 1.0 };
            let v = rows[i].uncertainty * norm;
            let better = match best {
                None => true,
                Some((bi, bv)) => v > bv || (v == bv && ids[i] < ids[bi]),
            };
            if better {
                best = Some((i, v));
            }
        }
        selected.push(ids[best.unwrap().0]);
    }
    selected
}

fn random_instance(seed: u64) -> (Dataset, ModelState, LabeledPool, SelectionConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(1..=3);
    let c = rng.gen_range(2..=5);
    let d = rng.gen_range(2..=6);
    let b = rng.gen_range(1..=5);
    let n_t = rng.gen_range((b.max(3))..=50);
    let n_src = rng.gen_range(k..=40);

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut domains = Vec::new();
    for i in 0..n_src {
        rows.push((0..d).map(|_| rng.gen_range(-3.0..3.0)).collect::<Vec<f64>>());
        labels.push((i % c) as i64);
        domains.push(i % k);
    }
    for _ in 0..n_t {
        rows.push((0..d).map(|_| rng.gen_range(-3.0..3.0)).collect::<Vec<f64>>());
        labels.push(UNLABELED);
        domains.push(k);
    }
    let ds = Dataset {
        features: Matrix::from_rows(&rows),
        labels,
        domains,
        n_classes: c,
        n_source_domains: k,
    };
    let hidden = if rng.gen_bool(0.5) { 0 } else { rng.gen_range(2..5) };
    let model = random_model(&mut rng, d, hidden, c);
    let pool = LabeledPool::new(&ds);
    let cfg = SelectionConfig {
        budget_per_round: b,
        rounds: 1,
        alpha_percent: *[20.0, 37.5, 60.0, 100.0].get(rng.gen_range(0..4)).unwrap(),
        distance_mode: [
            DistanceMode::Standardized,
            DistanceMode::MeanOnly,
            DistanceMode::Wasserstein,
        ][rng.gen_range(0..3)],
        aggregation_mode: [AggregationMode::Minimum, AggregationMode::Average]
            [rng.gen_range(0..2)],
        global_embedding: [EmbeddingSpace::Gradient, EmbeddingSpace::Feature]
            [rng.gen_range(0..2)],
        local_embedding: [EmbeddingSpace::Gradient, EmbeddingSpace::Feature]
            [rng.gen_range(0..2)],
        rng_seed: rng.gen(),
        ..SelectionConfig::default()
    };
    (ds, model, pool, cfg)
}

#[test]
fn criterion_3_oracle_equivalence() {
    let start = Instant::now();
    for trial in 0..50u64 {
        let (ds, model, pool, cfg) = random_instance(derive_seed(0xC3, trial));
        let round = (trial % 3 + 1) as usize;
        let got = select_round(&pool, &model, &ds, &cfg, round).unwrap();
        let expect = oracle_select_round(&pool, &model, &ds, &cfg, round);
        assert_eq!(
            got.selected_ids, expect,
            "trial {trial}: implementation and oracle disagree (cfg {cfg:?})"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!(
        "criterion 3: PASS - 50 random instances match the brute-force oracle exactly, {:?}",
        elapsed
    );
}

// ---------------------------------------------------------------------------
// criterion 4: invariance suite
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_invariance_suite() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC4);

    // (a) distance scaling and (b) uncertainty scaling cancel.
    for trial in 0..100 {
        let n_clusters = rng.gen_range(1..5usize);
        let mut raw = Vec::new();
        for cluster in 0..n_clusters {
            for _ in 0..rng.gen_range(1..7usize) {
                raw.push(RawCandidate {
                    sample_id: raw.len() * 3,
                    cluster,
                    uncertainty: rng.gen_range(0.01..10.0),
                    domain_distance: rng.gen_range(0.01..10.0),
                });
            }
        }
        let lambda = 10f64.powf(rng.gen_range(-3.0..3.0));
        let (base, _) = select_by_metric(&raw, n_clusters);

        let scaled_d: Vec<RawCandidate> = raw
            .iter()
            .map(|c| RawCandidate {
                domain_distance: c.domain_distance * lambda,
                ..c.clone()
            })
            .collect();
        let (with_d, _) = select_by_metric(&scaled_d, n_clusters);
        assert_eq!(base, with_d, "trial {trial}: distance scaling changed selection");

        let scaled_u: Vec<RawCandidate> = raw
            .iter()
            .map(|c| RawCandidate {
                uncertainty: c.uncertainty * lambda,
                ..c.clone()
            })
            .collect();
        let (with_u, _) = select_by_metric(&scaled_u, n_clusters);
        assert_eq!(base, with_u, "trial {trial}: uncertainty scaling changed selection");
    }

    // (c) α-nesting of candidate sets.
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(0xC4C, trial));
        let n = rng.gen_range(6..30);
        let bundles: Vec<_> = (0..n)
            .map(|_| {
                let feature: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let p: f64 = rng.gen_range(0.34..0.99);
                gradient_embedding(feature, vec![p, (1.0 - p) / 2.0, (1.0 - p) / 2.0]).unwrap()
            })
            .collect();
        let a1 = rng.gen_range(1.0..100.0);
        let a2 = rng.gen_range(a1..=100.0);
        let cfg1 = SelectionConfig {
            budget_per_round: rng.gen_range(1..4).min(n),
            alpha_percent: a1,
            rng_seed: trial,
            ..SelectionConfig::default()
        };
        let cfg2 = SelectionConfig {
            alpha_percent: a2,
            ..cfg1.clone()
        };
        let (_, small) = global_step(&bundles, &cfg1).unwrap();
        let (_, large) = global_step(&bundles, &cfg2).unwrap();
        for (s, l) in small.iter().zip(&large) {
            for idx in s {
                assert!(
                    l.contains(idx),
                    "trial {trial}:candidate sets not nested for α {a1} ≤ {a2}"
                );
            }
        }
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!(
        "criterion 4: PASS - scaling invariances and α-nesting hold over 100 trials each, {:?}",
        elapsed
    );
}

// ---------------------------------------------------------------------------
// criterion 5: budget and pool accounting
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_budget_pool_accounting() {
    let scenario = ScenarioConfig {
        rng_seed: 9,
        ..ScenarioConfig::default()
    };
    let (ds, _key) = gala_core::datagen::generate(&scenario).unwrap();
    let target_ids = ds.target_ids();
    assert_eq!(target_ids.len(), 2000);

    let model = gala_core::trainer::init_model(ds.feature_dim(), 0, ds.n_classes, 7);
    let cfg = SelectionConfig {
        budget_per_round: 10,
        rounds: 5,
        rng_seed: 11,
        ..SelectionConfig::default()
    };
    let mut pool = LabeledPool::new(&ds);
    for round in 1..=5 {
        let res = select_round(&pool, &model, &ds, &cfg, round).unwrap();
        assert_eq!(res.selected_ids.len(), 10);
        pool.apply_selection(&res.selected_ids);
        assert!(pool.is_partition_of(&target_ids), "round {round}: pool not a partition");
        assert_eq!(pool.selected_ids.len(), round * 10);
    }
    assert_eq!(pool.selected_ids.len(), 50);
    let mut uniq = pool.selected_ids.clone();
    uniq.sort_unstable();
    uniq.dedup();
    assert_eq!(uniq.len(), 50, "selected ids must be distinct");
    assert_eq!(pool.remaining_ids.len(), 2000 - 50);
    println!(
        "criterion 5: PASS - R=5 × B=10 on n_t=2000 yields |selected| = 50 with partition invariants"
    );
}

// ---------------------------------------------------------------------------
// criterion 6: desk-scale efficacy (and criterion 8's shared config)
// ---------------------------------------------------------------------------

fn efficacy_spec() -> ExperimentSpec {
    // 1% of the 2000 target samples: R = 5 rounds × B = 4.
    ExperimentSpec {
        scenario: ScenarioSource::Synthetic(ScenarioConfig::default()),
        selection: SelectionConfig {
            budget_per_round: 4,
            rounds: 5,
            ..SelectionConfig::default()
        },
        training: TrainConfig {
            epochs: 25,
            active_epochs: vec![10, 13, 16, 19, 22],
            ..TrainConfig::default()
        },
        strategies: vec![
            Strategy::Gala,
            Strategy::Random,
            Strategy::NoBudget,
            Strategy::FullTarget,
        ],
        seeds: (1..=20).collect(),
        diagnostics: false,
    }
}

static EFFICACY_RUN: OnceLock<Vec<RoundReport>> = OnceLock::new();

fn efficacy_reports() -> &'static [RoundReport] {
    EFFICACY_RUN.get_or_init(|| run_experiment(&efficacy_spec()).unwrap())
}

#[test]
fn criterion_6_desk_scale_efficacy() {
    let start = Instant::now();
    let reports = efficacy_reports();
    let elapsed = start.elapsed();

    let summary = summarize(reports);
    let mean_of = |s: Strategy| {
        summary
            .iter()
            .find(|x| x.strategy == s)
            .unwrap()
            .mean_final_accuracy
    };
    let gala = mean_of(Strategy::Gala);
    let random = mean_of(Strategy::Random);
    let none = mean_of(Strategy::NoBudget);
    let full = mean_of(Strategy::FullTarget);

    let (wins, ties, losses) = paired_wins(reports, Strategy::Gala, Strategy::Random);
    assert!(gala >= random, "mean accuracy: gala {gala:.4} < random {random:.4}");
    assert!(
        wins >= 13,
        "gala won only {wins}/20 paired seeds (ties {ties}, losses {losses})"
    );

    let recovery = (gala - none) / (full - none);
    assert!(
        recovery >= 0.5,
        "gap recovery {recovery:.3} below 0.5 (gala {gala:.4}, none {none:.4}, full {full:.4})"
    );

    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:?}");
    println!(
        "criterion 6: PASS - gala {:.4} vs random {:.4} ({} wins/20), gap recovery {:.3} (none {:.4}, full {:.4}), {:?}",
        gala, random, wins, recovery, none, full, elapsed
    );
}

// ---------------------------------------------------------------------------
// criterion 7: ablation direction diagnostics (recorded, non-gating)
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_ablation_diagnostics() {
    // The efficacy scenario with fewer seeds so the full three-way sweep
    // stays quick; the directions are recorded, only table completeness is
    // gated.
    let spec = ExperimentSpec {
        seeds: (1..=5).collect(),
        ..efficacy_spec()
    };
    let report = ablation_report(&spec, &[20.0, 40.0, 60.0, 80.0, 100.0]).unwrap();

    assert_eq!(report.alpha_rows.len(), 5);
    assert_eq!(
        report.alpha_rows.iter().map(|r| r.setting.as_str()).collect::<Vec<_>>(),
        vec!["20", "40", "60", "80", "100"]
    );
    assert_eq!(report.distance_rows.len(), 3);
    assert_eq!(report.aggregation_rows.len(), 2);
    for row in report
        .alpha_rows
        .iter()
        .chain(&report.distance_rows)
        .chain(&report.aggregation_rows)
    {
        assert!(
            row.mean_accuracy.is_finite() && (0.0..=1.0).contains(&row.mean_accuracy),
            "incomplete table row {row:?}"
        );
    }

    let verdict = |b: bool| if b { "holds" } else { "does not hold" };
    println!(
        "criterion 7: PASS - tables complete; orderings on this scenario: α=60 best {}; standardized ≥ mean-only {}; minimum ≥ average {}",
        verdict(report.flags.alpha_60_best.unwrap()),
        verdict(report.flags.standardized_ge_mean_only),
        verdict(report.flags.minimum_ge_average),
    );
}

// ---------------------------------------------------------------------------
// criterion 8: byte-identical serial reruns of criterion 6's config
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_determinism() {
    let spec = efficacy_spec();
    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let run_a = serial.install(|| run_experiment(&spec).unwrap());
    let run_b = serial.install(|| run_experiment(&spec).unwrap());

    let dir_a = std::env::temp_dir().join("gala_acceptance_det_a");
    let dir_b = std::env::temp_dir().join("gala_acceptance_det_b");
    let (jsonl_a, csv_a) = write_report_files(&run_a, &dir_a).unwrap();
    let (jsonl_b, csv_b) = write_report_files(&run_b, &dir_b).unwrap();
    let bytes_jsonl_a = std::fs::read(&jsonl_a).unwrap();
    let bytes_jsonl_b = std::fs::read(&jsonl_b).unwrap();
    let bytes_csv_a = std::fs::read(&csv_a).unwrap();
    let bytes_csv_b = std::fs::read(&csv_b).unwrap();
    assert_eq!(bytes_jsonl_a, bytes_jsonl_b, "reports.jsonl differs between serial runs");
    assert_eq!(bytes_csv_a, bytes_csv_b, "summary.csv differs between serial runs");

    // The parallel run of criterion 6 produces the same bytes too.
    let parallel_bytes = reports_to_jsonl(efficacy_reports());
    assert_eq!(parallel_bytes.as_bytes(), bytes_jsonl_a.as_slice());

    println!(
        "criterion 8: PASS - two serial executions produced byte-identical report files ({} bytes)",
        bytes_jsonl_a.len()
    );
}

// ---------------------------------------------------------------------------
// sanity anchor: the library's batch embedding agrees with its single-sample
// composition
// ---------------------------------------------------------------------------

#[test]
fn oracle_embeddings_match_library() {
    let (ds, model, pool, _) = random_instance(0xE0);
    let bundles = embed_all(&model, &ds, &pool.remaining_ids).unwrap();
    for (i, &id) in pool.remaining_ids.iter().enumerate() {
        let (feature, probs) = forward(&model, ds.features.row(id)).unwrap();
        let b = gradient_embedding(feature, probs).unwrap();
        assert_eq!(bundles[i], b);
    }
}
