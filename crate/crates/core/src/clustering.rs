//! Seeded k-means over an embedding space: k-means++ initialization, Lloyd
//! iterations with empty-cluster repair, and nearest-centroid assignment of
//! arbitrary points.
//!
//! Determinism contract: every randomized or order-sensitive step works
//! through a canonical ordering of the input points (lexicographic by
//! coordinates), so permuting the input order changes nothing but the order
//! of the per-point assignment vector. Distances and means accumulate in
//! fixed index order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::sq_dist;

/// Output of the clustering step: centroids, per-input-point assignments,
/// and the final clustering objective (sum of squared distances to assigned
/// centroids) together with its per-iteration history.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub objective: f64,
    /// Objective after each Lloyd update step, non-increasing.
    pub objective_history: Vec<f64>,
}

impl ClusterModel {
    pub fn n_clusters(&self) -> usize {
        self.centroids.len()
    }

    /// Member indices per cluster, ascending within each cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.centroids.len()];
        for (i, &b) in self.assignments.iter().enumerate() {
            out[b].push(i);
        }
        out
    }
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let dim = points.first().map_or(0, Vec::len);
    if dim == 0 {
        return Err(Error::DegenerateDim("zero-dimensional points".into()));
    }
    for p in points {
        if p.len() != dim {
            return Err(Error::DegenerateDim(format!(
                "mixed dimensions {} and {}",
                dim,
                p.len()
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("clustering input".into()));
        }
    }
    Ok(dim)
}

/// Indices of `points` sorted lexicographically by coordinates. All inputs
/// are finite, so `partial_cmp` never fails.
fn canonical_order(points: &[Vec<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .partial_cmp(&points[b])
            .expect("finite coordinates compare totally")
    });
    order
}

/// k-means++ seeding: first center uniform, each further center drawn with
/// probability proportional to squared distance from the chosen set. All
/// draws index into the canonical order.
fn kmeanspp_centers(
    points: &[Vec<f64>],
    canon: &[usize],
    b: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let n = points.len();
    let mut centers = Vec::with_capacity(b);
    centers.push(canon[rng.gen_range(0..n)]);
    let mut best_sq: Vec<f64> = canon
        .iter()
        .map(|&i| sq_dist(&points[i], &points[centers[0]]))
        .collect();
    while centers.len() < b {
        let total: f64 = best_sq.iter().sum();
        let next = if total > 0.0 {
            let r = rng.gen::<f64>() * total;
            let mut cum = 0.0;
            let mut chosen = canon[n - 1];
            for (rank, &i) in canon.iter().enumerate() {
                cum += best_sq[rank];
                if cum > r {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // Every point coincides with a chosen center; fall back to a
            // uniform draw and let repair spread the duplicates.
            canon[rng.gen_range(0..n)]
        };
        centers.push(next);
        for (rank, &i) in canon.iter().enumerate() {
            let d = sq_dist(&points[i], &points[next]);
            if d < best_sq[rank] {
                best_sq[rank] = d;
            }
        }
    }
    centers
}

/// k-means++ seeding that returns `b` distinct point indices (pick order),
/// for strategies that use the seeding itself as the batch. When every
/// remaining point coincides with a chosen one, the first unchosen index in
/// canonical order is taken.
pub(crate) fn kmeanspp_distinct_indices(
    points: &[Vec<f64>],
    b: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if b == 0 || points.len() < b {
        return Err(Error::TooFewPoints {
            points: points.len(),
            clusters: b,
        });
    }
    check_points(points)?;
    let canon = canonical_order(points);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = points.len();
    let mut chosen = vec![false; n];
    let mut picks = Vec::with_capacity(b);
    let first = canon[rng.gen_range(0..n)];
    picks.push(first);
    chosen[first] = true;
    let mut best_sq: Vec<f64> = canon
        .iter()
        .map(|&i| sq_dist(&points[i], &points[first]))
        .collect();
    while picks.len() < b {
        let total: f64 = best_sq.iter().sum();
        let next = if total > 0.0 {
            let r = rng.gen::<f64>() * total;
            let mut cum = 0.0;
            let mut hit = None;
            for (rank, &i) in canon.iter().enumerate() {
                cum += best_sq[rank];
                if cum > r && !chosen[i] {
                    hit = Some(i);
                    break;
                }
            }
            // Rounding can push r past the last positive weight; fall back to
            // the last unchosen positive-weight index.
            hit.unwrap_or_else(|| {
                *canon
                    .iter()
                    .rev()
                    .find(|&&i| !chosen[i])
                    .expect("b <= points")
            })
        } else {
            *canon
                .iter()
                .find(|&&i| !chosen[i])
                .expect("b <= points")
        };
        picks.push(next);
        chosen[next] = true;
        for (rank, &i) in canon.iter().enumerate() {
            let d = sq_dist(&points[i], &points[next]);
            if d < best_sq[rank] {
                best_sq[rank] = d;
            }
        }
    }
    Ok(picks)
}

fn nearest_centroid(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = sq_dist(point, &centroids[0]);
    for (b, c) in centroids.iter().enumerate().skip(1) {
        let d = sq_dist(point, c);
        if d < best_d {
            best_d = d;
            best = b;
        }
    }
    best
}

/// Move points into empty clusters until all are populated: the donor is the
/// largest cluster (lowest index on ties) and the stolen point is the donor
/// member farthest from its centroid (first in canonical order on ties).
/// The empty cluster's centroid becomes the stolen point, so the objective
/// never increases.
fn repair_empty_clusters(
    points: &[Vec<f64>],
    canon: &[usize],
    centroids: &mut [Vec<f64>],
    assignments: &mut [usize],
    counts: &mut [usize],
) {
    loop {
        let empty = match counts.iter().position(|&c| c == 0) {
            Some(e) => e,
            None => return,
        };
        let mut donor = 0;
        for b in 1..counts.len() {
            if counts[b] > counts[donor] {
                donor = b;
            }
        }
        let mut steal: Option<(usize, f64)> = None;
        for &i in canon {
            if assignments[i] != donor {
                continue;
            }
            let d = sq_dist(&points[i], &centroids[donor]);
            match steal {
                Some((_, best)) if d <= best => {}
                _ => steal = Some((i, d)),
            }
        }
        let (stolen, _) = steal.expect("largest cluster has members");
        assignments[stolen] = empty;
        centroids[empty] = points[stolen].clone();
        counts[donor] -= 1;
        counts[empty] += 1;
    }
}

fn update_centroids(
    points: &[Vec<f64>],
    canon: &[usize],
    assignments: &[usize],
    b: usize,
    dim: usize,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut sums = vec![vec![0.0; dim]; b];
    let mut counts = vec![0usize; b];
    for &i in canon {
        let cluster = assignments[i];
        counts[cluster] += 1;
        let row = &points[i];
        let sum = &mut sums[cluster];
        for j in 0..dim {
            sum[j] += row[j];
        }
    }
    for cluster in 0..b {
        if counts[cluster] > 0 {
            let inv = counts[cluster] as f64;
            for v in &mut sums[cluster] {
                *v /= inv;
            }
        }
    }
    (sums, counts)
}

fn objective(points: &[Vec<f64>], canon: &[usize], assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    let mut j = 0.0;
    for &i in canon {
        j += sq_dist(&points[i], &centroids[assignments[i]]);
    }
    j
}

/// Lloyd k-means from a k-means++ start. Stops when assignments are stable,
/// the relative objective decrease falls below `tol`, or `max_iters` is hit.
/// Always ends on an update step, so each centroid is the mean of its
/// members and every cluster is non-empty.
pub fn kmeans(
    points: &[Vec<f64>],
    b: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<ClusterModel> {
    if b == 0 || points.len() < b {
        return Err(Error::TooFewPoints {
            points: points.len(),
            clusters: b,
        });
    }
    let dim = check_points(points)?;
    let canon = canonical_order(points);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = kmeanspp_centers(points, &canon, b, &mut rng);
    let mut centroids: Vec<Vec<f64>> = centers.iter().map(|&i| points[i].clone()).collect();

    let mut assignments = vec![0usize; points.len()];
    let mut prev_assignments: Option<Vec<usize>> = None;
    let mut history = Vec::new();
    let mut prev_j = f64::INFINITY;

    for _ in 0..max_iters.max(1) {
        for i in 0..points.len() {
            assignments[i] = nearest_centroid(&points[i], &centroids);
        }
        let mut counts = vec![0usize; b];
        for &a in &assignments {
            counts[a] += 1;
        }
        repair_empty_clusters(points, &canon, &mut centroids, &mut assignments, &mut counts);
        let (next_centroids, _) = update_centroids(points, &canon, &assignments, b, dim);
        centroids = next_centroids;
        let j = objective(points, &canon, &assignments, &centroids);
        history.push(j);

        if prev_assignments.as_deref() == Some(assignments.as_slice()) {
            break;
        }
        if prev_j.is_finite() {
            let decrease = prev_j - j;
            if decrease < tol * prev_j {
                break;
            }
        }
        prev_assignments = Some(assignments.clone());
        prev_j = j;
    }

    let objective = *history.last().expect("at least one iteration");
    Ok(ClusterModel {
        centroids,
        assignments,
        objective,
        objective_history: history,
    })
}

/// Map each point to its nearest centroid by Euclidean distance, lowest
/// cluster index on ties.
pub fn assign_to_clusters(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Result<Vec<usize>> {
    if centroids.is_empty() {
        return Err(Error::DegenerateDim("no centroids".into()));
    }
    let dim = centroids[0].len();
    for c in centroids {
        if c.len() != dim {
            return Err(Error::DimMismatch {
                left: dim,
                right: c.len(),
            });
        }
    }
    let mut out = Vec::with_capacity(points.len());
    for p in points {
        if p.len() != dim {
            return Err(Error::DimMismatch {
                left: p.len(),
                right: dim,
            });
        }
        out.push(nearest_centroid(p, centroids));
    }
    Ok(out)
}
