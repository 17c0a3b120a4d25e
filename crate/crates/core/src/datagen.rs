//! Deterministic synthetic multi-source scenario generator: Gaussian class
//! blobs on a sphere, with a seeded affine transform (rotation, per-axis
//! scale, translation) per domain and optional per-domain label skew.
//!
//! Target-domain rows come out unlabeled; their ground truth lives in a
//! separate answer key that only the annotator and evaluator may read.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix, UNLABELED};
use crate::error::{Error, Result};
use crate::math::derive_seed;

/// Bounds of the per-domain affine transform. Zero everywhere means the
/// identity transform, exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainShift {
    /// Givens rotation angle bound (radians).
    pub rotation: f64,
    /// Per-axis translation bound.
    pub translation: f64,
    /// Per-axis log-scale bound.
    pub log_scale: f64,
}

impl DomainShift {
    pub fn none() -> Self {
        DomainShift {
            rotation: 0.0,
            translation: 0.0,
            log_scale: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.rotation == 0.0 && self.translation == 0.0 && self.log_scale == 0.0
    }
}

/// Scenario description for one synthetic experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_source_domains: usize,
    pub samples_per_domain: usize,
    pub n_classes: usize,
    pub feature_dim: usize,
    /// Radius of the class-mean sphere.
    pub class_separation: f64,
    pub domain_shift: DomainShift,
    pub noise_sigma: f64,
    /// Per-domain class-proportion distortion in [0, 1); 0 keeps classes
    /// balanced everywhere.
    pub label_skew: f64,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_source_domains: 3,
            samples_per_domain: 2000,
            n_classes: 5,
            feature_dim: 16,
            class_separation: 3.0,
            domain_shift: DomainShift {
                rotation: 0.4,
                translation: 0.6,
                log_scale: 0.2,
            },
            noise_sigma: 1.0,
            label_skew: 0.6,
            rng_seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_source_domains < 1 {
            return Err(Error::BadConfig("need at least one source domain".into()));
        }
        if self.samples_per_domain < 1 {
            return Err(Error::BadConfig("samples_per_domain must be positive".into()));
        }
        if self.n_classes < 2 {
            return Err(Error::BadConfig("need at least two classes".into()));
        }
        if self.feature_dim < 1 {
            return Err(Error::BadConfig("feature_dim must be positive".into()));
        }
        if !(self.class_separation >= 0.0) || !(self.noise_sigma >= 0.0) {
            return Err(Error::BadConfig("separation and noise must be nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.label_skew) {
            return Err(Error::BadConfig("label_skew must be in [0, 1)".into()));
        }
        let s = &self.domain_shift;
        if !(s.rotation >= 0.0 && s.translation >= 0.0 && s.log_scale >= 0.0) {
            return Err(Error::BadConfig("shift bounds must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Ground truth for the target rows: row id → class.
pub type AnswerKey = BTreeMap<usize, usize>;

/// Class means at mutually maximal angles on the radius-`separation` sphere:
/// a centered regular simplex when the dimension allows it, a circle in the
/// first two coordinates otherwise, evenly spaced points on the line for
/// one-dimensional features.
pub fn class_means(n_classes: usize, dim: usize, separation: f64) -> Vec<Vec<f64>> {
    let c = n_classes;
    if dim >= c {
        let norm = (1.0 - 1.0 / c as f64).sqrt();
        (0..c)
            .map(|i| {
                let mut v = vec![0.0; dim];
                for (j, slot) in v.iter_mut().enumerate().take(c) {
                    let raw = if j == i { 1.0 - 1.0 / c as f64 } else { -1.0 / c as f64 };
                    *slot = separation * raw / norm;
                }
                v
            })
            .collect()
    } else if dim >= 2 {
        (0..c)
            .map(|i| {
                let angle = 2.0 * std::f64::consts::PI * i as f64 / c as f64;
                let mut v = vec![0.0; dim];
                v[0] = separation * angle.cos();
                v[1] = separation * angle.sin();
                v
            })
            .collect()
    } else {
        (0..c)
            .map(|i| vec![separation * (2.0 * i as f64 / (c - 1) as f64 - 1.0)])
            .collect()
    }
}

/// Per-domain class counts: proportions ∝ (1−skew)^rank with the rank order
/// rotated per domain, apportioned by largest remainder so each count is
/// within one of its exact share.
pub fn class_counts(n: usize, n_classes: usize, skew: f64, domain: usize) -> Vec<usize> {
    let weights: Vec<f64> = (0..n_classes)
        .map(|c| (1.0 - skew).powi(((c + domain) % n_classes) as i32))
        .collect();
    let total: f64 = weights.iter().sum();
    let shares: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut counts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let mut leftover = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..n_classes).collect();
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &c in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        counts[c] += 1;
        leftover -= 1;
    }
    counts
}

/// Standard normal draw (Box–Muller, one value per call).
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

struct AffineTransform {
    /// Givens rotations as (i, j, angle).
    rotations: Vec<(usize, usize, f64)>,
    scale: Vec<f64>,
    translation: Vec<f64>,
}

impl AffineTransform {
    /// Draw one domain's transform. All parameter draws come from a stream
    /// separate from the sample noise, so changing the shift bounds never
    /// changes the base points.
    fn draw(dim: usize, shift: &DomainShift, rng: &mut ChaCha8Rng) -> Self {
        let mut rotations = Vec::new();
        if dim >= 2 && shift.rotation > 0.0 {
            for _ in 0..dim {
                let i = rng.gen_range(0..dim);
                let mut j = rng.gen_range(0..dim - 1);
                if j >= i {
                    j += 1;
                }
                let angle = rng.gen_range(-shift.rotation..shift.rotation);
                rotations.push((i, j, angle));
            }
        }
        let scale = (0..dim)
            .map(|_| {
                if shift.log_scale > 0.0 {
                    rng.gen_range(-shift.log_scale..shift.log_scale).exp()
                } else {
                    1.0
                }
            })
            .collect();
        let translation = (0..dim)
            .map(|_| {
                if shift.translation > 0.0 {
                    rng.gen_range(-shift.translation..shift.translation)
                } else {
                    0.0
                }
            })
            .collect();
        AffineTransform {
            rotations,
            scale,
            translation,
        }
    }

    fn apply(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v *= self.scale[i];
        }
        for &(i, j, angle) in &self.rotations {
            let (sin, cos) = angle.sin_cos();
            let xi = x[i];
            let xj = x[j];
            x[i] = cos * xi - sin * xj;
            x[j] = sin * xi + cos * xj;
        }
        for (i, v) in x.iter_mut().enumerate() {
            *v += self.translation[i];
        }
    }
}

/// Generate the scenario: `n_source_domains` labeled source domains plus one
/// unlabeled target domain, each with `samples_per_domain` rows laid out
/// domain-major and class-major within a domain. Identical configs produce
/// identical bytes.
pub fn generate(cfg: &ScenarioConfig) -> Result<(Dataset, AnswerKey)> {
    cfg.validate()?;
    let k = cfg.n_source_domains;
    let c = cfg.n_classes;
    let d = cfg.feature_dim;
    let means = class_means(c, d, cfg.class_separation);

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity((k + 1) * cfg.samples_per_domain);
    let mut labels = Vec::with_capacity(rows.capacity());
    let mut domains = Vec::with_capacity(rows.capacity());
    let mut key = AnswerKey::new();

    for domain in 0..=k {
        let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, 2 * domain as u64));
        let mut xform_rng =
            ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, 2 * domain as u64 + 1));
        let transform = AffineTransform::draw(d, &cfg.domain_shift, &mut xform_rng);
        let counts = class_counts(cfg.samples_per_domain, c, cfg.label_skew, domain);
        for (class, &count) in counts.iter().enumerate() {
            for _ in 0..count {
                let mut x: Vec<f64> = (0..d)
                    .map(|j| means[class][j] + cfg.noise_sigma * gaussian(&mut noise_rng))
                    .collect();
                transform.apply(&mut x);
                let row_id = rows.len();
                rows.push(x);
                domains.push(domain);
                if domain < k {
                    labels.push(class as i64);
                } else {
                    labels.push(UNLABELED);
                    key.insert(row_id, class);
                }
            }
        }
    }

    let ds = Dataset {
        features: Matrix::from_rows(&rows),
        labels,
        domains,
        n_classes: c,
        n_source_domains: k,
    };
    crate::data::validate_dataset(&ds)?;
    Ok((ds, key))
}
