//! Forward passes, pseudo-labels, and the pseudo-label gradient embedding
//! whose norm serves as the uncertainty score.
//!
//! For a sample with pre-last-layer representation `M` and predicted
//! probabilities `p`, the stored embedding is `M · (1 − p_ŷ)` where
//! `ŷ = argmax p`. This is the last-layer gradient block of the negative
//! cross-entropy loss under the pseudo label; only norms and cluster geometry
//! are consumed downstream, so a single positive sign convention is used.

use crate::data::{Dataset, ModelState};
use crate::error::{Error, Result};
use crate::math::{argmax, l2_norm, softmax};

/// Everything the selection pipeline needs to know about one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBundle {
    /// Pre-last-layer representation (the input itself for linear models).
    pub feature: Vec<f64>,
    /// Predicted class probabilities.
    pub probs: Vec<f64>,
    /// argmax class, lowest index on ties.
    pub pseudo_label: usize,
    /// `feature · (1 − p_ŷ)`.
    pub grad_embed: Vec<f64>,
    /// `‖grad_embed‖₂`.
    pub uncertainty: f64,
}

impl EmbeddingBundle {
    /// The vector this bundle exposes in the given space.
    pub fn vector(&self, space: crate::data::EmbeddingSpace) -> &[f64] {
        match space {
            crate::data::EmbeddingSpace::Gradient => &self.grad_embed,
            crate::data::EmbeddingSpace::Feature => &self.feature,
        }
    }
}

/// Run the classifier on one input row, returning the pre-last-layer
/// representation and the softmax probabilities.
pub fn forward(model: &ModelState, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != model.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "input has {} entries, model expects {}",
            x.len(),
            model.input_dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("forward input".into()));
    }
    let feature: Vec<f64> = match (&model.hidden_weights, &model.hidden_bias) {
        (Some(wh), Some(bh)) => {
            let h = wh.cols;
            let mut out = vec![0.0; h];
            for j in 0..h {
                let mut s = bh[j];
                for i in 0..wh.rows {
                    s += x[i] * wh.get(i, j);
                }
                out[j] = s.max(0.0); // rectifier
            }
            out
        }
        _ => x.to_vec(),
    };
    let c = model.n_classes();
    let mut logits = vec![0.0; c];
    for k in 0..c {
        let mut s = model.last_bias[k];
        for i in 0..feature.len() {
            s += feature[i] * model.last_weights.get(i, k);
        }
        logits[k] = s;
    }
    Ok((feature, softmax(&logits)))
}

/// Build the embedding bundle for one sample from its representation and
/// predicted probabilities.
pub fn gradient_embedding(feature: Vec<f64>, probs: Vec<f64>) -> Result<EmbeddingBundle> {
    if feature.is_empty() {
        return Err(Error::EmptyFeature);
    }
    let pseudo_label = argmax(&probs);
    let scale = 1.0 - probs[pseudo_label];
    let grad_embed: Vec<f64> = feature.iter().map(|&m| m * scale).collect();
    let uncertainty = l2_norm(&grad_embed);
    Ok(EmbeddingBundle {
        feature,
        probs,
        pseudo_label,
        grad_embed,
        uncertainty,
    })
}

/// Embed the given rows, one bundle per id in order.
pub fn embed_all(model: &ModelState, ds: &Dataset, ids: &[usize]) -> Result<Vec<EmbeddingBundle>> {
    let mut out = Vec::with_capacity(ids.len());
    for &id in ids {
        if id >= ds.n_samples() {
            return Err(Error::BadId(id));
        }
        let (feature, probs) = forward(model, ds.features.row(id))?;
        out.push(gradient_embedding(feature, probs)?);
    }
    Ok(out)
}

/// Cross-entropy of the model's prediction against the given class.
pub fn cross_entropy(model: &ModelState, x: &[f64], class: usize) -> Result<f64> {
    let (_, probs) = forward(model, x)?;
    Ok(-(probs[class].max(1e-300)).ln())
}

/// Prediction entropy in nats.
pub fn prediction_entropy(probs: &[f64]) -> f64 {
    let mut h = 0.0;
    for &p in probs {
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    h
}

/// Gap between the two largest probabilities (smaller means less certain).
pub fn prediction_margin(probs: &[f64]) -> f64 {
    let top = argmax(probs);
    let mut second = f64::NEG_INFINITY;
    for (i, &p) in probs.iter().enumerate() {
        if i != top && p > second {
            second = p;
        }
    }
    if second.is_finite() {
        probs[top] - second
    } else {
        probs[top]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Matrix;
    use proptest::prelude::*;

    #[test]
    fn zero_model_predicts_uniformly() {
        let model = ModelState::zeros(2, 0, 3);
        let (feature, probs) = forward(&model, &[0.4, -0.7]).unwrap();
        assert_eq!(feature, vec![0.4, -0.7]);
        for &p in &probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn aligned_one_hot_weights_saturate() {
        // W maps class 0 onto the first input coordinate at a large scale, so
        // an input aligned with that coordinate yields softmax([30, 0, 0]) =
        // (e^30, 1, 1)/Z: within 1e-12 of [1, 0, 0].
        let mut model = ModelState::zeros(2, 0, 3);
        model.last_weights.set(0, 0, 30.0);
        let (_, probs) = forward(&model, &[1.0, 0.0]).unwrap();
        let z = 30f64.exp() + 2.0;
        assert!((probs[0] - 30f64.exp() / z).abs() < 1e-15);
        assert!(probs[0] > 1.0 - 1e-12);
        assert!(probs[1] < 1e-12 && probs[2] < 1e-12);
    }

    #[test]
    fn forward_rejects_bad_inputs() {
        let model = ModelState::zeros(2, 0, 3);
        assert!(matches!(
            forward(&model, &[1.0]),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            forward(&model, &[1.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn hand_computed_embedding() {
        // feature [1, 2], probs [0.5, 0.5]: ŷ = 0 (tie → low index),
        // grad = 0.5·[1, 2] = [0.5, 1.0], ‖grad‖ = √1.25.
        let b = gradient_embedding(vec![1.0, 2.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(b.pseudo_label, 0);
        assert_eq!(b.grad_embed, vec![0.5, 1.0]);
        assert!((b.uncertainty - 1.25f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn confident_prediction_has_zero_embedding() {
        let b = gradient_embedding(vec![3.0, -4.0], vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(b.pseudo_label, 1);
        assert!(b.grad_embed.iter().all(|&g| g == 0.0));
        assert_eq!(b.uncertainty, 0.0);
    }

    #[test]
    fn zero_feature_has_zero_uncertainty() {
        let b = gradient_embedding(vec![0.0, 0.0], vec![0.7, 0.3]).unwrap();
        assert_eq!(b.uncertainty, 0.0);
    }

    #[test]
    fn empty_feature_rejected() {
        assert!(matches!(
            gradient_embedding(vec![], vec![1.0]),
            Err(Error::EmptyFeature)
        ));
    }

    #[test]
    fn uncertainty_matches_feature_norm_identity() {
        let b = gradient_embedding(vec![0.3, -1.2, 0.9], vec![0.2, 0.5, 0.3]).unwrap();
        let expect = l2_norm(&b.feature) * (1.0 - 0.5);
        assert!((b.uncertainty - expect).abs() < 1e-9);
    }

    #[test]
    fn embed_all_composes_and_checks_ids() {
        let ds = Dataset {
            features: Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]),
            labels: vec![0, crate::data::UNLABELED],
            domains: vec![0, 1],
            n_classes: 2,
            n_source_domains: 1,
        };
        let model = ModelState::zeros(2, 0, 2);
        assert!(embed_all(&model, &ds, &[]).unwrap().is_empty());
        let single = embed_all(&model, &ds, &[1]).unwrap();
        let (f, p) = forward(&model, ds.features.row(1)).unwrap();
        assert_eq!(single[0], gradient_embedding(f, p).unwrap());
        assert!(matches!(embed_all(&model, &ds, &[5]), Err(Error::BadId(5))));
    }

    /// Central finite differences of CE(x, ŷ) with respect to row ŷ of the
    /// last-layer weights. The stored embedding is the negative-CE gradient,
    /// so it must equal the negation of this.
    fn fd_ce_grad_wrt_pseudo_row(model: &ModelState, x: &[f64], h: f64) -> (usize, Vec<f64>) {
        let (_, probs) = forward(model, x).unwrap();
        let y_hat = argmax(&probs);
        let dim = model.embed_dim();
        let mut grad = vec![0.0; dim];
        let mut m = model.clone();
        for i in 0..dim {
            let orig = m.last_weights.get(i, y_hat);
            m.last_weights.set(i, y_hat, orig + h);
            let up = cross_entropy(&m, x, y_hat).unwrap();
            m.last_weights.set(i, y_hat, orig - h);
            let down = cross_entropy(&m, x, y_hat).unwrap();
            m.last_weights.set(i, y_hat, orig);
            grad[i] = (up - down) / (2.0 * h);
        }
        (y_hat, grad)
    }

    fn random_model_and_input(seed: u64, d: usize, c: usize) -> (ModelState, Vec<f64>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut model = ModelState::zeros(d, 0, c);
        for v in &mut model.last_weights.data {
            *v = rng.gen_range(-0.5..0.5);
        }
        for v in &mut model.last_bias {
            *v = rng.gen_range(-0.2..0.2);
        }
        // Inputs bounded away from zero keep every gradient entry large
        // enough for a meaningful relative-error comparison.
        let x: Vec<f64> = (0..d)
            .map(|_| {
                let mag = rng.gen_range(0.2..2.0);
                if rng.gen_bool(0.5) {
                    mag
                } else {
                    -mag
                }
            })
            .collect();
        (model, x)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..100u64 {
            let (model, x) = random_model_and_input(seed, 4, 3);
            let bundles = {
                let (f, p) = forward(&model, &x).unwrap();
                gradient_embedding(f, p).unwrap()
            };
            let (y_hat, fd) = fd_ce_grad_wrt_pseudo_row(&model, &x, 1e-4);
            assert_eq!(y_hat, bundles.pseudo_label);
            for i in 0..x.len() {
                let analytic = bundles.grad_embed[i];
                let expect = -fd[i];
                let rel = (analytic - expect).abs() / expect.abs().max(1e-12);
                assert!(
                    rel < 1e-5,
                    "seed {seed} dim {i}: analytic {analytic} vs fd {expect} (rel {rel})"
                );
            }
        }
    }

    proptest! {
        // Scaling the feature by a power of two scales the uncertainty by
        // exactly the same factor (power-of-two scalings are exact in f64).
        #[test]
        fn prop_uncertainty_scales_with_feature(
            exp in -3i32..7,
            feature in proptest::collection::vec(-100.0f64..100.0, 1..6),
            raw_probs in proptest::collection::vec(0.01f64..1.0, 2..5)
        ) {
            let total: f64 = raw_probs.iter().sum();
            let probs: Vec<f64> = raw_probs.iter().map(|p| p / total).collect();
            let lambda = 2f64.powi(exp);
            let scaled: Vec<f64> = feature.iter().map(|&m| m * lambda).collect();
            let base = gradient_embedding(feature, probs.clone()).unwrap();
            let big = gradient_embedding(scaled, probs).unwrap();
            prop_assert_eq!(big.uncertainty, base.uncertainty * lambda);
        }

        // For a fixed feature, uncertainty strictly decreases as the top
        // probability grows.
        #[test]
        fn prop_uncertainty_decreases_in_confidence(
            p_low in 0.34f64..0.6,
            bump in 0.05f64..0.39,
            feature in proptest::collection::vec(0.5f64..10.0, 1..6)
        ) {
            let p_high = p_low + bump;
            let make = |p: f64| vec![p, (1.0 - p) / 2.0, (1.0 - p) / 2.0];
            let lo = gradient_embedding(feature.clone(), make(p_low)).unwrap();
            let hi = gradient_embedding(feature, make(p_high)).unwrap();
            prop_assert_eq!(lo.pseudo_label, 0);
            prop_assert_eq!(hi.pseudo_label, 0);
            prop_assert!(hi.uncertainty < lo.uncertainty);
        }
    }

    #[test]
    fn entropy_and_margin_scores() {
        assert!((prediction_entropy(&[0.5, 0.5]) - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(prediction_entropy(&[1.0, 0.0]), 0.0);
        assert!((prediction_margin(&[0.7, 0.2, 0.1]) - 0.5).abs() < 1e-12);
        assert_eq!(prediction_margin(&[1.0]), 1.0);
    }
}
